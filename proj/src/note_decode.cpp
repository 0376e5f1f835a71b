#include "pianotx/note_decode.hpp"

#include <algorithm>
#include <cmath>

#include "pianotx/errors.hpp"

namespace pianotx::decode {

namespace {

// local maximum: strictly above left neighbor, at least right neighbor
inline bool is_peak(const RowMatrix& roll, int t, int col) {
  const double v = roll.at(t, col);
  if (t > 0 && roll.at(t - 1, col) >= v) return false;
  if (t + 1 < roll.rows && roll.at(t + 1, col) > v) return false;
  return true;
}

// parabolic vertex through the peak and its neighbors, clamped to half a frame
inline double refine(const RowMatrix& roll, int t, int col) {
  if (t == 0 || t + 1 >= roll.rows) return 0.0;
  const double ym = roll.at(t - 1, col), y0 = roll.at(t, col), yp = roll.at(t + 1, col);
  const double denom = ym - 2.0 * y0 + yp;
  if (std::abs(denom) < 1e-12) return 0.0;
  return std::clamp(0.5 * (ym - yp) / denom, -0.5, 0.5);
}

}  // namespace

std::vector<DetectedOnset> detect_onsets(const RowMatrix& onset_roll,
                                         const DecoderConfig& cfg) {
  std::vector<DetectedOnset> out;
  const int t_len = onset_roll.rows;
  for (int col = 0; col < onset_roll.cols; ++col)
    for (int t = 0; t < t_len; ++t) {
      if (onset_roll.at(t, col) <= cfg.onset_threshold) continue;
      if (!is_peak(onset_roll, t, col)) continue;
      const double delta = refine(onset_roll, t, col);
      out.push_back({col + 21, (t + delta) / cfg.frames_per_second, t});
    }
  return out;
}

double detect_note_off(const RowMatrix& frame_roll, const RowMatrix& offset_roll,
                       int pitch, int onset_frame, const DecoderConfig& cfg) {
  const int col = pitch - 21;
  const int t_len = frame_roll.rows;
  const double fps = cfg.frames_per_second;

  int frame_drop = -1;
  for (int t = onset_frame + 1; t < t_len; ++t)
    if (frame_roll.at(t, col) < cfg.frame_threshold) {
      frame_drop = t;
      break;
    }
  int offset_peak = -1;
  for (int t = onset_frame + 1; t < t_len; ++t)
    if (offset_roll.at(t, col) > cfg.offset_threshold && is_peak(offset_roll, t, col)) {
      offset_peak = t;
      break;
    }

  double off;
  if (frame_drop < 0 && offset_peak < 0) {
    off = (double)(t_len - 1) / fps;  // clip end
  } else if (offset_peak < 0 || (frame_drop >= 0 && frame_drop <= offset_peak)) {
    off = frame_drop / fps;  // frame criterion wins ties
  } else {
    off = (offset_peak + refine(offset_roll, offset_peak, col)) / fps;
  }
  const double min_off = (double)onset_frame / fps + cfg.min_duration_s;
  return std::max(off, min_off);
}

std::vector<NoteEvent> decode_notes(const RowMatrix& onset_roll,
                                    const RowMatrix& offset_roll,
                                    const RowMatrix& frame_roll,
                                    const RowMatrix& velocity_roll,
                                    const DecoderConfig& cfg) {
  if (onset_roll.rows != offset_roll.rows || onset_roll.rows != frame_roll.rows ||
      onset_roll.rows != velocity_roll.rows || onset_roll.cols != 88)
    throw NumericError("decode: rolls must be aligned T x 88 matrices");

  std::vector<NoteEvent> notes;
  for (const DetectedOnset& d : detect_onsets(onset_roll, cfg)) {
    const double off = detect_note_off(frame_roll, offset_roll, d.pitch, d.frame, cfg);
    const int vel = std::clamp(
        (int)std::lround(velocity_roll.at(d.frame, d.pitch - 21) * 128.0), 1, 127);
    const double on = std::max(0.0, d.time_s);
    if (off > on) notes.push_back({d.pitch, on, off, vel});
  }
  std::sort(notes.begin(), notes.end(), [](const NoteEvent& a, const NoteEvent& b) {
    return a.onset_s != b.onset_s ? a.onset_s < b.onset_s : a.pitch < b.pitch;
  });
  // same-pitch overlap: a later onset truncates the earlier note
  std::vector<int> last_of_pitch(128, -1);
  for (size_t i = 0; i < notes.size(); ++i) {
    const int p = notes[i].pitch;
    if (last_of_pitch[p] >= 0) {
      NoteEvent& prev = notes[last_of_pitch[p]];
      if (prev.offset_s > notes[i].onset_s) prev.offset_s = notes[i].onset_s;
    }
    last_of_pitch[p] = (int)i;
  }
  return notes;
}

}  // namespace pianotx::decode
