#include "pianotx/targets.hpp"

#include <algorithm>
#include <cmath>

#include "pianotx/errors.hpp"

namespace pianotx {

namespace {

// stamp a triangular ramp around `pos` (in frames); keeps the max where
// ramps of nearby events overlap
void stamp_ramp(RowMatrix& roll, int col, double pos, int half_width) {
  const int lo = std::max(0, (int)std::ceil(pos - half_width));
  const int hi = std::min(roll.rows - 1, (int)std::floor(pos + half_width));
  for (int k = lo; k <= hi; ++k) {
    const double v = 1.0 - std::abs(k - pos) / half_width;
    if (v > roll.at(k, col)) roll.at(k, col) = v;
  }
}

}  // namespace

TargetRolls notes_to_targets(const std::vector<NoteEvent>& notes,
                             double window_start_s, int t_frames,
                             const TargetConfig& cfg) {
  if (t_frames <= 0) throw NumericError("notes_to_targets: t_frames must be > 0");
  const int fps = cfg.frames_per_second;
  const double window_len = (double)t_frames / fps;

  TargetRolls out;
  out.frames_per_second = fps;
  out.onset = RowMatrix(t_frames, 88);
  out.offset = RowMatrix(t_frames, 88);
  out.frame = RowMatrix(t_frames, 88);
  out.velocity = RowMatrix(t_frames, 88);
  RowMatrix best_ramp(t_frames, 88);  // which note's velocity owns each frame

  for (const NoteEvent& n : notes) {
    if (!n.valid()) throw NumericError("notes_to_targets: invalid note event");
    double on = n.onset_s - window_start_s;
    double off = n.offset_s - window_start_s;
    if (off <= 0.0 || on >= window_len) continue;  // outside this window
    on = std::max(0.0, on);
    off = std::min(window_len, off);
    if (off <= on) continue;  // zero length after clipping
    const int col = n.pitch - 21;

    // frame roll: frames whose center k/fps lies in [on, off)
    const int k0 = std::max(0, (int)std::ceil(on * fps - 1e-9));
    const int k1 = std::min(t_frames - 1, (int)std::ceil(off * fps - 1e-9) - 1);
    for (int k = k0; k <= k1; ++k) out.frame.at(k, col) = 1.0;

    stamp_ramp(out.onset, col, on * fps, cfg.ramp_frames);
    stamp_ramp(out.offset, col, off * fps, cfg.ramp_frames);

    // velocity wherever this note's onset ramp is active and strongest
    const double vel = (double)n.velocity / cfg.velocity_divisor;
    const double pos = on * fps;
    const int lo = std::max(0, (int)std::ceil(pos - cfg.ramp_frames));
    const int hi = std::min(t_frames - 1, (int)std::floor(pos + cfg.ramp_frames));
    for (int k = lo; k <= hi; ++k) {
      const double ramp = 1.0 - std::abs(k - pos) / cfg.ramp_frames;
      if (ramp > 0.0 && ramp >= best_ramp.at(k, col)) {
        best_ramp.at(k, col) = ramp;
        out.velocity.at(k, col) = vel;
      }
    }
  }
  return out;
}

}  // namespace pianotx
