#pragma once

#include <vector>

#include "pianotx/matrix.hpp"
#include "pianotx/midi.hpp"

// Note search over the four output rolls. Onsets are per-pitch local maxima
// above threshold with parabolic sub-frame refinement; offsets take the
// earlier of the frame-roll dropout and the next offset-roll peak; velocity
// reads the velocity roll at the onset peak frame.

namespace pianotx::decode {

struct DecoderConfig {
  double onset_threshold = 0.3;
  double offset_threshold = 0.3;
  double frame_threshold = 0.3;
  double min_duration_s = 0.05;
  int frames_per_second = 100;
};

struct DetectedOnset {
  int pitch = 0;      // MIDI number
  double time_s = 0;  // refined onset time
  int frame = 0;      // peak frame index
};

std::vector<DetectedOnset> detect_onsets(const RowMatrix& onset_roll,
                                         const DecoderConfig& cfg);

double detect_note_off(const RowMatrix& frame_roll, const RowMatrix& offset_roll,
                       int pitch, int onset_frame, const DecoderConfig& cfg);

std::vector<NoteEvent> decode_notes(const RowMatrix& onset_roll,
                                    const RowMatrix& offset_roll,
                                    const RowMatrix& frame_roll,
                                    const RowMatrix& velocity_roll,
                                    const DecoderConfig& cfg);

}  // namespace pianotx::decode
