#pragma once

#include <vector>

#include "pianotx/matrix.hpp"
#include "pianotx/midi.hpp"

namespace pianotx {

// Frame-level training targets at 100 fps over the 88 piano pitches.
// The frame roll is binary; onset/offset rolls carry triangular ramps that
// peak where the event lands (sub-frame position preserved), enabling
// parabolic refinement at decode time; the velocity roll holds
// velocity / divisor wherever a note's onset ramp is active.
struct TargetRolls {
  RowMatrix onset, offset, frame, velocity;  // T x 88
  int frames_per_second = 100;
};

struct TargetConfig {
  int ramp_frames = 5;             // ramp half-width J
  double velocity_divisor = 128.0;
  int frames_per_second = 100;
};

TargetRolls notes_to_targets(const std::vector<NoteEvent>& notes,
                             double window_start_s, int t_frames,
                             const TargetConfig& cfg = {});

}  // namespace pianotx
