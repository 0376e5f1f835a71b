#pragma once

#include <random>
#include <vector>

#include "pianotx/audio.hpp"
#include "pianotx/midi.hpp"

// Additive sine-plus-harmonics renderer so training and acceptance runs need
// no external audio. Rendering is a pure function of the note list.

namespace pianotx::synth {

struct SynthConfig {
  double clip_seconds = 10.0;
  int sample_rate = 16000;
  int min_notes = 10;
  int max_notes = 16;
  int min_pitch = 40;
  int max_pitch = 84;
  double min_duration_s = 0.25;
  double max_duration_s = 1.2;
  double same_pitch_gap_s = 0.15;  // between one offset and the next onset
  double edge_margin_s = 0.3;
};

std::vector<NoteEvent> random_score(std::mt19937_64& rng, const SynthConfig& cfg = {});

// decaying harmonics with a 5 ms attack and 20 ms release tail
AudioClip render_notes(const std::vector<NoteEvent>& notes, const SynthConfig& cfg = {});

}  // namespace pianotx::synth
