#pragma once

#include <string>
#include <vector>

namespace pianotx {

// Mono waveform. Ingested audio is downmixed and finite-checked; the DSP
// pipeline resamples everything to 16 kHz before analysis.
struct AudioClip {
  std::vector<double> samples;  // amplitudes in [-1, 1]
  int sample_rate = 0;
  double clip_offset_s = 0.0;  // position of this clip inside its source

  double duration_s() const {
    return sample_rate > 0 ? (double)samples.size() / sample_rate : 0.0;
  }
};

// Uncompressed PCM WAV: 16/24-bit integer or 32-bit float, mono or stereo
// (stereo is averaged down to mono).
AudioClip read_wav(const std::string& path);

// 32-bit float mono writer, used for fixtures and the synthetic renderer.
void write_wav(const std::string& path, const AudioClip& clip);

}  // namespace pianotx
