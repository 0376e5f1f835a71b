#pragma once

#include <vector>

#include "pianotx/audio.hpp"
#include "pianotx/matrix.hpp"

// Log-mel front end: windowed-sinc resampling to 16 kHz, 10-second clip
// splitting, centered STFT (Hann 2048, 10 ms hop), and a Slaney-spaced
// area-normalized mel filterbank with 229 bands.

namespace pianotx::dsp {

inline constexpr int kSampleRate = 16000;
inline constexpr int kHop = 160;  // 10 ms
inline constexpr int kWindow = 2048;
inline constexpr int kFftBins = kWindow / 2 + 1;
inline constexpr int kMels = 229;
inline constexpr int kFramesPerSecond = kSampleRate / kHop;
inline constexpr double kLogFloor = 1e-10;
inline constexpr double kDefaultFmin = 30.0;
inline constexpr double kDefaultFmax = 8000.0;

// Band-limited polyphase resampler (Kaiser beta = 12, 64 taps per output
// sample); each phase row is normalized to unit sum so DC passes exactly.
AudioClip resample(const AudioClip& clip, int target_hz);

// Consecutive non-overlapping windows; the final partial window is
// zero-padded to full length. clip_offset_s records each window's position.
std::vector<AudioClip> split_clips(const AudioClip& clip, double clip_seconds);

// Power spectrogram, frames centered by 1024-sample reflection padding.
// T = floor(N / hop) + 1 rows of 1025 squared-magnitude bins.
RowMatrix stft_power(const AudioClip& clip);

struct MelFilterbank {
  int n_mels = 0;
  int n_fft_bins = 0;
  RowMatrix weights;                   // n_mels x n_fft_bins, triangular rows
  std::vector<double> bin_centers_hz;  // ascending triangle centers
  std::vector<int> begin, end;         // nonzero column span per row

  static MelFilterbank make(int n_mels = kMels, double fmin = kDefaultFmin,
                            double fmax = kDefaultFmax,
                            int sample_rate = kSampleRate, int n_fft = kWindow);
};

struct LogMelSpectrogram {
  RowMatrix values;  // T x n_mels, log10 power floored at kLogFloor
  int frames_per_second = kFramesPerSecond;
  double clip_offset_s = 0.0;
};

LogMelSpectrogram logmel(const AudioClip& clip, const MelFilterbank& fb);

// Full ingestion pipeline: resample to 16 kHz, split, analyze each clip.
std::vector<LogMelSpectrogram> analyze(const AudioClip& clip, const MelFilterbank& fb,
                                       double clip_seconds = 10.0);

}  // namespace pianotx::dsp
