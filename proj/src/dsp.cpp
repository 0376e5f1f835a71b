#include "pianotx/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "pianotx/errors.hpp"
#include "pianotx/kernels.hpp"

namespace pianotx::dsp {

namespace {

constexpr double kPi = std::numbers::pi;

double bessel_i0(double x) {
  // power series; converges fast for the |x| <= beta range used here
  double sum = 1.0, term = 1.0;
  const double q = x * x / 4.0;
  for (int k = 1; k < 64; ++k) {
    term *= q / (k * (double)k);
    sum += term;
    if (term < 1e-18 * sum) break;
  }
  return sum;
}

void check_finite(const AudioClip& clip, const char* op) {
  for (double v : clip.samples)
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite sample");
}

}  // namespace

AudioClip resample(const AudioClip& clip, int target_hz) {
  if (clip.samples.empty()) throw NumericError("resample: empty input");
  if (target_hz <= 0 || clip.sample_rate <= 0)
    throw NumericError("resample: sample rates must be positive");
  check_finite(clip, "resample");
  if (target_hz == clip.sample_rate) {
    AudioClip out = clip;
    return out;
  }

  const long g = std::gcd((long)clip.sample_rate, (long)target_hz);
  const long up = target_hz / g;    // L
  const long down = clip.sample_rate / g;  // M
  constexpr int kHalf = 32;         // taps per output sample = 2 * kHalf
  constexpr double kBeta = 12.0;
  constexpr double kRolloff = 0.95;
  const double cutoff =
      kRolloff * std::min(1.0, (double)target_hz / clip.sample_rate);

  // polyphase table: phase p corresponds to fractional offset p / up
  const double i0_beta = bessel_i0(kBeta);
  std::vector<double> taps((size_t)up * 2 * kHalf);
  for (long p = 0; p < up; ++p) {
    const double frac = (double)p / up;
    double* row = taps.data() + (size_t)p * 2 * kHalf;
    double sum = 0.0;
    for (int d = -kHalf + 1; d <= kHalf; ++d) {
      const double u = frac - d;  // kernel argument in input samples
      double v;
      if (std::abs(u) >= kHalf) {
        v = 0.0;
      } else {
        const double s = u == 0.0 ? 1.0 : std::sin(kPi * cutoff * u) / (kPi * cutoff * u);
        const double w = bessel_i0(kBeta * std::sqrt(1.0 - (u / kHalf) * (u / kHalf))) /
                         i0_beta;
        v = cutoff * s * w;
      }
      row[d + kHalf - 1] = v;
      sum += v;
    }
    for (int j = 0; j < 2 * kHalf; ++j) row[j] /= sum;  // exact DC gain
  }

  const long long n_in = (long long)clip.samples.size();
  const long long n_out = (n_in * up + down - 1) / down;
  AudioClip out;
  out.sample_rate = target_hz;
  out.clip_offset_s = clip.clip_offset_s;
  out.samples.resize((size_t)n_out);
  const double* x = clip.samples.data();
#pragma omp parallel for schedule(static) if (kernels::parallel_enabled())
  for (long long n = 0; n < n_out; ++n) {
    const long long num = n * down;
    const long long i0 = num / up;
    const long phase = (long)(num % up);
    const double* row = taps.data() + (size_t)phase * 2 * kHalf;
    double acc = 0.0;
    for (int d = -kHalf + 1; d <= kHalf; ++d) {
      const long long idx = i0 + d;
      if (idx < 0 || idx >= n_in) continue;
      acc += x[idx] * row[d + kHalf - 1];
    }
    out.samples[(size_t)n] = acc;
  }
  return out;
}

std::vector<AudioClip> split_clips(const AudioClip& clip, double clip_seconds) {
  if (clip_seconds <= 0.0) throw NumericError("split_clips: clip_seconds must be > 0");
  const size_t len = (size_t)std::llround(clip_seconds * clip.sample_rate);
  const size_t n = clip.samples.size();
  std::vector<AudioClip> out;
  const size_t count = n == 0 ? 0 : (n + len - 1) / len;
  for (size_t k = 0; k < count; ++k) {
    AudioClip c;
    c.sample_rate = clip.sample_rate;
    c.clip_offset_s = clip.clip_offset_s + (double)(k * len) / clip.sample_rate;
    c.samples.assign(len, 0.0);
    const size_t lo = k * len, hi = std::min(n, lo + len);
    std::copy(clip.samples.begin() + lo, clip.samples.begin() + hi, c.samples.begin());
    out.push_back(std::move(c));
  }
  return out;
}

RowMatrix stft_power(const AudioClip& clip) {
  if (clip.sample_rate != kSampleRate)
    throw NumericError("stft_power: expected 16 kHz input, got " +
                       std::to_string(clip.sample_rate));
  const size_t n = clip.samples.size();
  const int pad = kWindow / 2;
  if (n < (size_t)pad + 1)
    throw NumericError("stft_power: clip shorter than one analysis window (" +
                       std::to_string(n) + " samples, need > " + std::to_string(pad) +
                       ")");
  check_finite(clip, "stft_power");

  // reflection padding without edge duplication
  std::vector<double> padded(n + 2 * pad);
  for (int i = 0; i < pad; ++i) padded[i] = clip.samples[pad - i];
  std::copy(clip.samples.begin(), clip.samples.end(), padded.begin() + pad);
  for (int i = 0; i < pad; ++i) padded[n + pad + i] = clip.samples[n - 2 - i];

  const int frames = (int)(n / kHop) + 1;
  RowMatrix out(frames, kFftBins);

  // periodic Hann window
  std::vector<double> window(kWindow);
  for (int i = 0; i < kWindow; ++i)
    window[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / kWindow);

  // radix-2 tables
  int levels = 0;
  while ((1 << levels) < kWindow) ++levels;
  std::vector<int> rev(kWindow);
  for (int i = 0; i < kWindow; ++i) {
    int r = 0;
    for (int b = 0; b < levels; ++b) r |= ((i >> b) & 1) << (levels - 1 - b);
    rev[i] = r;
  }
  std::vector<double> cos_tab(kWindow / 2), sin_tab(kWindow / 2);
  for (int i = 0; i < kWindow / 2; ++i) {
    cos_tab[i] = std::cos(2.0 * kPi * i / kWindow);
    sin_tab[i] = std::sin(2.0 * kPi * i / kWindow);
  }

#pragma omp parallel if (kernels::parallel_enabled() && frames > 1)
  {
    std::vector<double> re(kWindow), im(kWindow);
#pragma omp for schedule(static)
    for (int t = 0; t < frames; ++t) {
      const double* src = padded.data() + (size_t)t * kHop;
      for (int i = 0; i < kWindow; ++i) {
        re[rev[i]] = src[i] * window[i];
        im[rev[i]] = 0.0;
      }
      for (int size = 2; size <= kWindow; size *= 2) {
        const int half = size / 2, step = kWindow / size;
        for (int base = 0; base < kWindow; base += size) {
          for (int j = 0; j < half; ++j) {
            const int even = base + j, odd = base + j + half;
            const double wr = cos_tab[j * step], wi = -sin_tab[j * step];
            const double tr = re[odd] * wr - im[odd] * wi;
            const double ti = re[odd] * wi + im[odd] * wr;
            re[odd] = re[even] - tr;
            im[odd] = im[even] - ti;
            re[even] += tr;
            im[even] += ti;
          }
        }
      }
      double* row = out.row(t);
      for (int k = 0; k < kFftBins; ++k) row[k] = re[k] * re[k] + im[k] * im[k];
    }
  }
  return out;
}

MelFilterbank MelFilterbank::make(int n_mels, double fmin, double fmax,
                                  int sample_rate, int n_fft) {
  if (fmin < 0.0 || fmax <= fmin || fmax > sample_rate / 2.0)
    throw NumericError("mel filterbank: invalid fmin/fmax");
  // Slaney mel: linear below 1 kHz, logarithmic above
  auto hz_to_mel = [](double f) {
    if (f < 1000.0) return 3.0 * f / 200.0;
    return 15.0 + 27.0 * std::log(f / 1000.0) / std::log(6.4);
  };
  auto mel_to_hz = [](double m) {
    if (m < 15.0) return 200.0 * m / 3.0;
    return 1000.0 * std::exp(std::log(6.4) * (m - 15.0) / 27.0);
  };
  const int bins = n_fft / 2 + 1;
  MelFilterbank fb;
  fb.n_mels = n_mels;
  fb.n_fft_bins = bins;
  fb.weights = RowMatrix(n_mels, bins);
  fb.begin.assign(n_mels, bins);
  fb.end.assign(n_mels, 0);

  const double mel_lo = hz_to_mel(fmin), mel_hi = hz_to_mel(fmax);
  std::vector<double> edges(n_mels + 2);
  for (int i = 0; i < n_mels + 2; ++i)
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (n_mels + 1));
  for (int m = 0; m < n_mels; ++m) fb.bin_centers_hz.push_back(edges[m + 1]);

  for (int m = 0; m < n_mels; ++m) {
    const double f0 = edges[m], f1 = edges[m + 1], f2 = edges[m + 2];
    const double norm = 2.0 / (f2 - f0);  // area normalization
    for (int k = 0; k < bins; ++k) {
      const double fk = (double)k * sample_rate / n_fft;
      const double rising = (fk - f0) / (f1 - f0);
      const double falling = (f2 - fk) / (f2 - f1);
      const double w = std::max(0.0, std::min(rising, falling));
      if (w > 0.0) {
        fb.weights.at(m, k) = w * norm;
        fb.begin[m] = std::min(fb.begin[m], k);
        fb.end[m] = std::max(fb.end[m], k + 1);
      }
    }
    if (fb.begin[m] >= fb.end[m])
      throw NumericError("mel filterbank: band " + std::to_string(m) +
                         " has no FFT bin support");
  }
  return fb;
}

LogMelSpectrogram logmel(const AudioClip& clip, const MelFilterbank& fb) {
  RowMatrix power = stft_power(clip);
  LogMelSpectrogram out;
  out.clip_offset_s = clip.clip_offset_s;
  out.values = RowMatrix(power.rows, fb.n_mels);
#pragma omp parallel for schedule(static) if (kernels::parallel_enabled())
  for (int t = 0; t < power.rows; ++t) {
    const double* p = power.row(t);
    double* o = out.values.row(t);
    for (int m = 0; m < fb.n_mels; ++m) {
      const double* w = fb.weights.row(m);
      double acc = 0.0;
      for (int k = fb.begin[m]; k < fb.end[m]; ++k) acc += w[k] * p[k];
      o[m] = std::log10(std::max(acc, kLogFloor));
    }
  }
  return out;
}

std::vector<LogMelSpectrogram> analyze(const AudioClip& clip, const MelFilterbank& fb,
                                       double clip_seconds) {
  AudioClip at16k = resample(clip, kSampleRate);
  if (at16k.samples.size() < (size_t)kWindow / 2 + 1)
    throw NumericError("analyze: audio shorter than one analysis window");
  std::vector<LogMelSpectrogram> out;
  for (const AudioClip& c : split_clips(at16k, clip_seconds)) out.push_back(logmel(c, fb));
  return out;
}

}  // namespace pianotx::dsp
