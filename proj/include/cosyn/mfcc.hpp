#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include "cosyn/sequence.hpp"

namespace cosyn {

namespace detail {

// In-place iterative radix-2 FFT; size must be a power of two.
inline void fft(std::vector<std::complex<double>>& a) {
  const size_t n = a.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * M_PI / double(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0);
      for (size_t k = 0; k < len / 2; ++k) {
        const auto u = a[i + k];
        const auto v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Triangular mel filterbank over an nfft/2+1 power spectrum.
inline Mat mel_filterbank(int n_filters, int nfft, int sample_rate, double f_lo = 0.0,
                          double f_hi = -1.0) {
  if (f_hi <= 0.0) f_hi = sample_rate / 2.0;
  const int bins = nfft / 2 + 1;
  std::vector<double> pts(n_filters + 2);
  const double m_lo = hz_to_mel(f_lo), m_hi = hz_to_mel(f_hi);
  for (int i = 0; i < n_filters + 2; ++i)
    pts[i] = mel_to_hz(m_lo + (m_hi - m_lo) * i / (n_filters + 1)) * nfft / sample_rate;
  Mat fb = Mat::Zero(n_filters, bins);
  for (int m = 0; m < n_filters; ++m) {
    for (int k = 0; k < bins; ++k) {
      if (k >= pts[m] && k <= pts[m + 1] && pts[m + 1] > pts[m])
        fb(m, k) = (k - pts[m]) / (pts[m + 1] - pts[m]);
      else if (k > pts[m + 1] && k <= pts[m + 2] && pts[m + 2] > pts[m + 1])
        fb(m, k) = (pts[m + 2] - k) / (pts[m + 2] - pts[m + 1]);
    }
  }
  return fb;
}

}  // namespace detail

struct MfccConfig {
  int coefficients = 13;   // DCT coefficients kept (with deltas -> 26 channels)
  int mel_filters = 26;
  double window_seconds = 0.025;
  double hop_seconds = 1.0 / 15.0;  // aligns one MFCC frame per motion frame
  bool append_deltas = true;
};

// Log-mel power spectrogram with one column block per motion frame.
inline Mat mel_spectrogram(const AudioClip& audio, int frames, int mel_filters = 26,
                           double window_seconds = 0.025, double hop_seconds = 1.0 / 15.0) {
  const int win = static_cast<int>(audio.sample_rate * window_seconds);
  const int hop = static_cast<int>(audio.sample_rate * hop_seconds);
  if (static_cast<int>(audio.samples.size()) < (frames - 1) * hop + 1)
    throw TooShortAudio("mel_spectrogram: audio shorter than requested frame count");
  int nfft = 1;
  while (nfft < win) nfft <<= 1;
  const Mat fb = detail::mel_filterbank(mel_filters, nfft, audio.sample_rate);

  Mat out(frames, mel_filters);
  std::vector<std::complex<double>> buf(nfft);
  for (int t = 0; t < frames; ++t) {
    const int start = t * hop;
    for (int i = 0; i < nfft; ++i) {
      double s = 0.0;
      if (i < win) {
        const int idx = start + i;
        if (idx < static_cast<int>(audio.samples.size())) s = audio.samples[idx];
        s *= 0.54 - 0.46 * std::cos(2.0 * M_PI * i / (win - 1));  // Hamming
      }
      buf[i] = s;
    }
    detail::fft(buf);
    Vec power(nfft / 2 + 1);
    for (int k = 0; k <= nfft / 2; ++k) power(k) = std::norm(buf[k]) / nfft;
    Vec mel = fb * power;
    for (int m = 0; m < mel_filters; ++m) out(t, m) = std::log(mel(m) + 1e-10);
  }
  return out;
}

// MFCCs aligned 1:1 with the motion frames: T x M (M = coefficients, doubled
// when deltas are appended).
inline Mat compute_mfcc(const AudioClip& audio, int frames, const MfccConfig& cfg = {}) {
  Mat logmel = mel_spectrogram(audio, frames, cfg.mel_filters, cfg.window_seconds, cfg.hop_seconds);
  // DCT-II over the filterbank axis.
  Mat dct(cfg.coefficients, cfg.mel_filters);
  for (int k = 0; k < cfg.coefficients; ++k)
    for (int m = 0; m < cfg.mel_filters; ++m)
      dct(k, m) = std::cos(M_PI * k * (m + 0.5) / cfg.mel_filters) *
                  std::sqrt(2.0 / cfg.mel_filters) * (k == 0 ? std::sqrt(0.5) : 1.0) * std::sqrt(2.0);
  Mat mfcc = logmel * dct.transpose();
  if (!cfg.append_deltas) return mfcc;

  Mat deltas = Mat::Zero(frames, cfg.coefficients);
  for (int t = 0; t < frames; ++t) {
    const int prev = std::max(0, t - 1);
    const int next = std::min(frames - 1, t + 1);
    deltas.row(t) = 0.5 * (mfcc.row(next) - mfcc.row(prev));
  }
  Mat out(frames, 2 * cfg.coefficients);
  out << mfcc, deltas;
  return out;
}

}  // namespace cosyn
