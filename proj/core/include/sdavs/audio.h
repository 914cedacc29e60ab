#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sdavs::audio {

inline constexpr int kSampleRate = 16000;
inline constexpr int kWinLen = 400;  // 25 ms at 16 kHz
inline constexpr int kHop = 160;     // 10 ms
inline constexpr int kNumMel = 64;
inline constexpr int kNumFrames = 96;  // frames kept per 1-second segment
inline constexpr double kMelLoHz = 125.0;
inline constexpr double kMelHiHz = 7500.0;
inline constexpr double kLogOffset = 0.01;

struct Spectrogram {
    int frames = 0;
    int bins = 0;
    std::vector<float> mag;  // frames × bins, row-major, |X| >= 0

    float at(int f, int b) const { return mag[size_t(f) * size_t(bins) + size_t(b)]; }
};

double hz_to_mel(double f);
double mel_to_hz(double m);

// 64 triangular filters over win_len/2+1 = 201 bins, HTK mel scale,
// 125-7500 Hz. Row f holds filter f's weight per FFT bin.
const std::vector<std::vector<double>>& mel_filterbank();

// Hann-windowed short-time Fourier magnitudes.
// frames = floor((len - win_len)/hop) + 1; bins = win_len/2 + 1.
// Throws if the waveform is shorter than one window.
Spectrogram stft(const std::vector<float>& wave, int win_len = kWinLen, int hop = kHop);

// 1-second 16 kHz waveform -> 96×64 log-mel grid, row-major (frame, mel):
// log(filterbank @ |X|^2 + 0.01). Throws on wrong sample count.
std::vector<float> log_mel(const std::vector<float>& wave);

// Integrated white Gaussian noise (1/f^2 spectrum) with a first-order
// DC block at ~20 Hz, mean-removed, RMS-normalized to 1. The block keeps
// the -20 dB/decade shape across the audible band while preventing the
// raw random walk's sub-audio drift from soaking up the entire RMS budget
// (a physical recording of brown noise is band-limited the same way).
// Deterministic per seed.
std::vector<float> brownian_noise(size_t n, uint64_t seed);

enum class NoiseKind { brownian, chirp_train };

// Interference synthesis per noise condition; RMS-normalized to 1.
// chirp_train is a deterministic amplitude-modulated chirp stack standing in
// for a recorded moving-train clip (non-stationary frame energy).
std::vector<float> synth_interference(NoiseKind kind, size_t n, uint64_t seed);

// out = signal + scale * (noise / RMS(noise)) * RMS(signal).
// A zero-RMS signal short-circuits to an unchanged copy. Length mismatch throws.
std::vector<float> mix_noise(const std::vector<float>& signal, const std::vector<float>& noise,
                             float scale = 0.1f);

double rms(const std::vector<float>& w);

}  // namespace sdavs::audio
