#include "sdavs/audio.h"

#include <cmath>
#include <mutex>
#include <stdexcept>

#include "sdavs/rng.h"

namespace sdavs::audio {

double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

const std::vector<std::vector<double>>& mel_filterbank() {
    static std::vector<std::vector<double>> fb;
    static std::once_flag once;
    std::call_once(once, [] {
        const int bins = kWinLen / 2 + 1;
        std::vector<double> mel_pts(kNumMel + 2);
        const double m_lo = hz_to_mel(kMelLoHz), m_hi = hz_to_mel(kMelHiHz);
        for (int i = 0; i < kNumMel + 2; ++i)
            mel_pts[size_t(i)] = mel_to_hz(m_lo + (m_hi - m_lo) * i / double(kNumMel + 1));
        fb.assign(kNumMel, std::vector<double>(size_t(bins), 0.0));
        for (int m = 0; m < kNumMel; ++m) {
            const double f0 = mel_pts[size_t(m)], f1 = mel_pts[size_t(m) + 1],
                         f2 = mel_pts[size_t(m) + 2];
            for (int b = 0; b < bins; ++b) {
                const double f = double(b) * kSampleRate / double(kWinLen);
                const double up = (f - f0) / (f1 - f0);
                const double dn = (f2 - f) / (f2 - f1);
                fb[size_t(m)][size_t(b)] = std::max(0.0, std::min(up, dn));
            }
        }
    });
    return fb;
}

namespace {

// cos/sin tables for the naive 400-point real DFT, indexed [bin][sample]
struct DftTables {
    std::vector<double> c, s;  // bins × win flattened
    int bins, win;
};

const DftTables& dft_tables(int win) {
    static DftTables t;
    static std::once_flag once;
    std::call_once(once, [win] {
        t.win = win;
        t.bins = win / 2 + 1;
        t.c.resize(size_t(t.bins) * size_t(win));
        t.s.resize(size_t(t.bins) * size_t(win));
        for (int k = 0; k < t.bins; ++k) {
            for (int n = 0; n < win; ++n) {
                const double a = 2.0 * M_PI * k * n / double(win);
                t.c[size_t(k) * size_t(win) + size_t(n)] = std::cos(a);
                t.s[size_t(k) * size_t(win) + size_t(n)] = std::sin(a);
            }
        }
    });
    if (win != t.win) throw std::runtime_error("stft: window length is fixed per process");
    return t;
}

std::vector<double> hann_window(int n) {
    std::vector<double> w(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) w[size_t(i)] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / double(n));
    return w;
}

}  // namespace

Spectrogram stft(const std::vector<float>& wave, int win_len, int hop) {
    if (int(wave.size()) < win_len)
        throw std::runtime_error("stft: waveform shorter than one window (" +
                                 std::to_string(wave.size()) + " < " + std::to_string(win_len) + ")");
    const int frames = int((wave.size() - size_t(win_len)) / size_t(hop)) + 1;
    const int bins = win_len / 2 + 1;
    static const std::vector<double> hann = hann_window(kWinLen);
    const std::vector<double>& win =
        win_len == kWinLen ? hann : hann_window(win_len);  // non-default sizes: local window
    const DftTables& tb = dft_tables(win_len);

    Spectrogram out;
    out.frames = frames;
    out.bins = bins;
    out.mag.resize(size_t(frames) * size_t(bins));
    std::vector<double> seg(static_cast<size_t>(win_len));
    for (int f = 0; f < frames; ++f) {
        const size_t off = size_t(f) * size_t(hop);
        for (int n = 0; n < win_len; ++n) seg[size_t(n)] = double(wave[off + size_t(n)]) * win[size_t(n)];
        for (int k = 0; k < bins; ++k) {
            const double* ck = tb.c.data() + size_t(k) * size_t(win_len);
            const double* sk = tb.s.data() + size_t(k) * size_t(win_len);
            double re = 0.0, im = 0.0;
            for (int n = 0; n < win_len; ++n) {
                re += seg[size_t(n)] * ck[n];
                im -= seg[size_t(n)] * sk[n];
            }
            out.mag[size_t(f) * size_t(bins) + size_t(k)] = float(std::sqrt(re * re + im * im));
        }
    }
    return out;
}

std::vector<float> log_mel(const std::vector<float>& wave) {
    if (wave.size() != size_t(kSampleRate))
        throw std::runtime_error("log_mel: expected exactly 1 second at 16 kHz (16000 samples), got " +
                                 std::to_string(wave.size()));
    const Spectrogram sp = stft(wave, kWinLen, kHop);
    const auto& fb = mel_filterbank();
    std::vector<float> out(size_t(kNumFrames) * size_t(kNumMel));
    for (int f = 0; f < kNumFrames; ++f) {
        for (int m = 0; m < kNumMel; ++m) {
            double e = 0.0;
            const auto& filt = fb[size_t(m)];
            for (int b = 0; b < sp.bins; ++b) {
                const double a = double(sp.at(f, b));
                e += filt[size_t(b)] * a * a;
            }
            out[size_t(f) * size_t(kNumMel) + size_t(m)] = float(std::log(e + kLogOffset));
        }
    }
    return out;
}

double rms(const std::vector<float>& w) {
    if (w.empty()) return 0.0;
    double s = 0.0;
    for (float v : w) s += double(v) * double(v);
    return std::sqrt(s / double(w.size()));
}

std::vector<float> brownian_noise(size_t n, uint64_t seed) {
    if (n < 2) throw std::runtime_error("brownian_noise: need at least 2 samples");
    Rng rng(splitmix64(seed ^ 0xb70b71a2u));
    // Random walk, then a one-pole DC block (cutoff ~20 Hz at 16 kHz). Below
    // the cutoff the walk's drift is flattened; above it the 1/f^2 spectrum
    // passes through, so the normalized output spends its RMS budget in the
    // audible band like a real brown-noise recording instead of on drift.
    const double rho = 1.0 - 2.0 * kPi * 20.0 / double(kSampleRate);
    std::vector<double> acc(n);
    double run = 0.0, prev_run = 0.0, blocked = 0.0, mean = 0.0;
    for (size_t i = 0; i < n; ++i) {
        run += rng.normal();
        blocked = run - prev_run + rho * blocked;
        prev_run = run;
        acc[i] = blocked;
        mean += blocked;
    }
    mean /= double(n);
    double sq = 0.0;
    for (size_t i = 0; i < n; ++i) {
        acc[i] -= mean;
        sq += acc[i] * acc[i];
    }
    const double r = std::sqrt(sq / double(n));
    std::vector<float> out(n);
    const double inv = r > 0 ? 1.0 / r : 0.0;
    for (size_t i = 0; i < n; ++i) out[i] = float(acc[i] * inv);
    return out;
}

std::vector<float> synth_interference(NoiseKind kind, size_t n, uint64_t seed) {
    if (kind == NoiseKind::brownian) return brownian_noise(n, seed);

    // chirp_train: three upward frequency sweeps with slow amplitude
    // modulation at staggered phases, plus a weak brownian bed. The AM makes
    // frame energies strongly non-stationary, unlike a steady noise floor.
    Rng rng(splitmix64(seed ^ 0xc41c9b75u));
    const double dur = double(n) / double(kSampleRate);
    struct Chirp {
        double f0, f1, am_hz, am_phase, gain;
    };
    std::vector<Chirp> chirps;
    for (int i = 0; i < 3; ++i) {
        Chirp c;
        c.f0 = rng.uniform(200.0, 500.0);
        c.f1 = rng.uniform(1500.0, 3500.0);
        c.am_hz = rng.uniform(1.0, 3.0);
        c.am_phase = rng.uniform(0.0, 2.0 * M_PI);
        c.gain = rng.uniform(0.6, 1.0);
        chirps.push_back(c);
    }
    std::vector<float> bed = brownian_noise(n, splitmix64(seed ^ 0x77aa11u));
    std::vector<double> acc(n, 0.0);
    for (const Chirp& c : chirps) {
        const double k = (c.f1 - c.f0) / dur;  // linear sweep rate
        for (size_t i = 0; i < n; ++i) {
            const double t = double(i) / double(kSampleRate);
            const double phase = 2.0 * M_PI * (c.f0 * t + 0.5 * k * t * t);
            const double am = 0.5 + 0.5 * std::sin(2.0 * M_PI * c.am_hz * t + c.am_phase);
            acc[i] += c.gain * am * am * std::sin(phase);
        }
    }
    for (size_t i = 0; i < n; ++i) acc[i] += 0.15 * double(bed[i]);
    double sq = 0.0;
    for (double v : acc) sq += v * v;
    const double r = std::sqrt(sq / double(n));
    std::vector<float> out(n);
    const double inv = r > 0 ? 1.0 / r : 0.0;
    for (size_t i = 0; i < n; ++i) out[i] = float(acc[i] * inv);
    return out;
}

std::vector<float> mix_noise(const std::vector<float>& signal, const std::vector<float>& noise,
                             float scale) {
    if (signal.size() != noise.size())
        throw std::runtime_error("mix_noise: length mismatch (" + std::to_string(signal.size()) +
                                 " vs " + std::to_string(noise.size()) + ")");
    const double rs = rms(signal);
    const double rn = rms(noise);
    std::vector<float> out(signal);
    if (rs == 0.0 || rn == 0.0 || scale == 0.0f) return out;
    const double k = double(scale) * rs / rn;
    for (size_t i = 0; i < out.size(); ++i) out[i] = float(double(signal[i]) + k * double(noise[i]));
    return out;
}

}  // namespace sdavs::audio
