#include "sdavs/dataset.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sdavs/audio.h"
#include "sdavs/rng.h"

namespace sdavs {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Shape2d {
    int kind = 0;  // 0 = circle, 1 = square
    double cx = 0, cy = 0, r = 0;
    double vx = 0, vy = 0;
    double color[3] = {0, 0, 0};
};

Shape2d place_shape(int kind, const std::vector<Shape2d>& existing, int height, int width,
                    Rng& rng) {
    Shape2d s;
    s.kind = kind;
    for (int attempt = 0; attempt < 50; ++attempt) {
        s.r = rng.uniform(height / 6.0, height / 4.0);
        s.cx = rng.uniform(s.r + 1, width - s.r - 1);
        s.cy = rng.uniform(s.r + 1, height - s.r - 1);
        bool clear = true;
        for (const Shape2d& o : existing) {
            const double dx = s.cx - o.cx, dy = s.cy - o.cy, lim = s.r + o.r + 2;
            if (dx * dx + dy * dy <= lim * lim) {
                clear = false;
                break;
            }
        }
        if (clear) break;  // otherwise keep the last candidate
    }
    s.vx = rng.uniform(-2.5, 2.5);
    s.vy = rng.uniform(-2.5, 2.5);
    const double base_red[3] = {0.85, 0.35, 0.28};   // circle
    const double base_blue[3] = {0.28, 0.40, 0.88};  // square
    const double* base = kind == 0 ? base_red : base_blue;
    for (int c = 0; c < 3; ++c)
        s.color[c] = std::clamp(base[c] + rng.uniform(-0.08, 0.08), 0.0, 1.0);
    return s;
}

}  // namespace

uint64_t clip_seed(uint64_t dataset_seed, const std::string& split, int index) {
    return param_seed(dataset_seed, split + "/" + std::to_string(index));
}

std::vector<float> clip_mels(const std::vector<float>& waveform, int frames) {
    const size_t sr = size_t(audio::kSampleRate);
    if (waveform.size() != size_t(frames) * sr)
        throw std::runtime_error("clip_mels: waveform must hold exactly T seconds");
    std::vector<float> mels;
    mels.reserve(size_t(frames) * audio::kNumFrames * audio::kNumMel);
    for (int t = 0; t < frames; ++t) {
        std::vector<float> second(waveform.begin() + long(size_t(t) * sr),
                                  waveform.begin() + long(size_t(t + 1) * sr));
        std::vector<float> grid = audio::log_mel(second);
        mels.insert(mels.end(), grid.begin(), grid.end());
    }
    return mels;
}

Clip generate_clip(uint64_t seed, int height, int width, int frames, bool keep_waveform) {
    if (height < 16 || width < 16 || frames < 1)
        throw std::runtime_error("generate_clip: need H, W >= 16 and T >= 1");
    Rng rng(seed);
    const int H = height, W = width, T = frames;

    const bool multi = rng.uniform() < 0.25;
    const int sounding_kind = int(rng.next_below(2));  // 0 circle, 1 square
    const bool distractor = multi || rng.uniform() < 0.75;

    std::vector<Shape2d> shapes;
    shapes.push_back(place_shape(sounding_kind, shapes, H, W, rng));
    if (multi || distractor) shapes.push_back(place_shape(1 - sounding_kind, shapes, H, W, rng));
    const size_t n_sounders = multi ? 2 : 1;  // shapes[0..n_sounders) emit audio

    Clip clip;
    clip.height = H;
    clip.width = W;
    clip.frames = T;
    clip.seed = seed;
    if (multi)
        clip.descriptor = sounding_kind == 0 ? "circle+square" : "square+circle";
    else
        clip.descriptor = sounding_kind == 0 ? "circle" : "square";

    const double gx = rng.uniform(0.0, 0.3), gy = rng.uniform(0.0, 0.3);
    const size_t sr = size_t(audio::kSampleRate);
    clip.video.assign(size_t(T) * 3 * H * W, 0.0f);
    clip.masks.assign(size_t(T) * H * W, 0);
    clip.waveform.assign(size_t(T) * sr, 0.0f);

    const double area_ref = kPi * (H / 4.0) * (H / 4.0);
    std::vector<float> img(size_t(3) * H * W);
    for (int t = 0; t < T; ++t) {
        // gradient background plus per-channel sensor noise
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x)
                    img[size_t(c) * H * W + size_t(y) * W + size_t(x)] =
                        float(0.1 + gx * x / W + gy * y / H + rng.normal(0.0, 0.02));

        for (size_t si = 0; si < shapes.size(); ++si) {
            const Shape2d& s = shapes[si];
            const double cxt = std::clamp(s.cx + s.vx * t, s.r + 1, W - s.r - 1);
            const double cyt = std::clamp(s.cy + s.vy * t, s.r + 1, H - s.r - 1);
            int64_t area = 0;
            for (int y = 0; y < H; ++y) {
                for (int x = 0; x < W; ++x) {
                    bool inside;
                    if (s.kind == 0) {
                        const double dx = x - cxt, dy = y - cyt;
                        inside = dx * dx + dy * dy <= s.r * s.r;
                    } else {
                        inside = std::abs(x - cxt) <= s.r * 0.9 && std::abs(y - cyt) <= s.r * 0.9;
                    }
                    if (!inside) continue;
                    ++area;
                    for (int c = 0; c < 3; ++c)
                        img[size_t(c) * H * W + size_t(y) * W + size_t(x)] = float(s.color[c]);
                    if (si < n_sounders)
                        clip.masks[size_t(t) * H * W + size_t(y) * W + size_t(x)] = 1;
                }
            }
            if (si < n_sounders) {
                // Both tones sit low (mel bins ~2 and ~5) where the 1/f^2
                // interference used by the robustness evaluation carries real
                // energy: at scale 0.1 the noise bed there is comparable to a
                // weak tone's presence evidence, so noisy conditions genuinely
                // threaten the which-shape-sounds decision instead of leaving
                // a clean anchor frequency the model can fall back on.
                const double freq = s.kind == 0 ? 220.0 : 340.0;
                const double amp = 0.2 + 0.6 * std::min(double(area) / area_ref, 1.0);
                float* wav = clip.waveform.data() + size_t(t) * sr;
                for (size_t n = 0; n < sr; ++n) {
                    const double phase = 2.0 * kPi * freq *
                                         double(size_t(t) * sr + n) / audio::kSampleRate;
                    wav[n] += float(amp * std::sin(phase));
                }
            }
        }
        float* dst = clip.video.data() + size_t(t) * 3 * H * W;
        for (size_t i = 0; i < img.size(); ++i) dst[i] = std::clamp(img[i], 0.0f, 1.0f);
    }

    clip.mels = clip_mels(clip.waveform, T);
    if (!keep_waveform) {
        clip.waveform.clear();
        clip.waveform.shrink_to_fit();
    }
    return clip;
}

}  // namespace sdavs
