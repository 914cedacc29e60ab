#pragma once

// Deterministic synthetic audio-visual scenes: moving colored shapes on a
// gradient background where the sounding shape (circle <-> 440 Hz, square <->
// 880 Hz) emits a tone whose amplitude tracks its on-screen area. Ground
// truth marks the sounding shape's pixels only; silent distractors stay out.

#include <cstdint>
#include <string>
#include <vector>

namespace sdavs {

struct Clip {
    int height = 0, width = 0, frames = 0;
    std::vector<float> video;     // T×3×H×W, values in [0,1]
    std::vector<float> mels;      // T×96×64 log-mel grids
    std::vector<uint8_t> masks;   // T×H×W, {0,1}
    std::vector<float> waveform;  // T seconds at 16 kHz (may be dropped)
    uint64_t seed = 0;
    std::string descriptor;       // which shape(s) sound, e.g. "circle" / "circle+square"
};

// Deterministic clip from a single 64-bit seed. H, W >= 16, T >= 1.
// keep_waveform=false drops the raw audio after the mel grids are computed.
Clip generate_clip(uint64_t seed, int height, int width, int frames, bool keep_waveform = true);

// Namespaced per-clip seed: clips of a split never collide across splits.
uint64_t clip_seed(uint64_t dataset_seed, const std::string& split, int index);

// T×96×64 log-mel grids for a T-second waveform (helper shared with
// noisy-evaluation paths that re-extract features after mixing).
std::vector<float> clip_mels(const std::vector<float>& waveform, int frames);

}  // namespace sdavs
