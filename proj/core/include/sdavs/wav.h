#pragma once

#include <string>
#include <vector>

namespace sdavs::audio {

// Mono PCM 16-bit little-endian WAV. Floats are clamped to [-1, 1] on write
// and mapped back to [-1, 1) on read.
void write_wav(const std::string& path, const std::vector<float>& samples, int sample_rate = 16000);
std::vector<float> read_wav(const std::string& path, int* sample_rate = nullptr);

}  // namespace sdavs::audio
