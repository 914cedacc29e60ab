#include "sdavs/wav.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace sdavs::audio {

namespace {

void put_u32(std::ofstream& f, uint32_t v) {
    char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff), char((v >> 24) & 0xff)};
    f.write(b, 4);
}
void put_u16(std::ofstream& f, uint16_t v) {
    char b[2] = {char(v & 0xff), char((v >> 8) & 0xff)};
    f.write(b, 2);
}
uint32_t get_u32(const unsigned char* p) {
    return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
}
uint16_t get_u16(const unsigned char* p) { return uint16_t(p[0] | p[1] << 8); }

}  // namespace

void write_wav(const std::string& path, const std::vector<float>& samples, int sample_rate) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("write_wav: cannot open " + path);
    const uint32_t data_bytes = uint32_t(samples.size() * 2);
    f.write("RIFF", 4);
    put_u32(f, 36 + data_bytes);
    f.write("WAVE", 4);
    f.write("fmt ", 4);
    put_u32(f, 16);
    put_u16(f, 1);  // PCM
    put_u16(f, 1);  // mono
    put_u32(f, uint32_t(sample_rate));
    put_u32(f, uint32_t(sample_rate * 2));
    put_u16(f, 2);
    put_u16(f, 16);
    f.write("data", 4);
    put_u32(f, data_bytes);
    for (float s : samples) {
        const float c = std::clamp(s, -1.0f, 1.0f);
        const int16_t q = int16_t(std::lround(double(c) * 32767.0));
        char b[2] = {char(q & 0xff), char((q >> 8) & 0xff)};
        f.write(b, 2);
    }
    if (!f) throw std::runtime_error("write_wav: write failed for " + path);
}

std::vector<float> read_wav(const std::string& path, int* sample_rate) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("read_wav: cannot open " + path);
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
    if (buf.size() < 44 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
        std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
        throw std::runtime_error("read_wav: not a RIFF/WAVE file: " + path);

    size_t pos = 12;
    int rate = 0, channels = 0, bits = 0;
    std::vector<float> samples;
    while (pos + 8 <= buf.size()) {
        const char* id = reinterpret_cast<const char*>(buf.data() + pos);
        const uint32_t len = get_u32(buf.data() + pos + 4);
        const size_t body = pos + 8;
        if (body + len > buf.size()) throw std::runtime_error("read_wav: truncated chunk in " + path);
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (len < 16) throw std::runtime_error("read_wav: short fmt chunk");
            if (get_u16(buf.data() + body) != 1)
                throw std::runtime_error("read_wav: only PCM supported");
            channels = get_u16(buf.data() + body + 2);
            rate = int(get_u32(buf.data() + body + 4));
            bits = get_u16(buf.data() + body + 14);
        } else if (std::memcmp(id, "data", 4) == 0) {
            if (channels != 1 || bits != 16)
                throw std::runtime_error("read_wav: only mono 16-bit supported");
            samples.resize(len / 2);
            for (size_t i = 0; i < samples.size(); ++i) {
                const int16_t q = int16_t(get_u16(buf.data() + body + i * 2));
                samples[i] = float(q) / 32768.0f;
            }
        }
        pos = body + len + (len & 1);
    }
    if (samples.empty()) throw std::runtime_error("read_wav: no data chunk in " + path);
    if (sample_rate) *sample_rate = rate;
    return samples;
}

}  // namespace sdavs::audio
