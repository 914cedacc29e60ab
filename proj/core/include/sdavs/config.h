#pragma once

// Run configuration: strict JSON in (unknown keys are errors), canonical JSON
// out, FNV-1a-64 hash over the canonical form recorded in checkpoints and
// reports.

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sdavs/model.h"

namespace sdavs {

// Invalid configuration input; the CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class NoiseCondition { none, brownian, chirp_train };

struct RunConfig {
    // sizes
    int height = 64, width = 64, frames = 4;
    int train_clips = 200, eval_clips = 50;
    std::array<int64_t, 4> ladder{16, 32, 64, 128};
    int audio_channels = 64;
    int head_channels = 16;
    int stem_channels = 8;

    // module toggles
    SnrpMode snrp = SnrpMode::on;
    bool cfs = true, sfs = true;
    bool damf = true, stc = true;
    RmMode rm = RmMode::mul;
    Branch branch = Branch::both;
    QueryPairing query_pairing = QueryPairing::printed;

    // optimization
    int epochs = 60;
    int batch_size = 4;
    double lr = 1e-3;
    double weight_decay = 1e-2;
    std::vector<int> lr_milestones;  // empty -> {epochs/2, 3*epochs/4}
    double lr_gamma = 0.1;
    double target_jf = 0.90;  // early-stop threshold on train J&F; <= 0 disables

    // noise condition baked into a run (evaluation-time mixing)
    NoiseCondition noise = NoiseCondition::none;
    double noise_scale = 0.1;

    uint64_t seed = 1;

    std::vector<int> milestones_or_default() const;
    ModelConfig model_config() const;
    void validate() const;  // throws ConfigError
};

// Strict parse: every key must be known and well-typed; missing keys keep
// defaults. Throws ConfigError.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config_file(const std::string& path);

// Canonical serialization (sorted keys, round-trip-exact numbers) and its
// FNV-1a-64 hash as a "0x..." hex string.
std::string config_to_json(const RunConfig& cfg);
std::string config_hash(const RunConfig& cfg);

const char* to_string(NoiseCondition n);
const char* to_string(SnrpMode m);
const char* to_string(RmMode m);
const char* to_string(Branch b);
const char* to_string(QueryPairing p);
NoiseCondition noise_from_string(const std::string& s);  // accepts "clean" as "none"

}  // namespace sdavs
