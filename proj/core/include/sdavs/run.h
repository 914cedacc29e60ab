#pragma once

// Training loop, evaluation (clean and noisy), consistency statistics, and
// the ablation grid runner. All entry points are deterministic functions of
// (config, seed); evaluation parallelism never changes results or bytes.

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "sdavs/checkpoint.h"
#include "sdavs/config.h"
#include "sdavs/dataset.h"
#include "sdavs/model.h"

namespace sdavs {

// Worker count for clip-parallel stages: SDAVS_THREADS when set (>= 1),
// otherwise the hardware concurrency.
int num_threads();

// Deterministic clip set for a named split ("train", "eval"); parallel
// across clips, ordered by index.
std::vector<Clip> build_dataset(const RunConfig& cfg, const std::string& split, int count,
                                bool keep_waveform);

struct EpochLog {
    int epoch = 0;
    double loss = 0;      // mean over the epoch's steps
    double train_jf = 0;  // training-set J&F after the epoch
    double lr = 0;
    double seconds = 0;
};

struct TrainResult {
    std::vector<EpochLog> log;
    double final_train_jf = 0;
    int epochs_run = 0;
    bool reached_target = false;
    double wall_seconds = 0;
};

// Runs the full training loop on the config's synthetic training split.
// Progress lines go to `console` when non-null. Throws NumericError (with the
// offending op named) if the loss goes non-finite.
TrainResult train_model(Model<float>& model, const RunConfig& cfg, std::ostream* console);

struct EvalRow {
    std::string clip_id;
    double j = 0, f = 0, jf = 0;
};

struct ConsistencyStats {
    double cka_before = 0, cka_after = 0;
    double kl_before = 0, kl_after = 0;
    double js_before = 0, js_after = 0;
};

struct EvalReport {
    std::string noise = "none";
    double noise_scale = 0;
    std::string config_hash;
    std::vector<EvalRow> rows;
    double mean_j = 0, mean_f = 0, mean_jf = 0;
    ConsistencyStats consistency;
};

// Per-clip J/F/J&F plus audio-video consistency statistics at the finest
// decoder stage (before vs after the fusion block). When `noise` is not
// `none`, interference is mixed into each waveform (deterministic per clip)
// before feature extraction; video and ground truth are untouched.
EvalReport evaluate_model(const Model<float>& model, const RunConfig& cfg,
                          const std::vector<Clip>& clips, NoiseCondition noise,
                          double noise_scale);

// Mean clip-level J&F of the model on a clip set (used for per-epoch training
// metrics); parallel, deterministic.
double dataset_jf(const Model<float>& model, const std::vector<Clip>& clips, int batch_size);

std::string report_to_json(const EvalReport& report);  // byte-deterministic
std::string report_to_csv(const EvalReport& report);

// One ablation grid cell: axis overrides applied to a base config.
struct AblateCell {
    std::string label;             // e.g. "rm=straight,snrp=off"
    RunConfig config;
};

struct AblateRow {
    std::string label;
    std::string config_hash;
    int epochs_run = 0;
    double train_jf = 0;
    double eval_jf = 0;
};

// Cross product of {key: [values]} axes over a base config, labels in a
// stable order. Throws ConfigError on unknown keys/values.
std::vector<AblateCell> expand_grid(const RunConfig& base, const std::string& axes_json);

// Trains and clean-evaluates every cell; rows in cell order.
std::vector<AblateRow> run_ablation(const std::vector<AblateCell>& cells, std::ostream* console);

std::string ablation_to_json(const std::vector<AblateRow>& rows);
std::string ablation_to_csv(const std::vector<AblateRow>& rows);

}  // namespace sdavs
