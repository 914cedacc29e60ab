#include "sdavs/run.h"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "sdavs/audio.h"
#include "sdavs/metrics.h"
#include "sdavs/ops.h"
#include "sdavs/optim.h"
#include "sdavs/rng.h"

namespace sdavs {

using nlohmann::json;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Static-stride parallel loop. Worker threads only write to disjoint,
// index-addressed slots, so the schedule never affects results.
void parallel_for(int64_t n, int threads, const std::function<void(int64_t)>& body) {
    threads = int(std::min<int64_t>(threads, n));
    if (threads <= 1) {
        for (int64_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::mutex err_mutex;
    std::exception_ptr first_error;
    auto worker = [&](int w) {
        try {
            NoGradGuard guard;  // worker threads never record gradients
            for (int64_t i = w; i < n; i += threads) body(i);
        } catch (...) {
            std::lock_guard<std::mutex> lock(err_mutex);
            if (!first_error) first_error = std::current_exception();
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(size_t(threads));
    for (int w = 0; w < threads; ++w) pool.emplace_back(worker, w);
    for (std::thread& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

// Batch tensors from clips[idx[0..B)]: frames B×3×T×H×W, mels B×T×96×64,
// target B×1×T×H×W.
struct Batch {
    Tensor<float> frames, mels, target;
};

Batch make_batch(const std::vector<Clip>& clips, const std::vector<int>& idx,
                 const std::vector<std::vector<float>>* mel_override = nullptr) {
    const int64_t B = int64_t(idx.size());
    const Clip& c0 = clips[size_t(idx[0])];
    const int64_t T = c0.frames, H = c0.height, W = c0.width;
    const int64_t hw = H * W;
    Batch batch;
    batch.frames = Tensor<float>::zeros({B, 3, T, H, W});
    batch.mels = Tensor<float>::zeros({B, T, audio::kNumFrames, audio::kNumMel});
    batch.target = Tensor<float>::zeros({B, 1, T, H, W});
    for (int64_t b = 0; b < B; ++b) {
        const Clip& clip = clips[size_t(idx[size_t(b)])];
        float* fdst = batch.frames.data() + b * 3 * T * hw;
        for (int64_t t = 0; t < T; ++t)
            for (int64_t ch = 0; ch < 3; ++ch)
                std::copy_n(clip.video.data() + (t * 3 + ch) * hw, hw,
                            fdst + (ch * T + t) * hw);
        const std::vector<float>& mels =
            mel_override ? (*mel_override)[size_t(idx[size_t(b)])] : clip.mels;
        std::copy_n(mels.data(), mels.size(),
                    batch.mels.data() + b * T * audio::kNumFrames * audio::kNumMel);
        float* tdst = batch.target.data() + b * T * hw;
        for (int64_t i = 0; i < T * hw; ++i) tdst[i] = float(clip.masks[size_t(i)]);
    }
    return batch;
}

// Clip-level J and F: per-frame metrics on thresholded logits (p > 0.5, i.e.
// logit > 0), averaged over the clip's frames.
std::pair<double, double> clip_metrics(const float* logits, const Clip& clip) {
    const int64_t T = clip.frames, hw = int64_t(clip.height) * clip.width;
    double j_sum = 0, f_sum = 0;
    std::vector<uint8_t> pred(static_cast<size_t>(hw)), gt(static_cast<size_t>(hw));
    for (int64_t t = 0; t < T; ++t) {
        for (int64_t i = 0; i < hw; ++i) {
            pred[size_t(i)] = logits[t * hw + i] > 0.0f ? 1 : 0;
            gt[size_t(i)] = clip.masks[size_t(t * hw + i)];
        }
        j_sum += metrics::jaccard(pred, gt);
        f_sum += metrics::f_measure(pred, gt);
    }
    return {j_sum / double(T), f_sum / double(T)};
}

std::vector<std::vector<int>> batch_indices(int64_t n, int batch_size) {
    std::vector<std::vector<int>> out;
    for (int64_t start = 0; start < n; start += batch_size) {
        std::vector<int> idx;
        for (int64_t i = start; i < std::min<int64_t>(start + batch_size, n); ++i)
            idx.push_back(int(i));
        out.push_back(std::move(idx));
    }
    return out;
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace

int num_threads() {
    if (const char* env = std::getenv("SDAVS_THREADS")) {
        const int v = std::atoi(env);
        if (v >= 1) return v;
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : int(hc);
}

std::vector<Clip> build_dataset(const RunConfig& cfg, const std::string& split, int count,
                                bool keep_waveform) {
    std::vector<Clip> clips(static_cast<size_t>(count));
    parallel_for(count, num_threads(), [&](int64_t i) {
        clips[size_t(i)] = generate_clip(clip_seed(cfg.seed, split, int(i)), cfg.height,
                                         cfg.width, cfg.frames, keep_waveform);
    });
    return clips;
}

double dataset_jf(const Model<float>& model, const std::vector<Clip>& clips, int batch_size) {
    const auto batches = batch_indices(int64_t(clips.size()), batch_size);
    std::vector<double> jf(clips.size(), 0.0);
    parallel_for(int64_t(batches.size()), num_threads(), [&](int64_t bi) {
        NoGradGuard guard;
        const std::vector<int>& idx = batches[size_t(bi)];
        Batch batch = make_batch(clips, idx);
        Tensor<float> logits = model(batch.frames, batch.mels);
        const Clip& c0 = clips[size_t(idx[0])];
        const int64_t per = int64_t(c0.frames) * c0.height * c0.width;
        for (size_t b = 0; b < idx.size(); ++b) {
            auto [j, f] = clip_metrics(logits.data() + int64_t(b) * per, clips[size_t(idx[b])]);
            jf[size_t(idx[b])] = 0.5 * (j + f);
        }
    });
    return std::accumulate(jf.begin(), jf.end(), 0.0) / double(jf.size());
}

TrainResult train_model(Model<float>& model, const RunConfig& cfg, std::ostream* console) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<Clip> train = build_dataset(cfg, "train", cfg.train_clips, false);
    if (console)
        *console << "dataset: " << train.size() << " training clips, "
                 << model.params.total_elements() << " parameters\n";

    AdamW<float>::Hyper hp;
    hp.lr = cfg.lr;
    hp.weight_decay = cfg.weight_decay;
    AdamW<float> opt(model.params.tensors(), hp);
    std::vector<int64_t> milestones;
    for (int m : cfg.milestones_or_default()) milestones.push_back(m);

    TrainResult res;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto e0 = std::chrono::steady_clock::now();
        const double lr = lr_multistep(cfg.lr, epoch, milestones, cfg.lr_gamma);
        opt.set_lr(lr);

        std::vector<int> order(train.size());
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle(param_seed(cfg.seed, "shuffle/" + std::to_string(epoch)));
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[size_t(shuffle.next_below(uint64_t(i)))]);

        double loss_sum = 0;
        int64_t steps = 0;
        for (size_t start = 0; start < order.size(); start += size_t(cfg.batch_size)) {
            std::vector<int> idx(order.begin() + long(start),
                                 order.begin() +
                                     long(std::min(start + size_t(cfg.batch_size), order.size())));
            clear_tape<float>();
            opt.zero_grad();
            Batch batch = make_batch(train, idx);
            Tensor<float> logits = model(batch.frames, batch.mels);
            LossParts<float> loss = segmentation_loss(logits, batch.target);
            loss_sum += double(loss.total.item());
            backward(loss.total);
            opt.step();
            ++steps;
        }

        EpochLog log;
        log.epoch = epoch;
        log.loss = loss_sum / double(steps);
        log.train_jf = dataset_jf(model, train, cfg.batch_size);
        log.lr = lr;
        log.seconds = seconds_since(e0);
        res.log.push_back(log);
        res.final_train_jf = log.train_jf;
        res.epochs_run = epoch + 1;
        if (console)
            *console << "epoch " << epoch << ": loss " << format_double(log.loss) << " train_jf "
                     << format_double(log.train_jf) << " lr " << format_double(lr) << " ("
                     << format_double(log.seconds) << "s)" << std::endl;
        if (cfg.target_jf > 0 && log.train_jf >= cfg.target_jf) {
            res.reached_target = true;
            if (console)
                *console << "reached target train J&F " << format_double(cfg.target_jf)
                         << " at epoch " << epoch << "\n";
            break;
        }
    }
    res.wall_seconds = seconds_since(t0);
    return res;
}

EvalReport evaluate_model(const Model<float>& model, const RunConfig& cfg,
                          const std::vector<Clip>& clips, NoiseCondition noise,
                          double noise_scale) {
    const int64_t N = int64_t(clips.size());
    const int64_t T = cfg.frames;
    EvalReport report;
    report.noise = to_string(noise);
    report.noise_scale = noise == NoiseCondition::none ? 0.0 : noise_scale;
    report.config_hash = config_hash(cfg);
    report.rows.resize(size_t(N));

    // Noisy conditions re-extract features from waveform + interference.
    std::vector<std::vector<float>> mel_override;
    const std::vector<std::vector<float>>* override_ptr = nullptr;
    if (noise != NoiseCondition::none) {
        mel_override.resize(size_t(N));
        const audio::NoiseKind kind = noise == NoiseCondition::brownian
                                          ? audio::NoiseKind::brownian
                                          : audio::NoiseKind::chirp_train;
        parallel_for(N, num_threads(), [&](int64_t i) {
            const Clip& clip = clips[size_t(i)];
            if (clip.waveform.empty())
                throw std::runtime_error("noisy evaluation needs clips with waveforms");
            std::vector<float> interference =
                audio::synth_interference(kind, clip.waveform.size(), param_seed(clip.seed, "noise"));
            std::vector<float> mixed =
                audio::mix_noise(clip.waveform, interference, float(noise_scale));
            mel_override[size_t(i)] = clip_mels(mixed, int(T));
        });
        override_ptr = &mel_override;
    }

    // Consistency sample rows: one channel-profile (GAP over H,W) per (clip, t).
    const int64_t C = cfg.ladder[0];  // finest decoder stage channels
    std::vector<double> xb(static_cast<size_t>(N * T * C)), yb(static_cast<size_t>(N * T * C));
    std::vector<double> xa(static_cast<size_t>(N * T * C)), ya(static_cast<size_t>(N * T * C));
    std::vector<double> kl_b(static_cast<size_t>(N)), kl_a(static_cast<size_t>(N)), js_b(static_cast<size_t>(N)), js_a(static_cast<size_t>(N));

    parallel_for(N, num_threads(), [&](int64_t i) {
        NoGradGuard guard;
        Batch batch = make_batch(clips, {int(i)}, override_ptr);
        ConsistencyTaps<float> taps;
        Tensor<float> logits = model(batch.frames, batch.mels, &taps);
        auto [j, f] = clip_metrics(logits.data(), clips[size_t(i)]);
        report.rows[size_t(i)] = {"eval/" + std::to_string(i), j, f, 0.5 * (j + f)};

        auto gap_rows = [&](const Tensor<float>& tap, std::vector<double>& dst) {
            const int64_t c_n = tap.shape()[1], t_n = tap.shape()[2];
            const int64_t hw = tap.shape()[3] * tap.shape()[4];
            const float* v = tap.data();
            for (int64_t t = 0; t < t_n; ++t)
                for (int64_t c = 0; c < c_n; ++c) {
                    double s = 0;
                    const float* p = v + (c * t_n + t) * hw;
                    for (int64_t k = 0; k < hw; ++k) s += double(p[k]);
                    dst[size_t((i * T + t) * C + c)] = s / double(hw);
                }
        };
        gap_rows(taps.audio_before, xb);
        gap_rows(taps.video_before, yb);
        gap_rows(taps.audio_after, xa);
        gap_rows(taps.video_after, ya);

        auto pa_b = metrics::softmax_distribution(taps.audio_before.val());
        auto pv_b = metrics::softmax_distribution(taps.video_before.val());
        auto pa_a = metrics::softmax_distribution(taps.audio_after.val());
        auto pv_a = metrics::softmax_distribution(taps.video_after.val());
        kl_b[size_t(i)] = metrics::kl_divergence(pa_b, pv_b);
        kl_a[size_t(i)] = metrics::kl_divergence(pa_a, pv_a);
        js_b[size_t(i)] = metrics::js_divergence(pa_b, pv_b);
        js_a[size_t(i)] = metrics::js_divergence(pa_a, pv_a);
    });

    for (const EvalRow& row : report.rows) {
        report.mean_j += row.j;
        report.mean_f += row.f;
        report.mean_jf += row.jf;
    }
    report.mean_j /= double(N);
    report.mean_f /= double(N);
    report.mean_jf /= double(N);

    report.consistency.cka_before = metrics::linear_cka(xb, N * T, C, yb, C);
    report.consistency.cka_after = metrics::linear_cka(xa, N * T, C, ya, C);
    report.consistency.kl_before = std::accumulate(kl_b.begin(), kl_b.end(), 0.0) / double(N);
    report.consistency.kl_after = std::accumulate(kl_a.begin(), kl_a.end(), 0.0) / double(N);
    report.consistency.js_before = std::accumulate(js_b.begin(), js_b.end(), 0.0) / double(N);
    report.consistency.js_after = std::accumulate(js_a.begin(), js_a.end(), 0.0) / double(N);
    return report;
}

std::string report_to_json(const EvalReport& report) {
    json j;
    j["noise"] = report.noise;
    j["noise_scale"] = report.noise_scale;
    j["config_hash"] = report.config_hash;
    j["mean_j"] = report.mean_j;
    j["mean_f"] = report.mean_f;
    j["mean_jf"] = report.mean_jf;
    j["consistency"] = {{"cka_before", report.consistency.cka_before},
                        {"cka_after", report.consistency.cka_after},
                        {"kl_before", report.consistency.kl_before},
                        {"kl_after", report.consistency.kl_after},
                        {"js_before", report.consistency.js_before},
                        {"js_after", report.consistency.js_after}};
    json rows = json::array();
    for (const EvalRow& r : report.rows)
        rows.push_back({{"clip_id", r.clip_id}, {"j", r.j}, {"f", r.f}, {"jf", r.jf}});
    j["clips"] = rows;
    return j.dump(2) + "\n";
}

std::string report_to_csv(const EvalReport& report) {
    std::ostringstream out;
    out << "clip_id,j,f,jf\n";
    char buf[128];
    for (const EvalRow& r : report.rows) {
        std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%.17g\n", r.clip_id.c_str(), r.j, r.f,
                      r.jf);
        out << buf;
    }
    return out.str();
}

std::vector<AblateCell> expand_grid(const RunConfig& base, const std::string& axes_json) {
    json axes;
    try {
        axes = json::parse(axes_json);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("ablation grid is not valid JSON: ") + e.what());
    }
    if (!axes.is_object()) throw ConfigError("ablation grid must be a JSON object of key -> values");

    std::vector<std::pair<std::string, std::vector<json>>> axis_list;
    for (auto it = axes.begin(); it != axes.end(); ++it) {
        if (!it.value().is_array() || it.value().empty())
            throw ConfigError("grid axis '" + it.key() + "' must be a non-empty array");
        axis_list.push_back({it.key(), std::vector<json>(it.value().begin(), it.value().end())});
    }

    std::vector<AblateCell> cells;
    std::vector<size_t> pick(axis_list.size(), 0);
    const json base_json = json::parse(config_to_json(base));
    while (true) {
        json patched = base_json;
        std::string label;
        for (size_t a = 0; a < axis_list.size(); ++a) {
            const auto& [key, values] = axis_list[a];
            patched[key] = values[pick[a]];
            if (!label.empty()) label += ",";
            label += key + "=" +
                     (values[pick[a]].is_string() ? values[pick[a]].get<std::string>()
                                                  : values[pick[a]].dump());
        }
        AblateCell cell;
        cell.label = label.empty() ? "base" : label;
        cell.config = parse_config(patched.dump());  // strict: bad keys/values throw
        cells.push_back(std::move(cell));

        size_t a = 0;
        for (; a < axis_list.size(); ++a) {
            if (++pick[a] < axis_list[a].second.size()) break;
            pick[a] = 0;
        }
        if (a == axis_list.size()) break;
    }
    return cells;
}

std::vector<AblateRow> run_ablation(const std::vector<AblateCell>& cells, std::ostream* console) {
    std::vector<AblateRow> rows;
    for (const AblateCell& cell : cells) {
        if (console) *console << "=== ablation cell: " << cell.label << " ===\n";
        Model<float> model(cell.config.model_config(), cell.config.seed);
        TrainResult tr = train_model(model, cell.config, console);
        std::vector<Clip> eval_clips =
            build_dataset(cell.config, "eval", cell.config.eval_clips, false);
        EvalReport report =
            evaluate_model(model, cell.config, eval_clips, NoiseCondition::none, 0.0);
        AblateRow row;
        row.label = cell.label;
        row.config_hash = config_hash(cell.config);
        row.epochs_run = tr.epochs_run;
        row.train_jf = tr.final_train_jf;
        row.eval_jf = report.mean_jf;
        rows.push_back(row);
        if (console)
            *console << "cell " << cell.label << ": train_jf " << format_double(row.train_jf)
                     << " eval_jf " << format_double(row.eval_jf) << " epochs " << row.epochs_run
                     << "\n";
    }
    return rows;
}

std::string ablation_to_json(const std::vector<AblateRow>& rows) {
    json arr = json::array();
    for (const AblateRow& r : rows)
        arr.push_back({{"label", r.label},
                       {"config_hash", r.config_hash},
                       {"epochs_run", r.epochs_run},
                       {"train_jf", r.train_jf},
                       {"eval_jf", r.eval_jf}});
    return arr.dump(2) + "\n";
}

std::string ablation_to_csv(const std::vector<AblateRow>& rows) {
    std::ostringstream out;
    out << "label,config_hash,epochs_run,train_jf,eval_jf\n";
    char buf[256];
    for (const AblateRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%s,%d,%.17g,%.17g\n", r.label.c_str(),
                      r.config_hash.c_str(), r.epochs_run, r.train_jf, r.eval_jf);
        out << buf;
    }
    return out.str();
}

}  // namespace sdavs
