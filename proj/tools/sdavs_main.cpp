// sdavs: deterministic audio-visual segmentation sandbox.
//
//   sdavs gen     --seed S --out DIR        export synthetic clips
//   sdavs train   --config C --out CKPT     train and checkpoint
//   sdavs eval    --ckpt CKPT [--noise ...] evaluate (clean or noisy)
//   sdavs ablate  --grid G [--out PREFIX]   run an ablation grid
//   sdavs inspect --ckpt CKPT               list checkpoint contents
//
// Exit codes: 0 ok, 2 configuration/usage error, 3 numeric failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sdavs/audio.h"
#include "sdavs/checkpoint.h"
#include "sdavs/config.h"
#include "sdavs/dataset.h"
#include "sdavs/run.h"
#include "sdavs/wav.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << text;
    if (!out.flush()) throw std::runtime_error("write failed: " + path);
}

sdavs::RunConfig config_from_option(const std::string& config_path) {
    return config_path.empty() ? sdavs::RunConfig{} : sdavs::load_config_file(config_path);
}

int cmd_gen(uint64_t seed, const std::string& out_dir, int clips, int height, int width,
            int frames, const std::string& split) {
    fs::create_directories(out_dir);
    json manifest;
    manifest["seed"] = seed;
    manifest["split"] = split;
    manifest["height"] = height;
    manifest["width"] = width;
    manifest["frames"] = frames;
    json entries = json::array();
    for (int i = 0; i < clips; ++i) {
        sdavs::Clip clip =
            sdavs::generate_clip(sdavs::clip_seed(seed, split, i), height, width, frames, true);
        char base[32];
        std::snprintf(base, sizeof(base), "clip_%03d", i);
        const std::string stem = out_dir + "/" + base;

        sdavs::BlobFile file;
        file.blobs.push_back({"video", {clip.frames, 3, clip.height, clip.width}, clip.video});
        std::vector<float> masks_f(clip.masks.begin(), clip.masks.end());
        file.blobs.push_back({"masks", {clip.frames, clip.height, clip.width}, masks_f});
        file.blobs.push_back(
            {"mels", {clip.frames, sdavs::audio::kNumFrames, sdavs::audio::kNumMel}, clip.mels});
        file.blobs.push_back({"waveform", {int64_t(clip.waveform.size())}, clip.waveform});
        json meta;
        meta["clip_seed"] = clip.seed;
        meta["descriptor"] = clip.descriptor;
        file.meta_json = meta.dump();
        sdavs::write_blob_file(stem + ".bin", file);
        sdavs::audio::write_wav(stem + ".wav", clip.waveform);

        entries.push_back({{"id", std::string(base)},
                           {"seed", clip.seed},
                           {"descriptor", clip.descriptor},
                           {"container", std::string(base) + ".bin"},
                           {"audio", std::string(base) + ".wav"}});
        std::cout << base << ": " << clip.descriptor << "\n";
    }
    manifest["clips"] = entries;
    write_text(out_dir + "/manifest.json", manifest.dump(2) + "\n");
    std::cout << "wrote " << clips << " clips to " << out_dir << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& out_ckpt) {
    sdavs::RunConfig cfg = config_from_option(config_path);
    std::cout << "config " << sdavs::config_hash(cfg) << ": " << sdavs::config_to_json(cfg)
              << "\n";
    sdavs::Model<float> model(cfg.model_config(), cfg.seed);
    sdavs::TrainResult result = sdavs::train_model(model, cfg, &std::cout);
    sdavs::save_checkpoint(out_ckpt, model.params, cfg);
    std::cout << "checkpoint written to " << out_ckpt << " (train J&F "
              << result.final_train_jf << " after " << result.epochs_run << " epochs, "
              << result.wall_seconds << "s)\n";
    return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& noise_name, double scale,
             const std::string& report_path, const std::string& config_path, bool force) {
    std::string expected_hash;
    if (!config_path.empty())
        expected_hash = sdavs::config_hash(sdavs::load_config_file(config_path));
    sdavs::Checkpoint ckpt = sdavs::read_checkpoint(ckpt_path, expected_hash, force);
    sdavs::Model<float> model(ckpt.config.model_config(), ckpt.config.seed);
    sdavs::load_parameters(model.params, ckpt.raw);

    const sdavs::NoiseCondition noise = sdavs::noise_from_string(noise_name);
    std::vector<sdavs::Clip> clips = sdavs::build_dataset(
        ckpt.config, "eval", ckpt.config.eval_clips, noise != sdavs::NoiseCondition::none);
    sdavs::EvalReport report = sdavs::evaluate_model(model, ckpt.config, clips, noise, scale);

    json summary;
    summary["noise"] = report.noise;
    summary["noise_scale"] = report.noise_scale;
    summary["mean_j"] = report.mean_j;
    summary["mean_f"] = report.mean_f;
    summary["mean_jf"] = report.mean_jf;
    summary["cka_before"] = report.consistency.cka_before;
    summary["cka_after"] = report.consistency.cka_after;
    summary["kl_before"] = report.consistency.kl_before;
    summary["kl_after"] = report.consistency.kl_after;
    summary["js_before"] = report.consistency.js_before;
    summary["js_after"] = report.consistency.js_after;
    std::cout << summary.dump(2) << "\n";

    if (!report_path.empty()) {
        const std::string ext = fs::path(report_path).extension().string();
        if (ext == ".json") {
            write_text(report_path, sdavs::report_to_json(report));
        } else if (ext == ".csv") {
            write_text(report_path, sdavs::report_to_csv(report));
        } else {
            write_text(report_path + ".json", sdavs::report_to_json(report));
            write_text(report_path + ".csv", sdavs::report_to_csv(report));
        }
        std::cout << "report written to " << report_path << "\n";
    }
    return 0;
}

int cmd_ablate(const std::string& grid_path, const std::string& config_path,
               const std::string& out_prefix) {
    std::ifstream in(grid_path, std::ios::binary);
    if (!in) throw sdavs::ConfigError("cannot open grid file: " + grid_path);
    std::stringstream ss;
    ss << in.rdbuf();
    json grid;
    try {
        grid = json::parse(ss.str());
    } catch (const json::exception& e) {
        throw sdavs::ConfigError(std::string("grid file is not valid JSON: ") + e.what());
    }
    if (!grid.is_object() || !grid.contains("axes"))
        throw sdavs::ConfigError("grid file must be an object with an 'axes' member");

    sdavs::RunConfig base;
    if (grid.contains("base")) {
        if (!config_path.empty())
            throw sdavs::ConfigError("pass the base config either via --config or grid 'base', not both");
        base = sdavs::parse_config(grid["base"].dump());
    } else {
        base = config_from_option(config_path);
    }
    for (auto it = grid.begin(); it != grid.end(); ++it)
        if (it.key() != "axes" && it.key() != "base")
            throw sdavs::ConfigError("unknown grid key '" + it.key() + "'");

    std::vector<sdavs::AblateCell> cells = sdavs::expand_grid(base, grid["axes"].dump());
    std::cout << "ablation grid: " << cells.size() << " cells\n";
    std::vector<sdavs::AblateRow> rows = sdavs::run_ablation(cells, &std::cout);
    if (!out_prefix.empty()) {
        write_text(out_prefix + ".json", sdavs::ablation_to_json(rows));
        write_text(out_prefix + ".csv", sdavs::ablation_to_csv(rows));
        std::cout << "ablation report written to " << out_prefix << ".{json,csv}\n";
    }
    return 0;
}

int cmd_inspect(const std::string& ckpt_path) {
    // Inspection never enforces the hash (it must work on damaged metadata).
    sdavs::Checkpoint ckpt = sdavs::read_checkpoint(ckpt_path, "", /*force=*/true);
    std::cout << "config_hash " << ckpt.hash << "\n";
    std::cout << "config " << sdavs::config_to_json(ckpt.config) << "\n";
    int64_t total = 0;
    for (const sdavs::BlobEntry& b : ckpt.raw.blobs) {
        std::cout << b.name << " " << sdavs::shape_str(b.shape) << " (" << b.data.size() * 4
                  << " bytes)\n";
        total += int64_t(b.data.size());
    }
    std::cout << ckpt.raw.blobs.size() << " tensors, " << total << " elements, " << total * 4
              << " payload bytes\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"deterministic audio-visual segmentation sandbox"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen", "export synthetic clips");
    uint64_t gen_seed = 1;
    std::string gen_out;
    int gen_clips = 8, gen_h = 64, gen_w = 64, gen_t = 4;
    std::string gen_split = "train";
    gen->add_option("--seed", gen_seed, "dataset seed");
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--clips", gen_clips, "number of clips");
    gen->add_option("--height", gen_h, "frame height");
    gen->add_option("--width", gen_w, "frame width");
    gen->add_option("--frames", gen_t, "frames (= seconds) per clip");
    gen->add_option("--split", gen_split, "split namespace for clip seeds");

    auto* train = app.add_subcommand("train", "train a model and write a checkpoint");
    std::string train_config, train_out;
    train->add_option("--config", train_config, "RunConfig JSON path (defaults when omitted)");
    train->add_option("--out", train_out, "checkpoint output path")->required();

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string eval_ckpt, eval_noise = "none", eval_report, eval_config;
    double eval_scale = 0.1;
    bool eval_force = false;
    eval->add_option("--ckpt", eval_ckpt, "checkpoint path")->required();
    eval->add_option("--noise", eval_noise, "noise condition: none|brownian|chirp_train");
    eval->add_option("--scale", eval_scale, "noise mixing scale");
    eval->add_option("--report", eval_report, "report output (.json/.csv; no extension = both)");
    eval->add_option("--config", eval_config, "config whose hash must match the checkpoint");
    eval->add_flag("--force", eval_force, "ignore config hash mismatches");

    auto* ablate = app.add_subcommand("ablate", "train/evaluate an ablation grid");
    std::string ablate_grid, ablate_config, ablate_out;
    ablate->add_option("--grid", ablate_grid, "grid JSON: {\"axes\": {key: [values]}, \"base\": {...}}")
        ->required();
    ablate->add_option("--config", ablate_config, "base RunConfig JSON path");
    ablate->add_option("--out", ablate_out, "report path prefix (writes .json and .csv)");

    auto* inspect = app.add_subcommand("inspect", "list checkpoint tensors");
    std::string inspect_ckpt;
    inspect->add_option("--ckpt", inspect_ckpt, "checkpoint path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (gen->parsed()) return cmd_gen(gen_seed, gen_out, gen_clips, gen_h, gen_w, gen_t, gen_split);
        if (train->parsed()) return cmd_train(train_config, train_out);
        if (eval->parsed())
            return cmd_eval(eval_ckpt, eval_noise, eval_scale, eval_report, eval_config, eval_force);
        if (ablate->parsed()) return cmd_ablate(ablate_grid, ablate_config, ablate_out);
        if (inspect->parsed()) return cmd_inspect(inspect_ckpt);
    } catch (const sdavs::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const sdavs::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
