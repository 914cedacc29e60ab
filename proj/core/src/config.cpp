#include "sdavs/config.h"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sdavs/rng.h"

namespace sdavs {

using nlohmann::json;

const char* to_string(NoiseCondition n) {
    switch (n) {
        case NoiseCondition::none: return "none";
        case NoiseCondition::brownian: return "brownian";
        case NoiseCondition::chirp_train: return "chirp_train";
    }
    return "?";
}
const char* to_string(SnrpMode m) {
    switch (m) {
        case SnrpMode::on: return "on";
        case SnrpMode::off: return "off";
        case SnrpMode::post: return "post";
    }
    return "?";
}
const char* to_string(RmMode m) {
    switch (m) {
        case RmMode::straight: return "straight";
        case RmMode::add: return "add";
        case RmMode::mul: return "mul";
    }
    return "?";
}
const char* to_string(Branch b) {
    switch (b) {
        case Branch::both: return "both";
        case Branch::a2v: return "a2v";
        case Branch::v2a: return "v2a";
    }
    return "?";
}
const char* to_string(QueryPairing p) {
    return p == QueryPairing::printed ? "printed" : "textual";
}

NoiseCondition noise_from_string(const std::string& s) {
    if (s == "none" || s == "clean") return NoiseCondition::none;
    if (s == "brownian") return NoiseCondition::brownian;
    if (s == "chirp_train") return NoiseCondition::chirp_train;
    throw ConfigError("unknown noise condition '" + s +
                      "' (expected none|brownian|chirp_train)");
}

namespace {

SnrpMode snrp_from_string(const std::string& s) {
    if (s == "on") return SnrpMode::on;
    if (s == "off") return SnrpMode::off;
    if (s == "post") return SnrpMode::post;
    throw ConfigError("unknown snrp mode '" + s + "' (expected on|off|post)");
}
RmMode rm_from_string(const std::string& s) {
    if (s == "straight") return RmMode::straight;
    if (s == "add") return RmMode::add;
    if (s == "mul") return RmMode::mul;
    throw ConfigError("unknown rm mode '" + s + "' (expected straight|add|mul)");
}
Branch branch_from_string(const std::string& s) {
    if (s == "both") return Branch::both;
    if (s == "a2v") return Branch::a2v;
    if (s == "v2a") return Branch::v2a;
    throw ConfigError("unknown branch '" + s + "' (expected both|a2v|v2a)");
}
QueryPairing pairing_from_string(const std::string& s) {
    if (s == "printed") return QueryPairing::printed;
    if (s == "textual") return QueryPairing::textual;
    throw ConfigError("unknown query_pairing '" + s + "' (expected printed|textual)");
}

template <typename T>
T get_number(const json& j, const std::string& key) {
    const json& v = j.at(key);
    if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError("config key '" + key + "' must be a number");
    } else {
        if (!v.is_number_integer())
            throw ConfigError("config key '" + key + "' must be an integer");
    }
    return v.get<T>();
}

bool get_bool(const json& j, const std::string& key) {
    const json& v = j.at(key);
    if (!v.is_boolean()) throw ConfigError("config key '" + key + "' must be a boolean");
    return v.get<bool>();
}

std::string get_string(const json& j, const std::string& key) {
    const json& v = j.at(key);
    if (!v.is_string()) throw ConfigError("config key '" + key + "' must be a string");
    return v.get<std::string>();
}

}  // namespace

std::vector<int> RunConfig::milestones_or_default() const {
    if (!lr_milestones.empty()) return lr_milestones;
    return {epochs / 2, 3 * epochs / 4};
}

ModelConfig RunConfig::model_config() const {
    ModelConfig mc;
    mc.ladder = ladder;
    mc.ca = audio_channels;
    mc.head = head_channels;
    mc.stem = stem_channels;
    mc.snrp = snrp;
    mc.cfs = cfs;
    mc.sfs = sfs;
    mc.damf = damf;
    mc.stc = stc;
    mc.rm = rm;
    mc.branch = branch;
    mc.pairing = query_pairing;
    return mc;
}

void RunConfig::validate() const {
    if (height < 32 || width < 32 || height % 32 != 0 || width % 32 != 0)
        throw ConfigError("height and width must be positive multiples of 32");
    if (frames < 1) throw ConfigError("frames must be >= 1");
    if (train_clips < 1 || eval_clips < 1) throw ConfigError("clip counts must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (lr <= 0) throw ConfigError("lr must be > 0");
    if (lr_gamma <= 0) throw ConfigError("lr_gamma must be > 0");
    if (noise_scale < 0) throw ConfigError("noise_scale must be >= 0");
    for (int64_t c : ladder)
        if (c < 4) throw ConfigError("ladder channels must be >= 4");
    if (audio_channels < 4 || head_channels < 1 || stem_channels < 1)
        throw ConfigError("channel counts out of range");
    for (int m : lr_milestones)
        if (m < 0) throw ConfigError("lr_milestones must be non-negative epochs");
}

RunConfig parse_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");

    static const std::set<std::string> known = {
        "height", "width", "frames", "train_clips", "eval_clips", "ladder",
        "audio_channels", "head_channels", "stem_channels", "snrp", "cfs", "sfs",
        "damf", "stc", "rm", "branch", "query_pairing", "epochs", "batch_size",
        "lr", "weight_decay", "lr_milestones", "lr_gamma", "target_jf", "noise",
        "noise_scale", "seed"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key())) throw ConfigError("unknown config key '" + it.key() + "'");

    RunConfig cfg;
    if (j.contains("height")) cfg.height = get_number<int>(j, "height");
    if (j.contains("width")) cfg.width = get_number<int>(j, "width");
    if (j.contains("frames")) cfg.frames = get_number<int>(j, "frames");
    if (j.contains("train_clips")) cfg.train_clips = get_number<int>(j, "train_clips");
    if (j.contains("eval_clips")) cfg.eval_clips = get_number<int>(j, "eval_clips");
    if (j.contains("ladder")) {
        const json& l = j["ladder"];
        if (!l.is_array() || l.size() != 4)
            throw ConfigError("config key 'ladder' must be an array of 4 integers");
        for (size_t i = 0; i < 4; ++i) {
            if (!l[i].is_number_integer())
                throw ConfigError("config key 'ladder' must be an array of 4 integers");
            cfg.ladder[i] = l[i].get<int64_t>();
        }
    }
    if (j.contains("audio_channels")) cfg.audio_channels = get_number<int>(j, "audio_channels");
    if (j.contains("head_channels")) cfg.head_channels = get_number<int>(j, "head_channels");
    if (j.contains("stem_channels")) cfg.stem_channels = get_number<int>(j, "stem_channels");
    if (j.contains("snrp")) cfg.snrp = snrp_from_string(get_string(j, "snrp"));
    if (j.contains("cfs")) cfg.cfs = get_bool(j, "cfs");
    if (j.contains("sfs")) cfg.sfs = get_bool(j, "sfs");
    if (j.contains("damf")) cfg.damf = get_bool(j, "damf");
    if (j.contains("stc")) cfg.stc = get_bool(j, "stc");
    if (j.contains("rm")) cfg.rm = rm_from_string(get_string(j, "rm"));
    if (j.contains("branch")) cfg.branch = branch_from_string(get_string(j, "branch"));
    if (j.contains("query_pairing"))
        cfg.query_pairing = pairing_from_string(get_string(j, "query_pairing"));
    if (j.contains("epochs")) cfg.epochs = get_number<int>(j, "epochs");
    if (j.contains("batch_size")) cfg.batch_size = get_number<int>(j, "batch_size");
    if (j.contains("lr")) cfg.lr = get_number<double>(j, "lr");
    if (j.contains("weight_decay")) cfg.weight_decay = get_number<double>(j, "weight_decay");
    if (j.contains("lr_milestones")) {
        const json& m = j["lr_milestones"];
        if (!m.is_array()) throw ConfigError("config key 'lr_milestones' must be an array");
        cfg.lr_milestones.clear();
        for (const json& v : m) {
            if (!v.is_number_integer())
                throw ConfigError("config key 'lr_milestones' must hold integers");
            cfg.lr_milestones.push_back(v.get<int>());
        }
    }
    if (j.contains("lr_gamma")) cfg.lr_gamma = get_number<double>(j, "lr_gamma");
    if (j.contains("target_jf")) cfg.target_jf = get_number<double>(j, "target_jf");
    if (j.contains("noise")) cfg.noise = noise_from_string(get_string(j, "noise"));
    if (j.contains("noise_scale")) cfg.noise_scale = get_number<double>(j, "noise_scale");
    if (j.contains("seed")) cfg.seed = j.at("seed").get<uint64_t>();

    cfg.validate();
    return cfg;
}

RunConfig load_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string config_to_json(const RunConfig& cfg) {
    json j;  // nlohmann::json orders keys alphabetically -> canonical
    j["height"] = cfg.height;
    j["width"] = cfg.width;
    j["frames"] = cfg.frames;
    j["train_clips"] = cfg.train_clips;
    j["eval_clips"] = cfg.eval_clips;
    j["ladder"] = cfg.ladder;
    j["audio_channels"] = cfg.audio_channels;
    j["head_channels"] = cfg.head_channels;
    j["stem_channels"] = cfg.stem_channels;
    j["snrp"] = to_string(cfg.snrp);
    j["cfs"] = cfg.cfs;
    j["sfs"] = cfg.sfs;
    j["damf"] = cfg.damf;
    j["stc"] = cfg.stc;
    j["rm"] = to_string(cfg.rm);
    j["branch"] = to_string(cfg.branch);
    j["query_pairing"] = to_string(cfg.query_pairing);
    j["epochs"] = cfg.epochs;
    j["batch_size"] = cfg.batch_size;
    j["lr"] = cfg.lr;
    j["weight_decay"] = cfg.weight_decay;
    j["lr_milestones"] = cfg.lr_milestones;
    j["lr_gamma"] = cfg.lr_gamma;
    j["target_jf"] = cfg.target_jf;
    j["noise"] = to_string(cfg.noise);
    j["noise_scale"] = cfg.noise_scale;
    j["seed"] = cfg.seed;
    return j.dump();
}

std::string config_hash(const RunConfig& cfg) {
    const uint64_t h = fnv1a64(config_to_json(cfg));
    char buf[19];
    std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace sdavs
