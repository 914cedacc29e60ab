#include "sdavs/checkpoint.h"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

static_assert(std::endian::native == std::endian::little,
              "container payload is little-endian f32; big-endian hosts are unsupported");

namespace sdavs {

using nlohmann::json;

void write_blob_file(const std::string& path, const BlobFile& file) {
    json index;
    uint64_t offset = 0;
    for (const BlobEntry& b : file.blobs) {
        if (b.name == "__meta__")
            throw std::runtime_error("write_blob_file: '__meta__' is a reserved name");
        const uint64_t bytes = uint64_t(b.data.size()) * 4;
        if (numel(b.shape) != int64_t(b.data.size()))
            throw std::runtime_error("write_blob_file: shape/data mismatch for " + b.name);
        index[b.name] = {{"shape", b.shape}, {"offset", offset}, {"length", bytes}};
        offset += bytes;
    }
    if (!file.meta_json.empty()) index["__meta__"] = json::parse(file.meta_json);

    const std::string header = index.dump();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    const uint64_t n = header.size();
    out.write(reinterpret_cast<const char*>(&n), 8);
    out.write(header.data(), std::streamsize(header.size()));
    for (const BlobEntry& b : file.blobs)
        out.write(reinterpret_cast<const char*>(b.data.data()), std::streamsize(b.data.size() * 4));
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + path);
}

BlobFile read_blob_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    in.seekg(0, std::ios::end);
    const uint64_t file_size = uint64_t(in.tellg());
    in.seekg(0);
    if (file_size < 8)
        throw std::runtime_error(path + ": truncated header, need 8 bytes for the index length, file has " +
                                 std::to_string(file_size));
    uint64_t header_len = 0;
    in.read(reinterpret_cast<char*>(&header_len), 8);
    if (file_size < 8 + header_len)
        throw std::runtime_error(path + ": truncated index, need bytes [8, " +
                                 std::to_string(8 + header_len) + ") but file has " +
                                 std::to_string(file_size));
    std::string header(header_len, '\0');
    in.read(header.data(), std::streamsize(header_len));

    json index;
    try {
        index = json::parse(header);
    } catch (const json::exception& e) {
        throw std::runtime_error(path + ": index is not valid JSON: " + e.what());
    }
    if (!index.is_object()) throw std::runtime_error(path + ": index root must be an object");

    const uint64_t payload_base = 8 + header_len;
    const uint64_t payload_size = file_size - payload_base;

    BlobFile out;
    for (auto it = index.begin(); it != index.end(); ++it) {
        if (it.key() == "__meta__") {
            out.meta_json = it.value().dump();
            continue;
        }
        const json& e = it.value();
        if (!e.is_object() || !e.contains("shape") || !e.contains("offset") || !e.contains("length"))
            throw std::runtime_error(path + ": index entry '" + it.key() +
                                     "' must carry shape/offset/length");
        BlobEntry b;
        b.name = it.key();
        b.shape = e["shape"].get<Shape>();
        const uint64_t off = e["offset"].get<uint64_t>();
        const uint64_t len = e["length"].get<uint64_t>();
        if (len % 4 != 0)
            throw std::runtime_error(path + ": tensor '" + b.name + "' length " +
                                     std::to_string(len) + " is not a multiple of 4 (f32)");
        if (int64_t(len / 4) != numel(b.shape))
            throw std::runtime_error(path + ": tensor '" + b.name + "' length " +
                                     std::to_string(len) + " disagrees with shape " +
                                     shape_str(b.shape));
        if (off + len > payload_size)
            throw std::runtime_error(
                path + ": truncated payload, tensor '" + b.name + "' needs file bytes [" +
                std::to_string(payload_base + off) + ", " + std::to_string(payload_base + off + len) +
                ") but file has " + std::to_string(file_size));
        b.data.resize(len / 4);
        in.seekg(std::streamoff(payload_base + off));
        in.read(reinterpret_cast<char*>(b.data.data()), std::streamsize(len));
        if (!in) throw std::runtime_error(path + ": read failed for tensor '" + b.name + "'");
        out.blobs.push_back(std::move(b));
    }
    // restore payload order so a rewrite reproduces the original bytes
    std::vector<uint64_t> offs(out.blobs.size());
    for (size_t i = 0; i < out.blobs.size(); ++i)
        offs[i] = index[out.blobs[i].name]["offset"].get<uint64_t>();
    std::vector<size_t> order(out.blobs.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return offs[a] < offs[b]; });
    std::vector<BlobEntry> sorted;
    sorted.reserve(out.blobs.size());
    for (size_t i : order) sorted.push_back(std::move(out.blobs[i]));
    out.blobs = std::move(sorted);
    return out;
}

void save_checkpoint(const std::string& path, const ParamStore<float>& params,
                     const RunConfig& cfg) {
    BlobFile file;
    for (const auto& [name, t] : params.entries()) {
        BlobEntry b;
        b.name = name;
        b.shape = t.shape();
        b.data = t.val();
        file.blobs.push_back(std::move(b));
    }
    json meta;
    meta["config"] = json::parse(config_to_json(cfg));
    meta["config_hash"] = config_hash(cfg);
    meta["format"] = "sdavs-checkpoint-v1";
    file.meta_json = meta.dump();
    write_blob_file(path, file);
}

Checkpoint read_checkpoint(const std::string& path, const std::string& expected_hash, bool force) {
    Checkpoint ck;
    ck.raw = read_blob_file(path);
    if (ck.raw.meta_json.empty())
        throw std::runtime_error(path + ": not a checkpoint (missing __meta__ entry)");
    json meta = json::parse(ck.raw.meta_json);
    if (!meta.contains("config") || !meta.contains("config_hash"))
        throw std::runtime_error(path + ": __meta__ lacks config/config_hash");
    ck.config = parse_config(meta["config"].dump());
    ck.hash = meta["config_hash"].get<std::string>();
    const std::string recomputed = config_hash(ck.config);
    if (ck.hash != recomputed && !force)
        throw std::runtime_error(path + ": config hash mismatch (recorded " + ck.hash +
                                 ", embedded config hashes to " + recomputed +
                                 "); pass --force to load anyway");
    if (!expected_hash.empty() && expected_hash != ck.hash && !force)
        throw std::runtime_error(path + ": config hash mismatch (checkpoint " + ck.hash +
                                 ", requested " + expected_hash + "); pass --force to load anyway");
    return ck;
}

void load_parameters(ParamStore<float>& params, const BlobFile& raw) {
    size_t matched = 0;
    for (const BlobEntry& b : raw.blobs) {
        Tensor<float>* t = params.find(b.name);
        if (!t) throw std::runtime_error("checkpoint tensor '" + b.name + "' has no model parameter");
        if (t->shape() != b.shape)
            throw std::runtime_error("checkpoint tensor '" + b.name + "' shape " +
                                     shape_str(b.shape) + " != model shape " + shape_str(t->shape()));
        t->val() = b.data;
        ++matched;
    }
    if (matched != params.entries().size())
        throw std::runtime_error("checkpoint covers " + std::to_string(matched) + " of " +
                                 std::to_string(params.entries().size()) + " model parameters");
}

}  // namespace sdavs
