#pragma once

// Tensor container and checkpoints. On-disk layout:
//   [u64 little-endian header length N] [N bytes UTF-8 JSON index] [payload]
// The index maps tensor-name -> {shape, offset, length} with offsets relative
// to the payload start; the reserved "__meta__" key carries the run config
// and its hash. Payload is raw little-endian f32. Round-trips are bit-exact.

#include <string>
#include <vector>

#include "sdavs/config.h"
#include "sdavs/model.h"
#include "sdavs/tensor.h"

namespace sdavs {

struct BlobEntry {
    std::string name;
    Shape shape;
    std::vector<float> data;
};

struct BlobFile {
    std::vector<BlobEntry> blobs;  // payload order
    std::string meta_json;         // serialized "__meta__" object ("" = absent)
};

void write_blob_file(const std::string& path, const BlobFile& file);

// Throws std::runtime_error with byte-offset diagnostics on truncation or a
// malformed index.
BlobFile read_blob_file(const std::string& path);

struct Checkpoint {
    RunConfig config;
    std::string hash;  // config hash recorded at save time
    BlobFile raw;
};

void save_checkpoint(const std::string& path, const ParamStore<float>& params,
                     const RunConfig& cfg);

// Reads and verifies internal consistency (recorded hash == hash of the
// embedded config). If expected_hash is non-empty it must match too, unless
// force is set.
Checkpoint read_checkpoint(const std::string& path, const std::string& expected_hash = "",
                           bool force = false);

// Copies blob values into a ParamStore built from the same config.
// Shape or coverage mismatch throws.
void load_parameters(ParamStore<float>& params, const BlobFile& raw);

}  // namespace sdavs
