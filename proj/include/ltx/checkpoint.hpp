#pragma once

#include <map>
#include <optional>
#include <string>

#include "ltx/model.hpp"
#include "ltx/projector.hpp"
#include "ltx/tokenizer.hpp"

namespace ltx {

// On-disk model state: a text manifest (<base>.manifest) naming config
// fields, metadata, and tensor shapes/offsets, plus a raw little-endian
// float64 blob (<base>.blob). Round trips are bit-exact.
struct Checkpoint {
    ModelConfig config;
    std::map<std::string, Mat> tensors;
    std::map<std::string, std::string> meta;
    std::optional<TokenizerSpec> tokenizer;
};

void save_checkpoint(const std::string& base_path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& base_path);

// Assemble a checkpoint from a bundle and (optionally) a projector, whose
// tensors are namespaced under "projector.".
Checkpoint make_checkpoint(const ModelBundle& bundle, const LatentProjector* projector = nullptr,
                           const TokenizerSpec* tokenizer = nullptr);

ModelBundle bundle_from_checkpoint(const Checkpoint& ckpt);
std::optional<LatentProjector> projector_from_checkpoint(const Checkpoint& ckpt);

}  // namespace ltx
