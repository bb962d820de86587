#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ltx/kernels.hpp"
#include "ltx/tensor.hpp"
#include "ltx/tokenizer.hpp"

namespace ltx {

struct SpecialTokens {
    int latent_open = 0;
    int latent_close = 1;
    int think_open = 2;
    int think_close = 3;
    int end_of_message = 4;
    int end_of_text = 5;

    std::vector<int> all() const {
        return {latent_open, latent_close, think_open, think_close, end_of_message, end_of_text};
    }
};

struct ModelConfig {
    int vocab_size = 0;
    int hidden_dim = 0;
    int num_layers = 0;
    int num_heads = 0;
    int ffn_dim = 0;
    int max_seq_len = 0;
    SpecialTokens special_tokens;
    double rope_theta = 10000.0;
    double norm_eps = 1e-6;

    int head_dim() const { return hidden_dim / num_heads; }
    void validate() const;
};

// Pre-norm decoder block weights. No biases anywhere: logits stay an exact
// matrix product of the final hidden state.
struct LayerWeights {
    Mat attn_norm_gain;  // 1 x d
    Mat wq, wk, wv, wo;  // d x d
    Mat ffn_norm_gain;   // 1 x d
    Mat w1;              // ffn x d
    Mat w2;              // d x ffn
};

struct ModelBundle {
    ModelConfig config;
    Mat input_embedding;   // V x d, rows are token embeddings
    Mat output_projection; // V x d, logit_v = row_v . hidden
    std::vector<LayerWeights> layers;
    Mat final_norm_gain;   // 1 x d

    void shape_audit() const;  // throws ConfigError on any mismatch

    // Named views over every trainable tensor, in a fixed order shared by the
    // checkpoint format and the optimizer.
    std::vector<std::pair<std::string, Mat*>> named_tensors();
    std::vector<std::pair<std::string, const Mat*>> named_tensors() const;
};

// Deterministic seeded Gaussian init (scale 0.02), norm gains at 1.
ModelBundle init_toy_bundle(const ModelConfig& config, uint64_t seed);

// Per-layer accumulated attention keys/values. Keys are stored post-rotation
// so entries are position-stable. One cache per generation run, never shared.
struct LayerCache {
    struct PerLayer {
        std::vector<Vec> keys;    // each d-wide (heads x head_dim)
        std::vector<Vec> values;
    };
    std::vector<PerLayer> layers;
    int length = 0;

    static LayerCache empty(const ModelConfig& config);
};

struct StepOutput {
    Vec hidden;  // final-layer, post-norm state
    Vec logits;  // output_projection applied to hidden
};

Vec embed(const ModelBundle& model, int token_id);
Vec decode_logits(const ModelBundle& model, const Vec& hidden);

// One incremental decode step: consumes a raw input embedding, appends one
// position to the cache, returns the post-norm hidden state and its logits.
StepOutput forward_step(const ModelBundle& model, const Vec& input, LayerCache& cache);

// Prefill: fold forward_step over the embeddings from an empty cache.
std::vector<StepOutput> forward_prefix(const ModelBundle& model, const std::vector<Vec>& embeddings,
                                       LayerCache& cache);

}  // namespace ltx
