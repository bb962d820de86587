#include "ltx/model.hpp"

#include <set>

namespace ltx {

void ModelConfig::validate() const {
    if (vocab_size <= 0) throw ConfigError("config: vocab_size must be positive");
    if (hidden_dim <= 0) throw ConfigError("config: hidden_dim must be positive");
    if (num_layers <= 0) throw ConfigError("config: num_layers must be positive");
    if (num_heads <= 0) throw ConfigError("config: num_heads must be positive");
    if (ffn_dim <= 0) throw ConfigError("config: ffn_dim must be positive");
    if (max_seq_len <= 0) throw ConfigError("config: max_seq_len must be positive");
    if (hidden_dim % num_heads != 0) throw ConfigError("config: num_heads must divide hidden_dim");
    std::set<int> ids;
    for (int id : special_tokens.all()) {
        if (id < 0 || id >= vocab_size) throw ConfigError("config: special token id out of range");
        if (!ids.insert(id).second) throw ConfigError("config: special token ids must be distinct");
    }
}

static void check_shape(const Mat& m, int rows, int cols, const std::string& name) {
    if (m.rows != rows || m.cols != cols) {
        throw ConfigError("shape audit: " + name + " is " + std::to_string(m.rows) + "x" +
                          std::to_string(m.cols) + ", expected " + std::to_string(rows) + "x" +
                          std::to_string(cols));
    }
}

void ModelBundle::shape_audit() const {
    config.validate();
    const int v = config.vocab_size;
    const int d = config.hidden_dim;
    const int f = config.ffn_dim;
    check_shape(input_embedding, v, d, "input_embedding");
    check_shape(output_projection, v, d, "output_projection");
    check_shape(final_norm_gain, 1, d, "final_norm_gain");
    if (static_cast<int>(layers.size()) != config.num_layers) {
        throw ConfigError("shape audit: layer count mismatch");
    }
    for (size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        const std::string p = "layer." + std::to_string(i) + ".";
        check_shape(l.attn_norm_gain, 1, d, p + "attn_norm_gain");
        check_shape(l.wq, d, d, p + "wq");
        check_shape(l.wk, d, d, p + "wk");
        check_shape(l.wv, d, d, p + "wv");
        check_shape(l.wo, d, d, p + "wo");
        check_shape(l.ffn_norm_gain, 1, d, p + "ffn_norm_gain");
        check_shape(l.w1, f, d, p + "w1");
        check_shape(l.w2, d, f, p + "w2");
    }
}

std::vector<std::pair<std::string, Mat*>> ModelBundle::named_tensors() {
    std::vector<std::pair<std::string, Mat*>> out;
    out.emplace_back("embed.weight", &input_embedding);
    out.emplace_back("output.weight", &output_projection);
    for (size_t i = 0; i < layers.size(); ++i) {
        const std::string p = "layer." + std::to_string(i) + ".";
        out.emplace_back(p + "attn_norm.gain", &layers[i].attn_norm_gain);
        out.emplace_back(p + "attn.wq", &layers[i].wq);
        out.emplace_back(p + "attn.wk", &layers[i].wk);
        out.emplace_back(p + "attn.wv", &layers[i].wv);
        out.emplace_back(p + "attn.wo", &layers[i].wo);
        out.emplace_back(p + "ffn_norm.gain", &layers[i].ffn_norm_gain);
        out.emplace_back(p + "ffn.w1", &layers[i].w1);
        out.emplace_back(p + "ffn.w2", &layers[i].w2);
    }
    out.emplace_back("final_norm.gain", &final_norm_gain);
    return out;
}

std::vector<std::pair<std::string, const Mat*>> ModelBundle::named_tensors() const {
    std::vector<std::pair<std::string, const Mat*>> out;
    for (auto& [name, mat] : const_cast<ModelBundle*>(this)->named_tensors()) {
        out.emplace_back(name, mat);
    }
    return out;
}

ModelBundle init_toy_bundle(const ModelConfig& config, uint64_t seed) {
    config.validate();
    constexpr double kInitScale = 0.02;
    CounterRng rng(derive_seed(seed, "model-init"));
    ModelBundle b;
    b.config = config;
    const int v = config.vocab_size;
    const int d = config.hidden_dim;
    const int f = config.ffn_dim;
    b.input_embedding = Mat::gaussian(v, d, rng, kInitScale);
    b.output_projection = Mat::gaussian(v, d, rng, kInitScale);
    for (int i = 0; i < config.num_layers; ++i) {
        LayerWeights l;
        l.attn_norm_gain = Mat(1, d);
        for (double& x : l.attn_norm_gain.data) x = 1.0;
        l.wq = Mat::gaussian(d, d, rng, kInitScale);
        l.wk = Mat::gaussian(d, d, rng, kInitScale);
        l.wv = Mat::gaussian(d, d, rng, kInitScale);
        l.wo = Mat::gaussian(d, d, rng, kInitScale);
        l.ffn_norm_gain = Mat(1, d);
        for (double& x : l.ffn_norm_gain.data) x = 1.0;
        l.w1 = Mat::gaussian(f, d, rng, kInitScale);
        l.w2 = Mat::gaussian(d, f, rng, kInitScale);
        b.layers.push_back(std::move(l));
    }
    b.final_norm_gain = Mat(1, d);
    for (double& x : b.final_norm_gain.data) x = 1.0;
    b.shape_audit();
    return b;
}

LayerCache LayerCache::empty(const ModelConfig& config) {
    LayerCache c;
    c.layers.resize(config.num_layers);
    return c;
}

Vec embed(const ModelBundle& model, int token_id) {
    if (token_id < 0 || token_id >= model.config.vocab_size) {
        throw InputError("embed: token id " + std::to_string(token_id) + " outside vocabulary of " +
                         std::to_string(model.config.vocab_size));
    }
    const double* r = model.input_embedding.row(token_id);
    return Vec(r, r + model.config.hidden_dim);
}

Vec decode_logits(const ModelBundle& model, const Vec& hidden) {
    if (static_cast<int>(hidden.size()) != model.config.hidden_dim) {
        throw InputError("decode_logits: hidden dimension mismatch");
    }
    Vec logits(model.config.vocab_size);
    kernels::matvec(model.output_projection, hidden.data(), logits.data());
    return logits;
}

StepOutput forward_step(const ModelBundle& model, const Vec& input, LayerCache& cache) {
    const ModelConfig& cfg = model.config;
    if (static_cast<int>(input.size()) != cfg.hidden_dim) {
        throw InputError("forward_step: input dimension mismatch");
    }
    if (cache.length >= cfg.max_seq_len) {
        throw CapacityError("forward_step: cache at max_seq_len " +
                            std::to_string(cfg.max_seq_len));
    }
    const int d = cfg.hidden_dim;
    const int f = cfg.ffn_dim;
    const int heads = cfg.num_heads;
    const int hd = cfg.head_dim();
    const int pos = cache.length;

    Vec x = input;
    Vec normed(d), q(d), k(d), v(d), ctx(d), attn_out(d), h1(f), act(f), ffn_out(d);
    std::vector<double> weights;
    for (int li = 0; li < cfg.num_layers; ++li) {
        const LayerWeights& lw = model.layers[li];
        auto& lc = cache.layers[li];
        kernels::rms_norm(x.data(), lw.attn_norm_gain.row(0), d, cfg.norm_eps, normed.data());
        kernels::matvec(lw.wq, normed.data(), q.data());
        kernels::matvec(lw.wk, normed.data(), k.data());
        kernels::matvec(lw.wv, normed.data(), v.data());
        kernels::rope(q.data(), heads, hd, pos, cfg.rope_theta);
        kernels::rope(k.data(), heads, hd, pos, cfg.rope_theta);
        lc.keys.push_back(k);
        lc.values.push_back(v);
        std::vector<const double*> kp, vp;
        kp.reserve(lc.keys.size());
        vp.reserve(lc.values.size());
        for (const Vec& kk : lc.keys) kp.push_back(kk.data());
        for (const Vec& vv : lc.values) vp.push_back(vv.data());
        kernels::attend(q.data(), kp, vp, heads, hd, ctx.data(), weights);
        kernels::matvec(lw.wo, ctx.data(), attn_out.data());
        for (int i = 0; i < d; ++i) x[i] += attn_out[i];
        kernels::rms_norm(x.data(), lw.ffn_norm_gain.row(0), d, cfg.norm_eps, normed.data());
        kernels::matvec(lw.w1, normed.data(), h1.data());
        kernels::silu(h1.data(), f, act.data());
        kernels::matvec(lw.w2, act.data(), ffn_out.data());
        for (int i = 0; i < d; ++i) x[i] += ffn_out[i];
    }
    cache.length += 1;

    StepOutput out;
    out.hidden.resize(d);
    kernels::rms_norm(x.data(), model.final_norm_gain.row(0), d, cfg.norm_eps, out.hidden.data());
    out.logits = decode_logits(model, out.hidden);
    return out;
}

std::vector<StepOutput> forward_prefix(const ModelBundle& model, const std::vector<Vec>& embeddings,
                                       LayerCache& cache) {
    if (embeddings.empty()) throw InputError("forward_prefix: empty sequence");
    if (static_cast<int>(embeddings.size()) > model.config.max_seq_len) {
        throw CapacityError("forward_prefix: sequence exceeds max_seq_len");
    }
    std::vector<StepOutput> outs;
    outs.reserve(embeddings.size());
    for (const Vec& e : embeddings) outs.push_back(forward_step(model, e, cache));
    return outs;
}

}  // namespace ltx
