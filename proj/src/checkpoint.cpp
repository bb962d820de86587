#include "ltx/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace ltx {

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian; big-endian hosts need a byte swap");

namespace {

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\t': out += "\\t"; break;
            default: out += c;
        }
    }
    return out;
}

std::string unescape(const std::string& s) {
    std::string out;
    for (size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '\\' && i + 1 < s.size()) {
            switch (s[++i]) {
                case '\\': out += '\\'; break;
                case 'n': out += '\n'; break;
                case 'r': out += '\r'; break;
                case 't': out += '\t'; break;
                default: out += s[i];
            }
        } else {
            out += s[i];
        }
    }
    return out;
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void save_checkpoint(const std::string& base_path, const Checkpoint& ckpt) {
    const ModelConfig& c = ckpt.config;
    std::ostringstream manifest;
    manifest << "schema_version = 1\n";
    manifest << "float_format = float64\n";
    manifest << "endianness = little\n";
    manifest << "config.vocab_size = " << c.vocab_size << "\n";
    manifest << "config.hidden_dim = " << c.hidden_dim << "\n";
    manifest << "config.num_layers = " << c.num_layers << "\n";
    manifest << "config.num_heads = " << c.num_heads << "\n";
    manifest << "config.ffn_dim = " << c.ffn_dim << "\n";
    manifest << "config.max_seq_len = " << c.max_seq_len << "\n";
    manifest << "config.rope_theta = " << fmt_double(c.rope_theta) << "\n";
    manifest << "config.norm_eps = " << fmt_double(c.norm_eps) << "\n";
    manifest << "special.latent_open = " << c.special_tokens.latent_open << "\n";
    manifest << "special.latent_close = " << c.special_tokens.latent_close << "\n";
    manifest << "special.think_open = " << c.special_tokens.think_open << "\n";
    manifest << "special.think_close = " << c.special_tokens.think_close << "\n";
    manifest << "special.end_of_message = " << c.special_tokens.end_of_message << "\n";
    manifest << "special.end_of_text = " << c.special_tokens.end_of_text << "\n";
    // Orientation conventions this artifact commits to.
    manifest << "convention.logits = logits[v] equals dot(output.weight row v, hidden)\n";
    manifest << "convention.analytic_projector = embedding equals projector.matrix times hidden; "
                "projector.matrix equals pinv(output.weight) times embed.weight\n";
    for (const auto& [key, value] : ckpt.meta) {
        manifest << "meta." << key << " = " << escape(value) << "\n";
    }
    if (ckpt.tokenizer) {
        const TokenizerSpec& t = *ckpt.tokenizer;
        manifest << "tokenizer.alphabet = " << escape(t.alphabet) << "\n";
        for (int r = 0; r < kNumRoles; ++r) {
            manifest << "tokenizer.special." << role_name(static_cast<Role>(r)) << " = "
                     << escape(t.specials[r]) << "\n";
        }
        manifest << "tokenizer.sentence_end = " << escape(t.sentence_end) << "\n";
    }

    std::ofstream blob(base_path + ".blob", std::ios::binary | std::ios::trunc);
    if (!blob) throw InputError("checkpoint: cannot write " + base_path + ".blob");
    size_t offset = 0;
    for (const auto& [name, mat] : ckpt.tensors) {
        manifest << "tensor " << name << " " << mat.rows << " " << mat.cols << " " << offset
                 << "\n";
        blob.write(reinterpret_cast<const char*>(mat.data.data()),
                   static_cast<std::streamsize>(mat.size() * sizeof(double)));
        offset += mat.size() * sizeof(double);
    }
    blob.close();
    if (!blob) throw InputError("checkpoint: write failed for " + base_path + ".blob");

    std::ofstream mf(base_path + ".manifest", std::ios::binary | std::ios::trunc);
    if (!mf) throw InputError("checkpoint: cannot write " + base_path + ".manifest");
    mf << manifest.str();
    mf.close();
    if (!mf) throw InputError("checkpoint: write failed for " + base_path + ".manifest");
}

Checkpoint load_checkpoint(const std::string& base_path) {
    std::ifstream mf(base_path + ".manifest", std::ios::binary);
    if (!mf) throw InputError("checkpoint: cannot open " + base_path + ".manifest");
    Checkpoint ckpt;
    TokenizerSpec tok;
    bool has_tok = false;
    struct TensorDecl {
        std::string name;
        int rows, cols;
        size_t offset;
    };
    std::vector<TensorDecl> decls;
    std::string line;
    while (std::getline(mf, line)) {
        if (line.empty()) continue;
        if (line.rfind("tensor ", 0) == 0) {
            std::istringstream ss(line);
            std::string tag;
            TensorDecl d;
            ss >> tag >> d.name >> d.rows >> d.cols >> d.offset;
            if (!ss) throw DataError("checkpoint: malformed tensor line: " + line);
            decls.push_back(d);
            continue;
        }
        const size_t sep = line.find(" = ");
        if (sep == std::string::npos) throw DataError("checkpoint: malformed line: " + line);
        const std::string key = line.substr(0, sep);
        const std::string value = line.substr(sep + 3);
        if (key == "schema_version") {
            if (value != "1") throw DataError("checkpoint: unsupported schema_version " + value);
        } else if (key == "float_format") {
            if (value != "float64") throw DataError("checkpoint: unsupported float_format " + value);
        } else if (key == "endianness") {
            if (value != "little") throw DataError("checkpoint: unsupported endianness " + value);
        } else if (key == "config.vocab_size") {
            ckpt.config.vocab_size = std::stoi(value);
        } else if (key == "config.hidden_dim") {
            ckpt.config.hidden_dim = std::stoi(value);
        } else if (key == "config.num_layers") {
            ckpt.config.num_layers = std::stoi(value);
        } else if (key == "config.num_heads") {
            ckpt.config.num_heads = std::stoi(value);
        } else if (key == "config.ffn_dim") {
            ckpt.config.ffn_dim = std::stoi(value);
        } else if (key == "config.max_seq_len") {
            ckpt.config.max_seq_len = std::stoi(value);
        } else if (key == "config.rope_theta") {
            ckpt.config.rope_theta = std::stod(value);
        } else if (key == "config.norm_eps") {
            ckpt.config.norm_eps = std::stod(value);
        } else if (key == "special.latent_open") {
            ckpt.config.special_tokens.latent_open = std::stoi(value);
        } else if (key == "special.latent_close") {
            ckpt.config.special_tokens.latent_close = std::stoi(value);
        } else if (key == "special.think_open") {
            ckpt.config.special_tokens.think_open = std::stoi(value);
        } else if (key == "special.think_close") {
            ckpt.config.special_tokens.think_close = std::stoi(value);
        } else if (key == "special.end_of_message") {
            ckpt.config.special_tokens.end_of_message = std::stoi(value);
        } else if (key == "special.end_of_text") {
            ckpt.config.special_tokens.end_of_text = std::stoi(value);
        } else if (key.rfind("meta.", 0) == 0) {
            ckpt.meta[key.substr(5)] = unescape(value);
        } else if (key == "tokenizer.alphabet") {
            tok.alphabet = unescape(value);
            has_tok = true;
        } else if (key.rfind("tokenizer.special.", 0) == 0) {
            const std::string role = key.substr(18);
            for (int r = 0; r < kNumRoles; ++r) {
                if (role == role_name(static_cast<Role>(r))) tok.specials[r] = unescape(value);
            }
            has_tok = true;
        } else if (key == "tokenizer.sentence_end") {
            tok.sentence_end = unescape(value);
            has_tok = true;
        } else if (key.rfind("convention.", 0) == 0) {
            // informative only
        } else {
            throw DataError("checkpoint: unknown manifest key: " + key);
        }
    }
    if (has_tok) ckpt.tokenizer = tok;

    std::ifstream blob(base_path + ".blob", std::ios::binary);
    if (!blob) throw InputError("checkpoint: cannot open " + base_path + ".blob");
    for (const auto& d : decls) {
        Mat m(d.rows, d.cols);
        blob.seekg(static_cast<std::streamoff>(d.offset));
        blob.read(reinterpret_cast<char*>(m.data.data()),
                  static_cast<std::streamsize>(m.size() * sizeof(double)));
        if (!blob) throw DataError("checkpoint: blob truncated reading tensor " + d.name);
        ckpt.tensors.emplace(d.name, std::move(m));
    }
    return ckpt;
}

Checkpoint make_checkpoint(const ModelBundle& bundle, const LatentProjector* projector,
                           const TokenizerSpec* tokenizer) {
    Checkpoint ckpt;
    ckpt.config = bundle.config;
    for (const auto& [name, mat] : bundle.named_tensors()) ckpt.tensors.emplace(name, *mat);
    if (projector) {
        ckpt.meta["projector.mode"] =
            projector->mode == ProjectorMode::analytic ? "analytic" : "learned";
        for (const auto& [name, mat] : projector->named_tensors()) ckpt.tensors.emplace(name, *mat);
    }
    if (tokenizer) ckpt.tokenizer = *tokenizer;
    return ckpt;
}

ModelBundle bundle_from_checkpoint(const Checkpoint& ckpt) {
    ModelBundle b;
    b.config = ckpt.config;
    b.config.validate();
    b.layers.resize(ckpt.config.num_layers);
    for (auto& [name, mat] : b.named_tensors()) {
        auto it = ckpt.tensors.find(name);
        if (it == ckpt.tensors.end()) throw DataError("checkpoint: missing tensor " + name);
        *mat = it->second;
    }
    b.shape_audit();
    return b;
}

std::optional<LatentProjector> projector_from_checkpoint(const Checkpoint& ckpt) {
    auto mode_it = ckpt.meta.find("projector.mode");
    if (mode_it == ckpt.meta.end()) return std::nullopt;
    LatentProjector p;
    if (mode_it->second == "analytic") {
        p.mode = ProjectorMode::analytic;
    } else if (mode_it->second == "learned") {
        p.mode = ProjectorMode::learned;
    } else {
        throw DataError("checkpoint: unknown projector.mode " + mode_it->second);
    }
    for (auto& [name, mat] : p.named_tensors()) {
        auto it = ckpt.tensors.find(name);
        if (it == ckpt.tensors.end()) throw DataError("checkpoint: missing tensor " + name);
        *mat = it->second;
    }
    return p;
}

}  // namespace ltx
