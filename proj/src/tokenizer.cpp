#include "ltx/tokenizer.hpp"

#include <algorithm>

namespace ltx {

TokenizerSpec TokenizerSpec::toy() {
    TokenizerSpec spec;
    spec.alphabet =
        "abcdefghijklmnopqrstuvwxyz"
        "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
        "0123456789"
        " .,!?:;()+-*/='\n";
    return spec;
}

Tokenizer::Tokenizer(TokenizerSpec spec) : spec_(std::move(spec)) {
    for (int r = 0; r < kNumRoles; ++r) {
        if (spec_.specials[r].empty()) {
            throw ConfigError(std::string("tokenizer: missing special string for role ") +
                              role_name(static_cast<Role>(r)));
        }
        entries_.push_back({r, spec_.specials[r], true});
    }
    if (spec_.alphabet.empty()) throw ConfigError("tokenizer: empty alphabet");
    for (char c : spec_.alphabet) {
        if (char_to_id_.count(c)) throw ConfigError("tokenizer: duplicate alphabet char");
        const int id = static_cast<int>(entries_.size());
        char_to_id_[c] = id;
        entries_.push_back({id, std::string(1, c), false});
    }
    for (int r = 0; r < kNumRoles; ++r) specials_by_length_.emplace_back(spec_.specials[r], r);
    std::sort(specials_by_length_.begin(), specials_by_length_.end(),
              [](const auto& a, const auto& b) {
                  if (a.first.size() != b.first.size()) return a.first.size() > b.first.size();
                  return a.first < b.first;
              });
}

std::vector<int> Tokenizer::encode(const std::string& text) const {
    std::vector<int> out;
    size_t i = 0;
    while (i < text.size()) {
        bool matched = false;
        for (const auto& [s, id] : specials_by_length_) {
            if (text.compare(i, s.size(), s) == 0) {
                out.push_back(id);
                i += s.size();
                matched = true;
                break;
            }
        }
        if (matched) continue;
        auto it = char_to_id_.find(text[i]);
        if (it == char_to_id_.end()) {
            throw InputError("tokenizer: character not in alphabet: '" + std::string(1, text[i]) +
                             "'");
        }
        out.push_back(it->second);
        ++i;
    }
    return out;
}

std::string Tokenizer::decode(const std::vector<int>& ids) const {
    std::string out;
    for (int id : ids) out += token_text(id);
    return out;
}

const std::string& Tokenizer::token_text(int id) const {
    if (id < 0 || id >= vocab_size()) throw InputError("tokenizer: token id out of range");
    return entries_[id].text;
}

std::vector<int> Tokenizer::sentence_end_ids() const {
    std::vector<int> ids;
    for (char c : spec_.sentence_end) {
        auto it = char_to_id_.find(c);
        if (it != char_to_id_.end()) ids.push_back(it->second);
    }
    return ids;
}

}  // namespace ltx
