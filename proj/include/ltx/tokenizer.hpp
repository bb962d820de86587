#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "ltx/errors.hpp"

namespace ltx {

// Structural roles. The first six are model-level specials; latent_pad is the
// placeholder written at latent interior positions of rendered examples.
enum class Role : int {
    latent_open = 0,
    latent_close = 1,
    think_open = 2,
    think_close = 3,
    end_of_message = 4,
    end_of_text = 5,
    latent_pad = 6,
};

constexpr int kNumRoles = 7;

inline const char* role_name(Role r) {
    switch (r) {
        case Role::latent_open: return "latent_open";
        case Role::latent_close: return "latent_close";
        case Role::think_open: return "think_open";
        case Role::think_close: return "think_close";
        case Role::end_of_message: return "end_of_message";
        case Role::end_of_text: return "end_of_text";
        case Role::latent_pad: return "latent_pad";
    }
    return "?";
}

struct TokenizerSpec {
    std::string alphabet;                       // each char is one token
    std::array<std::string, kNumRoles> specials{
        "<latent_think>", "</latent_think>", "<think>", "</think>",
        "<|im_end|>",     "<|endoftext|>",   "<pad>"};
    std::string sentence_end = ".!?";           // chars treated as sentence terminals

    static TokenizerSpec toy();                 // default desk-scale alphabet
};

struct VocabEntry {
    int id;
    std::string text;
    bool special;
};

// Reversible character-level tokenizer with reserved special tokens.
// Special ids occupy [0, kNumRoles) in role order; alphabet chars follow in
// spec order. Special strings are matched greedily (longest first) and never
// split, so detokenize(tokenize(x)) == x for any x over the alphabet.
class Tokenizer {
public:
    explicit Tokenizer(TokenizerSpec spec);

    int vocab_size() const { return static_cast<int>(entries_.size()); }
    int role_id(Role r) const { return static_cast<int>(r); }
    const TokenizerSpec& spec() const { return spec_; }

    std::vector<int> encode(const std::string& text) const;
    std::string decode(const std::vector<int>& ids) const;
    const std::string& token_text(int id) const;
    bool is_special(int id) const { return id >= 0 && id < kNumRoles; }

    std::vector<int> sentence_end_ids() const;
    const std::vector<VocabEntry>& vocab_report() const { return entries_; }

private:
    TokenizerSpec spec_;
    std::vector<VocabEntry> entries_;
    std::map<char, int> char_to_id_;
    std::vector<std::pair<std::string, int>> specials_by_length_;  // longest first
};

}  // namespace ltx
