#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "cg2/errors.hpp"

namespace cg2 {

using Token = uint32_t;
using TokenList = std::vector<Token>;

// Byte-level vocabulary: ids 0..255 are the raw byte values, followed by a
// fixed block of special ids and a budget of K span sentinels.
namespace tok {
constexpr Token PAD = 256;
constexpr Token BOS = 257;
constexpr Token EOD = 258;
constexpr Token SEP = 259;
constexpr Token EOM = 260;
constexpr Token PRE = 261;
constexpr Token SUF = 262;
constexpr Token MID = 263;
constexpr Token MASK_BASE = 264;  // MASK_i = MASK_BASE + i, i in [0, K)
}  // namespace tok

struct Vocabulary {
    int sentinel_budget = 8;  // K

    Token mask(int i) const {
        if (i < 0 || i >= sentinel_budget) throw DataError("sentinel index out of budget");
        return tok::MASK_BASE + static_cast<Token>(i);
    }
    Token size() const { return tok::MASK_BASE + static_cast<Token>(sentinel_budget); }

    static bool is_byte(Token t) { return t < 256; }
    bool is_mask(Token t) const {
        return t >= tok::MASK_BASE && t < tok::MASK_BASE + static_cast<Token>(sentinel_budget);
    }
    int mask_index(Token t) const { return static_cast<int>(t - tok::MASK_BASE); }
    bool valid(Token t) const { return t < size(); }
};

inline TokenList tokenize(std::string_view bytes) {
    TokenList out;
    out.reserve(bytes.size());
    for (unsigned char b : bytes) out.push_back(static_cast<Token>(b));
    return out;
}

// Strict inverse of tokenize; rejects special ids.
inline std::string detokenize(const TokenList& tokens) {
    std::string out;
    out.reserve(tokens.size());
    for (Token t : tokens) {
        if (!Vocabulary::is_byte(t)) throw DataError("detokenize: special id " + std::to_string(t));
        out.push_back(static_cast<char>(static_cast<unsigned char>(t)));
    }
    return out;
}

// Human-readable rendering for diagnostics; special ids become <NAME> markers.
inline std::string render_tokens(const TokenList& tokens, const Vocabulary& vocab = {}) {
    std::string out;
    for (Token t : tokens) {
        if (Vocabulary::is_byte(t)) {
            out.push_back(static_cast<char>(static_cast<unsigned char>(t)));
        } else if (t == tok::PAD) {
            out += "<PAD>";
        } else if (t == tok::BOS) {
            out += "<BOS>";
        } else if (t == tok::EOD) {
            out += "<EOD>";
        } else if (t == tok::SEP) {
            out += "<SEP>";
        } else if (t == tok::EOM) {
            out += "<EOM>";
        } else if (t == tok::PRE) {
            out += "<PRE>";
        } else if (t == tok::SUF) {
            out += "<SUF>";
        } else if (t == tok::MID) {
            out += "<MID>";
        } else if (vocab.is_mask(t)) {
            out += "<MASK_" + std::to_string(vocab.mask_index(t)) + ">";
        } else {
            out += "<" + std::to_string(t) + ">";
        }
    }
    return out;
}

}  // namespace cg2
