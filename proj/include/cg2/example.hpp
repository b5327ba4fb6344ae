#pragma once

#include <cstdint>
#include <vector>

#include "cg2/corpus.hpp"
#include "cg2/vocab.hpp"

namespace cg2 {

// Attention regime. prefix means the first m positions attend
// bi-directionally among themselves; the rest stays causal.
enum class ArchMode : uint8_t { causal = 0, prefix = 1 };

enum class ObjectiveTag : uint8_t { CLM = 0, SPAN = 1, PSM = 2, UL2S = 3 };

inline const char* to_string(ObjectiveTag t) {
    switch (t) {
        case ObjectiveTag::CLM: return "clm";
        case ObjectiveTag::SPAN: return "span";
        case ObjectiveTag::PSM: return "psm";
        case ObjectiveTag::UL2S: return "ul2s";
    }
    return "?";
}

// One packed training sequence with next-token targets. target is input
// shifted left by one with PAD at the end; loss_mask picks the positions
// that contribute to the loss (never a PAD target, never the non-causal
// prefix [0, m) when m > 0).
struct TrainingExample {
    TokenList input;
    TokenList target;
    std::vector<uint8_t> loss_mask;
    uint32_t prefix_len = 0;  // m
    ObjectiveTag objective = ObjectiveTag::CLM;
    Domain domain = Domain::A;

    size_t loss_positions() const {
        size_t n = 0;
        for (uint8_t b : loss_mask) n += b;
        return n;
    }
};

}  // namespace cg2
