#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cg2/batch_format.hpp"
#include "cg2/corpus.hpp"
#include "cg2/errors.hpp"
#include "cg2/objectives.hpp"
#include "cg2/rng.hpp"
#include "cg2/vocab.hpp"

namespace cg2 {

struct CorruptOptions {
    std::string objective = "clm";  // clm | mixture | psm_mix | ul2s
    ObjectiveConfig objective_cfg;
    ArchMode arch = ArchMode::causal;
    int n_ctx = 256;
    uint64_t seed = 0;
    int repeats = 1;  // independently corrupted copies per packed window
};

// JSONL documents -> packed windows -> corrupted training examples. Each
// example draws from its own RNG stream keyed by (seed, example index), so
// the output is independent of processing order.
inline BatchFile build_batch(const std::vector<Document>& docs, const CorruptOptions& opt) {
    if (opt.repeats < 1) throw DataError("repeats must be >= 1");
    if (opt.objective != "clm" && opt.objective != "mixture" && opt.objective != "psm_mix" &&
        opt.objective != "ul2s")
        throw DataError("objective must be clm|mixture|psm_mix|ul2s");
    ObjectiveConfig cfg = opt.objective_cfg;
    cfg.validate();
    if (opt.objective == "ul2s" && !cfg.ul2s) cfg.ul2s = Ul2sConfig{};

    std::vector<PackedSequence> windows =
        pack_documents(docs, static_cast<size_t>(opt.n_ctx), opt.seed);
    BatchFile out;
    out.n_ctx = static_cast<uint32_t>(opt.n_ctx);
    out.vocab = Vocabulary{cfg.sentinel_budget}.size();
    out.examples.reserve(windows.size() * static_cast<size_t>(opt.repeats));

    const uint64_t base = derive_seed(opt.seed, 0x636f7272ull);  // "corr"
    const bool prefix = opt.arch == ArchMode::prefix;
    uint64_t index = 0;
    for (int r = 0; r < opt.repeats; ++r) {
        for (const PackedSequence& w : windows) {
            Rng rng(derive_seed(base, index++));
            // A ragged final window can hold a single real token; there is
            // nothing to predict in it, so it is dropped rather than turned
            // into an example that would violate the loss-mask invariant.
            size_t real = 0;
            for (Token t : w.tokens)
                if (t != tok::PAD) ++real;
            if (real < 2) continue;
            if (opt.objective == "clm") {
                out.examples.push_back(make_clm_example(
                    w, prefix ? PrefixMode::uniform : PrefixMode::none, cfg, rng));
            } else if (opt.objective == "mixture") {
                out.examples.push_back(make_mixture_example(w, cfg, rng, opt.arch));
            } else if (opt.objective == "psm_mix") {
                out.examples.push_back(make_psm_mix_example(w, cfg, rng));
            } else {
                out.examples.push_back(make_ul2s_example(w, cfg, rng, opt.arch));
            }
        }
    }
    if (out.examples.empty()) throw DataError("no training examples produced");
    return out;
}

}  // namespace cg2
