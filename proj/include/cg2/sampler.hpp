#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "cg2/errors.hpp"
#include "cg2/model.hpp"
#include "cg2/rng.hpp"
#include "cg2/vocab.hpp"

namespace cg2 {

struct SampleRequest {
    TokenList prompt;
    int max_new_tokens = 64;
    double temperature = 1.0;  // 0 => greedy argmax, lowest-id tie-break
    double top_p = 1.0;        // nucleus mass, (0, 1]
    uint64_t seed = 0;
    ArchMode arch = ArchMode::causal;  // prefix mode pins m = prompt length
};

struct SampleResult {
    TokenList tokens;       // generated tokens, stop token excluded
    bool terminated = false;  // true when EOD/EOM ended generation (vs budget)
    Token stop_token = 0;     // valid when terminated
};

struct InfillRequest {
    TokenList prefix;  // a
    TokenList suffix;  // c
    int max_new_tokens = 64;
    double temperature = 0.0;
    double top_p = 1.0;
    uint64_t seed = 0;
};

struct InfillResult {
    TokenList middle;         // tokens strictly before EOM
    bool terminated = false;  // EOM was emitted; budget-truncated infills stay false
};

// Draws one token from a logits row. Temperature 0 is argmax with lowest-id
// tie-break; otherwise softmax(logits/T) restricted to the smallest
// descending-probability set with mass >= top_p.
template <typename T>
Token sample_token(const T* logits, size_t vocab, double temperature, double top_p, Rng& rng) {
    if (temperature < 0) throw DataError("temperature must be >= 0");
    if (!(top_p > 0.0) || top_p > 1.0) throw DataError("top_p must lie in (0,1]");
    if (temperature == 0.0) {
        size_t best = 0;
        for (size_t v = 1; v < vocab; ++v)
            if (static_cast<double>(logits[v]) > static_cast<double>(logits[best])) best = v;
        return static_cast<Token>(best);
    }
    double mx = static_cast<double>(logits[0]);
    for (size_t v = 1; v < vocab; ++v) mx = std::max(mx, static_cast<double>(logits[v]));
    std::vector<double> probs(vocab);
    double z = 0.0;
    for (size_t v = 0; v < vocab; ++v) {
        probs[v] = std::exp((static_cast<double>(logits[v]) - mx) / temperature);
        z += probs[v];
    }
    for (double& p : probs) p /= z;

    std::vector<uint32_t> order(vocab);
    for (size_t v = 0; v < vocab; ++v) order[v] = static_cast<uint32_t>(v);
    std::sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) {
        if (probs[a] != probs[b]) return probs[a] > probs[b];
        return a < b;  // deterministic tie order
    });
    size_t cut = vocab;
    double mass = 0.0;
    for (size_t i = 0; i < vocab; ++i) {
        mass += probs[order[i]];
        if (mass >= top_p) {
            cut = i + 1;
            break;
        }
    }
    double u = rng.uniform_real() * mass;
    double acc = 0.0;
    for (size_t i = 0; i < cut; ++i) {
        acc += probs[order[i]];
        if (u < acc) return order[i];
    }
    return order[cut - 1];  // guard against fp round-off at the boundary
}

// Iterative next-token sampling; stops at EOD/EOM or the budget. The stop
// token is not included in the output. Deterministic per seed.
template <typename T>
SampleResult sample_lr(const ModelConfig& cfg, const ParamStore<T>& params,
                       const SampleRequest& req) {
    if (req.prompt.empty()) throw DataError("prompt must be non-empty");
    if (req.max_new_tokens < 0) throw DataError("max_new_tokens must be >= 0");
    if (req.prompt.size() + static_cast<size_t>(req.max_new_tokens) >
        static_cast<size_t>(cfg.n_ctx))
        throw DataError("prompt too long: prompt + max_new exceeds n_ctx");

    AttentionSpec spec;
    spec.mode = req.arch;
    spec.prefix_len = req.arch == ArchMode::prefix ? req.prompt.size() : 0;

    Rng rng(derive_seed(req.seed, 0x73616d70ull));  // "samp"
    ForwardCache<T> cache;
    TokenList seq = req.prompt;
    SampleResult out;
    for (int i = 0; i < req.max_new_tokens; ++i) {
        forward(cfg, params, seq, spec, cache);
        const T* row = cache.logits.data() + (seq.size() - 1) * cfg.vocab;
        Token next = sample_token(row, cfg.vocab, req.temperature, req.top_p, rng);
        if (next == tok::EOD || next == tok::EOM) {
            out.terminated = true;
            out.stop_token = next;
            break;
        }
        out.tokens.push_back(next);
        seq.push_back(next);
    }
    return out;
}

// Infill prompt layout mirrors the corruption reorder:
// a ++ [MASK_0] ++ c ++ [SEP] ++ [MASK_0]; generation runs until EOM.
inline TokenList build_infill_prompt(const TokenList& a, const TokenList& c) {
    TokenList prompt;
    prompt.reserve(a.size() + c.size() + 3);
    prompt.insert(prompt.end(), a.begin(), a.end());
    prompt.push_back(tok::MASK_BASE);
    prompt.insert(prompt.end(), c.begin(), c.end());
    prompt.push_back(tok::SEP);
    prompt.push_back(tok::MASK_BASE);
    return prompt;
}

// Samples the middle until EOM or budget. Returned tokens never include EOM
// or SEP; budget-truncated (or derailed) infills are flagged unterminated,
// never silently passed.
template <typename T>
InfillResult sample_infill(const ModelConfig& cfg, const ParamStore<T>& params,
                           const InfillRequest& req) {
    const size_t overhead = 3;
    if (req.prefix.size() + req.suffix.size() + overhead +
            static_cast<size_t>(req.max_new_tokens) >
        static_cast<size_t>(cfg.n_ctx))
        throw DataError("infill request exceeds context: prefix + suffix + 3 + max_new > n_ctx");

    TokenList seq = build_infill_prompt(req.prefix, req.suffix);
    Rng rng(derive_seed(req.seed, 0x696e66ull));  // "inf"
    ForwardCache<T> cache;
    AttentionSpec spec;  // causal: the reordered format trains left-to-right
    InfillResult out;
    for (int i = 0; i < req.max_new_tokens; ++i) {
        forward(cfg, params, seq, spec, cache);
        const T* row = cache.logits.data() + (seq.size() - 1) * cfg.vocab;
        Token next = sample_token(row, cfg.vocab, req.temperature, req.top_p, rng);
        if (next == tok::EOM) {
            out.terminated = true;
            break;
        }
        if (next == tok::SEP || next == tok::EOD) break;  // derailed; unterminated
        out.middle.push_back(next);
        seq.push_back(next);
    }
    return out;
}

// Unbiased pass@k: 1 - C(n-c, k)/C(n, k) via a stable running product;
// equals c/n at k=1.
inline double pass_at_k(int64_t n, int64_t c, int64_t k) {
    if (c < 0 || c > n) throw DataError("pass@k requires 0 <= c <= n");
    if (k < 1 || k > n) throw DataError("pass@k requires 1 <= k <= n");
    if (n - c < k) return 1.0;
    double prod = 1.0;
    for (int64_t i = 0; i < k; ++i)
        prod *= static_cast<double>(n - c - i) / static_cast<double>(n - i);
    return 1.0 - prod;
}

}  // namespace cg2
