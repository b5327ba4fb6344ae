// Finite-difference gradient oracle shared by the model tests and the
// acceptance gate. A plain second-order central difference at eps=1e-3
// carries truncation error up to ~3e-6 in absolute terms (measured, and
// confirmed as pure scheme error by its quadratic decay in eps), which
// already exceeds a 1e-4 relative bound on mid-sized gradients no matter how
// correct the backward pass is. Richardson refinement of the same central
// scheme -- (4*D(eps/2) - D(eps))/3 -- cancels the eps^2 term, leaving
// O(eps^4) ~ 1e-12 scheme error, so any disagreement past the bound is a
// genuine gradient defect. Relative error uses a 1e-3 denominator floor to
// keep near-zero gradients judged on absolute terms.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "cg2/model.hpp"
#include "cg2/rng.hpp"

namespace fd {

// Forward-only masked cross-entropy, recomputed here so the finite-difference
// path never touches the backward code it is checking.
inline double loss_of(const cg2::ModelConfig& cfg, const cg2::ParamStore<double>& params,
                      const cg2::TrainingExample& ex, const cg2::AttentionSpec& spec,
                      cg2::ForwardCache<double>& cache) {
    cg2::forward(cfg, params, ex.input, spec, cache);
    const size_t n = ex.input.size();
    const size_t V = cfg.vocab;
    double loss_sum = 0.0;
    size_t n_loss = 0;
    for (size_t i = 0; i < n; ++i) {
        if (!ex.loss_mask[i]) continue;
        const double* li = cache.logits.data() + i * V;
        double mx = li[0];
        for (size_t v = 1; v < V; ++v) mx = std::max(mx, li[v]);
        double z = 0.0;
        for (size_t v = 0; v < V; ++v) z += std::exp(li[v] - mx);
        loss_sum += std::log(z) + mx - li[ex.target[i]];
        ++n_loss;
    }
    return loss_sum / static_cast<double>(n_loss);
}

struct Result {
    double max_rel_err = 0.0;
    std::string worst_slice;
    size_t worst_index = 0;
    size_t coords_checked = 0;
};

// Compares analytic gradients against central differences on `per_family`
// coordinates sampled from each parameter-slice family (per-layer slices
// pooled by family).
inline Result check_gradients(const cg2::ModelConfig& cfg, cg2::ParamStore<double>& params,
                              const cg2::TrainingExample& ex, size_t per_family, uint64_t seed,
                              double eps = 1e-3) {
    cg2::AttentionSpec spec = cg2::attention_spec_for(
        ex, ex.prefix_len > 0 ? cg2::ArchMode::prefix : cg2::ArchMode::causal);
    cg2::ForwardCache<double> cache;
    cg2::ParamStore<double> grads(cfg);
    cg2::loss_and_grad(cfg, params, ex, spec, cache, grads);

    // Group slice indices by family so sampling is stratified.
    std::vector<std::string> families;
    for (const auto& s : params.slices) {
        std::string fam = cg2::slice_family(s.name);
        if (std::find(families.begin(), families.end(), fam) == families.end())
            families.push_back(fam);
    }

    Result res;
    cg2::Rng rng(seed);
    for (const std::string& fam : families) {
        std::vector<size_t> pool;  // flat parameter indices in this family
        for (const auto& s : params.slices)
            if (cg2::slice_family(s.name) == fam)
                for (size_t i = 0; i < s.size(); ++i) pool.push_back(s.offset + i);
        for (size_t c = 0; c < per_family; ++c) {
            const size_t idx =
                pool[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(pool.size()) - 1))];
            const double saved = params.data[idx];
            auto central = [&](double h) {
                params.data[idx] = saved + h;
                const double lp = loss_of(cfg, params, ex, spec, cache);
                params.data[idx] = saved - h;
                const double lm = loss_of(cfg, params, ex, spec, cache);
                params.data[idx] = saved;
                return (lp - lm) / (2.0 * h);
            };
            const double d1 = central(eps);
            const double d2 = central(eps / 2.0);
            const double fd_grad = (4.0 * d2 - d1) / 3.0;
            const double an_grad = grads.data[idx];
            const double denom = std::max({std::fabs(fd_grad), std::fabs(an_grad), 1e-3});
            const double rel = std::fabs(fd_grad - an_grad) / denom;
            ++res.coords_checked;
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.worst_slice = fam;
                res.worst_index = idx;
            }
        }
    }
    return res;
}

// A deterministic example with a mix of masked and unmasked positions.
inline cg2::TrainingExample make_example(uint32_t vocab, size_t n, uint32_t prefix_len,
                                         uint64_t seed) {
    cg2::Rng rng(seed);
    cg2::TrainingExample ex;
    ex.prefix_len = prefix_len;
    ex.objective = prefix_len > 0 ? cg2::ObjectiveTag::SPAN : cg2::ObjectiveTag::CLM;
    for (size_t i = 0; i < n; ++i) {
        ex.input.push_back(static_cast<cg2::Token>(rng.uniform_int(0, vocab - 1)));
        ex.target.push_back(static_cast<cg2::Token>(rng.uniform_int(0, vocab - 1)));
        // keep a few masked positions but never all of them
        ex.loss_mask.push_back(i + 1 >= prefix_len && rng.uniform_real() < 0.7 ? 1 : 0);
    }
    bool any = false;
    for (uint8_t b : ex.loss_mask) any = any || b;
    if (!any) ex.loss_mask[n - 1] = 1;
    return ex;
}

}  // namespace fd
