#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cg2/errors.hpp"
#include "cg2/model.hpp"
#include "cg2/sampler.hpp"
#include "cg2/synthetic.hpp"
#include "cg2/vocab.hpp"

namespace cg2 {

struct EvalOutcome {
    size_t n_cases = 0;
    size_t n_correct = 0;
    double rate() const {
        return n_cases ? static_cast<double>(n_correct) / static_cast<double>(n_cases) : 0.0;
    }
};

// Injectable generator: (prompt tokens, budget) -> generated tokens. Lets the
// ground-truth oracle stand in for a model.
using Completer = std::function<TokenList(const TokenList&, size_t)>;

// Greedy left-to-right completion of the deterministic field, exact string
// match over the whole expected continuation.
inline EvalOutcome eval_completion_with(const Completer& complete,
                                        const std::vector<TaskCase>& cases) {
    EvalOutcome out;
    for (const auto& c : cases) {
        TokenList prompt = tokenize(c.prompt);
        TokenList expected = tokenize(c.answer);
        TokenList got = complete(prompt, expected.size() + 2);
        ++out.n_cases;
        if (got == expected) ++out.n_correct;
    }
    return out;
}

template <typename T>
Completer greedy_completer(const ModelConfig& cfg, const ParamStore<T>& params, ArchMode arch) {
    return [&cfg, &params, arch](const TokenList& prompt, size_t max_new) {
        SampleRequest req;
        req.prompt = prompt;
        req.max_new_tokens = static_cast<int>(max_new);
        req.temperature = 0.0;
        req.arch = arch;
        return sample_lr(cfg, params, req).tokens;
    };
}

template <typename T>
EvalOutcome eval_completion(const ModelConfig& cfg, const ParamStore<T>& params,
                            const std::vector<TaskCase>& cases, ArchMode arch) {
    return eval_completion_with(greedy_completer(cfg, params, arch), cases);
}

// Infill prompt layout follows the model's training recipe: span-corruption
// models read the sentinel layout, PSM-mix models read the
// prefix/suffix/middle layout (their native format).
enum class InfillFormat : uint8_t { sentinel = 0, psm = 1 };

inline InfillFormat infill_format_for(const std::string& objective) {
    return objective == "psm_mix" ? InfillFormat::psm : InfillFormat::sentinel;
}

// Masks the deterministic interior field and requires exact reconstruction;
// unterminated generations count as failures.
template <typename T>
EvalOutcome eval_infill(const ModelConfig& cfg, const ParamStore<T>& params,
                        const std::vector<TaskCase>& cases, InfillFormat format,
                        bool wide_span = false) {
    EvalOutcome out;
    for (const auto& c : cases) {
        const std::string& pre = wide_span ? c.fill_prefix_m : c.fill_prefix;
        const std::string& mid = wide_span ? c.fill_middle_m : c.fill_middle;
        const std::string& suf = wide_span ? c.fill_suffix_m : c.fill_suffix;
        if (mid.empty()) continue;
        TokenList expected = tokenize(mid);
        ++out.n_cases;
        if (format == InfillFormat::sentinel) {
            InfillRequest req;
            req.prefix = tokenize(pre);
            req.suffix = tokenize(suf);
            req.max_new_tokens = static_cast<int>(expected.size()) + 4;
            req.temperature = 0.0;
            InfillResult r = sample_infill(cfg, params, req);
            if (r.terminated && r.middle == expected) ++out.n_correct;
        } else {
            TokenList prompt;
            prompt.push_back(tok::PRE);
            TokenList a = tokenize(pre);
            prompt.insert(prompt.end(), a.begin(), a.end());
            prompt.push_back(tok::SUF);
            TokenList s = tokenize(suf);
            prompt.insert(prompt.end(), s.begin(), s.end());
            prompt.push_back(tok::MID);
            SampleRequest req;
            req.prompt = std::move(prompt);
            req.max_new_tokens = static_cast<int>(expected.size()) + 4;
            req.temperature = 0.0;
            SampleResult r = sample_lr(cfg, params, req);
            if (r.terminated && r.stop_token == tok::EOM && r.tokens == expected)
                ++out.n_correct;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Linear probe on frozen hidden states
// ---------------------------------------------------------------------------

namespace detail {

// Solves (X^T X + lambda I) w = X^T y by Gaussian elimination with partial
// pivoting; features get an appended bias column.
inline std::vector<double> ridge_fit(const std::vector<std::vector<double>>& x,
                                     const std::vector<int>& y, double lambda) {
    const size_t n = x.size();
    const size_t d = x[0].size() + 1;
    std::vector<std::vector<double>> a(d, std::vector<double>(d, 0.0));
    std::vector<double> b(d, 0.0);
    for (size_t i = 0; i < n; ++i) {
        std::vector<double> xi = x[i];
        xi.push_back(1.0);
        for (size_t r = 0; r < d; ++r) {
            b[r] += xi[r] * y[i];
            for (size_t c = 0; c < d; ++c) a[r][c] += xi[r] * xi[c];
        }
    }
    for (size_t r = 0; r < d; ++r) a[r][r] += lambda;
    for (size_t col = 0; col < d; ++col) {
        size_t piv = col;
        for (size_t r = col + 1; r < d; ++r)
            if (std::fabs(a[r][col]) > std::fabs(a[piv][col])) piv = r;
        std::swap(a[col], a[piv]);
        std::swap(b[col], b[piv]);
        if (std::fabs(a[col][col]) < 1e-12) continue;  // degenerate direction; ridge keeps rest
        for (size_t r = col + 1; r < d; ++r) {
            double f = a[r][col] / a[col][col];
            for (size_t c = col; c < d; ++c) a[r][c] -= f * a[col][c];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> w(d, 0.0);
    for (size_t col = d; col-- > 0;) {
        double s = b[col];
        for (size_t c = col + 1; c < d; ++c) s -= a[col][c] * w[c];
        w[col] = std::fabs(a[col][col]) < 1e-12 ? 0.0 : s / a[col][col];
    }
    return w;
}

inline double ridge_accuracy(const std::vector<std::vector<double>>& x_train,
                             const std::vector<int>& y_train,
                             const std::vector<std::vector<double>>& x_test,
                             const std::vector<int>& y_test, double lambda = 1e-2) {
    std::vector<double> w = ridge_fit(x_train, y_train, lambda);
    size_t correct = 0;
    for (size_t i = 0; i < x_test.size(); ++i) {
        double s = w.back();
        for (size_t j = 0; j < x_test[i].size(); ++j) s += w[j] * x_test[i][j];
        if ((s > 0.5 ? 1 : 0) == y_test[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(x_test.size());
}

}  // namespace detail

struct ProbeReport {
    double acc_first = 0.0;  // linear head on the hidden state at position 0
    double acc_last = 0.0;   // ... at the final position
    size_t n_train = 0, n_eval = 0;
};

// Freezes params, reads the post-final-layernorm hidden state at the first
// and last token of each label-free probe string, and fits a linear head per
// position. Prefix mode pins m to the full sequence length.
template <typename T>
ProbeReport probe_representation(const ModelConfig& cfg, const ParamStore<T>& params,
                                 ArchMode arch, const TaskData& data) {
    ForwardCache<T> cache;
    auto features = [&](const std::vector<TaskCase>& cases, std::vector<std::vector<double>>& xf,
                        std::vector<std::vector<double>>& xl, std::vector<int>& y) {
        for (const auto& c : cases) {
            if (c.label < 0 || c.probe_text.empty()) continue;
            TokenList ids = tokenize(c.probe_text);
            AttentionSpec spec;
            spec.mode = arch;
            spec.prefix_len = arch == ArchMode::prefix ? ids.size() : 0;
            forward(cfg, params, ids, spec, cache);
            const size_t d = static_cast<size_t>(cfg.d_model);
            std::vector<double> f0(d), f1(d);
            for (size_t j = 0; j < d; ++j) {
                f0[j] = static_cast<double>(cache.final_h[j]);
                f1[j] = static_cast<double>(cache.final_h[(ids.size() - 1) * d + j]);
            }
            xf.push_back(std::move(f0));
            xl.push_back(std::move(f1));
            y.push_back(c.label);
        }
    };
    std::vector<std::vector<double>> xf_tr, xl_tr, xf_te, xl_te;
    std::vector<int> y_tr, y_te;
    features(data.train, xf_tr, xl_tr, y_tr);
    features(data.heldout, xf_te, xl_te, y_te);
    if (y_tr.empty() || y_te.empty()) throw DataError("probe task has no labeled cases");
    ProbeReport r;
    r.n_train = y_tr.size();
    r.n_eval = y_te.size();
    r.acc_first = detail::ridge_accuracy(xf_tr, y_tr, xf_te, y_te);
    r.acc_last = detail::ridge_accuracy(xl_tr, y_tr, xl_te, y_te);
    return r;
}

}  // namespace cg2
