#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cg2/errors.hpp"
#include "cg2/example.hpp"
#include "cg2/rng.hpp"
#include "cg2/serialize.hpp"
#include "cg2/vocab.hpp"

namespace cg2 {

struct ModelConfig {
    int n_layers = 2;
    int n_heads = 4;
    int d_model = 64;
    int d_ff = 256;
    int n_ctx = 256;
    uint32_t vocab = 272;  // 264 + default sentinel budget
    bool tied_output = true;

    void validate() const {
        if (n_layers <= 0 || n_heads <= 0 || d_model <= 0 || d_ff <= 0 || n_ctx <= 0 || vocab == 0)
            throw DataError("model dimensions must be positive");
        if (d_model % n_heads != 0) throw DataError("d_model must be divisible by n_heads");
    }
    int head_dim() const { return d_model / n_heads; }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = {{"n_layers", c.n_layers}, {"n_heads", c.n_heads},   {"d_model", c.d_model},
         {"d_ff", c.d_ff},         {"n_ctx", c.n_ctx},       {"vocab", c.vocab},
         {"tied_output", c.tied_output}};
}
inline void from_json(const nlohmann::json& j, ModelConfig& c) {
    c.n_layers = j.value("n_layers", c.n_layers);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.d_model = j.value("d_model", c.d_model);
    c.d_ff = j.value("d_ff", c.d_ff);
    c.n_ctx = j.value("n_ctx", c.n_ctx);
    c.vocab = j.value("vocab", c.vocab);
    c.tied_output = j.value("tied_output", c.tied_output);
}

// ---------------------------------------------------------------------------
// Attention spec
// ---------------------------------------------------------------------------

// allowed(i, j) = (j <= i) or (prefix mode and i < m and j < m), minus
// key-padding exclusions; a position may always attend itself so no row is
// ever fully masked.
struct AttentionSpec {
    ArchMode mode = ArchMode::causal;
    size_t prefix_len = 0;                // m; ignored in causal mode
    std::vector<uint8_t> key_padding;     // per-position exclusion; may be empty

    bool allowed(size_t i, size_t j) const {
        if (i == j) return true;
        bool base = j <= i || (mode == ArchMode::prefix && i < prefix_len && j < prefix_len);
        if (!base) return false;
        return key_padding.empty() || !key_padding[j];
    }

    // Rows attend a contiguous candidate range [0, row_extent(i)); key
    // padding punches holes inside it.
    size_t row_extent(size_t i) const {
        if (mode == ArchMode::prefix && i < prefix_len) return prefix_len;
        return i + 1;
    }
};

inline AttentionSpec attention_spec_for(const TrainingExample& ex, ArchMode arch) {
    AttentionSpec spec;
    spec.mode = arch;
    spec.prefix_len = arch == ArchMode::prefix ? ex.prefix_len : 0;
    bool any_pad = false;
    for (Token t : ex.input)
        if (t == tok::PAD) {
            any_pad = true;
            break;
        }
    if (any_pad) {
        spec.key_padding.resize(ex.input.size());
        for (size_t i = 0; i < ex.input.size(); ++i)
            spec.key_padding[i] = ex.input[i] == tok::PAD ? 1 : 0;
    }
    return spec;
}

// Row-major n*n boolean matrix of the allowed-attention predicate.
inline std::vector<uint8_t> build_attention_mask(const AttentionSpec& spec, size_t n) {
    if (spec.mode == ArchMode::prefix && spec.prefix_len > n)
        throw DataError("prefix length exceeds sequence length");
    std::vector<uint8_t> mask(n * n, 0);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) mask[i * n + j] = spec.allowed(i, j) ? 1 : 0;
    return mask;
}

// ---------------------------------------------------------------------------
// Parameter store: one flat numeric buffer with named slices
// ---------------------------------------------------------------------------

struct SliceInfo {
    std::string name;
    size_t offset = 0;
    size_t rows = 0;
    size_t cols = 0;
    size_t size() const { return rows * cols; }
};

// Canonical slice layout; checkpoints serialize slices in exactly this order.
inline std::vector<SliceInfo> make_slice_layout(const ModelConfig& cfg) {
    cfg.validate();
    std::vector<SliceInfo> slices;
    size_t off = 0;
    auto add = [&](std::string name, size_t rows, size_t cols) {
        slices.push_back({std::move(name), off, rows, cols});
        off += rows * cols;
    };
    const size_t d = static_cast<size_t>(cfg.d_model);
    const size_t f = static_cast<size_t>(cfg.d_ff);
    add("tok_emb", cfg.vocab, d);
    add("pos_emb", static_cast<size_t>(cfg.n_ctx), d);
    for (int l = 0; l < cfg.n_layers; ++l) {
        std::string p = "layer" + std::to_string(l) + ".";
        add(p + "ln1.g", 1, d);
        add(p + "ln1.b", 1, d);
        add(p + "attn.wq", d, d);
        add(p + "attn.wk", d, d);
        add(p + "attn.wv", d, d);
        add(p + "attn.wo", d, d);
        add(p + "ln2.g", 1, d);
        add(p + "ln2.b", 1, d);
        add(p + "mlp.w1", d, f);
        add(p + "mlp.b1", 1, f);
        add(p + "mlp.w2", f, d);
        add(p + "mlp.b2", 1, d);
    }
    add("lnf.g", 1, d);
    add("lnf.b", 1, d);
    if (!cfg.tied_output) add("out_proj", cfg.vocab, d);
    return slices;
}

// Strips the per-layer prefix: "layer3.attn.wq" -> "attn.wq".
inline std::string slice_family(const std::string& name) {
    if (name.rfind("layer", 0) == 0) {
        size_t dot = name.find('.');
        if (dot != std::string::npos) return name.substr(dot + 1);
    }
    return name;
}

template <typename T>
struct ParamStore {
    ModelConfig config;
    std::vector<SliceInfo> slices;
    std::vector<T> data;

    ParamStore() = default;
    explicit ParamStore(const ModelConfig& cfg) : config(cfg), slices(make_slice_layout(cfg)) {
        size_t total = 0;
        for (const auto& s : slices) total += s.size();
        data.assign(total, T{0});
    }

    std::span<T> slice(const std::string& name) {
        for (const auto& s : slices)
            if (s.name == name) return {data.data() + s.offset, s.size()};
        throw DataError("no such parameter slice: " + name);
    }
    std::span<const T> slice(const std::string& name) const {
        for (const auto& s : slices)
            if (s.name == name) return {data.data() + s.offset, s.size()};
        throw DataError("no such parameter slice: " + name);
    }
    T* ptr(const std::string& name) { return slice(name).data(); }
    const T* ptr(const std::string& name) const { return slice(name).data(); }

    void zero() { std::fill(data.begin(), data.end(), T{0}); }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <typename U>
    ParamStore<U> cast() const {
        ParamStore<U> out(config);
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

// Weights ~ N(0, 0.02^2), biases 0, layernorm gains 1; the residual output
// projections (attn.wo, mlp.w2) are scaled down by 1/sqrt(2 * n_layers).
template <typename T = float>
ParamStore<T> init_params(const ModelConfig& cfg, uint64_t seed) {
    ParamStore<T> params(cfg);
    Rng rng(derive_seed(seed, /*stream=*/0x696e6974ull));  // "init"
    const double base_std = 0.02;
    const double resid_std = base_std / std::sqrt(2.0 * cfg.n_layers);
    for (const SliceInfo& s : params.slices) {
        std::string fam = slice_family(s.name);
        T* p = params.data.data() + s.offset;
        if (fam == "ln1.g" || fam == "ln2.g" || fam == "lnf.g") {
            std::fill_n(p, s.size(), T{1});
        } else if (fam == "ln1.b" || fam == "ln2.b" || fam == "lnf.b" || fam == "mlp.b1" ||
                   fam == "mlp.b2") {
            std::fill_n(p, s.size(), T{0});
        } else {
            double std_dev = (fam == "attn.wo" || fam == "mlp.w2") ? resid_std : base_std;
            for (size_t i = 0; i < s.size(); ++i)
                p[i] = static_cast<T>(rng.normal() * std_dev);
        }
    }
    return params;
}

// ---------------------------------------------------------------------------
// Dense kernels (row-major). Loop orders keep the inner loop contiguous so
// the compiler can vectorize.
// ---------------------------------------------------------------------------

namespace kernels {

// C[n x out] += A[n x in] * W[in x out]
template <typename T>
void matmul_acc(const T* a, const T* w, T* c, size_t n, size_t in, size_t out) {
    for (size_t i = 0; i < n; ++i) {
        const T* ai = a + i * in;
        T* ci = c + i * out;
        for (size_t k = 0; k < in; ++k) {
            const T aik = ai[k];
            const T* wk = w + k * out;
            for (size_t j = 0; j < out; ++j) ci[j] += aik * wk[j];
        }
    }
}

// Fixed-order 8-lane reduction: the explicit partial sums keep the result
// deterministic while breaking the serial dependence chain.
template <typename T>
T dot_lanes(const T* a, const T* b, size_t n) {
    T lanes[8] = {T{0}, T{0}, T{0}, T{0}, T{0}, T{0}, T{0}, T{0}};
    const size_t main_n = n - n % 8;
    for (size_t i = 0; i < main_n; i += 8)
        for (size_t l = 0; l < 8; ++l) lanes[l] += a[i + l] * b[i + l];
    T acc = ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) +
            ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
    for (size_t i = main_n; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

// Transpose src [rows x cols] into dst [cols x rows].
template <typename T>
void transpose(const T* src, T* dst, size_t rows, size_t cols) {
    for (size_t r = 0; r < rows; ++r)
        for (size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

// dA[n x in] += dC[n x out] * W^T   (W stored [in x out]). Transposing W into
// scratch turns the inner reduction into the vector-friendly row-accumulate
// form; the transpose itself is negligible next to the matmul.
template <typename T>
void matmul_grad_a(const T* dc, const T* w, T* da, size_t n, size_t in, size_t out,
                   std::vector<T>& scratch) {
    scratch.resize(in * out);
    transpose(w, scratch.data(), in, out);
    matmul_acc(dc, scratch.data(), da, n, out, in);
}

// dW[in x out] += A^T * dC
template <typename T>
void matmul_grad_w(const T* a, const T* dc, T* dw, size_t n, size_t in, size_t out) {
    for (size_t i = 0; i < n; ++i) {
        const T* ai = a + i * in;
        const T* dci = dc + i * out;
        for (size_t k = 0; k < in; ++k) {
            const T aik = ai[k];
            T* dwk = dw + k * out;
            for (size_t j = 0; j < out; ++j) dwk[j] += aik * dci[j];
        }
    }
}

template <typename T>
void add_bias(T* c, const T* b, size_t n, size_t out) {
    for (size_t i = 0; i < n; ++i) {
        T* ci = c + i * out;
        for (size_t j = 0; j < out; ++j) ci[j] += b[j];
    }
}

template <typename T>
void bias_grad(const T* dc, T* db, size_t n, size_t out) {
    for (size_t i = 0; i < n; ++i) {
        const T* dci = dc + i * out;
        for (size_t j = 0; j < out; ++j) db[j] += dci[j];
    }
}

template <typename T>
T dot(const T* a, const T* b, size_t n) {
    return dot_lanes(a, b, n);
}

template <typename T>
void axpy(T alpha, const T* x, T* y, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

// tanh approximation, evaluated in the working precision (the f64
// gradient-check mode gets full double accuracy for free).
template <typename T>
T gelu(T x) {
    T u = static_cast<T>(kGeluC) * (x + static_cast<T>(kGeluA) * x * x * x);
    return static_cast<T>(0.5) * x * (T{1} + std::tanh(u));
}

// Derivative given t = tanh(u(x)) already computed in the forward pass.
template <typename T>
T gelu_grad_cached(T x, T t) {
    T du = static_cast<T>(kGeluC) * (T{1} + T{3} * static_cast<T>(kGeluA) * x * x);
    return static_cast<T>(0.5) * (T{1} + t) + static_cast<T>(0.5) * x * (T{1} - t * t) * du;
}

template <typename T>
T gelu_grad(T x) {
    T u = static_cast<T>(kGeluC) * (x + static_cast<T>(kGeluA) * x * x * x);
    return gelu_grad_cached(x, std::tanh(u));
}

}  // namespace kernels

// ---------------------------------------------------------------------------
// Forward pass with cached activations
// ---------------------------------------------------------------------------

constexpr double kLayerNormEps = 1e-5;
constexpr double kMaskFill = -1e30;  // additive mask; underflows to exact 0 in softmax

template <typename T>
struct LayerCache {
    std::vector<T> ln1_xhat, ln2_xhat;  // [n][d]
    std::vector<T> ln1_rstd, ln2_rstd;  // [n]
    std::vector<T> q, k, v;             // [n][d]
    std::vector<T> kt, vt;              // [heads*dh][n], transposed per head
    std::vector<T> probs;               // [heads][n][n]
    std::vector<T> ctx;                 // [n][d], pre-Wo
    std::vector<T> x_mid;               // [n][d], after attention residual
    std::vector<T> h_pre, h_act;        // [n][d_ff]
    std::vector<T> gelu_t;              // [n][d_ff], tanh(u) cached for backward
};

template <typename T>
struct ForwardCache {
    size_t n = 0;                      // sequence length of this call
    std::vector<std::vector<T>> xs;    // [n_layers+1] residual stream inputs
    std::vector<LayerCache<T>> layers;
    std::vector<T> lnf_xhat;           // [n][d]
    std::vector<T> lnf_rstd;           // [n]
    std::vector<T> final_h;            // [n][d], post-final-layernorm
    std::vector<T> logits;             // [n][vocab]
    std::vector<T> w_out_t;            // [d][vocab], transposed output weights

    void resize(const ModelConfig& cfg, size_t seq_len) {
        n = seq_len;
        const size_t d = static_cast<size_t>(cfg.d_model);
        const size_t f = static_cast<size_t>(cfg.d_ff);
        const size_t h = static_cast<size_t>(cfg.n_heads);
        xs.resize(static_cast<size_t>(cfg.n_layers) + 1);
        for (auto& x : xs) x.assign(n * d, T{0});
        layers.resize(static_cast<size_t>(cfg.n_layers));
        for (auto& lc : layers) {
            lc.ln1_xhat.assign(n * d, T{0});
            lc.ln2_xhat.assign(n * d, T{0});
            lc.ln1_rstd.assign(n, T{0});
            lc.ln2_rstd.assign(n, T{0});
            lc.q.assign(n * d, T{0});
            lc.k.assign(n * d, T{0});
            lc.v.assign(n * d, T{0});
            lc.kt.assign(n * d, T{0});
            lc.vt.assign(n * d, T{0});
            lc.probs.assign(h * n * n, T{0});
            lc.ctx.assign(n * d, T{0});
            lc.x_mid.assign(n * d, T{0});
            lc.h_pre.assign(n * f, T{0});
            lc.h_act.assign(n * f, T{0});
            lc.gelu_t.assign(n * f, T{0});
        }
        lnf_xhat.assign(n * d, T{0});
        lnf_rstd.assign(n, T{0});
        final_h.assign(n * d, T{0});
        logits.assign(n * cfg.vocab, T{0});
    }
};

namespace detail {

template <typename T>
void layernorm_forward(const T* x, const T* gain, const T* bias, T* out, T* xhat, T* rstd,
                       size_t n, size_t d) {
    for (size_t i = 0; i < n; ++i) {
        const T* xi = x + i * d;
        T mu{0};
        for (size_t j = 0; j < d; ++j) mu += xi[j];
        mu /= static_cast<T>(d);
        T var{0};
        for (size_t j = 0; j < d; ++j) {
            T c = xi[j] - mu;
            var += c * c;
        }
        var /= static_cast<T>(d);
        T r = static_cast<T>(1.0 / std::sqrt(static_cast<double>(var) + kLayerNormEps));
        rstd[i] = r;
        T* xh = xhat + i * d;
        T* oi = out + i * d;
        for (size_t j = 0; j < d; ++j) {
            xh[j] = (xi[j] - mu) * r;
            oi[j] = gain[j] * xh[j] + bias[j];
        }
    }
}

// dg/db accumulate; dx accumulates into dst.
template <typename T>
void layernorm_backward(const T* dy, const T* gain, const T* xhat, const T* rstd, T* dx, T* dg,
                        T* db, size_t n, size_t d) {
    for (size_t i = 0; i < n; ++i) {
        const T* dyi = dy + i * d;
        const T* xh = xhat + i * d;
        T* dxi = dx + i * d;
        T sum_dyh{0}, sum_dyh_xhat{0};
        for (size_t j = 0; j < d; ++j) {
            T dyh = dyi[j] * gain[j];
            sum_dyh += dyh;
            sum_dyh_xhat += dyh * xh[j];
            dg[j] += dyi[j] * xh[j];
            db[j] += dyi[j];
        }
        T inv_d = static_cast<T>(1.0 / static_cast<double>(d));
        for (size_t j = 0; j < d; ++j) {
            T dyh = dyi[j] * gain[j];
            dxi[j] += rstd[i] * (dyh - sum_dyh * inv_d - xh[j] * sum_dyh_xhat * inv_d);
        }
    }
}

template <typename T>
void check_finite(const std::vector<T>& v, int layer_index) {
    for (T x : v)
        if (!std::isfinite(static_cast<double>(x)))
            throw NumericError("non-finite activation in layer " + std::to_string(layer_index));
}

}  // namespace detail

// Pre-layernorm decoder forward. Masked attention entries receive the
// additive -1e30 fill, which underflows to an exact zero weight after the
// softmax, so disallowed positions contribute nothing bit-for-bit.
template <typename T>
void forward(const ModelConfig& cfg, const ParamStore<T>& params, std::span<const Token> ids,
             const AttentionSpec& spec, ForwardCache<T>& cache) {
    const size_t n = ids.size();
    const size_t d = static_cast<size_t>(cfg.d_model);
    const size_t f = static_cast<size_t>(cfg.d_ff);
    const size_t heads = static_cast<size_t>(cfg.n_heads);
    const size_t dh = static_cast<size_t>(cfg.head_dim());
    if (n == 0 || n > static_cast<size_t>(cfg.n_ctx)) throw DataError("bad sequence length");
    if (spec.mode == ArchMode::prefix && spec.prefix_len > n)
        throw DataError("prefix length exceeds sequence length");
    for (Token t : ids)
        if (t >= cfg.vocab) throw DataError("token id out of vocabulary");

    cache.resize(cfg, n);
    const T* tok_emb = params.ptr("tok_emb");
    const T* pos_emb = params.ptr("pos_emb");
    std::vector<T>& x0 = cache.xs[0];
    for (size_t i = 0; i < n; ++i) {
        const T* te = tok_emb + static_cast<size_t>(ids[i]) * d;
        const T* pe = pos_emb + i * d;
        T* xi = x0.data() + i * d;
        for (size_t j = 0; j < d; ++j) xi[j] = te[j] + pe[j];
    }

    const T inv_sqrt_dh = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
    std::vector<T> ln_out(n * d);
    std::vector<T> attn_out(n * d);
    std::vector<T> mlp_out(n * d);
    std::vector<T> scores;

    for (int l = 0; l < cfg.n_layers; ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        LayerCache<T>& lc = cache.layers[static_cast<size_t>(l)];
        const std::vector<T>& x_in = cache.xs[static_cast<size_t>(l)];

        detail::layernorm_forward(x_in.data(), params.ptr(p + "ln1.g"), params.ptr(p + "ln1.b"),
                                  ln_out.data(), lc.ln1_xhat.data(), lc.ln1_rstd.data(), n, d);

        std::fill(lc.q.begin(), lc.q.end(), T{0});
        std::fill(lc.k.begin(), lc.k.end(), T{0});
        std::fill(lc.v.begin(), lc.v.end(), T{0});
        kernels::matmul_acc(ln_out.data(), params.ptr(p + "attn.wq"), lc.q.data(), n, d, d);
        kernels::matmul_acc(ln_out.data(), params.ptr(p + "attn.wk"), lc.k.data(), n, d, d);
        kernels::matmul_acc(ln_out.data(), params.ptr(p + "attn.wv"), lc.v.data(), n, d, d);

        // Transposed per-head K/V ([head_dim][n]) make the key axis the inner
        // contiguous loop in both the score and context accumulations.
        kernels::transpose(lc.k.data(), lc.kt.data(), n, d);
        kernels::transpose(lc.v.data(), lc.vt.data(), n, d);
        for (size_t h = 0; h < heads; ++h) {
            const size_t hoff = h * dh;
            T* probs_h = lc.probs.data() + h * n * n;
            for (size_t i = 0; i < n; ++i) {
                const size_t extent = std::min(spec.row_extent(i), n);
                const T* qi = lc.q.data() + i * d + hoff;
                scores.assign(extent, T{0});
                for (size_t x = 0; x < dh; ++x) {
                    const T qx = qi[x] * inv_sqrt_dh;
                    const T* ktx = lc.kt.data() + (hoff + x) * n;
                    for (size_t j = 0; j < extent; ++j) scores[j] += qx * ktx[j];
                }
                if (!spec.key_padding.empty())
                    for (size_t j = 0; j < extent; ++j)
                        if (spec.key_padding[j] && j != i) scores[j] += static_cast<T>(kMaskFill);
                T mx = scores[0];
                for (size_t j = 1; j < extent; ++j) mx = std::max(mx, scores[j]);
                T z{0};
                for (size_t j = 0; j < extent; ++j) {
                    T e = std::exp(scores[j] - mx);
                    scores[j] = e;
                    z += e;
                }
                const T inv_z = T{1} / z;
                T* pr = probs_h + i * n;
                for (size_t j = 0; j < extent; ++j) pr[j] = scores[j] * inv_z;
                T* ci = lc.ctx.data() + i * d + hoff;
                for (size_t x = 0; x < dh; ++x)
                    ci[x] = kernels::dot(pr, lc.vt.data() + (hoff + x) * n, extent);
            }
        }

        std::fill(attn_out.begin(), attn_out.end(), T{0});
        kernels::matmul_acc(lc.ctx.data(), params.ptr(p + "attn.wo"), attn_out.data(), n, d, d);
        for (size_t i = 0; i < n * d; ++i) lc.x_mid[i] = x_in[i] + attn_out[i];
        detail::check_finite(lc.x_mid, l);

        detail::layernorm_forward(lc.x_mid.data(), params.ptr(p + "ln2.g"),
                                  params.ptr(p + "ln2.b"), ln_out.data(), lc.ln2_xhat.data(),
                                  lc.ln2_rstd.data(), n, d);
        std::fill(lc.h_pre.begin(), lc.h_pre.end(), T{0});
        kernels::matmul_acc(ln_out.data(), params.ptr(p + "mlp.w1"), lc.h_pre.data(), n, d, f);
        kernels::add_bias(lc.h_pre.data(), params.ptr(p + "mlp.b1"), n, f);
        for (size_t i = 0; i < n * f; ++i) {
            const T x = lc.h_pre[i];
            const T t = std::tanh(static_cast<T>(kernels::kGeluC) *
                                  (x + static_cast<T>(kernels::kGeluA) * x * x * x));
            lc.gelu_t[i] = t;  // reused by the backward pass
            lc.h_act[i] = static_cast<T>(0.5) * x * (T{1} + t);
        }
        std::fill(mlp_out.begin(), mlp_out.end(), T{0});
        kernels::matmul_acc(lc.h_act.data(), params.ptr(p + "mlp.w2"), mlp_out.data(), n, f, d);
        kernels::add_bias(mlp_out.data(), params.ptr(p + "mlp.b2"), n, d);

        std::vector<T>& x_out = cache.xs[static_cast<size_t>(l) + 1];
        for (size_t i = 0; i < n * d; ++i) x_out[i] = lc.x_mid[i] + mlp_out[i];
        detail::check_finite(x_out, l);
    }

    detail::layernorm_forward(cache.xs.back().data(), params.ptr("lnf.g"), params.ptr("lnf.b"),
                              cache.final_h.data(), cache.lnf_xhat.data(), cache.lnf_rstd.data(),
                              n, d);

    const T* out_w = cfg.tied_output ? tok_emb : params.ptr("out_proj");
    const size_t V = cfg.vocab;
    cache.w_out_t.resize(d * V);
    kernels::transpose(out_w, cache.w_out_t.data(), V, d);
    std::fill(cache.logits.begin(), cache.logits.end(), T{0});
    kernels::matmul_acc(cache.final_h.data(), cache.w_out_t.data(), cache.logits.data(), n, d, V);
    detail::check_finite(cache.logits, cfg.n_layers);
}

// ---------------------------------------------------------------------------
// Loss and gradients
// ---------------------------------------------------------------------------

// Mean cross-entropy over loss_mask==1 positions; gradients accumulate into
// `grads` (caller zeroes between batches). Masked positions contribute
// exactly zero. Returns the scalar loss.
template <typename T>
double loss_and_grad(const ModelConfig& cfg, const ParamStore<T>& params,
                     const TrainingExample& ex, const AttentionSpec& spec, ForwardCache<T>& cache,
                     ParamStore<T>& grads) {
    const size_t n = ex.input.size();
    const size_t d = static_cast<size_t>(cfg.d_model);
    const size_t f = static_cast<size_t>(cfg.d_ff);
    const size_t heads = static_cast<size_t>(cfg.n_heads);
    const size_t dh = static_cast<size_t>(cfg.head_dim());
    const size_t V = cfg.vocab;

    size_t n_loss = ex.loss_positions();
    if (n_loss == 0) throw DataError("loss mask is all zero");

    forward(cfg, params, ex.input, spec, cache);

    // Softmax + cross-entropy on masked positions; dlogits is zero elsewhere.
    double loss_sum = 0.0;
    std::vector<T> dlogits(n * V, T{0});
    const T inv_m = static_cast<T>(1.0 / static_cast<double>(n_loss));
    for (size_t i = 0; i < n; ++i) {
        if (!ex.loss_mask[i]) continue;
        const Token target = ex.target[i];
        if (target >= V) throw DataError("target id out of vocabulary");
        const T* li = cache.logits.data() + i * V;
        T mx = li[0];
        for (size_t v = 1; v < V; ++v) mx = std::max(mx, li[v]);
        // exp in working precision, sum in double
        T* dli = dlogits.data() + i * V;
        double z = 0.0;
        for (size_t v = 0; v < V; ++v) {
            T e = std::exp(li[v] - mx);
            dli[v] = e;
            z += static_cast<double>(e);
        }
        double log_z = std::log(z) + static_cast<double>(mx);
        loss_sum += log_z - static_cast<double>(li[target]);
        const T inv_z_m = static_cast<T>(1.0 / z) * inv_m;
        for (size_t v = 0; v < V; ++v) dli[v] *= inv_z_m;
        dli[target] -= inv_m;
    }
    const double loss = loss_sum / static_cast<double>(n_loss);

    // Output projection backward.
    std::vector<T> d_final(n * d, T{0});
    const T* out_w = cfg.tied_output ? params.ptr("tok_emb") : params.ptr("out_proj");
    T* d_out_w = cfg.tied_output ? grads.ptr("tok_emb") : grads.ptr("out_proj");
    for (size_t i = 0; i < n; ++i) {
        if (!ex.loss_mask[i]) continue;  // dlogits row is zero
        const T* dli = dlogits.data() + i * V;
        const T* hi = cache.final_h.data() + i * d;
        T* dhi = d_final.data() + i * d;
        for (size_t v = 0; v < V; ++v) {
            const T g = dli[v];
            kernels::axpy(g, out_w + v * d, dhi, d);
            kernels::axpy(g, hi, d_out_w + v * d, d);
        }
    }

    // Final layernorm backward.
    std::vector<T> dx(n * d, T{0});
    detail::layernorm_backward(d_final.data(), params.ptr("lnf.g"), cache.lnf_xhat.data(),
                               cache.lnf_rstd.data(), dx.data(), grads.ptr("lnf.g"),
                               grads.ptr("lnf.b"), n, d);

    std::vector<T> d_ln(n * d), d_hact(n * f), d_hpre(n * f), d_mid(n * d), d_ctx(n * d);
    std::vector<T> w_scratch;
    std::vector<T> dq(n * d), dk(n * d), dv(n * d), ln_out(n * d), dscores;
    std::vector<T> dkt(d * n), dvt(d * n);

    for (int l = cfg.n_layers - 1; l >= 0; --l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        LayerCache<T>& lc = cache.layers[static_cast<size_t>(l)];
        const std::vector<T>& x_in = cache.xs[static_cast<size_t>(l)];

        // MLP backward: x_out = x_mid + W2 gelu(W1 ln2(x_mid) + b1) + b2
        std::fill(d_hact.begin(), d_hact.end(), T{0});
        kernels::matmul_grad_a(dx.data(), params.ptr(p + "mlp.w2"), d_hact.data(), n, f, d, w_scratch);
        kernels::matmul_grad_w(lc.h_act.data(), dx.data(), grads.ptr(p + "mlp.w2"), n, f, d);
        kernels::bias_grad(dx.data(), grads.ptr(p + "mlp.b2"), n, d);
        for (size_t i = 0; i < n * f; ++i)
            d_hpre[i] = d_hact[i] * kernels::gelu_grad_cached(lc.h_pre[i], lc.gelu_t[i]);

        // Recompute ln2 output: cheaper than caching another n*d buffer.
        const T* g2 = params.ptr(p + "ln2.g");
        const T* b2 = params.ptr(p + "ln2.b");
        for (size_t i = 0; i < n * d; ++i)
            ln_out[i] = g2[i % d] * lc.ln2_xhat[i] + b2[i % d];
        std::fill(d_ln.begin(), d_ln.end(), T{0});
        kernels::matmul_grad_a(d_hpre.data(), params.ptr(p + "mlp.w1"), d_ln.data(), n, d, f, w_scratch);
        kernels::matmul_grad_w(ln_out.data(), d_hpre.data(), grads.ptr(p + "mlp.w1"), n, d, f);
        kernels::bias_grad(d_hpre.data(), grads.ptr(p + "mlp.b1"), n, f);

        // d_mid = dx (residual) + ln2 backward of d_ln
        d_mid = dx;
        detail::layernorm_backward(d_ln.data(), g2, lc.ln2_xhat.data(), lc.ln2_rstd.data(),
                                   d_mid.data(), grads.ptr(p + "ln2.g"), grads.ptr(p + "ln2.b"),
                                   n, d);

        // Attention backward: x_mid = x_in + Wo ctx
        std::fill(d_ctx.begin(), d_ctx.end(), T{0});
        kernels::matmul_grad_a(d_mid.data(), params.ptr(p + "attn.wo"), d_ctx.data(), n, d, d, w_scratch);
        kernels::matmul_grad_w(lc.ctx.data(), d_mid.data(), grads.ptr(p + "attn.wo"), n, d, d);

        // dkt/dvt accumulate in the transposed layout, then flip back once.
        std::fill(dq.begin(), dq.end(), T{0});
        std::fill(dkt.begin(), dkt.end(), T{0});
        std::fill(dvt.begin(), dvt.end(), T{0});
        const T inv_sqrt_dh = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
        for (size_t h = 0; h < heads; ++h) {
            const size_t hoff = h * dh;
            const T* probs_h = lc.probs.data() + h * n * n;
            for (size_t i = 0; i < n; ++i) {
                const size_t extent = std::min(spec.row_extent(i), n);
                const T* pr = probs_h + i * n;
                const T* dci = d_ctx.data() + i * d + hoff;
                dscores.assign(extent, T{0});
                for (size_t x = 0; x < dh; ++x) {
                    const T dcx = dci[x];
                    const T* vtx = lc.vt.data() + (hoff + x) * n;
                    T* dvtx = dvt.data() + (hoff + x) * n;
                    for (size_t j = 0; j < extent; ++j) {
                        dscores[j] += dcx * vtx[j];
                        dvtx[j] += dcx * pr[j];
                    }
                }
                const T dsum = kernels::dot(pr, dscores.data(), extent);
                for (size_t j = 0; j < extent; ++j)
                    dscores[j] = pr[j] * (dscores[j] - dsum) * inv_sqrt_dh;
                T* dqi = dq.data() + i * d + hoff;
                const T* qi = lc.q.data() + i * d + hoff;
                for (size_t x = 0; x < dh; ++x) {
                    dqi[x] += kernels::dot(dscores.data(), lc.kt.data() + (hoff + x) * n, extent);
                    const T qx = qi[x];
                    T* dktx = dkt.data() + (hoff + x) * n;
                    for (size_t j = 0; j < extent; ++j) dktx[j] += qx * dscores[j];
                }
            }
        }
        kernels::transpose(dkt.data(), dk.data(), d, n);
        kernels::transpose(dvt.data(), dv.data(), d, n);

        // Back through the QKV projections into ln1 output, then ln1 into x.
        const T* g1 = params.ptr(p + "ln1.g");
        const T* b1 = params.ptr(p + "ln1.b");
        for (size_t i = 0; i < n * d; ++i)
            ln_out[i] = g1[i % d] * lc.ln1_xhat[i] + b1[i % d];
        std::fill(d_ln.begin(), d_ln.end(), T{0});
        kernels::matmul_grad_a(dq.data(), params.ptr(p + "attn.wq"), d_ln.data(), n, d, d, w_scratch);
        kernels::matmul_grad_a(dk.data(), params.ptr(p + "attn.wk"), d_ln.data(), n, d, d, w_scratch);
        kernels::matmul_grad_a(dv.data(), params.ptr(p + "attn.wv"), d_ln.data(), n, d, d, w_scratch);
        kernels::matmul_grad_w(ln_out.data(), dq.data(), grads.ptr(p + "attn.wq"), n, d, d);
        kernels::matmul_grad_w(ln_out.data(), dk.data(), grads.ptr(p + "attn.wk"), n, d, d);
        kernels::matmul_grad_w(ln_out.data(), dv.data(), grads.ptr(p + "attn.wv"), n, d, d);

        dx = d_mid;  // residual path into x_in
        detail::layernorm_backward(d_ln.data(), g1, lc.ln1_xhat.data(), lc.ln1_rstd.data(),
                                   dx.data(), grads.ptr(p + "ln1.g"), grads.ptr(p + "ln1.b"), n,
                                   d);
        (void)x_in;
    }

    // Embedding backward.
    T* d_tok = grads.ptr("tok_emb");
    T* d_pos = grads.ptr("pos_emb");
    for (size_t i = 0; i < n; ++i) {
        const T* dxi = dx.data() + i * d;
        kernels::axpy(T{1}, dxi, d_tok + static_cast<size_t>(ex.input[i]) * d, d);
        kernels::axpy(T{1}, dxi, d_pos + i * d, d);
    }
    return loss;
}

// ---------------------------------------------------------------------------
// Parameter checkpoint (CG2P): magic, version, config record, then the
// named slices in canonical order as little-endian f32.
// ---------------------------------------------------------------------------

constexpr char kParamsMagic[4] = {'C', 'G', '2', 'P'};
constexpr uint32_t kParamsVersion = 1;

inline void write_model_config(std::ostream& os, const ModelConfig& cfg) {
    write_le<uint32_t>(os, static_cast<uint32_t>(cfg.n_layers));
    write_le<uint32_t>(os, static_cast<uint32_t>(cfg.n_heads));
    write_le<uint32_t>(os, static_cast<uint32_t>(cfg.d_model));
    write_le<uint32_t>(os, static_cast<uint32_t>(cfg.d_ff));
    write_le<uint32_t>(os, static_cast<uint32_t>(cfg.n_ctx));
    write_le<uint32_t>(os, cfg.vocab);
    write_le<uint32_t>(os, cfg.tied_output ? 1u : 0u);
}

inline ModelConfig read_model_config(std::istream& is) {
    ModelConfig cfg;
    cfg.n_layers = static_cast<int>(read_le<uint32_t>(is));
    cfg.n_heads = static_cast<int>(read_le<uint32_t>(is));
    cfg.d_model = static_cast<int>(read_le<uint32_t>(is));
    cfg.d_ff = static_cast<int>(read_le<uint32_t>(is));
    cfg.n_ctx = static_cast<int>(read_le<uint32_t>(is));
    cfg.vocab = read_le<uint32_t>(is);
    cfg.tied_output = read_le<uint32_t>(is) != 0;
    cfg.validate();
    return cfg;
}

inline void save_params(const std::string& path, const ParamStore<float>& params) {
    auto f = open_out(path);
    write_magic(f, kParamsMagic);
    write_le<uint32_t>(f, kParamsVersion);
    write_model_config(f, params.config);
    write_array_le(f, params.data.data(), params.data.size());
    if (!f) throw DataError("write failed: " + path);
}

inline ParamStore<float> load_params_stream(std::istream& f, const std::string& what) {
    expect_magic(f, kParamsMagic, what);
    uint32_t version = read_le<uint32_t>(f);
    if (version != kParamsVersion) throw DataError("unsupported CG2P version in " + what);
    ModelConfig cfg = read_model_config(f);
    ParamStore<float> params(cfg);
    read_array_le(f, params.data.data(), params.data.size());
    return params;
}

inline ParamStore<float> load_params(const std::string& path) {
    auto f = open_in(path);
    return load_params_stream(f, path);
}

}  // namespace cg2
