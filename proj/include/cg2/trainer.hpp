#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "cg2/batch_format.hpp"
#include "cg2/errors.hpp"
#include "cg2/model.hpp"
#include "cg2/rng.hpp"

namespace cg2 {

struct TrainConfig {
    ModelConfig model;
    std::string arch = "causal";     // causal | prefix
    std::string objective = "clm";   // clm | mixture | psm_mix | ul2s (labels the data recipe)
    std::string precision = "f32";   // training runs in f32; f64 is the gradient-check mode
    int batch_size = 8;
    int64_t steps = 1000;
    int64_t warmup_steps = 100;
    int64_t eval_every = 100;
    int64_t checkpoint_every = 0;  // 0 = only the final checkpoint
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double adam_eps = 1e-8;
    double weight_decay = 0.0;
    double grad_clip = 1.0;
    double lr_floor = 0.1;  // cosine decays to this fraction of peak lr
    uint64_t seed = 0;
    int workers = 1;

    void validate() const {
        model.validate();
        if (arch != "causal" && arch != "prefix") throw DataError("arch must be causal|prefix");
        if (objective != "clm" && objective != "mixture" && objective != "psm_mix" &&
            objective != "ul2s")
            throw DataError("objective must be clm|mixture|psm_mix|ul2s");
        if (precision != "f32")
            throw DataError("precision must be f32 (f64 exists only for gradient checks)");
        if (batch_size <= 0) throw DataError("batch_size must be positive");
        if (steps < 0) throw DataError("steps must be non-negative");
        if (warmup_steps < 0 || eval_every <= 0) throw DataError("bad schedule fields");
        if (checkpoint_every < 0) throw DataError("checkpoint_every must be non-negative");
        if (!(lr > 0)) throw DataError("lr must be positive");
        if (!(beta1 > 0 && beta1 < 1 && beta2 > 0 && beta2 < 1))
            throw DataError("adam betas must lie in (0,1)");
        if (adam_eps <= 0 || grad_clip <= 0) throw DataError("bad adam_eps/grad_clip");
        if (weight_decay < 0) throw DataError("weight_decay must be non-negative");
        if (lr_floor < 0 || lr_floor > 1) throw DataError("lr_floor is a fraction of peak lr");
        if (workers <= 0) throw DataError("workers must be positive");
    }
    ArchMode arch_mode() const {
        return arch == "prefix" ? ArchMode::prefix : ArchMode::causal;
    }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"model", c.model},
         {"arch", c.arch},
         {"objective", c.objective},
         {"precision", c.precision},
         {"batch_size", c.batch_size},
         {"steps", c.steps},
         {"warmup_steps", c.warmup_steps},
         {"eval_every", c.eval_every},
         {"checkpoint_every", c.checkpoint_every},
         {"lr", c.lr},
         {"beta1", c.beta1},
         {"beta2", c.beta2},
         {"adam_eps", c.adam_eps},
         {"weight_decay", c.weight_decay},
         {"grad_clip", c.grad_clip},
         {"lr_floor", c.lr_floor},
         {"seed", c.seed},
         {"workers", c.workers}};
}
inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    if (j.contains("model")) j.at("model").get_to(c.model);
    c.arch = j.value("arch", c.arch);
    c.objective = j.value("objective", c.objective);
    c.precision = j.value("precision", c.precision);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.steps = j.value("steps", c.steps);
    c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
    c.eval_every = j.value("eval_every", c.eval_every);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.lr = j.value("lr", c.lr);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.grad_clip = j.value("grad_clip", c.grad_clip);
    c.lr_floor = j.value("lr_floor", c.lr_floor);
    c.seed = j.value("seed", c.seed);
    c.workers = j.value("workers", c.workers);
}

// FNV-1a over the canonical (sorted-key) JSON dump; checkpoints refuse to
// load under a different config.
inline uint64_t config_fingerprint(const TrainConfig& cfg) {
    std::string s = nlohmann::json(cfg).dump();
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// Linear warmup to peak, then cosine decay to lr_floor * peak at the final
// step. `step` is 1-based.
inline double schedule_lr(const TrainConfig& cfg, int64_t step) {
    if (cfg.warmup_steps > 0 && step <= cfg.warmup_steps)
        return cfg.lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
    if (cfg.steps <= cfg.warmup_steps) return cfg.lr;
    double progress = static_cast<double>(step - cfg.warmup_steps) /
                      static_cast<double>(cfg.steps - cfg.warmup_steps);
    progress = std::min(progress, 1.0);
    double floor = cfg.lr_floor * cfg.lr;
    return floor + 0.5 * (cfg.lr - floor) * (1.0 + std::cos(3.14159265358979323846 * progress));
}

template <typename T>
struct AdamMoments {
    ParamStore<T> m, v;
    AdamMoments() = default;
    explicit AdamMoments(const ModelConfig& cfg) : m(cfg), v(cfg) {}
};

template <typename T>
double global_grad_norm(const ParamStore<T>& grads) {
    double sq = 0.0;
    for (T g : grads.data) sq += static_cast<double>(g) * static_cast<double>(g);
    return std::sqrt(sq);
}

// Scales grads in place when their global norm exceeds max_norm; returns the
// pre-clip norm.
template <typename T>
double clip_gradients(ParamStore<T>& grads, double max_norm) {
    double norm = global_grad_norm(grads);
    if (norm > max_norm && norm > 0) {
        T scale = static_cast<T>(max_norm / norm);
        for (T& g : grads.data) g *= scale;
    }
    return norm;
}

// Bias-corrected Adam with decoupled weight decay; lr comes from the warmup
// plus cosine schedule. `step` is 1-based.
template <typename T>
void adam_step(ParamStore<T>& params, const ParamStore<T>& grads, AdamMoments<T>& mom,
               int64_t step, const TrainConfig& cfg) {
    if (step < 1) throw DataError("adam step index must be >= 1");
    if (params.data.size() != grads.data.size() || params.data.size() != mom.m.data.size())
        throw DataError("parameter/gradient shape mismatch");
    const double lr = schedule_lr(cfg, step);
    const double b1 = cfg.beta1, b2 = cfg.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step));
    T* p = params.data.data();
    const T* g = grads.data.data();
    T* m = mom.m.data.data();
    T* v = mom.v.data.data();
    const size_t n = params.data.size();
    for (size_t i = 0; i < n; ++i) {
        double gi = static_cast<double>(g[i]);
        double mi = b1 * static_cast<double>(m[i]) + (1.0 - b1) * gi;
        double vi = b2 * static_cast<double>(v[i]) + (1.0 - b2) * gi * gi;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        double mhat = mi / bc1;
        double vhat = vi / bc2;
        double update = lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
        if (cfg.weight_decay > 0) update += lr * cfg.weight_decay * static_cast<double>(p[i]);
        p[i] = static_cast<T>(static_cast<double>(p[i]) - update);
    }
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvalResult {
    double loss = 0.0;
    double ppl = 0.0;
    size_t n_tokens = 0;
};

// Token-weighted mean cross-entropy over loss_mask==1 positions; identical
// mask semantics to training.
template <typename T>
double example_loss(const ModelConfig& cfg, const ParamStore<T>& params,
                    const TrainingExample& ex, ArchMode arch, ForwardCache<T>& cache,
                    double* ce_sum_out = nullptr, size_t* count_out = nullptr) {
    AttentionSpec spec = attention_spec_for(ex, arch);
    forward(cfg, params, ex.input, spec, cache);
    const size_t V = cfg.vocab;
    double ce_sum = 0.0;
    size_t count = 0;
    for (size_t i = 0; i < ex.input.size(); ++i) {
        if (!ex.loss_mask[i]) continue;
        const T* li = cache.logits.data() + i * V;
        T mx = li[0];
        for (size_t v = 1; v < V; ++v) mx = std::max(mx, li[v]);
        double z = 0.0;
        for (size_t v = 0; v < V; ++v) z += static_cast<double>(std::exp(li[v] - mx));
        ce_sum += std::log(z) + static_cast<double>(mx) - static_cast<double>(li[ex.target[i]]);
        ++count;
    }
    if (count == 0) throw DataError("loss mask is all zero");
    if (ce_sum_out) *ce_sum_out += ce_sum;
    if (count_out) *count_out += count;
    return ce_sum / static_cast<double>(count);
}

template <typename T>
EvalResult evaluate_perplexity(const ModelConfig& cfg, const ParamStore<T>& params,
                               const std::vector<TrainingExample>& examples, ArchMode arch) {
    if (examples.empty()) throw DataError("empty eval set");
    ForwardCache<T> cache;
    double ce_sum = 0.0;
    size_t count = 0;
    for (const auto& ex : examples) example_loss(cfg, params, ex, arch, cache, &ce_sum, &count);
    EvalResult r;
    r.n_tokens = count;
    r.loss = ce_sum / static_cast<double>(count);
    r.ppl = std::exp(r.loss);
    return r;
}

// ---------------------------------------------------------------------------
// Full training checkpoint (CG2T): params + Adam moments + step + RNG state
// + config fingerprint. load(save(x)) is byte-exact; fingerprint mismatch on
// load is refused.
// ---------------------------------------------------------------------------

constexpr char kTrainCkptMagic[4] = {'C', 'G', '2', 'T'};
constexpr uint32_t kTrainCkptVersion = 1;

struct TrainCheckpoint {
    ParamStore<float> params;
    AdamMoments<float> moments;
    uint64_t step = 0;
    std::array<uint64_t, 4> rng_state{};
    uint64_t fingerprint = 0;
};

inline void save_checkpoint(const std::string& path, const TrainCheckpoint& ckpt) {
    auto f = open_out(path);
    write_magic(f, kTrainCkptMagic);
    write_le<uint32_t>(f, kTrainCkptVersion);
    write_le<uint64_t>(f, ckpt.fingerprint);
    write_le<uint64_t>(f, ckpt.step);
    for (uint64_t w : ckpt.rng_state) write_le<uint64_t>(f, w);
    write_model_config(f, ckpt.params.config);
    write_array_le(f, ckpt.params.data.data(), ckpt.params.data.size());
    write_array_le(f, ckpt.moments.m.data.data(), ckpt.moments.m.data.size());
    write_array_le(f, ckpt.moments.v.data.data(), ckpt.moments.v.data.size());
    if (!f) throw DataError("write failed: " + path);
}

inline TrainCheckpoint load_checkpoint(const std::string& path, uint64_t expected_fingerprint) {
    auto f = open_in(path);
    expect_magic(f, kTrainCkptMagic, path);
    uint32_t version = read_le<uint32_t>(f);
    if (version != kTrainCkptVersion) throw DataError("unsupported CG2T version in " + path);
    TrainCheckpoint ckpt;
    ckpt.fingerprint = read_le<uint64_t>(f);
    if (ckpt.fingerprint != expected_fingerprint)
        throw DataError("checkpoint config fingerprint mismatch: " + path);
    ckpt.step = read_le<uint64_t>(f);
    for (uint64_t& w : ckpt.rng_state) w = read_le<uint64_t>(f);
    ModelConfig mcfg = read_model_config(f);
    ckpt.params = ParamStore<float>(mcfg);
    ckpt.moments = AdamMoments<float>(mcfg);
    read_array_le(f, ckpt.params.data.data(), ckpt.params.data.size());
    read_array_le(f, ckpt.moments.m.data.data(), ckpt.moments.m.data.size());
    read_array_le(f, ckpt.moments.v.data.data(), ckpt.moments.v.data.size());
    return ckpt;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainResult {
    ParamStore<float> params;
    double step0_heldout_loss = 0.0;
    double final_heldout_loss = 0.0;
    double final_train_loss = 0.0;
    int64_t skipped_steps = 0;
    std::string metrics_path;
};

namespace detail {

// Deterministic epoch order: a pure function of (seed, epoch), so resumed
// runs reconstruct the exact batch sequence from the step counter alone.
inline void epoch_order(std::vector<uint32_t>& order, uint64_t seed, uint64_t epoch) {
    std::iota(order.begin(), order.end(), 0u);
    Rng rng(derive_seed(derive_seed(seed, 0x65706f6368ull /* "epoch" */), epoch));
    rng.shuffle(order);
}

}  // namespace detail

// Single-process training over a pre-corrupted CG2B batch set. Examples are
// cycled with a fresh shuffle each epoch. Gradients are computed per example
// into private buffers (optionally across worker threads) and reduced in
// example order, so the result is bit-identical for any worker count.
inline TrainResult train(const BatchFile& data, const BatchFile* eval_data, TrainConfig cfg,
                         const std::string& out_dir, const std::string& resume_path = "") {
    cfg.validate();
    if (data.examples.empty()) throw DataError("training data is empty");
    if (data.vocab != cfg.model.vocab)
        throw DataError("data vocab does not match model vocab");
    if (data.n_ctx > static_cast<uint32_t>(cfg.model.n_ctx))
        throw DataError("data n_ctx exceeds model n_ctx");
    if (eval_data && eval_data->examples.empty()) throw DataError("empty eval set");

    std::filesystem::create_directories(out_dir);
    {
        std::ofstream cf(out_dir + "/config.json");
        cf << nlohmann::json(cfg).dump(2) << "\n";
    }
    const uint64_t fingerprint = config_fingerprint(cfg);

    ParamStore<float> params;
    AdamMoments<float> moments;
    Rng master(derive_seed(cfg.seed, 0x747261696eull /* "train" */));
    int64_t start_step = 0;
    if (!resume_path.empty()) {
        TrainCheckpoint ckpt = load_checkpoint(resume_path, fingerprint);
        params = std::move(ckpt.params);
        moments = std::move(ckpt.moments);
        start_step = static_cast<int64_t>(ckpt.step);
        master.set_state(ckpt.rng_state);
        if (start_step > cfg.steps) throw DataError("checkpoint is past the configured steps");
    } else {
        params = init_params<float>(cfg.model, cfg.seed);
        moments = AdamMoments<float>(cfg.model);
    }

    std::ofstream metrics(out_dir + "/metrics.jsonl", std::ios::app);
    if (!metrics) throw DataError("cannot open metrics log in " + out_dir);
    auto emit = [&](nlohmann::json j) { metrics << j.dump() << "\n" << std::flush; };

    const ArchMode arch = cfg.arch_mode();
    const int B = cfg.batch_size;
    const size_t count = data.examples.size();
    std::vector<uint32_t> order(count);
    uint64_t current_epoch = UINT64_MAX;

    const int workers = std::min<int>(cfg.workers, B);
    std::vector<ForwardCache<float>> caches(static_cast<size_t>(workers));
    std::vector<ParamStore<float>> example_grads;
    example_grads.reserve(static_cast<size_t>(B));
    for (int i = 0; i < B; ++i) example_grads.emplace_back(cfg.model);
    std::vector<double> example_losses(static_cast<size_t>(B), 0.0);
    ParamStore<float> grads(cfg.model);

    auto run_eval = [&](int64_t step) -> double {
        if (!eval_data) return 0.0;
        EvalResult r = evaluate_perplexity(cfg.model, params, eval_data->examples, arch);
        emit({{"step", step},
              {"split", "heldout"},
              {"loss", r.loss},
              {"ppl", r.ppl},
              {"tokens_per_sec", 0.0},
              {"objective_tag_counts", nlohmann::json::object()}});
        return r.loss;
    };

    TrainResult result;
    result.metrics_path = out_dir + "/metrics.jsonl";
    if (start_step == 0) result.step0_heldout_loss = run_eval(0);

    double window_loss_sum = 0.0;
    int64_t window_batches = 0;
    std::map<std::string, int64_t> tag_counts;
    auto window_start = std::chrono::steady_clock::now();
    int64_t window_tokens = 0;
    int nan_streak = 0;
    double last_train_loss = 0.0;

    auto save_state = [&](const std::string& path, int64_t step) {
        TrainCheckpoint ckpt;
        ckpt.params = params;
        ckpt.moments = moments;
        ckpt.step = static_cast<uint64_t>(step);
        ckpt.rng_state = master.state();
        ckpt.fingerprint = fingerprint;
        save_checkpoint(path, ckpt);
    };

    for (int64_t t = start_step + 1; t <= cfg.steps; ++t) {
        // Assemble the batch from the deterministic epoch permutation.
        const uint64_t first = static_cast<uint64_t>(t - 1) * static_cast<uint64_t>(B);
        std::vector<const TrainingExample*> batch(static_cast<size_t>(B));
        for (int b = 0; b < B; ++b) {
            uint64_t c = first + static_cast<uint64_t>(b);
            uint64_t epoch = c / count;
            if (epoch != current_epoch) {
                detail::epoch_order(order, cfg.seed, epoch);
                current_epoch = epoch;
            }
            batch[static_cast<size_t>(b)] = &data.examples[order[c % count]];
        }

        // Numeric blowups inside the forward/backward pass count as a
        // non-finite loss for the whole batch (feeding the two-strikes
        // abort below); data errors are fatal and propagate.
        std::string data_error;
        std::mutex error_mu;
        auto work = [&](int w) {
            ForwardCache<float>& cache = caches[static_cast<size_t>(w)];
            for (int b = w; b < B; b += workers) {
                const TrainingExample& ex = *batch[static_cast<size_t>(b)];
                example_grads[static_cast<size_t>(b)].zero();
                AttentionSpec spec = attention_spec_for(ex, arch);
                try {
                    example_losses[static_cast<size_t>(b)] = loss_and_grad(
                        cfg.model, params, ex, spec, cache, example_grads[static_cast<size_t>(b)]);
                } catch (const NumericError&) {
                    example_losses[static_cast<size_t>(b)] =
                        std::numeric_limits<double>::quiet_NaN();
                } catch (const DataError& e) {
                    std::lock_guard<std::mutex> lock(error_mu);
                    if (data_error.empty()) data_error = e.what();
                }
            }
        };
        if (workers == 1) {
            work(0);
        } else {
            std::vector<std::thread> pool;
            pool.reserve(static_cast<size_t>(workers));
            for (int w = 0; w < workers; ++w) pool.emplace_back(work, w);
            for (auto& th : pool) th.join();
        }
        if (!data_error.empty()) throw DataError(data_error);

        // Ordered reduction: identical bits for any worker count.
        grads.zero();
        const float inv_b = 1.0f / static_cast<float>(B);
        for (int b = 0; b < B; ++b) {
            const auto& eg = example_grads[static_cast<size_t>(b)].data;
            for (size_t i = 0; i < grads.data.size(); ++i) grads.data[i] += eg[i];
        }
        for (float& g : grads.data) g *= inv_b;

        double batch_loss = 0.0;
        for (int b = 0; b < B; ++b) batch_loss += example_losses[static_cast<size_t>(b)];
        batch_loss /= static_cast<double>(B);
        for (const auto* ex : batch) ++tag_counts[to_string(ex->objective)];
        window_tokens += static_cast<int64_t>(B) * static_cast<int64_t>(data.n_ctx);

        if (!std::isfinite(batch_loss)) {
            ++nan_streak;
            emit({{"step", t}, {"event", "nonfinite_loss"}, {"streak", nan_streak}});
            if (nan_streak >= 2) {
                save_state(out_dir + "/abort.cg2t", t);
                throw NumericError("non-finite loss on two consecutive steps; checkpoint written to " +
                                   out_dir + "/abort.cg2t");
            }
            continue;
        }
        nan_streak = 0;
        last_train_loss = batch_loss;
        window_loss_sum += batch_loss;
        ++window_batches;

        if (!grads.all_finite()) {
            emit({{"step", t}, {"event", "skipped_nonfinite_grad"}});
            ++result.skipped_steps;
            continue;
        }

        clip_gradients(grads, cfg.grad_clip);
        adam_step(params, grads, moments, t, cfg);

        if (cfg.checkpoint_every > 0 && t % cfg.checkpoint_every == 0 && t != cfg.steps)
            save_state(out_dir + "/checkpoint_" + std::to_string(t) + ".cg2t", t);

        if (t % cfg.eval_every == 0 || t == cfg.steps) {
            auto now = std::chrono::steady_clock::now();
            double secs = std::chrono::duration<double>(now - window_start).count();
            double tps = secs > 0 ? static_cast<double>(window_tokens) / secs : 0.0;
            double mean_loss =
                window_batches > 0 ? window_loss_sum / static_cast<double>(window_batches) : 0.0;
            nlohmann::json jc = nlohmann::json::object();
            for (const auto& [k, v] : tag_counts) jc[k] = v;
            emit({{"step", t},
                  {"split", "train"},
                  {"loss", mean_loss},
                  {"ppl", std::exp(mean_loss)},
                  {"tokens_per_sec", tps},
                  {"objective_tag_counts", jc}});
            result.final_heldout_loss = run_eval(t);
            window_loss_sum = 0.0;
            window_batches = 0;
            tag_counts.clear();
            window_tokens = 0;
            window_start = std::chrono::steady_clock::now();
        }
    }

    result.final_train_loss = last_train_loss;
    save_state(out_dir + "/checkpoint.cg2t", cfg.steps);
    save_params(out_dir + "/model.cg2p", params);
    if (cfg.steps == start_step && eval_data) {
        // No steps ran; the final state is the starting state.
        result.final_heldout_loss =
            start_step == 0 ? result.step0_heldout_loss : run_eval(cfg.steps);
    }
    result.params = std::move(params);
    return result;
}

}  // namespace cg2
