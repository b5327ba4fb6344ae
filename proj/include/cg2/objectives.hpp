#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "cg2/errors.hpp"
#include "cg2/example.hpp"
#include "cg2/rng.hpp"

namespace cg2 {

struct Ul2sConfig {
    double p_s_denoiser = 0.5;   // share of S-denoiser (prefix continuation) draws
    double s_prefix_lo = 0.1;    // prefix ratio bounds, mean 0.5
    double s_prefix_hi = 0.9;
};

struct ObjectiveConfig {
    double p_span = 0.5;          // span corruption vs CLM in the mixture
    double mask_ratio_lo = 0.05;  // dynamic mask ratio bounds
    double mask_ratio_hi = 0.5;
    int span_len_lo = 1;          // integer span length bounds
    int span_len_hi = 16;
    int sentinel_budget = 8;      // K, max sentinels per file
    double prefix_ratio_lo = 0.0;  // Prefix-LM ratio r bounds for CLM
    double prefix_ratio_hi = 0.9;
    double psm_rate = 0.5;        // per-file PSM transformation probability
    std::optional<Ul2sConfig> ul2s;

    void validate() const {
        auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
        if (!prob(p_span) || !prob(psm_rate)) throw DataError("probability out of [0,1]");
        if (!prob(mask_ratio_lo) || !prob(mask_ratio_hi) || mask_ratio_lo > mask_ratio_hi)
            throw DataError("bad mask ratio bounds");
        if (span_len_lo < 1 || span_len_lo > span_len_hi) throw DataError("bad span length bounds");
        if (sentinel_budget < 1) throw DataError("sentinel budget must be >= 1");
        if (!prob(prefix_ratio_lo) || !prob(prefix_ratio_hi) || prefix_ratio_lo > prefix_ratio_hi)
            throw DataError("bad prefix ratio bounds");
        if (ul2s) {
            if (!prob(ul2s->p_s_denoiser)) throw DataError("bad p_s_denoiser");
            if (!prob(ul2s->s_prefix_lo) || !prob(ul2s->s_prefix_hi) ||
                ul2s->s_prefix_lo > ul2s->s_prefix_hi)
                throw DataError("bad s_prefix bounds");
        }
    }
};

inline void to_json(nlohmann::json& j, const Ul2sConfig& c) {
    j = {{"p_s_denoiser", c.p_s_denoiser},
         {"s_prefix_lo", c.s_prefix_lo},
         {"s_prefix_hi", c.s_prefix_hi}};
}
inline void from_json(const nlohmann::json& j, Ul2sConfig& c) {
    c.p_s_denoiser = j.value("p_s_denoiser", c.p_s_denoiser);
    c.s_prefix_lo = j.value("s_prefix_lo", c.s_prefix_lo);
    c.s_prefix_hi = j.value("s_prefix_hi", c.s_prefix_hi);
}
inline void to_json(nlohmann::json& j, const ObjectiveConfig& c) {
    j = {{"p_span", c.p_span},
         {"mask_ratio_lo", c.mask_ratio_lo},
         {"mask_ratio_hi", c.mask_ratio_hi},
         {"span_len_lo", c.span_len_lo},
         {"span_len_hi", c.span_len_hi},
         {"sentinel_budget", c.sentinel_budget},
         {"prefix_ratio_lo", c.prefix_ratio_lo},
         {"prefix_ratio_hi", c.prefix_ratio_hi},
         {"psm_rate", c.psm_rate}};
    if (c.ul2s) j["ul2s"] = *c.ul2s;
}
inline void from_json(const nlohmann::json& j, ObjectiveConfig& c) {
    c.p_span = j.value("p_span", c.p_span);
    c.mask_ratio_lo = j.value("mask_ratio_lo", c.mask_ratio_lo);
    c.mask_ratio_hi = j.value("mask_ratio_hi", c.mask_ratio_hi);
    c.span_len_lo = j.value("span_len_lo", c.span_len_lo);
    c.span_len_hi = j.value("span_len_hi", c.span_len_hi);
    c.sentinel_budget = j.value("sentinel_budget", c.sentinel_budget);
    c.prefix_ratio_lo = j.value("prefix_ratio_lo", c.prefix_ratio_lo);
    c.prefix_ratio_hi = j.value("prefix_ratio_hi", c.prefix_ratio_hi);
    c.psm_rate = j.value("psm_rate", c.psm_rate);
    if (j.contains("ul2s") && !j["ul2s"].is_null()) c.ul2s = j["ul2s"].get<Ul2sConfig>();
}

// ---------------------------------------------------------------------------
// Span selection
// ---------------------------------------------------------------------------

struct Span {
    size_t start = 0;
    size_t length = 0;
    size_t end() const { return start + length; }
};

using SpanSet = std::vector<Span>;  // sorted by start, non-overlapping

inline size_t total_span_length(const SpanSet& spans) {
    size_t t = 0;
    for (const Span& s : spans) t += s.length;
    return t;
}

inline void validate_spans(const SpanSet& spans, size_t file_len, int budget) {
    if (spans.size() > static_cast<size_t>(budget)) throw DataError("span count exceeds sentinel budget");
    for (size_t i = 0; i < spans.size(); ++i) {
        if (spans[i].length == 0 || spans[i].end() > file_len)
            throw DataError("span out of range");
        if (i > 0 && spans[i].start < spans[i - 1].end())
            throw DataError("spans overlap or unsorted");
    }
}

// Draw a dynamic mask ratio once, then place non-overlapping spans by
// rejection until the masked total reaches ceil(r_mask * len), the sentinel
// budget is spent, or 64*K rejections hit (slight under-masking is preferred
// over relaxing the overlap rule on adversarial files).
inline SpanSet select_spans(const TokenList& file_tokens, const ObjectiveConfig& cfg, Rng& rng) {
    const size_t len = file_tokens.size();
    if (len < 4) return {};
    const double r_mask = rng.uniform_real(cfg.mask_ratio_lo, cfg.mask_ratio_hi);
    const size_t target = static_cast<size_t>(std::ceil(r_mask * static_cast<double>(len)));

    SpanSet spans;
    size_t masked = 0;
    int rejections = 0;
    const int max_rejections = 64 * cfg.sentinel_budget;
    while (masked < target && spans.size() < static_cast<size_t>(cfg.sentinel_budget) &&
           rejections < max_rejections) {
        // Once the sentinel budget gets tight, restrict the length draw so
        // the remaining spans can still reach the target (no restriction in
        // the common case; plain U(lo,hi) when the target is unreachable).
        int64_t budget_after = cfg.sentinel_budget - static_cast<int64_t>(spans.size()) - 1;
        int64_t needed_min = static_cast<int64_t>(target) - static_cast<int64_t>(masked) -
                             budget_after * cfg.span_len_hi;
        int lo = cfg.span_len_lo;
        if (needed_min > lo && needed_min <= cfg.span_len_hi) lo = static_cast<int>(needed_min);
        size_t span_len = static_cast<size_t>(rng.uniform_int(lo, cfg.span_len_hi));
        if (span_len > len) {
            ++rejections;
            continue;
        }
        size_t start = static_cast<size_t>(rng.uniform_u64(len - span_len + 1));
        bool overlaps = false;
        for (const Span& s : spans) {
            if (start < s.end() && s.start < start + span_len) {
                overlaps = true;
                break;
            }
        }
        if (overlaps) {
            ++rejections;
            continue;
        }
        spans.push_back({start, span_len});
        masked += span_len;
    }
    std::sort(spans.begin(), spans.end(),
              [](const Span& a, const Span& b) { return a.start < b.start; });
    return spans;
}

// ---------------------------------------------------------------------------
// Span-corruption reordering and its inverse
// ---------------------------------------------------------------------------

// (a, b, c) with span b becomes: a, MASK_0, c, SEP, MASK_0, b, EOM.
// Each span i is replaced by sentinel MASK_i in place; the tail echoes the
// sentinel before its span content so multi-span targets stay parseable.
inline TokenList reorder_corrupted(const TokenList& file_tokens, const SpanSet& spans,
                                   const Vocabulary& vocab = {}) {
    if (spans.empty()) return file_tokens;
    if (spans.size() > static_cast<size_t>(vocab.sentinel_budget))
        throw DataError("span count exceeds sentinel budget");
    validate_spans(spans, file_tokens.size(), vocab.sentinel_budget);

    TokenList out;
    out.reserve(file_tokens.size() + 3 * spans.size() + 1);
    size_t pos = 0;
    for (size_t i = 0; i < spans.size(); ++i) {
        while (pos < spans[i].start) out.push_back(file_tokens[pos++]);
        out.push_back(vocab.mask(static_cast<int>(i)));
        pos = spans[i].end();
    }
    while (pos < file_tokens.size()) out.push_back(file_tokens[pos++]);
    out.push_back(tok::SEP);
    for (size_t i = 0; i < spans.size(); ++i) {
        out.push_back(vocab.mask(static_cast<int>(i)));
        for (size_t p = spans[i].start; p < spans[i].end(); ++p) out.push_back(file_tokens[p]);
        out.push_back(tok::EOM);
    }
    return out;
}

// Exact inverse of reorder_corrupted; parses the sentinel structure, so it
// needs no SpanSet. Serves as the round-trip oracle.
inline TokenList invert_reorder(const TokenList& reordered, const Vocabulary& vocab = {}) {
    auto sep_it = std::find(reordered.begin(), reordered.end(), static_cast<Token>(tok::SEP));
    if (sep_it == reordered.end()) return reordered;  // uncorrupted file
    const size_t sep_pos = static_cast<size_t>(sep_it - reordered.begin());

    // Parse tail groups: MASK_i, span tokens..., EOM.
    std::vector<TokenList> spans_by_index;
    size_t p = sep_pos + 1;
    while (p < reordered.size()) {
        Token sentinel = reordered[p];
        if (!vocab.is_mask(sentinel)) throw DataError("expected sentinel in corruption tail");
        int idx = vocab.mask_index(sentinel);
        if (idx != static_cast<int>(spans_by_index.size()))
            throw DataError("sentinel indices not consecutive");
        ++p;
        TokenList span;
        while (p < reordered.size() && reordered[p] != tok::EOM) span.push_back(reordered[p++]);
        if (p == reordered.size()) throw DataError("unterminated span in corruption tail");
        ++p;  // consume EOM
        spans_by_index.push_back(std::move(span));
    }

    TokenList out;
    for (size_t i = 0; i < sep_pos; ++i) {
        Token t = reordered[i];
        if (vocab.is_mask(t)) {
            int idx = vocab.mask_index(t);
            if (idx < 0 || idx >= static_cast<int>(spans_by_index.size()))
                throw DataError("sentinel without echoed span");
            for (Token s : spans_by_index[static_cast<size_t>(idx)]) out.push_back(s);
        } else {
            out.push_back(t);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// File-level corruption over a packed window
// ---------------------------------------------------------------------------

namespace detail {

struct FileSegment {
    size_t begin = 0;  // [begin, end) into the window, no EOD / PAD inside
    size_t end = 0;
    size_t length() const { return end - begin; }
};

// Maximal runs between EOD positions; the PAD tail is not a file.
inline std::vector<FileSegment> split_files(const TokenList& window) {
    std::vector<FileSegment> segs;
    size_t i = 0;
    const size_t n = window.size();
    while (i < n) {
        if (window[i] == tok::EOD || window[i] == tok::PAD) {
            ++i;
            continue;
        }
        size_t b = i;
        while (i < n && window[i] != tok::EOD && window[i] != tok::PAD) ++i;
        segs.push_back({b, i});
    }
    return segs;
}

}  // namespace detail

// Split the window at document boundaries, corrupt each file independently
// (sentinel indices restart per file), re-join with the EODs in their
// original order, then truncate or PAD back to the window length. Spans can
// therefore never cross an EOD.
inline TokenList apply_file_level_corruption(const PackedSequence& seq, const ObjectiveConfig& cfg,
                                             Rng& rng) {
    const size_t n_ctx = seq.tokens.size();
    Vocabulary vocab{cfg.sentinel_budget};
    TokenList out;
    out.reserve(n_ctx + 16);
    size_t i = 0;
    while (i < n_ctx) {
        Token t = seq.tokens[i];
        if (t == tok::EOD) {
            out.push_back(tok::EOD);
            ++i;
            continue;
        }
        if (t == tok::PAD) break;  // PAD tail; nothing after it
        size_t b = i;
        while (i < n_ctx && seq.tokens[i] != tok::EOD && seq.tokens[i] != tok::PAD) ++i;
        TokenList file(seq.tokens.begin() + static_cast<ptrdiff_t>(b),
                       seq.tokens.begin() + static_cast<ptrdiff_t>(i));
        SpanSet spans = select_spans(file, cfg, rng);
        TokenList corrupted = reorder_corrupted(file, spans, vocab);
        out.insert(out.end(), corrupted.begin(), corrupted.end());
    }
    if (out.size() > n_ctx) out.resize(n_ctx);
    while (out.size() < n_ctx) out.push_back(tok::PAD);
    return out;
}

// ---------------------------------------------------------------------------
// PSM reordering and its inverse
// ---------------------------------------------------------------------------

// Two distinct cut points i < j, uniform over pairs; empty middle excluded,
// empty prefix or suffix allowed. (p, s, m) is emitted as
// PRE p SUF s MID m EOM so infilling reduces to next-token prediction.
inline TokenList psm_reorder(const TokenList& file_tokens, Rng& rng) {
    const size_t len = file_tokens.size();
    if (len < 3) return file_tokens;
    size_t i, j;
    do {
        i = rng.uniform_u64(len + 1);
        j = rng.uniform_u64(len + 1);
    } while (i == j);
    if (i > j) std::swap(i, j);

    TokenList out;
    out.reserve(len + 4);
    out.push_back(tok::PRE);
    out.insert(out.end(), file_tokens.begin(), file_tokens.begin() + static_cast<ptrdiff_t>(i));
    out.push_back(tok::SUF);
    out.insert(out.end(), file_tokens.begin() + static_cast<ptrdiff_t>(j), file_tokens.end());
    out.push_back(tok::MID);
    out.insert(out.end(), file_tokens.begin() + static_cast<ptrdiff_t>(i),
               file_tokens.begin() + static_cast<ptrdiff_t>(j));
    out.push_back(tok::EOM);
    return out;
}

inline TokenList invert_psm(const TokenList& reordered) {
    if (reordered.empty() || reordered[0] != tok::PRE) return reordered;  // pass-through file
    auto suf = std::find(reordered.begin(), reordered.end(), static_cast<Token>(tok::SUF));
    auto mid = std::find(reordered.begin(), reordered.end(), static_cast<Token>(tok::MID));
    if (suf == reordered.end() || mid == reordered.end() || mid < suf)
        throw DataError("malformed PSM sequence");
    if (reordered.back() != tok::EOM) throw DataError("PSM sequence missing EOM");
    TokenList out;
    out.insert(out.end(), reordered.begin() + 1, suf);       // prefix
    out.insert(out.end(), mid + 1, reordered.end() - 1);     // middle
    out.insert(out.end(), suf + 1, mid);                     // suffix
    return out;
}

// Per-file Bernoulli(psm_rate) PSM transform over a packed window, EODs kept
// in place, result truncated / padded back to the window length.
inline TokenList apply_file_level_psm(const PackedSequence& seq, const ObjectiveConfig& cfg,
                                      Rng& rng) {
    const size_t n_ctx = seq.tokens.size();
    TokenList out;
    out.reserve(n_ctx + 8);
    size_t i = 0;
    while (i < n_ctx) {
        Token t = seq.tokens[i];
        if (t == tok::EOD) {
            out.push_back(tok::EOD);
            ++i;
            continue;
        }
        if (t == tok::PAD) break;
        size_t b = i;
        while (i < n_ctx && seq.tokens[i] != tok::EOD && seq.tokens[i] != tok::PAD) ++i;
        TokenList file(seq.tokens.begin() + static_cast<ptrdiff_t>(b),
                       seq.tokens.begin() + static_cast<ptrdiff_t>(i));
        if (rng.bernoulli(cfg.psm_rate)) {
            TokenList transformed = psm_reorder(file, rng);
            out.insert(out.end(), transformed.begin(), transformed.end());
        } else {
            out.insert(out.end(), file.begin(), file.end());
        }
    }
    if (out.size() > n_ctx) out.resize(n_ctx);
    while (out.size() < n_ctx) out.push_back(tok::PAD);
    return out;
}

// ---------------------------------------------------------------------------
// TrainingExample builders
// ---------------------------------------------------------------------------

namespace detail {

// Shift-left targets with PAD at the end, loss masked on PAD targets and on
// the non-causal prefix [0, m). If the prefix would swallow every loss
// position (possible only in a PAD-heavy final window), m is lowered to keep
// the at-least-one-loss-position invariant.
inline TrainingExample make_ntp_example(TokenList input, size_t m, ObjectiveTag tag,
                                        Domain domain) {
    const size_t n = input.size();
    TrainingExample ex;
    ex.target.resize(n);
    ex.loss_mask.assign(n, 0);
    for (size_t i = 0; i + 1 < n; ++i) ex.target[i] = input[i + 1];
    ex.target[n - 1] = tok::PAD;

    size_t last_loss = n;  // index of last position with a non-PAD target
    for (size_t i = 0; i < n; ++i) {
        if (ex.target[i] != tok::PAD) {
            ex.loss_mask[i] = 1;
            last_loss = i;
        }
    }
    if (last_loss == n) throw DataError("window has no predictable positions");
    if (m > last_loss) m = last_loss;  // keep >= 1 loss position
    for (size_t i = 0; i < m; ++i) ex.loss_mask[i] = 0;

    ex.input = std::move(input);
    ex.prefix_len = static_cast<uint32_t>(m);
    ex.objective = tag;
    ex.domain = domain;
    return ex;
}

inline size_t last_sep_position(const TokenList& tokens) {
    for (size_t i = tokens.size(); i > 0; --i)
        if (tokens[i - 1] == tok::SEP) return i - 1;
    return tokens.size();  // none
}

}  // namespace detail

enum class PrefixMode : uint8_t { none = 0, uniform = 1 };

// Plain next-token prediction. With prefix_mode uniform, r ~ U(lo, hi) picks
// the non-causal length m = floor(r * N) and the loss on [0, m) is masked.
inline TrainingExample make_clm_example(const PackedSequence& seq, PrefixMode prefix_mode,
                                        const ObjectiveConfig& cfg, Rng& rng) {
    size_t m = 0;
    if (prefix_mode == PrefixMode::uniform) {
        double r = rng.uniform_real(cfg.prefix_ratio_lo, cfg.prefix_ratio_hi);
        m = static_cast<size_t>(std::floor(r * static_cast<double>(seq.tokens.size())));
    }
    return detail::make_ntp_example(seq.tokens, m, ObjectiveTag::CLM, seq.majority_domain());
}

// The default recipe: Bernoulli(p_span) chooses file-level span corruption or
// plain CLM. Under the prefix architecture the corrupted context through the
// final SEP becomes the non-causal part (loss on the echoed spans only) and
// the CLM branch draws a uniform prefix; under the causal architecture the
// loss covers the whole reordered sequence. No task token is ever prepended.
inline TrainingExample make_mixture_example(const PackedSequence& seq, const ObjectiveConfig& cfg,
                                            Rng& rng, ArchMode arch) {
    if (rng.bernoulli(cfg.p_span)) {
        TokenList corrupted = apply_file_level_corruption(seq, cfg, rng);
        size_t m = 0;
        if (arch == ArchMode::prefix) {
            size_t sep = detail::last_sep_position(corrupted);
            if (sep != corrupted.size()) m = sep + 1;
        }
        return detail::make_ntp_example(std::move(corrupted), m, ObjectiveTag::SPAN,
                                        seq.majority_domain());
    }
    return make_clm_example(seq, arch == ArchMode::prefix ? PrefixMode::uniform : PrefixMode::none,
                            cfg, rng);
}

// CLM + PSM mixture: each file in the window is PSM-reordered with
// probability psm_rate; targets are plain next-token prediction.
inline TrainingExample make_psm_mix_example(const PackedSequence& seq, const ObjectiveConfig& cfg,
                                            Rng& rng) {
    TokenList transformed = apply_file_level_psm(seq, cfg, rng);
    return detail::make_ntp_example(std::move(transformed), 0, ObjectiveTag::PSM,
                                    seq.majority_domain());
}

// Simplified two-denoiser mixture: with p_s_denoiser an S step (plain CLM,
// prefix ratio ~ U(s_prefix_lo, s_prefix_hi) with mean 0.5, loss masked on
// the prefix), otherwise an R step (span corruption as in the mixture). No
// task tokens.
inline TrainingExample make_ul2s_example(const PackedSequence& seq, const ObjectiveConfig& cfg,
                                         Rng& rng, ArchMode arch = ArchMode::prefix) {
    if (!cfg.ul2s) throw DataError("ul2s config missing");
    if (rng.bernoulli(cfg.ul2s->p_s_denoiser)) {
        double r = rng.uniform_real(cfg.ul2s->s_prefix_lo, cfg.ul2s->s_prefix_hi);
        size_t m = static_cast<size_t>(std::floor(r * static_cast<double>(seq.tokens.size())));
        return detail::make_ntp_example(seq.tokens, m, ObjectiveTag::UL2S, seq.majority_domain());
    }
    TokenList corrupted = apply_file_level_corruption(seq, cfg, rng);
    size_t m = 0;
    if (arch == ArchMode::prefix) {
        size_t sep = detail::last_sep_position(corrupted);
        if (sep != corrupted.size()) m = sep + 1;
    }
    return detail::make_ntp_example(std::move(corrupted), m, ObjectiveTag::SPAN,
                                    seq.majority_domain());
}

}  // namespace cg2
