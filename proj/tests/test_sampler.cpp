#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "cg2/sampler.hpp"

using namespace cg2;

namespace {

ModelConfig small_model(int layers = 2) {
    ModelConfig cfg;
    cfg.n_layers = layers;
    cfg.n_heads = 2;
    cfg.d_model = 16;
    cfg.d_ff = 32;
    cfg.n_ctx = 64;
    cfg.vocab = 272;
    return cfg;
}

// All-zero parameters except a rigged output path that puts every logit mass
// on `winner`: lnf.b[0]=1 makes the final hidden state (1,0,...,0) at every
// position, so tied logits reduce to column 0 of the token embedding.
ParamStore<float> rigged_model(const ModelConfig& cfg, Token winner) {
    ParamStore<float> params(cfg);
    params.slice("lnf.b")[0] = 1.0f;
    params.slice("tok_emb")[static_cast<size_t>(winner) * cfg.d_model + 0] = 1.0f;
    return params;
}

// Brute-force pass@k: enumerate every k-subset of n samples (c of which are
// correct) and count subsets containing at least one correct sample.
double passk_bruteforce(int n, int c, int k) {
    size_t hits = 0, total = 0;
    for (uint32_t bits = 0; bits < (1u << n); ++bits) {
        if (__builtin_popcount(bits) != k) continue;
        ++total;
        bool any = false;
        for (int i = 0; i < c; ++i) any = any || (bits >> i) & 1;  // first c are correct
        hits += any ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace

// ---------------------------------------------------------------------------
// sample_token
// ---------------------------------------------------------------------------

TEST_CASE("temperature zero takes the argmax with lowest-id tie-break") {
    Rng rng(1);
    std::vector<float> logits = {0.1f, 2.0f, 0.3f, 2.0f};
    REQUIRE(sample_token(logits.data(), logits.size(), 0.0, 1.0, rng) == 1);
    std::vector<float> flat = {1.0f, 1.0f, 1.0f};
    REQUIRE(sample_token(flat.data(), flat.size(), 0.0, 1.0, rng) == 0);
}

TEST_CASE("top-p restricts sampling to the smallest nucleus") {
    // softmax of {ln .5, ln .3, ln .2} is exactly {0.5, 0.3, 0.2}
    std::vector<double> logits = {std::log(0.5), std::log(0.3), std::log(0.2)};

    Rng rng(7);
    for (int i = 0; i < 200; ++i)
        REQUIRE(sample_token(logits.data(), 3, 1.0, 0.5, rng) == 0);  // nucleus = {0}

    Rng rng2(8);
    bool saw1 = false;
    for (int i = 0; i < 400; ++i) {
        Token t = sample_token(logits.data(), 3, 1.0, 0.75, rng2);  // nucleus = {0,1}, mass 0.8
        REQUIRE(t != 2);
        saw1 = saw1 || t == 1;
    }
    REQUIRE(saw1);

    // top_p = 1 reaches every token eventually.
    Rng rng3(9);
    bool saw2 = false;
    for (int i = 0; i < 1000 && !saw2; ++i)
        saw2 = sample_token(logits.data(), 3, 1.0, 1.0, rng3) == 2;
    REQUIRE(saw2);
}

TEST_CASE("low temperature sharpens toward the argmax") {
    std::vector<double> logits = {1.0, 1.5, 0.5};
    Rng rng(11);
    int hits = 0;
    for (int i = 0; i < 500; ++i) hits += sample_token(logits.data(), 3, 0.05, 1.0, rng) == 1;
    REQUIRE(hits == 500);  // exp(10) dominance makes others vanishingly rare
}

TEST_CASE("sampling parameters are validated") {
    std::vector<float> logits = {0.0f, 1.0f};
    Rng rng(1);
    REQUIRE_THROWS_AS(sample_token(logits.data(), 2, -1.0, 1.0, rng), DataError);
    REQUIRE_THROWS_AS(sample_token(logits.data(), 2, 1.0, 0.0, rng), DataError);
    REQUIRE_THROWS_AS(sample_token(logits.data(), 2, 1.0, 1.5, rng), DataError);
}

// ---------------------------------------------------------------------------
// sample_lr
// ---------------------------------------------------------------------------

TEST_CASE("left-to-right sampling respects the budget and validates the prompt") {
    ModelConfig cfg = small_model();
    auto params = init_params<float>(cfg, 4);

    SampleRequest req;
    req.prompt = {10, 20, 30};
    req.max_new_tokens = 0;
    auto r = sample_lr(cfg, params, req);
    REQUIRE(r.tokens.empty());
    REQUIRE_FALSE(r.terminated);

    SampleRequest empty;
    empty.max_new_tokens = 4;
    REQUIRE_THROWS_WITH(sample_lr(cfg, params, empty),
                        Catch::Matchers::ContainsSubstring("non-empty"));

    SampleRequest long_req;
    long_req.prompt.assign(60, 1);
    long_req.max_new_tokens = 10;  // 60 + 10 > 64
    REQUIRE_THROWS_WITH(sample_lr(cfg, params, long_req),
                        Catch::Matchers::ContainsSubstring("prompt too long"));
}

TEST_CASE("same seed and request reproduce the same sample") {
    ModelConfig cfg = small_model();
    auto params = init_params<float>(cfg, 4);
    SampleRequest req;
    req.prompt = {65, 66, 67};
    req.max_new_tokens = 12;
    req.temperature = 1.0;
    req.seed = 99;
    auto a = sample_lr(cfg, params, req);
    auto b = sample_lr(cfg, params, req);
    REQUIRE(a.tokens == b.tokens);
    REQUIRE(a.terminated == b.terminated);
    req.seed = 100;
    auto c = sample_lr(cfg, params, req);
    // another stream is free to differ; lengths within budget either way
    REQUIRE(c.tokens.size() <= 12);
}

TEST_CASE("generation stops at the stop tokens without including them") {
    ModelConfig cfg = small_model();
    auto params = rigged_model(cfg, tok::EOD);
    SampleRequest req;
    req.prompt = {65};
    req.max_new_tokens = 8;
    req.temperature = 0.0;
    auto r = sample_lr(cfg, params, req);
    REQUIRE(r.tokens.empty());
    REQUIRE(r.terminated);
    REQUIRE(r.stop_token == tok::EOD);

    auto params2 = rigged_model(cfg, tok::EOM);
    auto r2 = sample_lr(cfg, params2, req);
    REQUIRE(r2.terminated);
    REQUIRE(r2.stop_token == tok::EOM);

    // A rigged non-stop winner runs to the budget.
    auto params3 = rigged_model(cfg, 42);
    auto r3 = sample_lr(cfg, params3, req);
    REQUIRE_FALSE(r3.terminated);
    REQUIRE(r3.tokens == TokenList(8, 42));
}

TEST_CASE("prefix mode with a length-1 prompt collapses to causal sampling") {
    // With m <= 1 every attention row has the same extent as the causal mask,
    // so whole generations agree bit-for-bit in any depth of model.
    ModelConfig cfg = small_model(2);
    auto params = init_params<float>(cfg, 31);
    SampleRequest causal;
    causal.prompt = {70};
    causal.max_new_tokens = 10;
    causal.temperature = 0.7;
    causal.seed = 5;
    SampleRequest prefix = causal;
    prefix.arch = ArchMode::prefix;
    auto a = sample_lr(cfg, params, causal);
    auto b = sample_lr(cfg, params, prefix);
    REQUIRE(a.tokens == b.tokens);
    REQUIRE(a.terminated == b.terminated);
}

TEST_CASE("one-layer models sample identically in prefix and causal modes") {
    // Layer-0 keys and values are attention-independent, so only the final
    // row's extent matters for the next token -- and that extent matches the
    // causal one for every row at or past the prefix.
    ModelConfig cfg = small_model(1);
    auto params = init_params<float>(cfg, 32);
    SampleRequest causal;
    causal.prompt = {70, 71, 72, 73, 74};
    causal.max_new_tokens = 8;
    causal.temperature = 0.0;
    SampleRequest prefix = causal;
    prefix.arch = ArchMode::prefix;
    auto a = sample_lr(cfg, params, causal);
    auto b = sample_lr(cfg, params, prefix);
    REQUIRE(a.tokens == b.tokens);
}

// ---------------------------------------------------------------------------
// Infilling
// ---------------------------------------------------------------------------

TEST_CASE("infill prompt layout is a ++ MASK_0 ++ c ++ SEP ++ MASK_0") {
    TokenList prompt = build_infill_prompt({97}, {99});
    REQUIRE(prompt == TokenList{97, tok::MASK_BASE, 99, tok::SEP, tok::MASK_BASE});

    TokenList wide = build_infill_prompt({1, 2, 3}, {8, 9});
    REQUIRE(wide == TokenList{1, 2, 3, tok::MASK_BASE, 8, 9, tok::SEP, tok::MASK_BASE});

    // Exactly one sentinel on each side of SEP, even with empty context.
    TokenList bare = build_infill_prompt({}, {});
    REQUIRE(bare == TokenList{tok::MASK_BASE, tok::SEP, tok::MASK_BASE});
}

TEST_CASE("immediate end-of-mask yields an empty terminated middle") {
    ModelConfig cfg = small_model();
    auto params = rigged_model(cfg, tok::EOM);
    InfillRequest req;
    req.prefix = {97};
    req.suffix = {99};
    req.max_new_tokens = 8;
    auto r = sample_infill(cfg, params, req);
    REQUIRE(r.middle.empty());
    REQUIRE(r.terminated);
}

TEST_CASE("budget-truncated infills are reported unterminated") {
    ModelConfig cfg = small_model();
    auto params = rigged_model(cfg, 42);  // never emits EOM
    InfillRequest req;
    req.prefix = {97};
    req.suffix = {99};
    req.max_new_tokens = 6;
    auto r = sample_infill(cfg, params, req);
    REQUIRE_FALSE(r.terminated);
    REQUIRE(r.middle == TokenList(6, 42));
}

TEST_CASE("derailing into SEP or EOD stops without terminating") {
    ModelConfig cfg = small_model();
    auto params = rigged_model(cfg, tok::SEP);
    InfillRequest req;
    req.prefix = {97};
    req.suffix = {99};
    req.max_new_tokens = 6;
    auto r = sample_infill(cfg, params, req);
    REQUIRE_FALSE(r.terminated);
    REQUIRE(r.middle.empty());
}

TEST_CASE("infill requests must fit the context window") {
    ModelConfig cfg = small_model();
    auto params = init_params<float>(cfg, 4);
    InfillRequest req;
    req.prefix.assign(40, 1);
    req.suffix.assign(20, 2);
    req.max_new_tokens = 8;  // 40 + 20 + 3 + 8 > 64
    REQUIRE_THROWS_WITH(sample_infill(cfg, params, req),
                        Catch::Matchers::ContainsSubstring("exceeds context"));
}

// ---------------------------------------------------------------------------
// pass@k
// ---------------------------------------------------------------------------

TEST_CASE("pass@k spot values") {
    REQUIRE(pass_at_k(5, 0, 3) == 0.0);
    REQUIRE(pass_at_k(5, 5, 1) == 1.0);
    REQUIRE(pass_at_k(5, 2, 2) == Catch::Approx(0.7).epsilon(1e-12));
    REQUIRE(pass_at_k(10, 3, 1) == Catch::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("pass@k equals exhaustive subset enumeration for n <= 12") {
    for (int n = 1; n <= 12; ++n)
        for (int c = 0; c <= n; ++c)
            for (int k = 1; k <= n; ++k) {
                INFO("n=" << n << " c=" << c << " k=" << k);
                REQUIRE(pass_at_k(n, c, k) ==
                        Catch::Approx(passk_bruteforce(n, c, k)).margin(1e-12));
            }
}

TEST_CASE("pass@k validates its arguments") {
    REQUIRE_THROWS_AS(pass_at_k(5, -1, 1), DataError);
    REQUIRE_THROWS_AS(pass_at_k(5, 6, 1), DataError);
    REQUIRE_THROWS_AS(pass_at_k(5, 2, 0), DataError);
    REQUIRE_THROWS_AS(pass_at_k(5, 2, 6), DataError);
}
