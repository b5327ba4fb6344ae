#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cg2/errors.hpp"
#include "cg2/rng.hpp"
#include "cg2/vocab.hpp"

namespace cg2 {

enum class Domain : uint8_t { A = 0, B = 1 };

inline Domain domain_from_string(const std::string& s) {
    if (s == "A") return Domain::A;
    if (s == "B") return Domain::B;
    throw DataError("domain must be \"A\" or \"B\", got \"" + s + "\"");
}

struct Document {
    TokenList tokens;  // byte-level ids only, non-empty
    Domain domain = Domain::A;

    Document() = default;
    Document(TokenList t, Domain d) : tokens(std::move(t)), domain(d) {
        if (tokens.empty()) throw DataError("document has no tokens");
        for (Token id : tokens)
            if (!Vocabulary::is_byte(id)) throw DataError("document contains special id");
    }
};

// One fixed-length training window. EOD sits at every junction between
// documents; only the final window of a corpus may carry a PAD tail.
struct PackedSequence {
    TokenList tokens;                 // length n_ctx
    std::vector<size_t> boundaries;   // positions of EOD tokens
    std::vector<Domain> domain_at;    // per-position source domain

    Domain majority_domain() const {
        size_t a = 0, b = 0, n = tokens.size();
        for (size_t i = 0; i < n; ++i) {
            if (tokens[i] == tok::PAD) continue;
            (domain_at[i] == Domain::A ? a : b)++;
        }
        return b > a ? Domain::B : Domain::A;
    }
};

// Shuffle documents by seed, concatenate with one EOD between each pair,
// chunk into n_ctx windows. The final partial window is PAD-filled so the
// token multiset is conserved.
inline std::vector<PackedSequence> pack_documents(const std::vector<Document>& docs,
                                                  size_t n_ctx, uint64_t seed) {
    if (n_ctx < 16) throw DataError("n_ctx must be >= 16");
    if (docs.empty()) throw DataError("no documents to pack");

    std::vector<size_t> order(docs.size());
    std::iota(order.begin(), order.end(), size_t{0});
    Rng rng(derive_seed(seed, /*stream=*/0x7061636bull));  // "pack"
    rng.shuffle(order);

    std::vector<PackedSequence> out;
    PackedSequence cur;
    cur.tokens.reserve(n_ctx);
    auto flush = [&] {
        while (cur.tokens.size() < n_ctx) {
            cur.tokens.push_back(tok::PAD);
            cur.domain_at.push_back(Domain::A);
        }
        out.push_back(std::move(cur));
        cur = PackedSequence{};
        cur.tokens.reserve(n_ctx);
    };
    auto push = [&](Token t, Domain d) {
        cur.tokens.push_back(t);
        cur.domain_at.push_back(d);
        if (t == tok::EOD) cur.boundaries.push_back(cur.tokens.size() - 1);
        if (cur.tokens.size() == n_ctx) flush();
    };

    for (size_t k = 0; k < order.size(); ++k) {
        const Document& doc = docs[order[k]];
        if (k > 0) push(tok::EOD, doc.domain);
        for (Token t : doc.tokens) push(t, doc.domain);
    }
    if (!cur.tokens.empty()) flush();
    return out;
}

struct MixtureCounts {
    size_t from_a = 0;
    size_t from_b = 0;
    bool a_exhausted = false;
    bool b_exhausted = false;
};

// Per-document Bernoulli(p_a) interleaving of two corpora. Either source
// running dry ends the mixture; counts report how far each side got.
inline std::vector<Document> mixture_stream(const std::vector<Document>& stream_a,
                                            const std::vector<Document>& stream_b,
                                            double p_a, uint64_t seed,
                                            MixtureCounts* counts = nullptr) {
    if (p_a < 0.0 || p_a > 1.0) throw DataError("p_a must be in [0, 1]");
    Rng rng(derive_seed(seed, /*stream=*/0x6d6978ull));  // "mix"
    std::vector<Document> out;
    MixtureCounts c;
    size_t ia = 0, ib = 0;
    for (;;) {
        bool pick_a = rng.bernoulli(p_a);
        if (pick_a) {
            if (ia == stream_a.size()) {
                c.a_exhausted = true;
                break;
            }
            out.push_back(stream_a[ia++]);
            c.from_a++;
        } else {
            if (ib == stream_b.size()) {
                c.b_exhausted = true;
                break;
            }
            out.push_back(stream_b[ib++]);
            c.from_b++;
        }
    }
    if (counts) *counts = c;
    return out;
}

struct JsonlError {
    size_t line_no;  // 1-based
    std::string message;
};

struct JsonlResult {
    std::vector<Document> documents;
    std::vector<JsonlError> errors;
};

// Newline-delimited JSON, one record per line: {"text": "...", "domain": "A"|"B"}.
// Malformed records are reported with their line number and skipped; an
// unreadable file or a file yielding zero documents is fatal.
inline JsonlResult load_jsonl(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open JSONL file: " + path);
    JsonlResult result;
    std::string line;
    size_t line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json rec = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
        if (rec.is_discarded()) {
            result.errors.push_back({line_no, "invalid JSON"});
            continue;
        }
        if (!rec.contains("text") || !rec["text"].is_string()) {
            result.errors.push_back({line_no, "missing string field \"text\""});
            continue;
        }
        std::string text = rec["text"].get<std::string>();
        if (text.empty()) {
            result.errors.push_back({line_no, "empty \"text\""});
            continue;
        }
        Domain domain = Domain::A;
        if (rec.contains("domain")) {
            if (!rec["domain"].is_string()) {
                result.errors.push_back({line_no, "\"domain\" must be a string"});
                continue;
            }
            try {
                domain = domain_from_string(rec["domain"].get<std::string>());
            } catch (const DataError& e) {
                result.errors.push_back({line_no, e.what()});
                continue;
            }
        }
        result.documents.emplace_back(tokenize(text), domain);
    }
    if (result.documents.empty()) throw DataError("no documents in " + path);
    return result;
}

inline void write_jsonl(const std::string& path, const std::vector<Document>& docs) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot open for writing: " + path);
    for (const Document& d : docs) {
        nlohmann::json rec;
        rec["text"] = detokenize(d.tokens);
        rec["domain"] = d.domain == Domain::A ? "A" : "B";
        f << rec.dump() << "\n";
    }
}

}  // namespace cg2
