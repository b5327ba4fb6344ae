#pragma once

#include <cstdint>
#include <string>
#include <unordered_set>
#include <vector>

#include "cg2/corpus.hpp"
#include "cg2/errors.hpp"
#include "cg2/rng.hpp"

namespace cg2 {

enum class TaskKind : uint8_t { copy = 0, arithmetic = 1, brackets = 2, prose = 3 };

inline const char* to_string(TaskKind k) {
    switch (k) {
        case TaskKind::copy: return "copy";
        case TaskKind::arithmetic: return "arithmetic";
        case TaskKind::brackets: return "brackets";
        case TaskKind::prose: return "prose";
    }
    return "?";
}

inline TaskKind parse_task_kind(const std::string& s) {
    if (s == "copy") return TaskKind::copy;
    if (s == "arithmetic") return TaskKind::arithmetic;
    if (s == "brackets") return TaskKind::brackets;
    if (s == "prose") return TaskKind::prose;
    throw DataError("unknown task: " + s + " (want copy|arithmetic|brackets|prose)");
}

// Prose stands in for natural language; everything else for code.
inline Domain task_domain(TaskKind k) { return k == TaskKind::prose ? Domain::B : Domain::A; }

struct SyntheticTask {
    TaskKind kind = TaskKind::arithmetic;
    size_t train_size = 1000;
    size_t heldout_size = 200;
    uint64_t seed = 0;
};

// One generated document plus every deterministic probe derived from it.
// The continuation and infill fields are exact functions of the visible
// context, so exact-match evaluation has a well-defined ground truth.
struct TaskCase {
    std::string doc;
    std::string prompt, answer;                         // left-to-right completion
    std::string fill_prefix, fill_middle, fill_suffix;  // single-span infill
    std::string fill_prefix_m, fill_middle_m, fill_suffix_m;  // wider ("multi-line") span
    int label = -1;                                     // brackets: 1 balanced, 0 corrupted
    std::string probe_text;                             // label-free input for probing
};

struct TaskData {
    SyntheticTask task;
    std::vector<TaskCase> train, heldout;
};

namespace detail {

inline std::string random_word(Rng& rng, int lo, int hi) {
    int len = rng.uniform_int(lo, hi);
    std::string w;
    for (int i = 0; i < len; ++i) w.push_back(static_cast<char>('a' + rng.uniform_int(0, 25)));
    return w;
}

inline TaskCase gen_copy_case(Rng& rng) {
    TaskCase c;
    std::string s = random_word(rng, 3, 10);
    c.doc = s + "|" + s;
    c.prompt = s + "|";
    c.answer = s;
    // Interior span of the echoed half; recoverable from the first half.
    size_t i = static_cast<size_t>(rng.uniform_int(0, static_cast<int>(s.size()) - 2));
    size_t j = i + static_cast<size_t>(
                       rng.uniform_int(1, static_cast<int>(std::min<size_t>(3, s.size() - i))));
    c.fill_prefix = s + "|" + s.substr(0, i);
    c.fill_middle = s.substr(i, j - i);
    c.fill_suffix = s.substr(j);
    size_t j2 = std::min(s.size(), j + 2);
    c.fill_prefix_m = c.fill_prefix;
    c.fill_middle_m = s.substr(i, j2 - i);
    c.fill_suffix_m = s.substr(j2);
    return c;
}

inline TaskCase gen_arithmetic_case(Rng& rng) {
    int a = rng.uniform_int(0, 99);
    int b = rng.uniform_int(0, 99);
    int z = (a + b) % 10;
    std::string sa = std::to_string(a), sb = std::to_string(b), sz = std::to_string(z);
    TaskCase c;
    c.doc = "x=" + sa + ";y=" + sb + ";z=" + sz + ";";
    c.prompt = "x=" + sa + ";y=" + sb + ";z=";
    c.answer = sz + ";";
    c.fill_prefix = c.prompt;
    c.fill_middle = sz;
    c.fill_suffix = ";";
    c.fill_prefix_m = "x=" + sa + ";y=" + sb + ";";
    c.fill_middle_m = "z=" + sz;
    c.fill_suffix_m = ";";
    return c;
}

inline std::string gen_balanced(Rng& rng) {
    int pairs = rng.uniform_int(2, 12);
    std::string s;
    int opens_left = pairs, depth = 0;
    while (opens_left > 0 || depth > 0) {
        bool open;
        if (opens_left == 0)
            open = false;
        else if (depth == 0)
            open = true;
        else
            open = rng.bernoulli(0.5);
        s.push_back(open ? '(' : ')');
        depth += open ? 1 : -1;
        opens_left -= open ? 1 : 0;
    }
    return s;
}

inline TaskCase gen_brackets_case(Rng& rng) {
    std::string s = gen_balanced(rng);
    int label = rng.bernoulli(0.5) ? 1 : 0;
    if (label == 0) {
        // Flipping one interior bracket breaks the open/close count by +-2,
        // so the string is unbalanced for certain; the first char stays '('.
        size_t i = static_cast<size_t>(rng.uniform_int(1, static_cast<int>(s.size()) - 1));
        s[i] = s[i] == '(' ? ')' : '(';
    }
    TaskCase c;
    std::string sl = label ? "1" : "0";
    c.doc = s + "=" + sl + ";";
    c.prompt = s + "=";
    c.answer = sl + ";";
    c.fill_prefix = c.prompt;
    c.fill_middle = sl;
    c.fill_suffix = ";";
    c.fill_prefix_m = s;
    c.fill_middle_m = "=" + sl;
    c.fill_suffix_m = ";";
    c.label = label;
    c.probe_text = s;
    return c;
}

inline bool is_vowel(char ch) {
    return ch == 'a' || ch == 'e' || ch == 'i' || ch == 'o' || ch == 'u';
}

// Letter-level Markov texture: vowels and consonants alternate.
inline std::string gen_markov_word(Rng& rng) {
    static const char* vowels = "aeiou";
    static const char* consonants = "bcdfghjklmnpqrstvwxyz";
    int len = rng.uniform_int(2, 6);
    std::string w;
    char ch = static_cast<char>('a' + rng.uniform_int(0, 25));
    w.push_back(ch);
    for (int i = 1; i < len; ++i) {
        ch = is_vowel(ch) ? consonants[rng.uniform_int(0, 20)] : vowels[rng.uniform_int(0, 4)];
        w.push_back(ch);
    }
    return w;
}

inline TaskCase gen_prose_case(Rng& rng) {
    int n_words = rng.uniform_int(3, 6);
    std::vector<std::string> words;
    for (int i = 0; i < n_words; ++i) words.push_back(gen_markov_word(rng));
    std::string body;
    for (int i = 0; i < n_words; ++i) {
        body += words[static_cast<size_t>(i)];
        body += " ";
    }
    // The sentence closes by echoing its first word; the continuation is
    // therefore a pure function of the prompt.
    TaskCase c;
    c.doc = body + words[0] + ".";
    c.prompt = body;
    c.answer = words[0] + ".";
    c.fill_prefix = body;
    c.fill_middle = words[0];
    c.fill_suffix = ".";
    c.fill_prefix_m = body.substr(0, body.size() - 1);
    c.fill_middle_m = " " + words[0] + ".";
    c.fill_suffix_m = "";
    return c;
}

}  // namespace detail

// Deterministic per (kind, seed); train and held-out splits are disjoint by
// exact document-string dedup.
inline TaskData gen_task_data(const SyntheticTask& task) {
    TaskData data;
    data.task = task;
    Rng rng(derive_seed(derive_seed(task.seed, 0x7461736bull /* "task" */),
                        static_cast<uint64_t>(task.kind)));
    std::unordered_set<std::string> seen;
    const size_t want = task.train_size + task.heldout_size;
    size_t attempts = 0, limit = want * 200 + 1000;
    while (seen.size() < want) {
        if (++attempts > limit)
            throw DataError("task space too small for requested corpus size");
        TaskCase c;
        switch (task.kind) {
            case TaskKind::copy: c = detail::gen_copy_case(rng); break;
            case TaskKind::arithmetic: c = detail::gen_arithmetic_case(rng); break;
            case TaskKind::brackets: c = detail::gen_brackets_case(rng); break;
            case TaskKind::prose: c = detail::gen_prose_case(rng); break;
        }
        if (!seen.insert(c.doc).second) continue;
        if (data.train.size() < task.train_size)
            data.train.push_back(std::move(c));
        else
            data.heldout.push_back(std::move(c));
    }
    return data;
}

inline std::vector<Document> case_documents(const std::vector<TaskCase>& cases, Domain domain) {
    std::vector<Document> docs;
    docs.reserve(cases.size());
    for (const auto& c : cases) docs.emplace_back(tokenize(c.doc), domain);
    return docs;
}

// JSONL corpus of `size` training documents for the task.
inline std::vector<Document> gen_synthetic_corpus(const SyntheticTask& task) {
    TaskData data = gen_task_data(task);
    return case_documents(data.train, task_domain(task.kind));
}

}  // namespace cg2
