// Command-line front end: pack, corrupt, train, sample, infill, eval, passk,
// experiment. Exit codes: 0 ok, 1 usage, 2 data error, 3 numeric error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cg2/batch_format.hpp"
#include "cg2/corpus.hpp"
#include "cg2/errors.hpp"
#include "cg2/eval.hpp"
#include "cg2/experiments.hpp"
#include "cg2/manifest.hpp"
#include "cg2/model.hpp"
#include "cg2/pipeline.hpp"
#include "cg2/sampler.hpp"
#include "cg2/synthetic.hpp"
#include "cg2/trainer.hpp"
#include "cg2/vocab.hpp"

namespace {

using nlohmann::json;

std::string read_text(const std::string& path) {
    if (path == "-") {
        std::ostringstream ss;
        ss << std::cin.rdbuf();
        return ss.str();
    }
    std::ifstream f(path, std::ios::binary);
    if (!f) throw cg2::DataError("cannot open: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    std::string s = ss.str();
    if (!s.empty() && s.back() == '\n') s.pop_back();  // drop one trailing newline
    return s;
}

cg2::TokenList parse_raw_tokens(const std::string& s) {
    cg2::TokenList out;
    std::string cur;
    auto flush = [&] {
        if (cur.empty()) return;
        out.push_back(static_cast<cg2::Token>(std::stoul(cur)));
        cur.clear();
    };
    for (char c : s) {
        if (c == ' ' || c == ',' || c == '\n' || c == '\t')
            flush();
        else if (c >= '0' && c <= '9')
            cur.push_back(c);
        else
            throw cg2::DataError("raw token input must be unsigned integers");
    }
    flush();
    return out;
}

std::string format_tokens(const cg2::TokenList& toks, bool raw) {
    if (raw) {
        std::string s;
        for (size_t i = 0; i < toks.size(); ++i) {
            if (i) s.push_back(' ');
            s += std::to_string(toks[i]);
        }
        return s;
    }
    return cg2::render_tokens(toks);
}

void report_line_errors(const cg2::JsonlResult& r, const std::string& path) {
    for (const auto& e : r.errors)
        std::cerr << path << ":" << e.line_no << ": " << e.message << "\n";
}

// Suggest the closest flag or subcommand on a failed parse.
size_t edit_distance(const std::string& a, const std::string& b) {
    std::vector<size_t> row(b.size() + 1);
    for (size_t j = 0; j <= b.size(); ++j) row[j] = j;
    for (size_t i = 1; i <= a.size(); ++i) {
        size_t prev = row[0];
        row[0] = i;
        for (size_t j = 1; j <= b.size(); ++j) {
            size_t cur = row[j];
            row[j] = std::min({row[j] + 1, row[j - 1] + 1,
                               prev + (a[i - 1] == b[j - 1] ? 0 : 1)});
            prev = cur;
        }
    }
    return row[b.size()];
}

void collect_names(const CLI::App* app, std::vector<std::string>& names) {
    for (const auto* opt : app->get_options())
        for (const auto& n : opt->get_lnames()) names.push_back("--" + n);
    for (const auto* sub : app->get_subcommands(nullptr)) {
        names.push_back(sub->get_name());
        collect_names(sub, names);
    }
}

void suggest(const CLI::App& app, const std::string& bad) {
    if (bad.empty()) return;
    std::vector<std::string> names;
    collect_names(&app, names);
    std::string best;
    size_t best_d = 4;  // only suggest near misses
    for (const auto& n : names) {
        size_t d = edit_distance(bad, n);
        if (d < best_d) {
            best_d = d;
            best = n;
        }
    }
    if (!best.empty()) std::cerr << "did you mean '" << best << "'?\n";
}

struct SampleIo {
    std::string model_path, prompt, prompt_file, out_dir;
    bool raw = false;
    int max_new = 64;
    double temperature = 1.0, top_p = 1.0;
    uint64_t seed = 0;
    std::string arch = "causal";
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"byte-level language-model pipeline: packing, corruption objectives, "
                 "training, sampling, infilling, evaluation"};
    app.require_subcommand(1);

    // ---- pack ----
    auto* pack = app.add_subcommand("pack", "pack JSONL documents into a CG2B batch file");
    struct {
        std::string input, input_b, out, name = "packed.cg2b";
        double p_a = 0.5;
        int n_ctx = 256;
        uint64_t seed = 0;
    } pk;
    pack->add_option("--input", pk.input, "JSONL corpus")->required();
    pack->add_option("--input-b", pk.input_b, "second JSONL corpus to mix with");
    pack->add_option("--p-a", pk.p_a, "probability of drawing from --input when mixing");
    pack->add_option("--n-ctx", pk.n_ctx, "window length");
    pack->add_option("--seed", pk.seed, "shuffle/mixture seed");
    pack->add_option("--out", pk.out, "output directory")->required();
    pack->add_option("--name", pk.name, "output file name");
    pack->callback([&] {
        cg2::WallClock clock;
        auto a = cg2::load_jsonl(pk.input);
        report_line_errors(a, pk.input);
        std::vector<cg2::Document> docs = std::move(a.documents);
        json cfg = {{"n_ctx", pk.n_ctx}, {"seed", pk.seed}, {"objective", "clm"}};
        if (!pk.input_b.empty()) {
            auto b = cg2::load_jsonl(pk.input_b);
            report_line_errors(b, pk.input_b);
            cg2::MixtureCounts counts;
            docs = cg2::mixture_stream(docs, b.documents, pk.p_a, pk.seed, &counts);
            cfg["p_a"] = pk.p_a;
            cfg["mixture_counts"] = {{"from_a", counts.from_a}, {"from_b", counts.from_b}};
            std::cerr << "mixture: " << counts.from_a << " from A, " << counts.from_b
                      << " from B\n";
        }
        cg2::CorruptOptions co;
        co.objective = "clm";
        co.n_ctx = pk.n_ctx;
        co.seed = pk.seed;
        cg2::BatchFile batch = cg2::build_batch(docs, co);
        std::string out_path = pk.out + "/" + pk.name;
        std::filesystem::create_directories(pk.out);
        cg2::write_batch_file(out_path, batch);
        std::cerr << "wrote " << batch.examples.size() << " examples to " << out_path << "\n";
        cg2::RunManifest m{"pack", cfg, pk.seed, {pk.input}, {out_path}, clock.seconds()};
        if (!pk.input_b.empty()) m.inputs.push_back(pk.input_b);
        cg2::append_manifest(pk.out, m);
    });

    // ---- corrupt ----
    auto* corrupt =
        app.add_subcommand("corrupt", "apply a training objective: JSONL -> CG2B examples");
    struct {
        std::string input, out, objective = "mixture", arch = "causal", obj_cfg_path,
                            name = "data.cg2b";
        int n_ctx = 256, repeats = 1;
        uint64_t seed = 0;
    } cr;
    corrupt->add_option("--input", cr.input, "JSONL corpus")->required();
    corrupt->add_option("--out", cr.out, "output directory")->required();
    corrupt->add_option("--objective", cr.objective, "clm|mixture|psm_mix|ul2s");
    corrupt->add_option("--arch", cr.arch, "causal|prefix");
    corrupt->add_option("--n-ctx", cr.n_ctx, "window length");
    corrupt->add_option("--seed", cr.seed, "corruption seed");
    corrupt->add_option("--repeats", cr.repeats, "independently corrupted copies per window");
    corrupt->add_option("--objective-config", cr.obj_cfg_path, "ObjectiveConfig JSON file");
    corrupt->add_option("--name", cr.name, "output file name");
    corrupt->callback([&] {
        cg2::WallClock clock;
        auto loaded = cg2::load_jsonl(cr.input);
        report_line_errors(loaded, cr.input);
        cg2::CorruptOptions co;
        co.objective = cr.objective;
        co.arch = cr.arch == "prefix" ? cg2::ArchMode::prefix : cg2::ArchMode::causal;
        co.n_ctx = cr.n_ctx;
        co.seed = cr.seed;
        co.repeats = cr.repeats;
        if (!cr.obj_cfg_path.empty()) {
            std::ifstream f(cr.obj_cfg_path);
            if (!f) throw cg2::DataError("cannot open: " + cr.obj_cfg_path);
            json j = json::parse(f);
            co.objective_cfg = j.get<cg2::ObjectiveConfig>();
        }
        cg2::BatchFile batch = cg2::build_batch(loaded.documents, co);
        std::string out_path = cr.out + "/" + cr.name;
        std::filesystem::create_directories(cr.out);
        cg2::write_batch_file(out_path, batch);
        std::cerr << "wrote " << batch.examples.size() << " examples to " << out_path << "\n";
        json cfg = {{"objective", cr.objective}, {"arch", cr.arch},       {"n_ctx", cr.n_ctx},
                    {"seed", cr.seed},           {"repeats", cr.repeats}, {"objective_config", co.objective_cfg}};
        cg2::append_manifest(cr.out,
                             {"corrupt", cfg, cr.seed, {cr.input}, {out_path}, clock.seconds()});
    });

    // ---- train ----
    auto* train = app.add_subcommand("train", "train a model on a CG2B batch file");
    struct {
        std::string config, data, eval_data, out, resume;
        int64_t steps = -1;
        int batch_size = -1, workers = -1;
        double lr = -1;
        int64_t seed = -1;
        std::string arch, objective;
    } tr;
    train->add_option("--config", tr.config, "TrainConfig JSON file")->required();
    train->add_option("--data", tr.data, "CG2B training data")->required();
    train->add_option("--eval-data", tr.eval_data, "CG2B held-out data");
    train->add_option("--out", tr.out, "output directory")->required();
    train->add_option("--resume", tr.resume, "resume from a CG2T checkpoint");
    train->add_option("--steps", tr.steps, "override steps");
    train->add_option("--batch-size", tr.batch_size, "override batch size");
    train->add_option("--workers", tr.workers, "override gradient workers");
    train->add_option("--lr", tr.lr, "override learning rate");
    train->add_option("--seed", tr.seed, "override seed");
    train->add_option("--arch", tr.arch, "override arch (causal|prefix)");
    train->add_option("--objective", tr.objective, "override objective label");
    train->callback([&] {
        cg2::WallClock clock;
        std::ifstream f(tr.config);
        if (!f) throw cg2::DataError("cannot open: " + tr.config);
        json j = json::parse(f, nullptr, true, true);
        cg2::TrainConfig cfg = j.get<cg2::TrainConfig>();
        if (tr.steps >= 0) cfg.steps = tr.steps;
        if (tr.batch_size > 0) cfg.batch_size = tr.batch_size;
        if (tr.workers > 0) cfg.workers = tr.workers;
        if (tr.lr > 0) cfg.lr = tr.lr;
        if (tr.seed >= 0) cfg.seed = static_cast<uint64_t>(tr.seed);
        if (!tr.arch.empty()) cfg.arch = tr.arch;
        if (!tr.objective.empty()) cfg.objective = tr.objective;
        cfg.validate();
        cg2::BatchFile data = cg2::read_batch_file(tr.data);
        std::optional<cg2::BatchFile> eval_data;
        if (!tr.eval_data.empty()) eval_data = cg2::read_batch_file(tr.eval_data);
        cg2::TrainResult res =
            cg2::train(data, eval_data ? &*eval_data : nullptr, cfg, tr.out, tr.resume);
        std::cerr << "final train loss " << res.final_train_loss;
        if (eval_data) std::cerr << ", held-out " << res.final_heldout_loss;
        std::cerr << "\n";
        cg2::RunManifest m{"train", json(cfg), cfg.seed, {tr.config, tr.data},
                           {tr.out + "/model.cg2p", tr.out + "/checkpoint.cg2t",
                            tr.out + "/metrics.jsonl"},
                           clock.seconds()};
        if (!tr.eval_data.empty()) m.inputs.push_back(tr.eval_data);
        if (!tr.resume.empty()) m.inputs.push_back(tr.resume);
        cg2::append_manifest(tr.out, m);
    });

    // ---- sample ----
    auto* sample = app.add_subcommand("sample", "left-to-right sampling from a checkpoint");
    SampleIo sm;
    sample->add_option("--model", sm.model_path, "CG2P checkpoint")->required();
    sample->add_option("--prompt", sm.prompt, "prompt text");
    sample->add_option("--prompt-file", sm.prompt_file, "prompt file ('-' for stdin)");
    sample->add_flag("--raw-tokens", sm.raw, "token-id I/O instead of text");
    sample->add_option("--max-new", sm.max_new, "max new tokens");
    sample->add_option("--temperature", sm.temperature, "sampling temperature (0 = greedy)");
    sample->add_option("--top-p", sm.top_p, "nucleus mass");
    sample->add_option("--seed", sm.seed, "sampling seed");
    sample->add_option("--arch", sm.arch, "causal|prefix (prefix pins m = prompt length)");
    sample->add_option("--out", sm.out_dir, "optional output directory");
    sample->callback([&] {
        cg2::WallClock clock;
        cg2::ParamStore<float> params = cg2::load_params(sm.model_path);
        std::string prompt_text =
            !sm.prompt_file.empty() ? read_text(sm.prompt_file) : sm.prompt;
        if (prompt_text.empty()) throw cg2::DataError("empty prompt: use --prompt/--prompt-file");
        cg2::SampleRequest req;
        req.prompt = sm.raw ? parse_raw_tokens(prompt_text) : cg2::tokenize(prompt_text);
        req.max_new_tokens = sm.max_new;
        req.temperature = sm.temperature;
        req.top_p = sm.top_p;
        req.seed = sm.seed;
        req.arch = sm.arch == "prefix" ? cg2::ArchMode::prefix : cg2::ArchMode::causal;
        cg2::SampleResult res = cg2::sample_lr(params.config, params, req);
        std::string text = format_tokens(res.tokens, sm.raw);
        std::cout << text << "\n";
        json report = {{"terminated", res.terminated},
                       {"tokens_generated", res.tokens.size()},
                       {"seed", sm.seed}};
        if (!sm.out_dir.empty()) {
            std::filesystem::create_directories(sm.out_dir);
            std::ofstream(sm.out_dir + "/output.txt") << text << "\n";
            std::ofstream(sm.out_dir + "/report.json") << report.dump(2) << "\n";
            json cfg = {{"max_new", sm.max_new}, {"temperature", sm.temperature},
                        {"top_p", sm.top_p},     {"arch", sm.arch},
                        {"raw_tokens", sm.raw}};
            cg2::append_manifest(sm.out_dir, {"sample", cfg, sm.seed, {sm.model_path},
                                              {sm.out_dir + "/output.txt"}, clock.seconds()});
        } else {
            std::cerr << report.dump() << "\n";
        }
    });

    // ---- infill ----
    auto* infill = app.add_subcommand("infill", "fill-in-the-middle sampling");
    struct {
        std::string model_path, prefix, suffix, prefix_file, suffix_file, out_dir;
        bool raw = false;
        int max_new = 64;
        double temperature = 0.0;
        uint64_t seed = 0;
    } in;
    infill->add_option("--model", in.model_path, "CG2P checkpoint")->required();
    infill->add_option("--prefix", in.prefix, "context before the hole");
    infill->add_option("--suffix", in.suffix, "context after the hole");
    infill->add_option("--prefix-file", in.prefix_file, "prefix file ('-' for stdin)");
    infill->add_option("--suffix-file", in.suffix_file, "suffix file");
    infill->add_flag("--raw-tokens", in.raw, "token-id I/O instead of text");
    infill->add_option("--max-new", in.max_new, "max middle tokens");
    infill->add_option("--temperature", in.temperature, "sampling temperature (0 = greedy)");
    infill->add_option("--seed", in.seed, "sampling seed");
    infill->add_option("--out", in.out_dir, "optional output directory");
    infill->callback([&] {
        cg2::WallClock clock;
        cg2::ParamStore<float> params = cg2::load_params(in.model_path);
        std::string pre = !in.prefix_file.empty() ? read_text(in.prefix_file) : in.prefix;
        std::string suf = !in.suffix_file.empty() ? read_text(in.suffix_file) : in.suffix;
        cg2::InfillRequest req;
        req.prefix = in.raw ? parse_raw_tokens(pre) : cg2::tokenize(pre);
        req.suffix = in.raw ? parse_raw_tokens(suf) : cg2::tokenize(suf);
        req.max_new_tokens = in.max_new;
        req.temperature = in.temperature;
        req.seed = in.seed;
        cg2::InfillResult res = cg2::sample_infill(params.config, params, req);
        std::string text = format_tokens(res.middle, in.raw);
        std::cout << text << "\n";
        json report = {{"terminated", res.terminated},
                       {"tokens_generated", res.middle.size()},
                       {"seed", in.seed}};
        if (!in.out_dir.empty()) {
            std::filesystem::create_directories(in.out_dir);
            std::ofstream(in.out_dir + "/output.txt") << text << "\n";
            std::ofstream(in.out_dir + "/report.json") << report.dump(2) << "\n";
            json cfg = {{"max_new", in.max_new},
                        {"temperature", in.temperature},
                        {"raw_tokens", in.raw}};
            cg2::append_manifest(in.out_dir, {"infill", cfg, in.seed, {in.model_path},
                                              {in.out_dir + "/output.txt"}, clock.seconds()});
        } else {
            std::cerr << report.dump() << "\n";
        }
    });

    // ---- eval ----
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a synthetic task");
    struct {
        std::string model_path, task = "arithmetic", mode = "completion", arch = "causal",
                            format = "sentinel", data, out_dir;
        size_t train_size = 1000, heldout_size = 200;
        uint64_t seed = 0;
    } ee;
    ev->add_option("--model", ee.model_path, "CG2P checkpoint")->required();
    ev->add_option("--task", ee.task, "copy|arithmetic|brackets|prose");
    ev->add_option("--mode", ee.mode, "completion|infill|infill-wide|ppl");
    ev->add_option("--arch", ee.arch, "causal|prefix");
    ev->add_option("--format", ee.format, "infill prompt format: sentinel|psm");
    ev->add_option("--data", ee.data, "CG2B file (ppl mode)");
    ev->add_option("--train-size", ee.train_size, "task train split size (fixes the split)");
    ev->add_option("--heldout-size", ee.heldout_size, "task held-out split size");
    ev->add_option("--seed", ee.seed, "task generator seed");
    ev->add_option("--out", ee.out_dir, "optional output directory");
    ev->callback([&] {
        cg2::WallClock clock;
        cg2::ParamStore<float> params = cg2::load_params(ee.model_path);
        cg2::ArchMode arch =
            ee.arch == "prefix" ? cg2::ArchMode::prefix : cg2::ArchMode::causal;
        json result;
        if (ee.mode == "ppl") {
            if (ee.data.empty()) throw cg2::DataError("ppl mode needs --data");
            cg2::BatchFile batch = cg2::read_batch_file(ee.data);
            cg2::EvalResult r =
                cg2::evaluate_perplexity(params.config, params, batch.examples, arch);
            result = {{"mode", "ppl"}, {"loss", r.loss}, {"ppl", r.ppl}, {"tokens", r.n_tokens}};
            std::cout << r.ppl << "\n";
        } else {
            cg2::SyntheticTask task{cg2::parse_task_kind(ee.task), ee.train_size,
                                    ee.heldout_size, ee.seed};
            cg2::TaskData data = cg2::gen_task_data(task);
            cg2::EvalOutcome out;
            if (ee.mode == "completion") {
                out = cg2::eval_completion(params.config, params, data.heldout, arch);
            } else if (ee.mode == "infill" || ee.mode == "infill-wide") {
                cg2::InfillFormat fmt = ee.format == "psm" ? cg2::InfillFormat::psm
                                                           : cg2::InfillFormat::sentinel;
                out = cg2::eval_infill(params.config, params, data.heldout, fmt,
                                       ee.mode == "infill-wide");
            } else {
                throw cg2::DataError("mode must be completion|infill|infill-wide|ppl");
            }
            result = {{"mode", ee.mode},
                      {"task", ee.task},
                      {"rate", out.rate()},
                      {"n_cases", out.n_cases},
                      {"n_correct", out.n_correct}};
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.6f", out.rate());
            std::cout << buf << "\n";
        }
        if (!ee.out_dir.empty()) {
            std::filesystem::create_directories(ee.out_dir);
            std::ofstream(ee.out_dir + "/eval.json") << result.dump(2) << "\n";
            json cfg = {{"task", ee.task}, {"mode", ee.mode},
                        {"arch", ee.arch}, {"format", ee.format},
                        {"train_size", ee.train_size}, {"heldout_size", ee.heldout_size}};
            cg2::append_manifest(ee.out_dir, {"eval", cfg, ee.seed, {ee.model_path},
                                              {ee.out_dir + "/eval.json"}, clock.seconds()});
        }
    });

    // ---- passk ----
    auto* pk_cmd = app.add_subcommand("passk", "unbiased pass@k estimate");
    struct {
        int64_t n = 0, c = 0, k = 0;
    } pa;
    pk_cmd->add_option("n", pa.n, "samples generated")->required();
    pk_cmd->add_option("c", pa.c, "samples correct")->required();
    pk_cmd->add_option("k", pa.k, "budget k")->required();
    pk_cmd->callback([&] {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.6f", cg2::pass_at_k(pa.n, pa.c, pa.k));
        std::cout << buf << "\n";
    });

    // ---- experiment ----
    auto* exp = app.add_subcommand("experiment", "run a full comparison grid");
    struct {
        std::string name, out;
        cg2::ExperimentOptions opt;
        int n_layers = -1, n_heads = -1, d_model = -1, d_ff = -1, n_ctx = -1;
    } ex;
    exp->add_option("--name", ex.name, "lesson2|lesson3|mixing|probe")->required();
    exp->add_option("--out", ex.out, "output directory")->required();
    exp->add_option("--seeds", ex.opt.n_seeds, "number of seeds (majority vote)");
    exp->add_option("--steps", ex.opt.steps, "training steps per cell");
    exp->add_option("--batch-size", ex.opt.batch_size, "batch size");
    exp->add_option("--eval-every", ex.opt.eval_every, "metrics cadence");
    exp->add_option("--lr", ex.opt.lr, "learning rate");
    exp->add_option("--train-docs", ex.opt.train_docs, "documents per training corpus");
    exp->add_option("--heldout-docs", ex.opt.heldout_docs, "held-out documents");
    exp->add_option("--repeats", ex.opt.repeats, "corruption repeats per window");
    exp->add_option("--base-seed", ex.opt.base_seed, "first seed");
    exp->add_option("--workers", ex.opt.workers, "gradient workers");
    exp->add_option("--n-layers", ex.n_layers, "model override");
    exp->add_option("--n-heads", ex.n_heads, "model override");
    exp->add_option("--d-model", ex.d_model, "model override");
    exp->add_option("--d-ff", ex.d_ff, "model override");
    exp->add_option("--n-ctx", ex.n_ctx, "model override");
    exp->callback([&] {
        cg2::WallClock clock;
        ex.opt.out_dir = ex.out;
        if (ex.n_layers > 0) ex.opt.model.n_layers = ex.n_layers;
        if (ex.n_heads > 0) ex.opt.model.n_heads = ex.n_heads;
        if (ex.d_model > 0) ex.opt.model.d_model = ex.d_model;
        if (ex.d_ff > 0) ex.opt.model.d_ff = ex.d_ff;
        if (ex.n_ctx > 0) ex.opt.model.n_ctx = ex.n_ctx;
        json report = cg2::run_experiment(ex.name, ex.opt);
        std::cout << report.dump(2) << "\n";
        json cfg = {{"name", ex.name},
                    {"n_seeds", ex.opt.n_seeds},
                    {"steps", ex.opt.steps},
                    {"batch_size", ex.opt.batch_size},
                    {"model", ex.opt.model}};
        cg2::append_manifest(ex.out, {"experiment", cfg, ex.opt.base_seed, {},
                                      {ex.out + "/report.json", ex.out + "/cells.jsonl",
                                       ex.out + "/curves.svg"},
                                      clock.seconds()});
    });

    if (argc <= 1) {
        std::cerr << app.help();
        return 1;
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        if (code == 0) return 0;  // --help and friends
        if (const auto* extras = dynamic_cast<const CLI::ExtrasError*>(&e)) {
            std::string msg = extras->what();
            size_t p = msg.find("--");
            if (p != std::string::npos) {
                std::string bad = msg.substr(p);
                if (auto sp = bad.find_first_of(" \t"); sp != std::string::npos) bad.resize(sp);
                suggest(app, bad);
            }
        }
        return 1;
    } catch (const cg2::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const cg2::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
