#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cg2/eval.hpp"
#include "cg2/pipeline.hpp"
#include "cg2/svg.hpp"
#include "cg2/synthetic.hpp"
#include "cg2/trainer.hpp"

namespace cg2 {

// Small enough to train many cells on one desktop core, big enough to learn
// the synthetic tasks.
inline ModelConfig lesson_model() {
    ModelConfig m;
    m.n_layers = 2;
    m.n_heads = 4;
    m.d_model = 48;
    m.d_ff = 192;
    m.n_ctx = 96;
    m.vocab = 272;
    return m;
}

struct ExperimentOptions {
    std::string out_dir = "experiment_out";
    int n_seeds = 3;
    int64_t steps = 1200;
    int batch_size = 8;
    int64_t eval_every = 200;
    int64_t warmup_steps = 100;
    double lr = 1e-3;
    ModelConfig model = lesson_model();
    size_t train_docs = 3000;
    size_t heldout_docs = 200;
    int repeats = 8;
    uint64_t base_seed = 1;
    int workers = 1;
};

// One trained cell of an (objective x arch x data) grid.
struct CellRun {
    std::string cell;
    uint64_t seed = 0;
    std::string objective;
    ArchMode arch = ArchMode::causal;
    double completion_em = -1.0;
    double infill_em = -1.0;
    double em_domain_a = -1.0;  // mixing runs: exact-match per domain
    double em_domain_b = -1.0;
    double step0_loss = 0.0;
    double final_loss = 0.0;
    int64_t steps = 0;
    int batch_size = 0;
    std::string run_dir;
    ParamStore<float> params;
};

inline nlohmann::json cell_json(const CellRun& r) {
    nlohmann::json j = {{"cell", r.cell},
                        {"seed", r.seed},
                        {"objective", r.objective},
                        {"arch", r.arch == ArchMode::prefix ? "prefix" : "causal"},
                        {"step0_heldout_loss", r.step0_loss},
                        {"final_heldout_loss", r.final_loss},
                        {"steps", r.steps},
                        {"batch_size", r.batch_size},
                        {"run_dir", r.run_dir}};
    if (r.completion_em >= 0) j["completion_em"] = r.completion_em;
    if (r.infill_em >= 0) j["infill_em"] = r.infill_em;
    if (r.em_domain_a >= 0) j["em_domain_a"] = r.em_domain_a;
    if (r.em_domain_b >= 0) j["em_domain_b"] = r.em_domain_b;
    return j;
}

namespace detail {

inline CellRun run_cell(const std::string& cell_name, const std::string& objective,
                        ArchMode arch, const std::vector<Document>& train_docs,
                        const std::vector<Document>& eval_docs, const ExperimentOptions& opt,
                        uint64_t seed, const ObjectiveConfig& ocfg) {
    CorruptOptions co;
    co.objective = objective;
    co.objective_cfg = ocfg;
    co.arch = arch;
    co.n_ctx = opt.model.n_ctx;
    co.seed = derive_seed(seed, std::hash<std::string>{}(cell_name));
    co.repeats = opt.repeats;
    BatchFile batch = build_batch(train_docs, co);
    CorruptOptions ce = co;
    ce.seed = derive_seed(co.seed, 0x6576616cull);  // "eval"
    ce.repeats = 1;
    BatchFile eval_batch = build_batch(eval_docs, ce);

    TrainConfig tc;
    tc.model = opt.model;
    tc.arch = arch == ArchMode::prefix ? "prefix" : "causal";
    tc.objective = objective;
    tc.batch_size = opt.batch_size;
    tc.steps = opt.steps;
    tc.warmup_steps = opt.warmup_steps;
    tc.eval_every = opt.eval_every;
    tc.lr = opt.lr;
    tc.seed = seed;
    tc.workers = opt.workers;

    CellRun r;
    r.cell = cell_name;
    r.seed = seed;
    r.objective = objective;
    r.arch = arch;
    r.steps = tc.steps;
    r.batch_size = tc.batch_size;
    r.run_dir = opt.out_dir + "/" + cell_name + "_s" + std::to_string(seed);
    TrainResult tr = train(batch, &eval_batch, tc, r.run_dir);
    r.step0_loss = tr.step0_heldout_loss;
    r.final_loss = tr.final_heldout_loss;
    r.params = std::move(tr.params);
    return r;
}

inline void assert_equal_compute(const std::vector<CellRun>& runs) {
    for (const auto& r : runs)
        if (r.steps != runs[0].steps || r.batch_size != runs[0].batch_size)
            throw DataError("compared cells must share step count and batch shape");
}

inline std::vector<Series> heldout_series(const std::vector<CellRun>& runs) {
    std::vector<Series> out;
    for (const auto& r : runs) {
        Series s;
        s.name = r.cell + " s" + std::to_string(r.seed);
        std::ifstream f(r.run_dir + "/metrics.jsonl");
        std::string line;
        while (std::getline(f, line)) {
            if (line.empty()) continue;
            auto j = nlohmann::json::parse(line, nullptr, false);
            if (j.is_discarded() || !j.contains("split") || j["split"] != "heldout") continue;
            s.points.emplace_back(j["step"].get<double>(), j["loss"].get<double>());
        }
        out.push_back(std::move(s));
    }
    return out;
}

inline bool majority(const std::vector<bool>& checks) {
    size_t yes = 0;
    for (bool b : checks) yes += b ? 1 : 0;
    return yes * 2 > checks.size();
}

inline void write_report(const ExperimentOptions& opt, const nlohmann::json& report,
                         const std::vector<CellRun>& all_runs) {
    std::filesystem::create_directories(opt.out_dir);
    {
        std::ofstream f(opt.out_dir + "/report.json");
        f << report.dump(2) << "\n";
    }
    {
        std::ofstream f(opt.out_dir + "/cells.jsonl");
        for (const auto& r : all_runs) f << cell_json(r).dump() << "\n";
    }
    write_svg_lines(opt.out_dir + "/curves.svg", report["name"].get<std::string>() +
                        ": held-out loss vs steps",
                    "steps", "held-out loss", heldout_series(all_runs));
}

}  // namespace detail

// CLM vs CLM+PSM at equal steps: the PSM mixture trades a little
// left-to-right accuracy for the ability to infill.
inline nlohmann::json run_lesson2(const ExperimentOptions& opt) {
    ObjectiveConfig ocfg;
    std::vector<CellRun> all;
    std::vector<bool> lr_ordering, infill_ordering;
    for (int s = 0; s < opt.n_seeds; ++s) {
        uint64_t seed = opt.base_seed + static_cast<uint64_t>(s);
        SyntheticTask task{TaskKind::arithmetic, opt.train_docs, opt.heldout_docs, seed};
        TaskData data = gen_task_data(task);
        auto train_docs = case_documents(data.train, Domain::A);
        auto eval_docs = case_documents(data.heldout, Domain::A);

        CellRun clm = detail::run_cell("clm", "clm", ArchMode::causal, train_docs, eval_docs,
                                       opt, seed, ocfg);
        CellRun psm = detail::run_cell("psm_mix", "psm_mix", ArchMode::causal, train_docs,
                                       eval_docs, opt, seed, ocfg);
        for (CellRun* r : {&clm, &psm}) {
            r->completion_em =
                eval_completion(opt.model, r->params, data.heldout, ArchMode::causal).rate();
            r->infill_em = eval_infill(opt.model, r->params, data.heldout,
                                       infill_format_for(r->objective))
                               .rate();
        }
        lr_ordering.push_back(psm.completion_em <= clm.completion_em);
        infill_ordering.push_back(psm.infill_em > clm.infill_em);
        all.push_back(std::move(clm));
        all.push_back(std::move(psm));
    }
    detail::assert_equal_compute(all);
    nlohmann::json report = {
        {"name", "lesson2"},
        {"task", "arithmetic"},
        {"cells", {"clm", "psm_mix"}},
        {"n_seeds", opt.n_seeds},
        {"equal_compute", {{"steps", opt.steps}, {"batch_size", opt.batch_size}, {"asserted", true}}},
        {"per_seed", nlohmann::json::array()},
        {"checks",
         {{"lr_em_psm_le_clm", lr_ordering},
          {"infill_em_psm_gt_clm", infill_ordering},
          {"lr_majority", detail::majority(lr_ordering)},
          {"infill_majority", detail::majority(infill_ordering)},
          {"passed", detail::majority(lr_ordering) && detail::majority(infill_ordering)}}}};
    for (const auto& r : all) report["per_seed"].push_back(cell_json(r));
    detail::write_report(opt, report, all);
    return report;
}

// CLM vs mixture (p=0.5) vs pure span corruption: the mixture keeps most of
// CLM's left-to-right accuracy while infilling about as well as pure span.
inline nlohmann::json run_lesson3(const ExperimentOptions& opt) {
    ObjectiveConfig ocfg;
    ObjectiveConfig pure_span = ocfg;
    pure_span.p_span = 1.0;
    std::vector<CellRun> all;
    std::vector<bool> lr_retained, infill_close;
    for (int s = 0; s < opt.n_seeds; ++s) {
        uint64_t seed = opt.base_seed + static_cast<uint64_t>(s);
        SyntheticTask task{TaskKind::arithmetic, opt.train_docs, opt.heldout_docs, seed};
        TaskData data = gen_task_data(task);
        auto train_docs = case_documents(data.train, Domain::A);
        auto eval_docs = case_documents(data.heldout, Domain::A);

        CellRun clm = detail::run_cell("clm", "clm", ArchMode::causal, train_docs, eval_docs,
                                       opt, seed, ocfg);
        CellRun mix = detail::run_cell("mixture", "mixture", ArchMode::causal, train_docs,
                                       eval_docs, opt, seed, ocfg);
        CellRun span = detail::run_cell("span", "mixture", ArchMode::causal, train_docs,
                                        eval_docs, opt, seed, pure_span);
        for (CellRun* r : {&clm, &mix, &span}) {
            r->completion_em =
                eval_completion(opt.model, r->params, data.heldout, ArchMode::causal).rate();
            r->infill_em =
                eval_infill(opt.model, r->params, data.heldout, InfillFormat::sentinel).rate();
        }
        lr_retained.push_back(mix.completion_em >= 0.9 * clm.completion_em);
        infill_close.push_back(mix.infill_em >= 0.9 * span.infill_em);
        all.push_back(std::move(clm));
        all.push_back(std::move(mix));
        all.push_back(std::move(span));
    }
    detail::assert_equal_compute(all);
    nlohmann::json report = {
        {"name", "lesson3"},
        {"task", "arithmetic"},
        {"cells", {"clm", "mixture", "span"}},
        {"n_seeds", opt.n_seeds},
        {"equal_compute", {{"steps", opt.steps}, {"batch_size", opt.batch_size}, {"asserted", true}}},
        {"per_seed", nlohmann::json::array()},
        {"checks",
         {{"lr_em_mix_ge_90pct_clm", lr_retained},
          {"infill_em_mix_within_10pct_span", infill_close},
          {"lr_majority", detail::majority(lr_retained)},
          {"infill_majority", detail::majority(infill_close)},
          {"passed", detail::majority(lr_retained) && detail::majority(infill_close)}}}};
    for (const auto& r : all) report["per_seed"].push_back(cell_json(r));
    detail::write_report(opt, report, all);
    return report;
}

// Two-domain data mixing: programming-language analog (arithmetic) vs
// natural-language analog (prose) vs an equal-probability mixture, all at
// identical step counts.
inline nlohmann::json run_mixing(const ExperimentOptions& opt) {
    ObjectiveConfig ocfg;
    std::vector<CellRun> all;
    std::vector<bool> mix_beats_mismatched_a, mix_beats_mismatched_b, mix_not_above_matched_a;
    for (int s = 0; s < opt.n_seeds; ++s) {
        uint64_t seed = opt.base_seed + static_cast<uint64_t>(s);
        SyntheticTask pl_task{TaskKind::arithmetic, opt.train_docs, opt.heldout_docs, seed};
        SyntheticTask nl_task{TaskKind::prose, opt.train_docs, opt.heldout_docs, seed};
        TaskData pl = gen_task_data(pl_task);
        TaskData nl = gen_task_data(nl_task);
        auto pl_train = case_documents(pl.train, Domain::A);
        auto nl_train = case_documents(nl.train, Domain::B);
        std::vector<Document> mixed =
            mixture_stream(pl_train, nl_train, 0.5, derive_seed(seed, 0x6d6978ull));
        // Held-out loss is tracked on the PL split; the per-domain exact
        // match below is the comparison metric.
        auto pl_eval = case_documents(pl.heldout, Domain::A);

        CellRun plr = detail::run_cell("pl", "clm", ArchMode::causal, pl_train, pl_eval, opt,
                                       seed, ocfg);
        CellRun nlr = detail::run_cell("nl", "clm", ArchMode::causal, nl_train, pl_eval, opt,
                                       seed, ocfg);
        CellRun mixr = detail::run_cell("mix", "clm", ArchMode::causal, mixed, pl_eval, opt,
                                        seed, ocfg);
        for (CellRun* r : {&plr, &nlr, &mixr}) {
            r->em_domain_a =
                eval_completion(opt.model, r->params, pl.heldout, ArchMode::causal).rate();
            r->em_domain_b =
                eval_completion(opt.model, r->params, nl.heldout, ArchMode::causal).rate();
        }
        mix_beats_mismatched_a.push_back(mixr.em_domain_a > nlr.em_domain_a);
        mix_beats_mismatched_b.push_back(mixr.em_domain_b > plr.em_domain_b);
        mix_not_above_matched_a.push_back(mixr.em_domain_a <= plr.em_domain_a);
        all.push_back(std::move(plr));
        all.push_back(std::move(nlr));
        all.push_back(std::move(mixr));
    }
    detail::assert_equal_compute(all);
    nlohmann::json report = {
        {"name", "mixing"},
        {"domains", {"arithmetic (A)", "prose (B)"}},
        {"cells", {"pl", "nl", "mix"}},
        {"n_seeds", opt.n_seeds},
        {"equal_compute", {{"steps", opt.steps}, {"batch_size", opt.batch_size}, {"asserted", true}}},
        {"per_seed", nlohmann::json::array()},
        {"checks",
         {{"mix_beats_mismatched_on_a", mix_beats_mismatched_a},
          {"mix_beats_mismatched_on_b", mix_beats_mismatched_b},
          {"mix_not_above_matched_on_a", mix_not_above_matched_a},
          {"domain_a_majority", detail::majority(mix_beats_mismatched_a)},
          {"domain_b_majority", detail::majority(mix_beats_mismatched_b)},
          {"passed", detail::majority(mix_beats_mismatched_a) &&
                         detail::majority(mix_beats_mismatched_b)}}}};
    for (const auto& r : all) report["per_seed"].push_back(cell_json(r));
    detail::write_report(opt, report, all);
    return report;
}

// Representation probe: causal CLM vs prefix UL2-style training on the
// brackets task, linear head on first/last hidden states.
inline nlohmann::json run_probe(const ExperimentOptions& opt) {
    ObjectiveConfig ocfg;
    ocfg.ul2s = Ul2sConfig{};
    std::vector<CellRun> all;
    nlohmann::json probes = nlohmann::json::array();
    std::vector<bool> prefix_first_beats_causal;
    for (int s = 0; s < opt.n_seeds; ++s) {
        uint64_t seed = opt.base_seed + static_cast<uint64_t>(s);
        SyntheticTask task{TaskKind::brackets, opt.train_docs, opt.heldout_docs, seed};
        TaskData data = gen_task_data(task);
        auto train_docs = case_documents(data.train, Domain::A);
        auto eval_docs = case_documents(data.heldout, Domain::A);

        CellRun causal = detail::run_cell("causal_clm", "clm", ArchMode::causal, train_docs,
                                          eval_docs, opt, seed, ocfg);
        CellRun prefix = detail::run_cell("prefix_ul2s", "ul2s", ArchMode::prefix, train_docs,
                                          eval_docs, opt, seed, ocfg);
        ProbeReport pc = probe_representation(opt.model, causal.params, ArchMode::causal, data);
        ProbeReport pp = probe_representation(opt.model, prefix.params, ArchMode::prefix, data);
        probes.push_back({{"seed", seed},
                          {"causal_first", pc.acc_first},
                          {"causal_last", pc.acc_last},
                          {"prefix_first", pp.acc_first},
                          {"prefix_last", pp.acc_last}});
        prefix_first_beats_causal.push_back(pp.acc_first > pc.acc_first);
        all.push_back(std::move(causal));
        all.push_back(std::move(prefix));
    }
    detail::assert_equal_compute(all);
    nlohmann::json report = {
        {"name", "probe"},
        {"task", "brackets"},
        {"cells", {"causal_clm", "prefix_ul2s"}},
        {"n_seeds", opt.n_seeds},
        {"equal_compute", {{"steps", opt.steps}, {"batch_size", opt.batch_size}, {"asserted", true}}},
        {"probe", probes},
        {"per_seed", nlohmann::json::array()},
        {"checks",
         {{"prefix_first_gt_causal_first", prefix_first_beats_causal},
          {"passed", detail::majority(prefix_first_beats_causal)}}}};
    for (const auto& r : all) report["per_seed"].push_back(cell_json(r));
    detail::write_report(opt, report, all);
    return report;
}

inline nlohmann::json run_experiment(const std::string& name, const ExperimentOptions& opt) {
    if (name == "lesson2") return run_lesson2(opt);
    if (name == "lesson3") return run_lesson3(opt);
    if (name == "mixing") return run_mixing(opt);
    if (name == "probe") return run_probe(opt);
    throw DataError("unknown experiment: " + name + " (want lesson2|lesson3|mixing|probe)");
}

}  // namespace cg2
