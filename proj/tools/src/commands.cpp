#include "commands.hpp"

#include <chrono>
#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "data_root.hpp"
#include "files.hpp"
#include "http_api.hpp"
#include "session_store.hpp"
#include "wsic/error.hpp"
#include "wsic/evalsim.hpp"
#include "wsic/pipeline.hpp"
#include "wsic/synthcorpus.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace wsic::app {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<const CorpusEntry*> select_slides(const CorpusManifest& m, const std::string& split,
                                              const std::vector<std::string>& ids) {
    std::vector<const CorpusEntry*> out;
    if (!ids.empty()) {
        for (const auto& id : ids) {
            const CorpusEntry* e = m.find(id);
            require(e != nullptr, ErrorCode::NotFound, "slide '" + id + "' is not in the manifest");
            out.push_back(e);
        }
        return out;
    }
    if (split == "all") {
        for (const auto& e : m.slides) out.push_back(&e);
        return out;
    }
    return m.in_split(split_from_string(split));
}

fs::path model_path_or_default(const std::string& model, const fs::path& corpus) {
    return model.empty() ? corpus / "model.json" : fs::path(model);
}

// --- gen-corpus -------------------------------------------------------------

struct GenCorpusArgs {
    std::string out;
    int slides = 24;
    int train = 12;
    int val = 6;
    std::uint64_t seed = 1;
    int size = 1024;
    double delta_min = 0.3;
    double delta_max = 0.9;
    std::string corpus_id = "synthetic";
};

void cmd_gen_corpus(const GenCorpusArgs& a, std::ostream& out) {
    CorpusConfig c;
    c.corpus_id = a.corpus_id;
    c.seed = a.seed;
    c.train = a.train;
    c.val = a.val;
    c.test = a.slides;
    c.separability_min = a.delta_min;
    c.separability_max = a.delta_max;
    c.base.width = c.base.height = a.size;
    const auto m = generate_corpus(c, a.out);
    out << "wrote " << m.slides.size() << " slides (" << a.train << " train, " << a.val << " val, " << a.slides
        << " test) to " << a.out << "\n";
}

// --- gen-scribbles ----------------------------------------------------------

struct GenScribblesArgs {
    std::string corpus;
    std::string split = "train";
    std::vector<std::string> slides;
    std::uint64_t seed = 0;
    std::string out;
};

void cmd_gen_scribbles(const GenScribblesArgs& a, std::ostream& out) {
    const fs::path root = a.corpus;
    const auto m = load_manifest(root);
    const fs::path dir = a.out.empty() ? root / "scribbles" : fs::path(a.out);
    ScribbleParams params;
    std::uint64_t index = 0;
    std::size_t total = 0;
    const auto chosen = select_slides(m, a.split, a.slides);
    for (const CorpusEntry* e : chosen) {
        const SyntheticSlide slide = load_slide(root, e->slide_id);
        params.seed = derive_seed(a.seed, 1000 + index++);
        const auto scribbles = ground_truth_scribbles(slide.tumor, slide.tissue, params);
        write_text_atomic(dir / (e->slide_id + ".jsonl"), scribbles_to_jsonl(scribbles));
        total += scribbles.size();
    }
    out << "wrote " << total << " scribbles for " << chosen.size() << " slides to " << dir.string() << "\n";
}

// --- train ------------------------------------------------------------------

struct TrainArgs {
    std::string corpus;
    std::string out;
    int epochs = TrainConfig{}.epochs;
    int batch_size = TrainConfig{}.batch_size;
    double lr = TrainConfig{}.learning_rate;
    std::uint64_t seed = 0;
    std::uint64_t train_seed = 0;
    int n_mc = 20;
    bool no_augment = false;
};

void cmd_train(const TrainArgs& a, std::ostream& out) {
    const fs::path root = a.corpus;
    const auto m = load_manifest(root);
    PipelineConfig cfg;
    cfg.seed = a.seed;
    cfg.n_mc = a.n_mc;
    cfg.train.epochs = a.epochs;
    cfg.train.batch_size = a.batch_size;
    cfg.train.learning_rate = a.lr;
    cfg.train.seed = a.train_seed;
    cfg.train.flips = cfg.train.rot90 = !a.no_augment;
    const auto t0 = Clock::now();
    const auto p = train_pipeline(root, m, cfg);
    const fs::path path = a.out.empty() ? root / "model.json" : fs::path(a.out);
    write_text_atomic(path, pipeline_to_json(p).dump(1) + "\n");
    out << std::fixed << std::setprecision(4) << "train accuracy " << p.train_accuracy << ", t_thresh "
        << p.threshold.t_thresh << ", calibration [" << p.calibration.h_min << ", " << p.calibration.h_max
        << "]\n"
        << "wrote " << path.string() << " (" << std::setprecision(1) << seconds_since(t0) << " s)\n";
}

// --- predict ----------------------------------------------------------------

struct PredictArgs {
    std::string corpus;
    std::string model;
    std::string split = "all";
    std::vector<std::string> slides;
    std::string out;
};

void cmd_predict(const PredictArgs& a, std::ostream& out) {
    const fs::path root = a.corpus;
    const auto m = load_manifest(root);
    const auto p = load_pipeline(model_path_or_default(a.model, root));
    const PipelineConfig cfg = pipeline_config(p);
    const fs::path dest = a.out.empty() ? root : fs::path(a.out);
    const auto chosen = select_slides(m, a.split, a.slides);
    for (const CorpusEntry* e : chosen) {
        const SlideCase c = prepare_slide(root, *e, p.model, cfg);
        write_slide_features(dest, c.grid, p.n_mc, c.records);
    }
    out << "wrote features for " << chosen.size() << " slides to " << (dest / "features").string() << "\n";
}

// --- tune-nepoch / simulate -------------------------------------------------

struct ExperimentArgs {
    std::string corpus;
    std::string model;
    std::string split;
    std::string policy = "naive";
    int passes = 4;
    int runs = 10;
    std::uint64_t seed = 7;
    int n_epoch_star = 30;
    int target_patches = 10;
    std::string candidates = "1,5,10,20,30,40,50,60,70,80,90,100";
    std::string out;
};

SimulationConfig simulation_config(const ExperimentArgs& a, const TrainedPipeline& p) {
    SimulationConfig sc;
    sc.policy.mode = policy_mode_from_string(a.policy);
    sc.policy.n_pass = a.passes;
    sc.policy.n_epoch_star = a.n_epoch_star;
    sc.policy.validate();
    sc.session = session_options(p);
    sc.target_patches = a.target_patches;
    return sc;
}

std::vector<int> parse_candidates(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            const int v = std::stoi(item, &used);
            require(used == item.size() && v >= 1, ErrorCode::InvalidArgument, "");
            out.push_back(v);
        } catch (const std::exception&) {
            fail(ErrorCode::InvalidArgument, "--candidates must be a comma-separated list of positive integers");
        }
    }
    require(!out.empty(), ErrorCode::InvalidArgument, "--candidates is empty");
    return out;
}

void cmd_tune(const ExperimentArgs& a, std::ostream& out) {
    const fs::path root = a.corpus;
    const auto m = load_manifest(root);
    const auto p = load_pipeline(model_path_or_default(a.model, root));
    const auto candidates = parse_candidates(a.candidates);
    const auto slides = prepare_split(root, m, split_from_string(a.split), p.model, pipeline_config(p));
    require(!slides.empty(), ErrorCode::InvalidArgument, "split '" + a.split + "' has no slides");
    ExperimentArgs naive = a;
    naive.policy = "naive";
    const auto r = tune_n_epoch(candidates, slides, simulation_config(naive, p), a.runs, a.seed);
    json scores = json::array();
    for (const auto& [c, f1] : r.scores) scores.push_back({{"n_epoch", c}, {"mean_f1", f1}});
    const json j{{"n_epoch_star", r.n_epoch_star}, {"n_pass", a.passes}, {"runs", a.runs},
                 {"seed", a.seed},                 {"split", a.split},   {"scores", scores}};
    const fs::path path = a.out.empty() ? root / "tune.json" : fs::path(a.out);
    write_text_atomic(path, j.dump(1) + "\n");
    out << std::fixed << std::setprecision(4);
    for (const auto& [c, f1] : r.scores) out << "n_epoch " << std::setw(3) << c << "  mean F1 " << f1 << "\n";
    out << "n_epoch* = " << r.n_epoch_star << "\nwrote " << path.string() << "\n";
}

void cmd_simulate(const ExperimentArgs& a, std::ostream& out) {
    const fs::path root = a.corpus;
    const auto m = load_manifest(root);
    const auto p = load_pipeline(model_path_or_default(a.model, root));
    const SimulationConfig sc = simulation_config(a, p);
    const auto t0 = Clock::now();
    const auto slides = prepare_split(root, m, split_from_string(a.split), p.model, pipeline_config(p));
    require(!slides.empty(), ErrorCode::InvalidArgument, "split '" + a.split + "' has no slides");
    const double prepare_s = seconds_since(t0);
    const auto t1 = Clock::now();
    const Experiment e = corpus_experiment(slides, sc, a.runs, a.seed);
    const double simulate_s = seconds_since(t1);

    const fs::path dir = a.out.empty() ? root / ("sim-" + a.policy) : fs::path(a.out);
    json runs = json::array(), timing_runs = json::array();
    for (const auto& r : e.results) {
        runs.push_back(run_to_json(r));
        json ms = json::array();
        for (const auto& pr : r.passes) ms.push_back(pr.elapsed_ms);
        timing_runs.push_back({{"slide_id", r.slide_id}, {"run", r.run}, {"elapsed_ms", ms}});
    }
    const json meta{{"policy", a.policy}, {"n_pass", a.passes}, {"runs", a.runs}, {"seed", a.seed},
                    {"split", a.split},   {"n_epoch_star", a.n_epoch_star}, {"target_patches", a.target_patches},
                    {"t_thresh", p.threshold.t_thresh}};
    write_text_atomic(dir / "runs.json", json{{"config", meta}, {"runs", runs}}.dump(1) + "\n");
    write_text_atomic(dir / "runs.csv", runs_to_csv(e.results));
    write_text_atomic(dir / "table.json", table_to_json(e.table).dump(1) + "\n");
    write_text_atomic(dir / "table.csv", table_to_csv(e.table));
    const std::string title = std::string(a.policy == "naive" ? "Naive" : "Uncertainty") + " correction (n_epoch* = " +
                              std::to_string(a.n_epoch_star) + ")";
    write_text_atomic(dir / "table.md", table_to_markdown(e.table, title));
    // Wall-clock numbers live apart so the files above stay byte-identical across runs.
    write_text_atomic(dir / "timing.json",
                      json{{"prepare_s", prepare_s}, {"simulate_s", simulate_s}, {"runs", timing_runs}}.dump(1) + "\n");

    out << table_to_markdown(e.table, title) << "\nnon-decreasing runs: " << std::fixed << std::setprecision(3)
        << non_decreasing_fraction(e.results) << "\nwrote " << dir.string() << "\n";
}

// --- report -----------------------------------------------------------------

struct ReportArgs {
    std::vector<std::string> inputs;
    std::string out;
};

void cmd_report(const ReportArgs& a, std::ostream& out) {
    std::ostringstream md;
    md << "# Correction report\n";
    for (const auto& in : a.inputs) {
        const fs::path dir = in;
        json runs_j, table_j;
        try {
            table_j = json::parse(read_text(dir / "table.json"));
            runs_j = json::parse(read_text(dir / "runs.json"));
        } catch (const json::parse_error& e) {
            fail(ErrorCode::ParseError, dir.string() + ": " + e.what());
        }
        const ExperimentTable t = table_from_json(table_j);
        const auto& cfg = runs_j.at("config");
        const std::string title = std::string(t.mode == PolicyMode::Naive ? "Naive" : "Uncertainty") +
                                  " correction (n_epoch* = " + std::to_string(t.n_epoch_star) + ")";
        md << "\n" << table_to_markdown(t, title);

        // Slide-level uncertainty against the rough-segmentation F1 (run 0 of each slide).
        std::vector<RunResult> results;
        for (const auto& r : runs_j.at("runs")) results.push_back(run_from_json(r));
        std::vector<double> h, f1;
        for (const auto& r : results) {
            if (r.run != 0 || r.passes.empty() || !r.passes.front().metrics.f1) continue;
            h.push_back(r.h_wsi);
            f1.push_back(*r.passes.front().metrics.f1);
        }
        md << "\n" << results.size() << " runs over " << h.size() << " slides, policy " << cfg.at("policy").get<std::string>()
           << ", seed " << cfg.at("seed").get<std::uint64_t>() << ".\n";
        md << "Non-decreasing F1 across passes: " << std::fixed << std::setprecision(1)
           << 100.0 * non_decreasing_fraction(results) << "% of runs.\n";
        if (h.size() >= 3) {
            try {
                md << "Pearson(H_WSI, rough F1) = " << std::setprecision(3) << pearson(h, f1) << ".\n";
            } catch (const Error&) {
                md << "Pearson(H_WSI, rough F1) undefined (constant series).\n";
            }
        }
        md.unsetf(std::ios::floatfield);
    }
    if (a.out.empty()) {
        out << md.str();
    } else {
        write_text_atomic(a.out, md.str());
        out << "wrote " << a.out << "\n";
    }
}

// --- serve ------------------------------------------------------------------

struct ServeArgs {
    std::string data_root;
    std::string host = "127.0.0.1";
    int port = 8080;
};

int cmd_serve(const ServeArgs& a, std::ostream& out, std::ostream& err) {
    std::string root = a.data_root;
    if (root.empty()) {
        const char* env = std::getenv("WSIC_DATA_ROOT");
        root = env && *env ? env : ".";
    }
    SessionStore store{DataRoot(root)};
    ServeOptions opts;
    opts.host = a.host;
    opts.port = a.port;
    const bool ok = serve(store, opts, [&](int port) {
        out << "listening on http://" << a.host << ":" << port << std::endl;
    });
    if (!ok) {
        err << "wsic: error: cannot bind " << a.host << ":" << a.port << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Interactive correction of weakly supervised slide segmentations", "wsic"};
    app.require_subcommand(1);
    app.fallthrough(false);

    const std::vector<std::string> splits{"train", "val", "test", "all"};
    const std::vector<std::string> eval_splits{"train", "val", "test"};
    const std::vector<std::string> policies{"naive", "uncertainty"};

    GenCorpusArgs gc;
    auto* s_gc = app.add_subcommand("gen-corpus", "Generate a seeded synthetic slide corpus");
    s_gc->add_option("--out", gc.out, "Output directory")->required();
    s_gc->add_option("--slides", gc.slides, "Test slides")->capture_default_str()->check(CLI::NonNegativeNumber);
    s_gc->add_option("--train", gc.train, "Training slides")->capture_default_str()->check(CLI::NonNegativeNumber);
    s_gc->add_option("--val", gc.val, "Validation slides")->capture_default_str()->check(CLI::NonNegativeNumber);
    s_gc->add_option("--seed", gc.seed, "Corpus seed")->capture_default_str();
    s_gc->add_option("--size", gc.size, "Slide width and height in pixels")->capture_default_str()->check(CLI::Range(64, 16384));
    s_gc->add_option("--delta-min", gc.delta_min, "Lowest class separability")->capture_default_str()->check(CLI::Range(0.0, 1.0));
    s_gc->add_option("--delta-max", gc.delta_max, "Highest class separability")->capture_default_str()->check(CLI::Range(0.0, 1.0));
    s_gc->add_option("--corpus-id", gc.corpus_id, "Corpus name")->capture_default_str();

    GenScribblesArgs gs;
    auto* s_gs = app.add_subcommand("gen-scribbles", "Ground-truth scribbles for corpus slides (JSONL per slide)");
    s_gs->add_option("--corpus", gs.corpus, "Corpus directory")->required();
    s_gs->add_option("--split", gs.split, "Slides to scribble")->capture_default_str()->check(CLI::IsMember(splits));
    s_gs->add_option("--slide", gs.slides, "Specific slide id (repeatable)");
    s_gs->add_option("--seed", gs.seed, "Scribble seed")->capture_default_str();
    s_gs->add_option("--out", gs.out, "Output directory [corpus/scribbles]");

    TrainArgs tr;
    auto* s_tr = app.add_subcommand("train", "Train the backbone on training scribbles and tune on validation");
    s_tr->add_option("--corpus", tr.corpus, "Corpus directory")->required();
    s_tr->add_option("--out", tr.out, "Model file [corpus/model.json]");
    s_tr->add_option("--epochs", tr.epochs)->capture_default_str()->check(CLI::PositiveNumber);
    s_tr->add_option("--batch-size", tr.batch_size)->capture_default_str()->check(CLI::PositiveNumber);
    s_tr->add_option("--lr", tr.lr, "Adam learning rate")->capture_default_str()->check(CLI::PositiveNumber);
    s_tr->add_option("--seed", tr.seed, "Pipeline seed (scribbles, MC dropout)")->capture_default_str();
    s_tr->add_option("--train-seed", tr.train_seed, "Optimiser and initialisation seed")->capture_default_str();
    s_tr->add_option("--n-mc", tr.n_mc, "Monte-Carlo dropout passes")->capture_default_str()->check(CLI::Range(2, 1000));
    s_tr->add_flag("--no-augment", tr.no_augment, "Disable flips and rotations");

    PredictArgs pr;
    auto* s_pr = app.add_subcommand("predict", "Write patch grids and MC-dropout features for slides");
    s_pr->add_option("--corpus", pr.corpus, "Corpus directory")->required();
    s_pr->add_option("--model", pr.model, "Model file [corpus/model.json]");
    s_pr->add_option("--split", pr.split)->capture_default_str()->check(CLI::IsMember(splits));
    s_pr->add_option("--slide", pr.slides, "Specific slide id (repeatable)");
    s_pr->add_option("--out", pr.out, "Data root receiving features/ [corpus]");

    ExperimentArgs tn;
    tn.split = "val";
    auto* s_tn = app.add_subcommand("tune-nepoch", "Pick n_epoch* by naive-mode simulation on validation slides");
    s_tn->add_option("--corpus", tn.corpus, "Corpus directory")->required();
    s_tn->add_option("--model", tn.model, "Model file [corpus/model.json]");
    s_tn->add_option("--split", tn.split)->capture_default_str()->check(CLI::IsMember(eval_splits));
    s_tn->add_option("--candidates", tn.candidates, "Comma-separated n_epoch values")
        ->capture_default_str()
        ->check(CLI::Validator(
            [](std::string& v) {
                try {
                    parse_candidates(v);
                } catch (const Error& e) {
                    return std::string(e.what());
                }
                return std::string();
            },
            "INT,INT,..."));
    s_tn->add_option("--passes", tn.passes)->capture_default_str()->check(CLI::Range(1, 100));
    s_tn->add_option("--runs", tn.runs)->capture_default_str()->check(CLI::Range(1, 1000));
    s_tn->add_option("--seed", tn.seed)->capture_default_str();
    s_tn->add_option("--target-patches", tn.target_patches)->capture_default_str()->check(CLI::PositiveNumber);
    s_tn->add_option("--out", tn.out, "Result file [corpus/tune.json]");

    ExperimentArgs sm;
    sm.split = "test";
    auto* s_sm = app.add_subcommand("simulate", "Simulated correction passes over a corpus split");
    s_sm->add_option("--corpus", sm.corpus, "Corpus directory")->required();
    s_sm->add_option("--model", sm.model, "Model file [corpus/model.json]");
    s_sm->add_option("--split", sm.split)->capture_default_str()->check(CLI::IsMember(eval_splits));
    s_sm->add_option("--policy", sm.policy)->capture_default_str()->check(CLI::IsMember(policies));
    s_sm->add_option("--passes", sm.passes)->capture_default_str()->check(CLI::Range(1, 100));
    s_sm->add_option("--runs", sm.runs)->capture_default_str()->check(CLI::Range(1, 1000));
    s_sm->add_option("--seed", sm.seed)->capture_default_str();
    s_sm->add_option("--n-epoch-star", sm.n_epoch_star)->capture_default_str()->check(CLI::PositiveNumber);
    s_sm->add_option("--target-patches", sm.target_patches)->capture_default_str()->check(CLI::PositiveNumber);
    s_sm->add_option("--out", sm.out, "Output directory [corpus/sim-<policy>]");

    ReportArgs rp;
    auto* s_rp = app.add_subcommand("report", "Markdown report from simulate output directories");
    s_rp->add_option("--in", rp.inputs, "simulate output directory (repeatable)")->required();
    s_rp->add_option("--out", rp.out, "Markdown file [stdout]");

    ServeArgs sv;
    auto* s_sv = app.add_subcommand("serve", "HTTP API for interactive sessions");
    s_sv->add_option("--data-root", sv.data_root, "Data root [$WSIC_DATA_ROOT or .]");
    s_sv->add_option("--host", sv.host)->capture_default_str();
    s_sv->add_option("--port", sv.port, "Port, 0 for an ephemeral one")->capture_default_str()->check(CLI::Range(0, 65535));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e, out, err);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (s_gc->parsed()) cmd_gen_corpus(gc, out);
        else if (s_gs->parsed()) cmd_gen_scribbles(gs, out);
        else if (s_tr->parsed()) cmd_train(tr, out);
        else if (s_pr->parsed()) cmd_predict(pr, out);
        else if (s_tn->parsed()) cmd_tune(tn, out);
        else if (s_sm->parsed()) cmd_simulate(sm, out);
        else if (s_rp->parsed()) cmd_report(rp, out);
        else if (s_sv->parsed()) return cmd_serve(sv, out, err);
    } catch (const Error& e) {
        err << "wsic: error: " << to_string(e.code()) << ": " << e.what() << "\n";
        return kExitRuntime;
    } catch (const std::exception& e) {
        err << "wsic: error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}

} // namespace wsic::app
