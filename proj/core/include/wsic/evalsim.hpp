#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "wsic/corrector.hpp"

namespace wsic {

struct Confusion {
    long tp = 0;
    long fp = 0;
    long tn = 0;
    long fn = 0;

    long total() const { return tp + fp + tn + fn; }
};

Confusion confusion(const std::vector<int>& predicted, const std::vector<int>& truth);

/// Undefined ratios are empty, never zero.
struct Metrics {
    std::optional<double> balanced_accuracy;
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> f1;
};

/// F1 = 2TP / (2TP + FP + FN), equal to 2PR / (P + R) where both exist and
/// defined whenever any positive is predicted or present.
Metrics wsi_metrics(const Confusion& c);

double pearson(const std::vector<double>& xs, const std::vector<double>& ys);

/// Everything the simulator needs about one slide.
struct SlideCase {
    std::string slide_id;
    PatchGrid grid;
    std::vector<McRecord> records;
    std::vector<int> truth; // per patch id
    double separability = 0.0;
};

struct PassRecord {
    int pass = 0;
    Confusion confusion;
    Metrics metrics;
    int n_epoch = 0; // 0 for pass 0 and carried passes
    int fp_patches = 0; // corrected in this pass
    int fn_patches = 0;
    bool carried = false; // copied forward after an early stop
    double elapsed_ms = 0.0;
};

struct RunResult {
    std::string slide_id;
    int run = 0;
    std::uint64_t seed = 0;
    PolicyMode mode = PolicyMode::Naive;
    std::vector<PassRecord> passes; // n_pass + 1 entries
    bool early_stop = false;
    int stop_pass = -1; // first pass that found no misclassified patch
    double h_wsi = 0.0;
};

struct SimulationConfig {
    CorrectionPolicy policy;
    SessionOptions session;
    int target_patches = 10;
    ScribbleParams scribble;
};

/// Largest misclassified component of `kind` on the grid (8-connected cells),
/// as patch ids; empty when there is none.
std::vector<int> largest_error_component(const PatchGrid& grid, const std::vector<int>& predicted,
                                         const std::vector<int>& truth, ScribbleKind kind);

RunResult simulate_run(const SlideCase& slide, const SimulationConfig& config, int run, std::uint64_t seed);

struct PassSummary {
    int pass = 0;
    double balanced_accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    // Mean over slides of the standard deviation across runs.
    double balanced_accuracy_std = 0.0;
    double precision_std = 0.0;
    double recall_std = 0.0;
    double f1_std = 0.0;
    int undefined = 0; // (slide, run) metric values skipped as undefined
};

struct ExperimentTable {
    PolicyMode mode = PolicyMode::Naive;
    int n_epoch_star = 0;
    int runs = 0;
    std::vector<PassSummary> passes;
};

ExperimentTable summarize(const std::vector<RunResult>& results, const CorrectionPolicy& policy, int runs);

struct Experiment {
    std::vector<RunResult> results;
    ExperimentTable table;
};

/// Runs `runs` seeded simulations per slide. Run r on slide s uses
/// derive_seed(derive_seed(seed, hash(slide id)), r).
Experiment corpus_experiment(const std::vector<SlideCase>& slides, const SimulationConfig& config, int runs,
                             std::uint64_t seed);

/// Fraction of runs whose F1 never decreases across passes.
double non_decreasing_fraction(const std::vector<RunResult>& results);

struct TuneResult {
    int n_epoch_star = 0;
    std::vector<std::pair<int, double>> scores; // candidate -> mean final-pass F1
};

/// Naive-mode experiment per candidate; the smallest best candidate wins.
TuneResult tune_n_epoch(const std::vector<int>& candidates, const std::vector<SlideCase>& slides,
                        const SimulationConfig& config, int runs, std::uint64_t seed);

nlohmann::json metrics_to_json(const Metrics& m);
nlohmann::json run_to_json(const RunResult& r, bool with_timing = false);
nlohmann::json table_to_json(const ExperimentTable& t);
std::string runs_to_csv(const std::vector<RunResult>& results);
std::string table_to_csv(const ExperimentTable& t);
std::string table_to_markdown(const ExperimentTable& t, const std::string& title);
ExperimentTable table_from_json(const nlohmann::json& j);
RunResult run_from_json(const nlohmann::json& j);

} // namespace wsic
