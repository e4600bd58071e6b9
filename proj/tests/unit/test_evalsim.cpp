#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "oracles/oracles.hpp"
#include "support/synthetic_session.hpp"
#include "wsic/error.hpp"
#include "wsic/evalsim.hpp"

using namespace wsic;
using wsic::testing::full_grid;
using wsic::testing::toy_records;

namespace {

SlideCase toy_case(std::uint64_t seed, double separation, const std::string& id = "toy") {
    SlideCase c;
    c.slide_id = id;
    c.grid = full_grid(512, 512);
    c.grid.slide_id = id;
    c.records = toy_records(c.grid, c.truth, seed, separation);
    return c;
}

SimulationConfig calibrated() {
    SimulationConfig cfg;
    cfg.session.calibration = Calibration{0.0, 1.0};
    return cfg;
}

} // namespace

TEST(Confusion, HandCases) {
    const auto c = confusion({1, 1, 0, 0, 1}, {1, 0, 0, 1, 1});
    EXPECT_EQ(c.tp, 2);
    EXPECT_EQ(c.fp, 1);
    EXPECT_EQ(c.tn, 1);
    EXPECT_EQ(c.fn, 1);
    const auto all = confusion({1, 1, 1, 1}, {1, 0, 1, 0});
    EXPECT_EQ(all.tn, 0);
    EXPECT_EQ(all.fp, 2);
    EXPECT_THROW(confusion({1}, {1, 0}), Error);
}

TEST(Metrics, HandComputation) {
    const auto m = wsi_metrics({90, 20, 80, 10});
    EXPECT_NEAR(*m.recall, 0.900, 1e-4);
    EXPECT_NEAR(*m.precision, 0.8182, 1e-4);
    EXPECT_NEAR(*m.balanced_accuracy, 0.850, 1e-4);
    EXPECT_NEAR(*m.f1, 0.8571, 1e-4);
    const auto p = wsi_metrics({5, 0, 7, 0});
    EXPECT_DOUBLE_EQ(*p.f1, 1.0);
    EXPECT_DOUBLE_EQ(*p.balanced_accuracy, 1.0);
    EXPECT_DOUBLE_EQ(*p.precision, 1.0);
}

TEST(Metrics, UndefinedIsMarkedNotZero) {
    const auto none_predicted = wsi_metrics({0, 0, 8, 2});
    EXPECT_FALSE(none_predicted.precision.has_value());
    EXPECT_DOUBLE_EQ(*none_predicted.recall, 0.0);
    EXPECT_DOUBLE_EQ(*none_predicted.f1, 0.0);
    const auto no_tumor = wsi_metrics({0, 0, 10, 0});
    EXPECT_FALSE(no_tumor.recall.has_value());
    EXPECT_FALSE(no_tumor.balanced_accuracy.has_value());
    EXPECT_FALSE(no_tumor.f1.has_value());
    const auto json = metrics_to_json(no_tumor);
    EXPECT_TRUE(json["f1"].is_null());
}

TEST(Metrics, PerfectIffNoErrors) {
    Rng rng(8);
    for (int i = 0; i < 5000; ++i) {
        const Confusion c{1 + static_cast<long>(rng() % 5), static_cast<long>(rng() % 3), 1 + static_cast<long>(rng() % 5),
                          static_cast<long>(rng() % 3)};
        const auto m = wsi_metrics(c);
        const bool perfect = c.fp == 0 && c.fn == 0;
        EXPECT_EQ(*m.balanced_accuracy == 1.0, perfect);
        EXPECT_EQ(*m.f1 == 1.0, perfect);
        if (m.precision && *m.precision + *m.recall > 0)
            EXPECT_NEAR(*m.f1, 2 * *m.precision * *m.recall / (*m.precision + *m.recall), 1e-12);
    }
}

TEST(Pearson, ClosedForms) {
    EXPECT_NEAR(pearson({1, 2, 3, 4}, {3, 5, 7, 9}), 1.0, 1e-12);
    EXPECT_NEAR(pearson({1, 2, 3, 4}, {-1, -2, -3, -4}), -1.0, 1e-12);
    EXPECT_NEAR(pearson({0, 1, 2}, {0, 1, 4}), 0.9608, 1e-3);
    EXPECT_THROW(pearson({1, 1, 1}, {1, 2, 3}), Error);
    EXPECT_THROW(pearson({1, 2}, {1, 2}), Error);
}

TEST(Pearson, MatchesOracleAndInvariances) {
    Rng rng(12);
    for (int t = 0; t < 200; ++t) {
        std::vector<double> x, y;
        for (int i = 0; i < 30; ++i) {
            x.push_back(standard_normal(rng));
            y.push_back(0.5 * x.back() + standard_normal(rng));
        }
        const double r = pearson(x, y);
        EXPECT_NEAR(r, oracle::pearson_two_pass(x, y), 1e-12);
        EXPECT_NEAR(pearson(y, x), r, 1e-12);
        std::vector<double> ax, nx;
        for (double v : x) {
            ax.push_back(3 * v + 7);
            nx.push_back(-2 * v + 1);
        }
        EXPECT_NEAR(pearson(ax, y), r, 1e-12);
        EXPECT_NEAR(pearson(nx, y), -r, 1e-12);
    }
}

TEST(ErrorComponents, LargestPerKind) {
    const auto grid = full_grid(176, 176); // 10 x 10 cells
    std::vector<int> truth(grid.size(), 0), pred(grid.size(), 0);
    // FP block of 4 and FP single; FN pair.
    for (int r : {1, 2})
        for (int c : {1, 2}) pred[grid.at(r, c)] = 1;
    pred[grid.at(8, 8)] = 1;
    truth[grid.at(5, 0)] = truth[grid.at(5, 1)] = 1;
    const auto fp = largest_error_component(grid, pred, truth, ScribbleKind::CorrectiveFp);
    EXPECT_EQ(fp.size(), 4u);
    const auto fn = largest_error_component(grid, pred, truth, ScribbleKind::CorrectiveFn);
    EXPECT_EQ(fn, (std::vector<int>{grid.at(5, 0), grid.at(5, 1)}));
    EXPECT_TRUE(largest_error_component(grid, truth, truth, ScribbleKind::CorrectiveFp).empty());
}

TEST(Simulate, PerfectSlideStopsEarly) {
    SlideCase c = toy_case(3, 1.0);
    for (auto& r : c.records) r.score = c.truth[r.patch_id] ? 0.9 : 0.1;
    const auto run = simulate_run(c, calibrated(), 0, 5);
    ASSERT_EQ(run.passes.size(), 5u);
    EXPECT_TRUE(run.early_stop);
    EXPECT_EQ(run.stop_pass, 1);
    for (const auto& p : run.passes) EXPECT_DOUBLE_EQ(*p.metrics.f1, 1.0);
    for (std::size_t i = 1; i < run.passes.size(); ++i) {
        EXPECT_TRUE(run.passes[i].carried);
        EXPECT_EQ(run.passes[i].n_epoch, 0);
    }
    const auto table = summarize({run}, calibrated().policy, 1);
    for (const auto& p : table.passes) {
        EXPECT_DOUBLE_EQ(p.f1, 1.0);
        EXPECT_DOUBLE_EQ(p.balanced_accuracy, 1.0);
        EXPECT_DOUBLE_EQ(p.f1_std, 0.0);
    }
}

TEST(Simulate, CorrectsAndIsDeterministic) {
    const SlideCase c = toy_case(9, 0.6);
    const auto a = simulate_run(c, calibrated(), 0, 77);
    const auto b = simulate_run(c, calibrated(), 0, 77);
    EXPECT_EQ(run_to_json(a).dump(), run_to_json(b).dump());
    ASSERT_EQ(a.passes.size(), 5u);
    for (int p = 1; p <= 4; ++p) {
        EXPECT_FALSE(a.passes[p].carried);
        EXPECT_EQ(a.passes[p].n_epoch, 30);
        EXPECT_GT(a.passes[p].fp_patches + a.passes[p].fn_patches, 0);
        EXPECT_LE(a.passes[p].fp_patches, 10);
        EXPECT_LE(a.passes[p].fn_patches, 10);
    }
    EXPECT_GT(*a.passes[4].metrics.f1, *a.passes[0].metrics.f1);
    const auto other = simulate_run(c, calibrated(), 0, 78);
    EXPECT_NE(run_to_json(a).dump(), run_to_json(other).dump());
}

TEST(Experiment, TableAggregatesAndRoundTrips) {
    const std::vector<SlideCase> slides{toy_case(1, 0.6, "a"), toy_case(2, 0.8, "b")};
    auto cfg = calibrated();
    cfg.policy.mode = PolicyMode::Uncertainty;
    const auto e = corpus_experiment(slides, cfg, 3, 4);
    ASSERT_EQ(e.results.size(), 6u);
    ASSERT_EQ(e.table.passes.size(), 5u);
    double manual = 0;
    for (const auto& r : e.results) manual += *r.passes[2].metrics.f1;
    EXPECT_NEAR(e.table.passes[2].f1, manual / 6, 1e-12);
    EXPECT_EQ(e.table.mode, PolicyMode::Uncertainty);

    const auto again = corpus_experiment(slides, cfg, 3, 4);
    EXPECT_EQ(table_to_json(again.table).dump(), table_to_json(e.table).dump());
    EXPECT_EQ(table_to_json(table_from_json(table_to_json(e.table))).dump(), table_to_json(e.table).dump());
    EXPECT_EQ(run_to_json(run_from_json(run_to_json(e.results[3]))).dump(), run_to_json(e.results[3]).dump());

    const auto csv = runs_to_csv(e.results);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 6 * 5);
    const auto md = table_to_markdown(e.table, "Uncertainty policy");
    EXPECT_NE(md.find("| rough |"), std::string::npos);
    EXPECT_NE(md.find("F1 score (%)"), std::string::npos);
    EXPECT_GE(non_decreasing_fraction(e.results), 0.0);
}

TEST(Tune, SingleCandidateAndTieRule) {
    const std::vector<SlideCase> slides{toy_case(1, 0.6)};
    const auto one = tune_n_epoch({7}, slides, calibrated(), 1, 3);
    EXPECT_EQ(one.n_epoch_star, 7);
    ASSERT_EQ(one.scores.size(), 1u);
    SlideCase perfect = toy_case(3, 1.0);
    for (auto& r : perfect.records) r.score = perfect.truth[r.patch_id] ? 0.9 : 0.1;
    const auto tie = tune_n_epoch({50, 5, 20}, {perfect}, calibrated(), 1, 3);
    EXPECT_EQ(tie.n_epoch_star, 5);
    EXPECT_THROW(tune_n_epoch({}, slides, calibrated(), 1, 3), Error);
}
