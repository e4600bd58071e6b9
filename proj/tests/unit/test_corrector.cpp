#include <gtest/gtest.h>

#include <functional>
#include <set>

#include <nlohmann/json.hpp>

#include "oracles/oracles.hpp"
#include "support/synthetic_session.hpp"
#include "wsic/corrector.hpp"
#include "wsic/error.hpp"

using namespace wsic;
using wsic::testing::full_grid;
using wsic::testing::toy_records;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected an error";
    return ErrorCode::Io;
}

constexpr double kPi = 3.14159265358979323846;

} // namespace

TEST(NEpoch, Arithmetic) {
    CorrectionPolicy u{PolicyMode::Uncertainty, 30, 4};
    EXPECT_EQ(n_epoch_for(u, 0.0), 1);
    EXPECT_EQ(n_epoch_for(u, 0.5), 30);
    EXPECT_EQ(n_epoch_for(u, 1.0), 60);
    CorrectionPolicy n{PolicyMode::Naive, 30, 4};
    for (double h : {0.0, 0.3, 1.0}) EXPECT_EQ(n_epoch_for(n, h), 30);
    EXPECT_THROW(n_epoch_for(u, 1.2), Error);
    EXPECT_THROW(n_epoch_for(u, -0.1), Error);
    EXPECT_THROW(n_epoch_for(CorrectionPolicy{PolicyMode::Naive, 0, 4}, 0.5), Error);
    EXPECT_EQ(code_of([] { policy_mode_from_string("greedy"); }), ErrorCode::UnknownPolicy);
}

TEST(Svm, SeparableToysMatchMaxMarginDirection) {
    Rng rng(2024);
    int checked = 0;
    while (checked < 50) {
        std::vector<std::array<double, 2>> pts;
        std::vector<std::vector<double>> xs;
        std::vector<int> ys{1, 1, -1, -1};
        const double a = 2 * kPi * uniform01(rng);
        const double gap = 0.5 + uniform01(rng);
        for (int i = 0; i < 4; ++i) {
            // Offset along a random normal so the classes are separable.
            const double along = 4.0 * uniform01(rng) - 2.0;
            const double across = ys[i] * (gap + uniform01(rng)) + 0.5;
            const double x = across * std::cos(a) - along * std::sin(a);
            const double y = across * std::sin(a) + along * std::cos(a);
            pts.push_back({x, y});
            xs.push_back({x, y});
        }
        const double oracle_angle = oracle::max_margin_angle_2d(pts, ys);
        ASSERT_FALSE(std::isnan(oracle_angle));
        // Regularisation strong enough that the hinge optimum is the hard-margin
        // separator and 800 steps reach it.
        SvmModel init;
        init.eta = 0.05;
        init.lambda = 0.1;
        const SvmModel m = svm_fit_epochs(init, xs, ys, 200, 7 + checked);
        const SvmModel d = svm_fit_epochs(SvmModel{}, xs, ys, 200, 7 + checked);
        for (int i = 0; i < 4; ++i) {
            EXPECT_GT(ys[i] * m.margin(xs[i]), 0.0);
            EXPECT_GT(ys[i] * d.margin(xs[i]), 0.0);
        }
        double diff = std::abs(std::atan2(m.w[1], m.w[0]) - oracle_angle);
        diff = std::fmod(diff, 2 * kPi);
        diff = std::min(diff, 2 * kPi - diff);
        EXPECT_LT(diff * 180 / kPi, 15.0) << "toy " << checked;
        ++checked;
    }
}

TEST(Svm, DeterministicAndValidated) {
    std::vector<std::vector<double>> xs{{0, 0}, {1, 1}, {3, 3}, {4, 4}};
    std::vector<int> ys{-1, -1, 1, 1};
    const auto a = svm_fit_epochs(SvmModel{}, xs, ys, 20, 5);
    const auto b = svm_fit_epochs(SvmModel{}, xs, ys, 20, 5);
    EXPECT_EQ(a.w, b.w);
    EXPECT_EQ(a.b, b.b);
    EXPECT_THROW(svm_fit_epochs(SvmModel{}, xs, ys, 0, 5), Error);
    EXPECT_EQ(code_of([&] { svm_fit_epochs(SvmModel{}, xs, {1, 1, 1, 1}, 5, 5); }), ErrorCode::SingleClass);
}

TEST(Svm, HingeObjectiveMostlyNonIncreasing) {
    const auto grid = full_grid(512, 512);
    std::vector<int> truth;
    const auto recs = toy_records(grid, truth, 3, 2.0);
    std::vector<std::vector<double>> xs;
    std::vector<int> ys;
    for (std::size_t i = 0; i < recs.size(); ++i) {
        xs.push_back(recs[i].features);
        ys.push_back(truth[i] ? 1 : -1);
    }
    SvmModel m;
    double prev = 1e300;
    int ok = 0, total = 0;
    for (int e = 0; e < 40; ++e) {
        m = svm_fit_epochs(m, xs, ys, 1, 100 + e);
        const double obj = svm_objective(m, xs, ys);
        if (e > 0) {
            ++total;
            if (obj <= prev + 1e-12) ++ok;
        }
        prev = obj;
    }
    EXPECT_GE(static_cast<double>(ok) / total, 0.9) << ok << "/" << total;
}

TEST(Session, InitCapsConfidentSets) {
    const auto grid = full_grid(1024, 1024);
    ASSERT_GT(grid.size(), 3000u);
    std::vector<int> truth;
    auto recs = toy_records(grid, truth, 1, 2.0, 0.65);
    SessionOptions opt;
    const auto s = init_session(grid, recs, opt);
    EXPECT_EQ(s.init_ids.size(), 2000u);
    EXPECT_EQ(std::count(s.init_labels.begin(), s.init_labels.end(), 1), 1000);
    double min_pos = 1, max_neg = 0, max_rest = 0, min_rest = 1;
    std::set<int> chosen(s.init_ids.begin(), s.init_ids.end());
    for (std::size_t i = 0; i < s.init_ids.size(); ++i) {
        const double sc = recs[s.init_ids[i]].score;
        if (s.init_labels[i] > 0) min_pos = std::min(min_pos, sc);
        else max_neg = std::max(max_neg, sc);
    }
    for (const auto& r : recs) {
        if (chosen.count(r.patch_id)) continue;
        if (r.score > opt.t_thresh) max_rest = std::max(max_rest, r.score);
        else min_rest = std::min(min_rest, r.score);
    }
    EXPECT_GE(min_pos, max_rest);
    EXPECT_LE(max_neg, min_rest);
    EXPECT_GE(s.init_accuracy, 0.99);
    EXPECT_EQ(s.heatmap[5], recs[5].score);
    EXPECT_EQ(s.pass_count, 0);
}

TEST(Session, SmallSetsUseEverything) {
    const auto grid = full_grid(176, 176);
    std::vector<McRecord> recs;
    for (const Patch& p : grid.patches) {
        McRecord r;
        r.patch_id = p.id;
        r.features = {p.id % 2 ? 1.0 : -1.0, 0.5};
        r.score = p.id % 2 ? 0.9 : 0.1;
        r.mc_scores = {r.score, r.score};
        recs.push_back(r);
    }
    ASSERT_EQ(grid.size(), 100u);
    const auto s = init_session(grid, recs, SessionOptions{});
    EXPECT_EQ(s.init_ids.size(), 100u);
    EXPECT_EQ(std::count(s.init_labels.begin(), s.init_labels.end(), 1), 50);
    for (auto& r : recs) r.score = 0.1;
    EXPECT_EQ(code_of([&] { init_session(grid, recs, SessionOptions{}); }), ErrorCode::EmptyConfidentSet);
}

class SessionFixture : public ::testing::Test {
protected:
    void SetUp() override {
        grid = full_grid(512, 512);
        recs = toy_records(grid, truth, 11, 0.7);
        opt.seed = 5;
        opt.calibration = Calibration{0.0, 1.0};
        session = init_session(grid, recs, opt);
    }
    PatchGrid grid;
    std::vector<int> truth;
    std::vector<McRecord> recs;
    SessionOptions opt;
    CorrectionSession session;
    CorrectionPolicy naive{PolicyMode::Naive, 30, 4};
};

TEST_F(SessionFixture, HardCodeDominanceOverRandomPasses) {
    Rng rng(77);
    for (int pass = 0; pass < 10; ++pass) {
        std::vector<Correction> cs;
        std::set<int> used;
        for (int k = 0; k < 2; ++k) {
            Correction c{k == 0 ? ScribbleKind::CorrectiveFp : ScribbleKind::CorrectiveFn, {}};
            for (int j = 0; j < 6; ++j) {
                const int id = static_cast<int>(rng() % grid.size());
                if (used.insert(id).second) c.patch_ids.push_back(id);
            }
            cs.push_back(c);
        }
        const auto policy = pass % 2 ? naive : CorrectionPolicy{PolicyMode::Uncertainty, 30, 4};
        apply_correction(session, cs, policy);
        for (const auto& [id, y] : session.corrections) {
            ASSERT_EQ(session.heatmap[id], y > 0 ? 1.0 : 0.0) << "pass " << pass << " patch " << id;
            ASSERT_EQ(session.predicted_labels()[id], y > 0 ? 1 : 0);
        }
    }
    EXPECT_EQ(session.pass_count, 10);
}

TEST_F(SessionFixture, NaiveUsesReferenceEpochs) {
    for (int pass = 0; pass < 3; ++pass)
        EXPECT_EQ(apply_correction(session, {{ScribbleKind::CorrectiveFp, {pass}}}, naive), 30);
    EXPECT_EQ(session.epochs_used, (std::vector<int>{30, 30, 30}));
}

TEST_F(SessionFixture, LastWriteWins) {
    apply_correction(session, {{ScribbleKind::CorrectiveFp, {42}}}, naive);
    EXPECT_EQ(session.corrections.at(42), -1);
    EXPECT_EQ(session.heatmap[42], 0.0);
    apply_correction(session, {{ScribbleKind::CorrectiveFn, {42}}}, naive);
    EXPECT_EQ(session.corrections.at(42), 1);
    EXPECT_EQ(session.heatmap[42], 1.0);
}

TEST_F(SessionFixture, RejectsBadCorrections) {
    EXPECT_EQ(code_of([&] {
                  apply_correction(session, {{ScribbleKind::CorrectiveFp, {1, 2}}, {ScribbleKind::CorrectiveFn, {2}}},
                                   naive);
              }),
              ErrorCode::ContradictoryCorrection);
    EXPECT_EQ(code_of([&] { apply_correction(session, {{ScribbleKind::CorrectiveFp, {}}}, naive); }),
              ErrorCode::ZeroPatches);
    EXPECT_EQ(code_of([&] { apply_correction(session, {}, naive); }), ErrorCode::NoPendingScribbles);
    EXPECT_EQ(session.pass_count, 0);
    EXPECT_TRUE(session.corrections.empty());
}

TEST_F(SessionFixture, DeterministicAndSnapshotRestores) {
    CorrectionSession twin = init_session(grid, recs, opt);
    const std::vector<Correction> cs{{ScribbleKind::CorrectiveFp, {3, 4, 5}}, {ScribbleKind::CorrectiveFn, {300}}};
    apply_correction(session, cs, naive);
    apply_correction(twin, cs, naive);
    EXPECT_EQ(session.heatmap, twin.heatmap);

    const auto snap = session_snapshot(session);
    const auto restored = restore_session(nlohmann::json::parse(snap.dump()), grid, recs);
    EXPECT_EQ(restored.heatmap, session.heatmap);
    EXPECT_EQ(restored.pass_count, 1);

    apply_correction(session, {{ScribbleKind::CorrectiveFn, {7}}}, naive);
    CorrectionSession again = restore_session(snap, grid, recs);
    apply_correction(again, {{ScribbleKind::CorrectiveFn, {7}}}, naive);
    EXPECT_EQ(again.heatmap, session.heatmap);

    auto bad = snap;
    bad["version"] = 9;
    EXPECT_THROW(restore_session(bad, grid, recs), Error);
}

TEST_F(SessionFixture, FpCorrectionPullsNeighboursDown) {
    // Correcting a band of truly-negative patches should not raise the
    // false-positive count.
    auto count_fp = [&] {
        const auto pred = session.predicted_labels();
        int fp = 0;
        for (std::size_t i = 0; i < pred.size(); ++i) fp += pred[i] == 1 && truth[i] == 0;
        return fp;
    };
    const int before = count_fp();
    Correction c{ScribbleKind::CorrectiveFp, {}};
    for (std::size_t i = 0; i < truth.size() && c.patch_ids.size() < 10; ++i)
        if (truth[i] == 0 && session.predicted_labels()[i] == 1) c.patch_ids.push_back(static_cast<int>(i));
    ASSERT_FALSE(c.patch_ids.empty());
    apply_correction(session, {c}, naive);
    EXPECT_LT(count_fp(), before);
}

TEST(Session, EmptyTumorSetFallsBackToOneEpoch) {
    const auto grid = full_grid(176, 176);
    std::vector<McRecord> recs;
    for (const Patch& p : grid.patches) {
        McRecord r;
        r.patch_id = p.id;
        r.features = {p.id % 2 ? 1.0 : -1.0};
        r.score = p.id % 2 ? 0.4 : 0.1; // above t, but MC means below it
        r.mc_scores = {0.1, 0.1};
        recs.push_back(r);
    }
    auto s = init_session(grid, recs, SessionOptions{});
    EXPECT_TRUE(s.empty_t);
    ASSERT_TRUE(s.h_star.has_value());
    EXPECT_EQ(apply_correction(s, {{ScribbleKind::CorrectiveFn, {0}}}, CorrectionPolicy{PolicyMode::Uncertainty, 30, 4}),
              1);
}

TEST(WarmStart, ReproducesBackboneDecision) {
    // Scores that are an exact logistic of a linear function of the features.
    const auto grid = full_grid(512, 512);
    std::vector<int> truth;
    auto recs = toy_records(grid, truth, 21, 1.0);
    const std::vector<double> w{0.8, -0.3, 0.5, 0.0, 1.1, -0.7, 0.2, 0.4};
    for (auto& r : recs) {
        double z = -0.4;
        for (int k = 0; k < 8; ++k) z += w[k] * r.features[k];
        r.score = 1.0 / (1.0 + std::exp(-z));
    }
    const double t = 0.3;
    const SvmModel m = warm_start_svm(recs, t, 2.0);
    for (int k = 0; k < 8; ++k) EXPECT_NEAR(m.w[k], 2.0 * w[k], 1e-6);
    EXPECT_NEAR(m.b, 2.0 * (-0.4 - std::log(t / (1 - t))), 1e-6);

    SessionOptions opt;
    opt.t_thresh = t;
    const auto s = init_session(grid, recs, opt);
    EXPECT_EQ(s.init_epochs, 0);
    EXPECT_DOUBLE_EQ(s.init_accuracy, 1.0);
    for (const auto& r : s.records) EXPECT_EQ(s.svm.margin(r.features) > 0, r.score > t);
    EXPECT_THROW(warm_start_svm(recs, t, 0.0), Error);
}

TEST(WarmStart, ZeroScaleStartsFromZero) {
    const auto grid = full_grid(512, 512);
    std::vector<int> truth;
    const auto recs = toy_records(grid, truth, 4, 2.0);
    SessionOptions opt;
    opt.warm_start_scale = 0.0;
    const auto s = init_session(grid, recs, opt);
    EXPECT_GE(s.init_epochs, 1);
    EXPECT_GE(s.init_accuracy, 0.99);
}
