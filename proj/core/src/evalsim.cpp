#include "wsic/evalsim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "wsic/error.hpp"
#include "wsic/imageops.hpp"
#include "wsic/rng.hpp"

namespace wsic {

Confusion confusion(const std::vector<int>& predicted, const std::vector<int>& truth) {
    require(predicted.size() == truth.size(), ErrorCode::InvalidArgument, "prediction and truth lengths differ");
    Confusion c;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        if (predicted[i]) (truth[i] ? c.tp : c.fp)++;
        else (truth[i] ? c.fn : c.tn)++;
    }
    return c;
}

Metrics wsi_metrics(const Confusion& c) {
    Metrics m;
    const auto ratio = [](long num, long den) -> std::optional<double> {
        if (den <= 0) return std::nullopt;
        return static_cast<double>(num) / static_cast<double>(den);
    };
    m.recall = ratio(c.tp, c.tp + c.fn);
    m.precision = ratio(c.tp, c.tp + c.fp);
    const auto specificity = ratio(c.tn, c.tn + c.fp);
    if (m.recall && specificity) m.balanced_accuracy = 0.5 * (*m.recall + *specificity);
    m.f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn);
    return m;
}

double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
    require(xs.size() == ys.size(), ErrorCode::InvalidArgument, "pearson needs equal-length series");
    require(xs.size() >= 3, ErrorCode::InvalidArgument, "pearson needs at least 3 points");
    const double n = static_cast<double>(xs.size());
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dx = xs[i] - mx, dy = ys[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    require(sxx > 0.0 && syy > 0.0, ErrorCode::DegenerateInput, "pearson is undefined for a constant series");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<int> largest_error_component(const PatchGrid& grid, const std::vector<int>& predicted,
                                         const std::vector<int>& truth, ScribbleKind kind) {
    const int want_pred = kind == ScribbleKind::CorrectiveFp ? 1 : 0;
    BinaryMask cells(grid.cols, grid.rows);
    bool any = false;
    for (const Patch& p : grid.patches) {
        if (predicted[p.id] == want_pred && truth[p.id] != want_pred) {
            cells.set(p.col, p.row, true);
            any = true;
        }
    }
    if (!any) return {};
    const auto comps = connected_components(cells);
    std::vector<int> ids;
    for (const Pixel& px : comps.front().pixels) ids.push_back(grid.at(px.y, px.x));
    std::sort(ids.begin(), ids.end());
    return ids;
}

namespace {

std::uint64_t string_seed(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

PassRecord record_pass(int pass, const CorrectionSession& session, const std::vector<int>& truth) {
    PassRecord r;
    r.pass = pass;
    r.confusion = confusion(session.predicted_labels(), truth);
    r.metrics = wsi_metrics(r.confusion);
    return r;
}

} // namespace

RunResult simulate_run(const SlideCase& slide, const SimulationConfig& config, int run, std::uint64_t seed) {
    config.policy.validate();
    require(slide.truth.size() == slide.grid.size(), ErrorCode::InvalidArgument, "slide truth does not cover the grid");
    RunResult result;
    result.slide_id = slide.slide_id;
    result.run = run;
    result.seed = seed;
    result.mode = config.policy.mode;

    SessionOptions opts = config.session;
    opts.seed = derive_seed(seed, 1);
    CorrectionSession session = init_session(slide.grid, slide.records, opts);
    result.h_wsi = session.h_wsi;
    result.passes.push_back(record_pass(0, session, slide.truth));

    for (int pass = 1; pass <= config.policy.n_pass; ++pass) {
        if (result.early_stop) {
            PassRecord carried = result.passes.back();
            carried.pass = pass;
            carried.carried = true;
            carried.n_epoch = 0;
            carried.fp_patches = carried.fn_patches = 0;
            carried.elapsed_ms = 0.0;
            result.passes.push_back(carried);
            continue;
        }
        const auto t0 = std::chrono::steady_clock::now();
        const auto predicted = session.predicted_labels();
        std::vector<Correction> corrections;
        int fp = 0, fn = 0;
        for (ScribbleKind kind : {ScribbleKind::CorrectiveFp, ScribbleKind::CorrectiveFn}) {
            const auto region = largest_error_component(slide.grid, predicted, slide.truth, kind);
            if (region.empty()) continue;
            ScribbleParams params = config.scribble;
            params.seed = derive_seed(seed, 16 * static_cast<std::uint64_t>(pass) + (kind == ScribbleKind::CorrectiveFn));
            const Scribble s = corrective_scribble(region, slide.grid, config.target_patches, kind, params);
            auto ids = resolve_scribble_patches(slide.grid, s.polyline);
            // The scribble stays inside the error region; guard anyway.
            std::erase_if(ids, [&](int id) { return !std::binary_search(region.begin(), region.end(), id); });
            if (ids.empty()) ids.push_back(region.front());
            (kind == ScribbleKind::CorrectiveFp ? fp : fn) = static_cast<int>(ids.size());
            corrections.push_back({kind, std::move(ids)});
        }
        if (corrections.empty()) {
            result.early_stop = true;
            result.stop_pass = pass;
            PassRecord carried = result.passes.back();
            carried.pass = pass;
            carried.carried = true;
            carried.n_epoch = 0;
            carried.elapsed_ms = 0.0;
            result.passes.push_back(carried);
            continue;
        }
        const int epochs = apply_correction(session, corrections, config.policy);
        PassRecord r = record_pass(pass, session, slide.truth);
        r.n_epoch = epochs;
        r.fp_patches = fp;
        r.fn_patches = fn;
        r.elapsed_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        result.passes.push_back(r);
    }
    return result;
}

ExperimentTable summarize(const std::vector<RunResult>& results, const CorrectionPolicy& policy, int runs) {
    ExperimentTable t;
    t.mode = policy.mode;
    t.n_epoch_star = policy.n_epoch_star;
    t.runs = runs;
    if (results.empty()) return t;
    const std::size_t n_pass = results.front().passes.size();

    // Group by slide in sorted order so the reduction does not depend on run order.
    std::vector<const RunResult*> sorted;
    for (const auto& r : results) {
        require(r.passes.size() == n_pass, ErrorCode::InvalidArgument, "runs have different pass counts");
        sorted.push_back(&r);
    }
    std::sort(sorted.begin(), sorted.end(), [](const RunResult* a, const RunResult* b) {
        return a->slide_id != b->slide_id ? a->slide_id < b->slide_id : a->run < b->run;
    });

    using Getter = std::optional<double> (*)(const Metrics&);
    const Getter getters[4] = {
        [](const Metrics& m) { return m.balanced_accuracy; },
        [](const Metrics& m) { return m.precision; },
        [](const Metrics& m) { return m.recall; },
        [](const Metrics& m) { return m.f1; },
    };
    for (std::size_t p = 0; p < n_pass; ++p) {
        PassSummary s;
        s.pass = static_cast<int>(p);
        double means[4] = {}, stds[4] = {};
        for (int g = 0; g < 4; ++g) {
            double total = 0.0, std_total = 0.0;
            long count = 0, slides = 0;
            std::size_t i = 0;
            while (i < sorted.size()) {
                std::size_t j = i;
                std::vector<double> vals;
                while (j < sorted.size() && sorted[j]->slide_id == sorted[i]->slide_id) {
                    if (auto v = getters[g](sorted[j]->passes[p].metrics)) vals.push_back(*v);
                    else if (g == 3) ++s.undefined;
                    ++j;
                }
                if (!vals.empty()) {
                    const double m = std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(vals.size());
                    double ss = 0.0;
                    for (double v : vals) ss += (v - m) * (v - m);
                    total += std::accumulate(vals.begin(), vals.end(), 0.0);
                    count += static_cast<long>(vals.size());
                    std_total += std::sqrt(ss / static_cast<double>(vals.size()));
                    ++slides;
                }
                i = j;
            }
            means[g] = count ? total / static_cast<double>(count) : std::nan("");
            stds[g] = slides ? std_total / static_cast<double>(slides) : std::nan("");
        }
        s.balanced_accuracy = means[0];
        s.precision = means[1];
        s.recall = means[2];
        s.f1 = means[3];
        s.balanced_accuracy_std = stds[0];
        s.precision_std = stds[1];
        s.recall_std = stds[2];
        s.f1_std = stds[3];
        t.passes.push_back(s);
    }
    return t;
}

Experiment corpus_experiment(const std::vector<SlideCase>& slides, const SimulationConfig& config, int runs,
                             std::uint64_t seed) {
    require(runs >= 1, ErrorCode::InvalidArgument, "runs must be >= 1");
    require(!slides.empty(), ErrorCode::InvalidArgument, "corpus has no slides");
    Experiment e;
    for (const auto& slide : slides) {
        const std::uint64_t slide_seed = derive_seed(seed, string_seed(slide.slide_id));
        for (int r = 0; r < runs; ++r)
            e.results.push_back(simulate_run(slide, config, r, derive_seed(slide_seed, static_cast<std::uint64_t>(r))));
    }
    e.table = summarize(e.results, config.policy, runs);
    return e;
}

double non_decreasing_fraction(const std::vector<RunResult>& results) {
    if (results.empty()) return 0.0;
    long ok = 0;
    for (const auto& r : results) {
        bool mono = true;
        for (std::size_t p = 1; p < r.passes.size(); ++p) {
            const auto& a = r.passes[p - 1].metrics.f1;
            const auto& b = r.passes[p].metrics.f1;
            const double fa = a.value_or(0.0), fb = b.value_or(0.0);
            if (fb < fa - 1e-12) mono = false;
        }
        ok += mono;
    }
    return static_cast<double>(ok) / static_cast<double>(results.size());
}

TuneResult tune_n_epoch(const std::vector<int>& candidates, const std::vector<SlideCase>& slides,
                        const SimulationConfig& config, int runs, std::uint64_t seed) {
    require(!candidates.empty(), ErrorCode::InvalidArgument, "candidate grid is empty");
    TuneResult out;
    double best = -1.0;
    std::vector<int> sorted = candidates;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    for (int c : sorted) {
        SimulationConfig cfg = config;
        cfg.policy.mode = PolicyMode::Naive;
        cfg.policy.n_epoch_star = c;
        const auto e = corpus_experiment(slides, cfg, runs, seed);
        const double f1 = e.table.passes.back().f1;
        out.scores.emplace_back(c, f1);
        if (f1 > best) {
            best = f1;
            out.n_epoch_star = c;
        }
    }
    return out;
}

namespace {

nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::optional<double> opt_from(const nlohmann::json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<double>();
}

std::string csv_value(const std::optional<double>& v) {
    if (!v) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", *v);
    return buf;
}

std::string fixed(double v, int digits) {
    if (std::isnan(v)) return "n/a";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

} // namespace

nlohmann::json metrics_to_json(const Metrics& m) {
    return {{"balanced_accuracy", opt_json(m.balanced_accuracy)},
            {"precision", opt_json(m.precision)},
            {"recall", opt_json(m.recall)},
            {"f1", opt_json(m.f1)}};
}

nlohmann::json run_to_json(const RunResult& r, bool with_timing) {
    nlohmann::json passes = nlohmann::json::array();
    for (const auto& p : r.passes) {
        nlohmann::json j{{"pass", p.pass},
                         {"confusion", {{"tp", p.confusion.tp}, {"fp", p.confusion.fp}, {"tn", p.confusion.tn}, {"fn", p.confusion.fn}}},
                         {"metrics", metrics_to_json(p.metrics)},
                         {"n_epoch", p.n_epoch},
                         {"fp_patches", p.fp_patches},
                         {"fn_patches", p.fn_patches},
                         {"carried", p.carried}};
        if (with_timing) j["elapsed_ms"] = p.elapsed_ms;
        passes.push_back(std::move(j));
    }
    return {{"slide_id", r.slide_id}, {"run", r.run},           {"seed", r.seed},
            {"mode", to_string(r.mode)}, {"early_stop", r.early_stop}, {"stop_pass", r.stop_pass},
            {"h_wsi", r.h_wsi},       {"passes", passes}};
}

RunResult run_from_json(const nlohmann::json& j) {
    RunResult r;
    r.slide_id = j.at("slide_id").get<std::string>();
    r.run = j.at("run").get<int>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.mode = policy_mode_from_string(j.at("mode").get<std::string>());
    r.early_stop = j.at("early_stop").get<bool>();
    r.stop_pass = j.at("stop_pass").get<int>();
    r.h_wsi = j.at("h_wsi").get<double>();
    for (const auto& p : j.at("passes")) {
        PassRecord pr;
        pr.pass = p.at("pass").get<int>();
        const auto& c = p.at("confusion");
        pr.confusion = {c.at("tp").get<long>(), c.at("fp").get<long>(), c.at("tn").get<long>(), c.at("fn").get<long>()};
        const auto& m = p.at("metrics");
        pr.metrics = {opt_from(m.at("balanced_accuracy")), opt_from(m.at("precision")), opt_from(m.at("recall")),
                      opt_from(m.at("f1"))};
        pr.n_epoch = p.at("n_epoch").get<int>();
        pr.fp_patches = p.at("fp_patches").get<int>();
        pr.fn_patches = p.at("fn_patches").get<int>();
        pr.carried = p.at("carried").get<bool>();
        pr.elapsed_ms = p.value("elapsed_ms", 0.0);
        r.passes.push_back(pr);
    }
    return r;
}

nlohmann::json table_to_json(const ExperimentTable& t) {
    nlohmann::json passes = nlohmann::json::array();
    auto num = [](double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); };
    for (const auto& p : t.passes) {
        passes.push_back({{"pass", p.pass},
                          {"balanced_accuracy", num(p.balanced_accuracy)},
                          {"precision", num(p.precision)},
                          {"recall", num(p.recall)},
                          {"f1", num(p.f1)},
                          {"balanced_accuracy_std", num(p.balanced_accuracy_std)},
                          {"precision_std", num(p.precision_std)},
                          {"recall_std", num(p.recall_std)},
                          {"f1_std", num(p.f1_std)},
                          {"undefined", p.undefined}});
    }
    return {{"mode", to_string(t.mode)}, {"n_epoch_star", t.n_epoch_star}, {"runs", t.runs}, {"passes", passes}};
}

ExperimentTable table_from_json(const nlohmann::json& j) {
    ExperimentTable t;
    t.mode = policy_mode_from_string(j.at("mode").get<std::string>());
    t.n_epoch_star = j.at("n_epoch_star").get<int>();
    t.runs = j.at("runs").get<int>();
    auto num = [](const nlohmann::json& v) { return v.is_null() ? std::nan("") : v.get<double>(); };
    for (const auto& p : j.at("passes")) {
        PassSummary s;
        s.pass = p.at("pass").get<int>();
        s.balanced_accuracy = num(p.at("balanced_accuracy"));
        s.precision = num(p.at("precision"));
        s.recall = num(p.at("recall"));
        s.f1 = num(p.at("f1"));
        s.balanced_accuracy_std = num(p.at("balanced_accuracy_std"));
        s.precision_std = num(p.at("precision_std"));
        s.recall_std = num(p.at("recall_std"));
        s.f1_std = num(p.at("f1_std"));
        s.undefined = p.at("undefined").get<int>();
        t.passes.push_back(s);
    }
    return t;
}

std::string runs_to_csv(const std::vector<RunResult>& results) {
    std::ostringstream out;
    out << "slide_id,run,mode,pass,tp,fp,tn,fn,balanced_accuracy,precision,recall,f1,n_epoch,fp_patches,fn_patches,"
           "carried\n";
    for (const auto& r : results) {
        for (const auto& p : r.passes) {
            out << r.slide_id << ',' << r.run << ',' << to_string(r.mode) << ',' << p.pass << ',' << p.confusion.tp
                << ',' << p.confusion.fp << ',' << p.confusion.tn << ',' << p.confusion.fn << ','
                << csv_value(p.metrics.balanced_accuracy) << ',' << csv_value(p.metrics.precision) << ','
                << csv_value(p.metrics.recall) << ',' << csv_value(p.metrics.f1) << ',' << p.n_epoch << ','
                << p.fp_patches << ',' << p.fn_patches << ',' << (p.carried ? 1 : 0) << '\n';
        }
    }
    return out.str();
}

std::string table_to_csv(const ExperimentTable& t) {
    std::ostringstream out;
    out << "mode,pass,balanced_accuracy,balanced_accuracy_std,precision,precision_std,recall,recall_std,f1,f1_std\n";
    for (const auto& p : t.passes) {
        out << to_string(t.mode) << ',' << p.pass << ',' << fixed(p.balanced_accuracy, 6) << ','
            << fixed(p.balanced_accuracy_std, 6) << ',' << fixed(p.precision, 6) << ',' << fixed(p.precision_std, 6)
            << ',' << fixed(p.recall, 6) << ',' << fixed(p.recall_std, 6) << ',' << fixed(p.f1, 6) << ','
            << fixed(p.f1_std, 6) << '\n';
    }
    return out.str();
}

std::string table_to_markdown(const ExperimentTable& t, const std::string& title) {
    auto cell = [](double m, double s) { return fixed(100 * m, 1) + " ± " + fixed(100 * s, 1); };
    std::ostringstream out;
    out << "### " << title << "\n\n"
        << "Policy: " << to_string(t.mode) << ", n_epoch* = " << t.n_epoch_star << ", runs per slide = " << t.runs
        << "\n\n"
        << "| Pass | Balanced accuracy (%) | Precision (%) | Recall (%) | F1 score (%) |\n"
        << "|---|---|---|---|---|\n";
    for (const auto& p : t.passes) {
        out << "| " << (p.pass == 0 ? std::string("rough") : std::to_string(p.pass)) << " | "
            << cell(p.balanced_accuracy, p.balanced_accuracy_std) << " | " << cell(p.precision, p.precision_std)
            << " | " << cell(p.recall, p.recall_std) << " | " << cell(p.f1, p.f1_std) << " |\n";
    }
    return out.str();
}

} // namespace wsic
