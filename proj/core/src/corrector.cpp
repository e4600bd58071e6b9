#include "wsic/corrector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "wsic/error.hpp"
#include "wsic/rng.hpp"
#include "wsic/uncertainty.hpp"

namespace wsic {

double SvmModel::margin(const double* x) const {
    double m = b;
    for (std::size_t i = 0; i < w.size(); ++i) m += w[i] * x[i];
    return m;
}

double SvmModel::margin(const std::vector<double>& x) const {
    require(x.size() == w.size(), ErrorCode::InvalidArgument, "feature dimension does not match the SVM");
    return margin(x.data());
}

void SvmModel::validate() const {
    require(eta > 0.0 && lambda >= 0.0, ErrorCode::InvalidArgument, "SVM needs eta > 0 and lambda >= 0");
    require(std::all_of(w.begin(), w.end(), [](double v) { return std::isfinite(v); }) && std::isfinite(b),
            ErrorCode::InvalidArgument, "SVM parameters must be finite");
}

namespace {

struct Sample {
    const double* x;
    int y;
};

void fit_samples(SvmModel& m, std::vector<Sample>& data, int epochs, Rng& rng) {
    const double shrink = 1.0 - m.eta * m.lambda;
    const std::size_t d = m.w.size();
    for (int e = 0; e < epochs; ++e) {
        for (std::size_t i = data.size(); i > 1; --i) std::swap(data[i - 1], data[rng() % i]);
        for (const Sample& s : data) {
            const double margin = m.margin(s.x);
            for (std::size_t k = 0; k < d; ++k) m.w[k] *= shrink;
            if (s.y * margin < 1.0) {
                const double step = m.eta * s.y;
                for (std::size_t k = 0; k < d; ++k) m.w[k] += step * s.x[k];
                m.b += step;
            }
        }
    }
}

void check_labels(const std::vector<int>& ys) {
    bool pos = false, neg = false;
    for (int y : ys) {
        require(y == 1 || y == -1, ErrorCode::InvalidArgument, "SVM labels must be -1 or +1");
        (y > 0 ? pos : neg) = true;
    }
    require(pos && neg, ErrorCode::SingleClass, "SVM training set must contain both labels");
}

double logistic(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

void refresh_heatmap(CorrectionSession& s) {
    const std::size_t n = s.records.size();
    s.heatmap.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (s.pass_count == 0) s.heatmap[i] = s.records[i].score;
        else if (s.hard_code[i] >= 0) s.heatmap[i] = s.hard_code[i];
        else s.heatmap[i] = logistic(s.svm.margin(s.records[i].features.data()));
    }
}

std::vector<Sample> refit_set(const CorrectionSession& s) {
    std::map<int, int> labels;
    for (std::size_t i = 0; i < s.init_ids.size(); ++i) labels[s.init_ids[i]] = s.init_labels[i];
    for (const auto& [id, y] : s.corrections) labels[id] = y;
    std::vector<Sample> data;
    data.reserve(labels.size());
    for (const auto& [id, y] : labels) data.push_back({s.records[id].features.data(), y});
    return data;
}

} // namespace

SvmModel svm_fit_epochs(SvmModel model, const std::vector<std::vector<double>>& xs, const std::vector<int>& ys,
                        int n_epoch, std::uint64_t seed) {
    require(n_epoch >= 1, ErrorCode::InvalidArgument, "n_epoch must be >= 1");
    require(!xs.empty() && xs.size() == ys.size(), ErrorCode::InvalidArgument,
            "SVM dataset must be non-empty and aligned");
    check_labels(ys);
    if (model.w.empty()) model.w.assign(xs.front().size(), 0.0);
    model.validate();
    std::vector<Sample> data;
    data.reserve(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        require(xs[i].size() == model.w.size(), ErrorCode::InvalidArgument, "feature dimensions differ");
        data.push_back({xs[i].data(), ys[i]});
    }
    Rng rng(seed);
    fit_samples(model, data, n_epoch, rng);
    return model;
}

SvmModel warm_start_svm(const std::vector<McRecord>& records, double t_thresh, double scale) {
    require(!records.empty(), ErrorCode::InvalidArgument, "no records");
    require(scale > 0.0, ErrorCode::InvalidArgument, "warm start scale must be positive");
    const std::size_t d = records.front().features.size();
    const std::size_t n = d + 1; // features plus intercept
    const double offset = std::log(t_thresh / (1.0 - t_thresh));
    std::vector<double> a(n * n, 0.0), rhs(n, 0.0), row(n);
    for (const auto& r : records) {
        require(r.features.size() == d, ErrorCode::InvalidArgument, "records have inconsistent feature dimensions");
        const double p = std::clamp(r.score, 1e-12, 1.0 - 1e-12);
        const double target = std::log(p / (1.0 - p)) - offset;
        std::copy(r.features.begin(), r.features.end(), row.begin());
        row[d] = 1.0;
        for (std::size_t i = 0; i < n; ++i) {
            rhs[i] += row[i] * target;
            for (std::size_t j = 0; j < n; ++j) a[i * n + j] += row[i] * row[j];
        }
    }
    // Tiny ridge keeps dead latent units (all-zero columns) solvable.
    double trace = 0.0;
    for (std::size_t i = 0; i < n; ++i) trace += a[i * n + i];
    for (std::size_t i = 0; i < n; ++i) a[i * n + i] += 1e-9 * trace / static_cast<double>(n) + 1e-12;
    // Gaussian elimination with partial pivoting on the normal equations.
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < n; ++r)
            if (std::abs(a[r * n + c]) > std::abs(a[piv * n + c])) piv = r;
        if (piv != c) {
            for (std::size_t j = 0; j < n; ++j) std::swap(a[c * n + j], a[piv * n + j]);
            std::swap(rhs[c], rhs[piv]);
        }
        for (std::size_t r = c + 1; r < n; ++r) {
            const double f = a[r * n + c] / a[c * n + c];
            if (f == 0.0) continue;
            for (std::size_t j = c; j < n; ++j) a[r * n + j] -= f * a[c * n + j];
            rhs[r] -= f * rhs[c];
        }
    }
    std::vector<double> beta(n);
    for (std::size_t i = n; i-- > 0;) {
        double v = rhs[i];
        for (std::size_t j = i + 1; j < n; ++j) v -= a[i * n + j] * beta[j];
        beta[i] = v / a[i * n + i];
    }
    SvmModel m;
    m.w.assign(beta.begin(), beta.begin() + static_cast<std::ptrdiff_t>(d));
    for (double& v : m.w) v *= scale;
    m.b = beta[d] * scale;
    m.validate();
    return m;
}

double svm_objective(const SvmModel& model, const std::vector<std::vector<double>>& xs, const std::vector<int>& ys) {
    double hinge = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) hinge += std::max(0.0, 1.0 - ys[i] * model.margin(xs[i]));
    double norm = 0.0;
    for (double v : model.w) norm += v * v;
    return hinge / static_cast<double>(xs.size()) + 0.5 * model.lambda * norm;
}

std::string to_string(PolicyMode mode) { return mode == PolicyMode::Naive ? "naive" : "uncertainty"; }

PolicyMode policy_mode_from_string(const std::string& s) {
    if (s == "naive") return PolicyMode::Naive;
    if (s == "uncertainty") return PolicyMode::Uncertainty;
    fail(ErrorCode::UnknownPolicy, "unknown policy mode: " + s);
}

void CorrectionPolicy::validate() const {
    require(n_epoch_star >= 1, ErrorCode::InvalidArgument, "n_epoch* must be >= 1");
    require(n_pass >= 1, ErrorCode::InvalidArgument, "n_pass must be >= 1");
    require(mode == PolicyMode::Naive || mode == PolicyMode::Uncertainty, ErrorCode::UnknownPolicy,
            "unknown policy mode");
}

int n_epoch_for(const CorrectionPolicy& policy, double h_star) {
    policy.validate();
    require(h_star >= 0.0 && h_star <= 1.0, ErrorCode::InvalidArgument, "H* must lie in [0, 1]");
    if (policy.mode == PolicyMode::Naive) return policy.n_epoch_star;
    const long n = std::lround(2.0 * h_star * policy.n_epoch_star);
    return static_cast<int>(std::clamp<long>(n, 1, 2L * policy.n_epoch_star));
}

std::vector<int> CorrectionSession::predicted_labels() const {
    std::vector<int> out(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (pass_count == 0) out[i] = records[i].score > t_thresh ? 1 : 0;
        else if (hard_code[i] >= 0) out[i] = hard_code[i];
        else out[i] = heatmap[i] > 0.5 ? 1 : 0;
    }
    return out;
}

CorrectionSession init_session(const PatchGrid& grid, std::vector<McRecord> records, const SessionOptions& options) {
    require(options.cap >= 1, ErrorCode::InvalidArgument, "cap must be >= 1");
    require(options.t_thresh > 0.0 && options.t_thresh < 1.0, ErrorCode::InvalidArgument,
            "t_thresh must lie in (0, 1)");
    require(records.size() == grid.size() && !records.empty(), ErrorCode::InvalidArgument,
            "records must cover every grid patch");
    std::sort(records.begin(), records.end(), [](const McRecord& a, const McRecord& b) { return a.patch_id < b.patch_id; });
    const std::size_t dim = records.front().features.size();
    for (std::size_t i = 0; i < records.size(); ++i) {
        require(records[i].patch_id == static_cast<int>(i), ErrorCode::InvalidArgument,
                "records must carry patch ids 0..N-1");
        require(records[i].features.size() == dim && dim > 0, ErrorCode::InvalidArgument,
                "records have inconsistent feature dimensions");
    }

    CorrectionSession s;
    s.slide_id = grid.slide_id;
    s.grid = grid;
    s.records = std::move(records);
    s.t_thresh = options.t_thresh;
    s.seed = options.seed;
    s.hard_code.assign(s.records.size(), -1);

    std::vector<int> above, below;
    for (const auto& r : s.records) (r.score > s.t_thresh ? above : below).push_back(r.patch_id);
    require(!above.empty() && !below.empty(), ErrorCode::EmptyConfidentSet,
            "no confident patches on one side of the threshold; slide needs full review");
    auto by_score = [&](bool descending) {
        return [&, descending](int a, int b) {
            const double sa = s.records[a].score, sb = s.records[b].score;
            if (sa != sb) return descending ? sa > sb : sa < sb;
            return a < b;
        };
    };
    const std::size_t cap = static_cast<std::size_t>(options.cap);
    if (above.size() > cap) {
        std::partial_sort(above.begin(), above.begin() + cap, above.end(), by_score(true));
        above.resize(cap);
    }
    if (below.size() > cap) {
        std::partial_sort(below.begin(), below.begin() + cap, below.end(), by_score(false));
        below.resize(cap);
    }
    std::sort(above.begin(), above.end());
    std::sort(below.begin(), below.end());
    for (int id : above) {
        s.init_ids.push_back(id);
        s.init_labels.push_back(1);
    }
    for (int id : below) {
        s.init_ids.push_back(id);
        s.init_labels.push_back(-1);
    }

    s.svm = options.svm_params;
    if (s.svm.w.empty()) {
        require(options.warm_start_scale >= 0.0, ErrorCode::InvalidArgument, "warm start scale must be >= 0");
        if (options.warm_start_scale > 0.0) {
            s.svm = warm_start_svm(s.records, s.t_thresh, options.warm_start_scale);
            s.svm.eta = options.svm_params.eta;
            s.svm.lambda = options.svm_params.lambda;
        } else {
            s.svm.w.assign(dim, 0.0);
            s.svm.b = 0.0;
        }
    }
    require(s.svm.w.size() == dim, ErrorCode::InvalidArgument, "initial SVM dimension does not match the features");
    s.svm.validate();
    std::vector<Sample> data = refit_set(s);
    Rng rng(derive_seed(s.seed, 0));
    auto correct = [&] {
        std::size_t ok = 0;
        for (std::size_t i = 0; i < s.init_ids.size(); ++i)
            if (s.init_labels[i] * s.svm.margin(s.records[s.init_ids[i]].features.data()) > 0) ++ok;
        return ok;
    };
    std::size_t ok = correct();
    while (ok < s.init_ids.size() && s.init_epochs < options.init_epoch_cap) {
        fit_samples(s.svm, data, 1, rng);
        ++s.init_epochs;
        ok = correct();
    }
    s.init_accuracy = static_cast<double>(ok) / static_cast<double>(s.init_ids.size());

    const auto u = wsi_uncertainty(s.records, s.t_thresh);
    s.h_wsi = u.h_wsi;
    s.empty_t = u.empty_t;
    if (s.empty_t) s.h_star = 0.0;
    else if (options.calibration) s.h_star = normalize_h(s.h_wsi, *options.calibration);
    refresh_heatmap(s);
    return s;
}

int session_epochs(const CorrectionSession& session, const CorrectionPolicy& policy) {
    if (policy.mode == PolicyMode::Naive) return n_epoch_for(policy, 0.0);
    require(session.h_star.has_value(), ErrorCode::InvalidArgument,
            "uncertainty policy needs a calibrated session");
    return n_epoch_for(policy, *session.h_star);
}

void check_corrections(const CorrectionSession& session, const std::vector<Correction>& corrections) {
    std::map<int, int> asserted;
    for (const auto& c : corrections) {
        require(c.kind == ScribbleKind::CorrectiveFp || c.kind == ScribbleKind::CorrectiveFn,
                ErrorCode::InvalidArgument, "corrections must be FP or FN scribbles");
        require(!c.patch_ids.empty(), ErrorCode::ZeroPatches, "scribble covers no grid patch");
        const int y = c.kind == ScribbleKind::CorrectiveFn ? 1 : -1;
        for (int id : c.patch_ids) {
            require(id >= 0 && id < static_cast<int>(session.records.size()), ErrorCode::InvalidArgument,
                    "correction references an unknown patch");
            auto [it, inserted] = asserted.emplace(id, y);
            require(inserted || it->second == y, ErrorCode::ContradictoryCorrection,
                    "patch " + std::to_string(id) + " is marked both FP and FN in one pass");
        }
    }
}

int apply_correction(CorrectionSession& session, const std::vector<Correction>& corrections,
                     const CorrectionPolicy& policy) {
    policy.validate();
    require(!corrections.empty(), ErrorCode::NoPendingScribbles, "no corrections to apply");
    check_corrections(session, corrections);
    const int epochs = session_epochs(session, policy);
    for (const auto& c : corrections) {
        const int y = c.kind == ScribbleKind::CorrectiveFn ? 1 : -1;
        for (int id : c.patch_ids) {
            session.corrections[id] = y;
            session.hard_code[id] = static_cast<signed char>(y > 0 ? 1 : 0);
        }
    }
    std::vector<Sample> data = refit_set(session);
    Rng rng(derive_seed(session.seed, static_cast<std::uint64_t>(session.pass_count) + 1));
    fit_samples(session.svm, data, epochs, rng);
    ++session.pass_count;
    session.epochs_used.push_back(epochs);
    refresh_heatmap(session);
    return epochs;
}

int apply_scribbles(CorrectionSession& session, const std::vector<Scribble>& scribbles,
                    const CorrectionPolicy& policy) {
    std::vector<Correction> corrections;
    for (const auto& s : scribbles) corrections.push_back({s.kind, resolve_scribble_patches(session.grid, s.polyline)});
    return apply_correction(session, corrections, policy);
}

nlohmann::json session_snapshot(const CorrectionSession& s) {
    nlohmann::json corrections = nlohmann::json::array();
    for (const auto& [id, y] : s.corrections) corrections.push_back({id, y});
    nlohmann::json j{{"version", 1},
                     {"slide_id", s.slide_id},
                     {"t_thresh", s.t_thresh},
                     {"seed", s.seed},
                     {"pass_count", s.pass_count},
                     {"epochs_used", s.epochs_used},
                     {"svm", {{"w", s.svm.w}, {"b", s.svm.b}, {"eta", s.svm.eta}, {"lambda", s.svm.lambda}}},
                     {"init_ids", s.init_ids},
                     {"init_labels", s.init_labels},
                     {"init_epochs", s.init_epochs},
                     {"init_accuracy", s.init_accuracy},
                     {"corrections", corrections},
                     {"h_wsi", s.h_wsi},
                     {"empty_t", s.empty_t}};
    j["h_star"] = s.h_star ? nlohmann::json(*s.h_star) : nlohmann::json(nullptr);
    return j;
}

CorrectionSession restore_session(const nlohmann::json& j, const PatchGrid& grid, std::vector<McRecord> records) {
    CorrectionSession s;
    try {
        require(j.at("version").get<int>() == 1, ErrorCode::ParseError, "unsupported session snapshot version");
        require(j.at("slide_id").get<std::string>() == grid.slide_id, ErrorCode::ParseError,
                "snapshot belongs to a different slide");
        std::sort(records.begin(), records.end(),
                  [](const McRecord& a, const McRecord& b) { return a.patch_id < b.patch_id; });
        require(records.size() == grid.size(), ErrorCode::ParseError, "snapshot grid and records disagree");
        s.slide_id = grid.slide_id;
        s.grid = grid;
        s.records = std::move(records);
        s.t_thresh = j.at("t_thresh").get<double>();
        s.seed = j.at("seed").get<std::uint64_t>();
        s.pass_count = j.at("pass_count").get<int>();
        s.epochs_used = j.at("epochs_used").get<std::vector<int>>();
        const auto& svm = j.at("svm");
        s.svm.w = svm.at("w").get<std::vector<double>>();
        s.svm.b = svm.at("b").get<double>();
        s.svm.eta = svm.at("eta").get<double>();
        s.svm.lambda = svm.at("lambda").get<double>();
        s.svm.validate();
        s.init_ids = j.at("init_ids").get<std::vector<int>>();
        s.init_labels = j.at("init_labels").get<std::vector<int>>();
        s.init_epochs = j.at("init_epochs").get<int>();
        s.init_accuracy = j.at("init_accuracy").get<double>();
        s.hard_code.assign(s.records.size(), -1);
        for (const auto& c : j.at("corrections")) {
            const int id = c.at(0).get<int>(), y = c.at(1).get<int>();
            require(id >= 0 && id < static_cast<int>(s.records.size()) && (y == 1 || y == -1), ErrorCode::ParseError,
                    "snapshot correction is invalid");
            s.corrections[id] = y;
            s.hard_code[id] = static_cast<signed char>(y > 0 ? 1 : 0);
        }
        s.h_wsi = j.at("h_wsi").get<double>();
        s.empty_t = j.at("empty_t").get<bool>();
        if (!j.at("h_star").is_null()) s.h_star = j.at("h_star").get<double>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ParseError, std::string("session snapshot: ") + e.what());
    }
    require(s.svm.w.size() == s.records.front().features.size(), ErrorCode::ParseError,
            "snapshot SVM dimension does not match the features");
    refresh_heatmap(s);
    return s;
}

} // namespace wsic
