#include "wsic/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "wsic/error.hpp"

namespace wsic {

namespace {

void check_scores(const std::vector<double>& scores) {
    require(!scores.empty(), ErrorCode::InvalidArgument, "score vector is empty");
    for (double s : scores)
        require(s >= 0.0 && s <= 1.0, ErrorCode::InvalidArgument, "scores must lie in [0, 1]");
}

double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

} // namespace

double binary_entropy(double p) {
    if (p <= 0.0 || p >= 1.0) return 0.0;
    return std::min(1.0, -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p));
}

double patch_entropy(const std::vector<double>& scores) {
    check_scores(scores);
    return binary_entropy(mean_of(scores));
}

double patch_std(const std::vector<double>& scores) {
    check_scores(scores);
    const double m = mean_of(scores);
    double ss = 0.0;
    for (double s : scores) ss += (s - m) * (s - m);
    return std::min(0.5, std::sqrt(ss / static_cast<double>(scores.size())));
}

WsiUncertainty wsi_uncertainty(const std::vector<McRecord>& records, double t_thresh) {
    require(!records.empty(), ErrorCode::InvalidArgument, "no records");
    WsiUncertainty u;
    double h = 0.0, s = 0.0;
    for (const auto& r : records) {
        if (r.mean() > t_thresh) {
            u.tumor_set.push_back(r.patch_id);
            h += patch_entropy(r.mc_scores);
            s += patch_std(r.mc_scores);
        }
    }
    if (u.tumor_set.empty()) {
        u.empty_t = true;
        return u;
    }
    const double n = static_cast<double>(u.tumor_set.size());
    u.h_wsi = h / n;
    u.sigma_wsi = s / n;
    return u;
}

double normalize_h(double h_wsi, const Calibration& calib) {
    require(calib.h_max > calib.h_min, ErrorCode::InvalidArgument, "calibration needs h_min < h_max");
    return std::clamp((h_wsi - calib.h_min) / (calib.h_max - calib.h_min), 0.0, 1.0);
}

Calibration calibrate(const std::vector<double>& h_values) {
    require(!h_values.empty(), ErrorCode::InvalidArgument, "calibration needs at least one slide");
    const auto [lo, hi] = std::minmax_element(h_values.begin(), h_values.end());
    require(*hi > *lo, ErrorCode::DegenerateInput, "calibration slides have identical entropy");
    return {*lo, *hi};
}

std::vector<double> signed_map(const std::vector<McRecord>& records, double t_thresh) {
    std::vector<double> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        const double h = patch_entropy(r.mc_scores);
        out.push_back(r.mean() >= t_thresh ? h : -h);
    }
    return out;
}

UncertaintyReport uncertainty_report(const std::vector<McRecord>& records, double t_thresh, const Calibration* calib) {
    UncertaintyReport rep;
    rep.wsi = wsi_uncertainty(records, t_thresh);
    for (const auto& r : records) {
        rep.patch_ids.push_back(r.patch_id);
        rep.entropy.push_back(patch_entropy(r.mc_scores));
        rep.stddev.push_back(patch_std(r.mc_scores));
        rep.signed_entropy.push_back(r.mean() >= t_thresh ? rep.entropy.back() : -rep.entropy.back());
    }
    if (calib != nullptr) {
        rep.h_star = normalize_h(rep.wsi.h_wsi, *calib);
        rep.has_h_star = true;
    }
    return rep;
}

nlohmann::json report_to_json(const UncertaintyReport& report) {
    nlohmann::json j{{"patch_ids", report.patch_ids},
                     {"entropy", report.entropy},
                     {"std", report.stddev},
                     {"signed_entropy", report.signed_entropy},
                     {"h_wsi", report.wsi.h_wsi},
                     {"sigma_wsi", report.wsi.sigma_wsi},
                     {"tumor_set_size", report.wsi.tumor_set.size()},
                     {"empty_t", report.wsi.empty_t}};
    j["h_star"] = report.has_h_star ? nlohmann::json(report.h_star) : nlohmann::json(nullptr);
    return j;
}

} // namespace wsic
