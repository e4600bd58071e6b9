#pragma once

#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "wsic/backbone.hpp"
#include "wsic/synthcorpus.hpp"

namespace wsic {

/// Binary entropy (bits) of the mean score; 0 at p in {0, 1}.
double binary_entropy(double p);
double patch_entropy(const std::vector<double>& scores);
/// Population standard deviation.
double patch_std(const std::vector<double>& scores);

struct WsiUncertainty {
    double h_wsi = 0.0;
    double sigma_wsi = 0.0;
    std::vector<int> tumor_set; // patch ids with mean > t_thresh
    bool empty_t = false;
};

WsiUncertainty wsi_uncertainty(const std::vector<McRecord>& records, double t_thresh);

/// (h - h_min) / (h_max - h_min) clamped to [0, 1].
double normalize_h(double h_wsi, const Calibration& calib);
Calibration calibrate(const std::vector<double>& h_values);

/// Entropy signed by the side of t_thresh the mean falls on; sign(0) = +1.
std::vector<double> signed_map(const std::vector<McRecord>& records, double t_thresh);

struct UncertaintyReport {
    std::vector<int> patch_ids;
    std::vector<double> entropy;
    std::vector<double> stddev;
    std::vector<double> signed_entropy;
    WsiUncertainty wsi;
    double h_star = 0.0;
    bool has_h_star = false;
};

UncertaintyReport uncertainty_report(const std::vector<McRecord>& records, double t_thresh,
                                     const Calibration* calib = nullptr);
nlohmann::json report_to_json(const UncertaintyReport& report);

} // namespace wsic
