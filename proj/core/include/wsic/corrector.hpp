#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "wsic/backbone.hpp"
#include "wsic/scribblegen.hpp"
#include "wsic/synthcorpus.hpp"
#include "wsic/tiling.hpp"

namespace wsic {

struct SvmModel {
    std::vector<double> w;
    double b = 0.0;
    double eta = 0.01;
    double lambda = 1e-4;

    double margin(const std::vector<double>& x) const;
    double margin(const double* x) const;
    void validate() const;
};

/// Seeded-shuffle subgradient descent on the L2-regularised hinge loss.
/// Labels are -1 / +1. Continues from the given weights.
SvmModel svm_fit_epochs(SvmModel model, const std::vector<std::vector<double>>& xs, const std::vector<int>& ys,
                        int n_epoch, std::uint64_t seed);

/// Mean hinge loss plus (lambda / 2)|w|^2.
double svm_objective(const SvmModel& model, const std::vector<std::vector<double>>& xs, const std::vector<int>& ys);

enum class PolicyMode { Naive, Uncertainty };

std::string to_string(PolicyMode mode);
PolicyMode policy_mode_from_string(const std::string& s);

struct CorrectionPolicy {
    PolicyMode mode = PolicyMode::Naive;
    int n_epoch_star = 30;
    int n_pass = 4;

    void validate() const;
};

/// Naive: n_epoch*. Uncertainty: round(2 H* n_epoch*) clamped to [1, 2 n_epoch*].
int n_epoch_for(const CorrectionPolicy& policy, double h_star);

/// A resolved correction: the grid patches one scribble covers.
struct Correction {
    ScribbleKind kind = ScribbleKind::CorrectiveFp;
    std::vector<int> patch_ids;
};

struct SessionOptions {
    double t_thresh = 0.33;
    int cap = 1000;
    int init_epoch_cap = 200;
    std::uint64_t seed = 0;
    std::optional<Calibration> calibration;
    SvmModel svm_params; // eta / lambda; weights are the starting point when set
    /// Without explicit weights the SVM starts at warm_start_svm(records,
    /// t_thresh, scale); 0 starts from zero weights.
    double warm_start_scale = 64.0;
};

/// Least-squares linear read-out of the backbone log-odds from the latent
/// features, re-centred at t_thresh and multiplied by `scale`, so that the
/// margin sign reproduces score > t_thresh.
SvmModel warm_start_svm(const std::vector<McRecord>& records, double t_thresh, double scale);

struct CorrectionSession {
    std::string slide_id;
    PatchGrid grid;
    std::vector<McRecord> records; // indexed by patch id
    double t_thresh = 0.33;
    std::uint64_t seed = 0;

    std::vector<double> heatmap;
    std::vector<signed char> hard_code; // -1 none, else the asserted 0 / 1
    SvmModel svm;

    std::vector<int> init_ids;
    std::vector<int> init_labels; // -1 / +1
    int init_epochs = 0;
    double init_accuracy = 0.0;

    std::map<int, int> corrections; // patch id -> label (-1 / +1), last write wins
    int pass_count = 0;
    std::vector<int> epochs_used;

    double h_wsi = 0.0;
    bool empty_t = false;
    std::optional<double> h_star;

    /// Pass 0: backbone score > t_thresh. Later passes: hard-coded value or
    /// heatmap > 0.5.
    std::vector<int> predicted_labels() const;
};

CorrectionSession init_session(const PatchGrid& grid, std::vector<McRecord> records, const SessionOptions& options);

/// Epochs the next pass would use under `policy`.
int session_epochs(const CorrectionSession& session, const CorrectionPolicy& policy);

/// Applies one pass's corrections atomically; returns the epochs used.
int apply_correction(CorrectionSession& session, const std::vector<Correction>& corrections,
                     const CorrectionPolicy& policy);

/// Resolves scribbles through the grid, then applies them.
int apply_scribbles(CorrectionSession& session, const std::vector<Scribble>& scribbles,
                    const CorrectionPolicy& policy);

/// Rejects empty corrections and patches asserted both ways in one pass.
void check_corrections(const CorrectionSession& session, const std::vector<Correction>& corrections);

nlohmann::json session_snapshot(const CorrectionSession& session);
/// Rebuilds a session from a snapshot plus the slide's grid and records.
CorrectionSession restore_session(const nlohmann::json& snapshot, const PatchGrid& grid,
                                  std::vector<McRecord> records);

} // namespace wsic
