#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "wsic/raster.hpp"
#include "wsic/rng.hpp"
#include "wsic/scribblegen.hpp"
#include "wsic/tiling.hpp"

namespace wsic {

/// Per-channel mean, std and 8-bin histogram of an RGB patch, each in [0, 1].
constexpr int kDescriptorDim = 30;
std::vector<double> extract_descriptor(const Raster& patch);

/// One of the 8 flip / 90-degree rotation symmetries of a square patch.
Raster augment_patch(const Raster& patch, int transform);

/// Descriptor -> ReLU latent layer -> dropout -> logistic score.
struct BackboneModel {
    int input_dim = kDescriptorDim;
    int latent_dim = 32;
    double dropout = 0.2;
    std::vector<double> w1; // latent_dim x input_dim, row-major
    std::vector<double> b1; // latent_dim
    std::vector<double> w2; // latent_dim
    double b2 = 0.0;

    /// Dropout-free latent features.
    std::vector<double> latent(const std::vector<double>& x) const;
    /// Pre-sigmoid output given latent features and a per-unit multiplier mask
    /// (empty mask = dropout off).
    double logit(const std::vector<double>& latent, const std::vector<double>& mask = {}) const;
    /// Dropout-free score in (0, 1).
    double score(const std::vector<double>& x) const;

    std::size_t parameter_count() const;
    void validate() const;
};

/// Logistic function clamped into the open interval (0, 1).
double squash(double z);

BackboneModel init_backbone(int input_dim, int latent_dim, double dropout, std::uint64_t seed);

/// Inverted-dropout mask: each unit kept with probability 1 - p and scaled by 1 / (1 - p).
std::vector<double> dropout_mask(int size, double p, Rng& rng);

/// Gradient of the binary cross-entropy with respect to every parameter, in the
/// flattened order w1, b1, w2, b2.
struct Gradient {
    std::vector<double> values;
};

double loss_and_gradient(const BackboneModel& model, const std::vector<double>& x, int label,
                         const std::vector<double>& mask, Gradient* grad);

std::vector<double> flatten_parameters(const BackboneModel& model);
void assign_parameters(BackboneModel& model, const std::vector<double>& flat);

struct TrainConfig {
    double learning_rate = 1e-3;
    int epochs = 10;
    int batch_size = 8;
    bool flips = true;
    bool rot90 = true;
    int latent_dim = 32;
    double dropout = 0.2;
    std::uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct LabeledPatch {
    Raster pixels;
    int label = 0;
};

struct TrainResult {
    BackboneModel model;
    /// Full-training-set loss with dropout off, after each epoch.
    std::vector<double> epoch_loss;
    /// Full-training-set accuracy at score > 0.5 after the last epoch.
    double train_accuracy = 0.0;
};

/// Adam on binary cross-entropy. Augmentations are applied to the pixels before
/// descriptor extraction. Deterministic for a given seed.
TrainResult train_backbone(const std::vector<LabeledPatch>& data, const TrainConfig& config);

/// Same optimiser on precomputed descriptors (no augmentation).
TrainResult train_backbone_descriptors(const std::vector<std::vector<double>>& descriptors,
                                       const std::vector<int>& labels, const TrainConfig& config);

/// Patches along each scribble, labelled with the scribble class.
std::vector<LabeledPatch> scribble_patches(const Raster& image, const std::vector<Scribble>& scribbles,
                                           const PatchSpec& spec);

struct McRecord {
    int patch_id = -1;
    int x = 0;
    int y = 0;
    std::vector<double> features; // dropout-free latent
    std::vector<double> mc_scores;
    double score = 0.0;            // dropout-free score

    double mean() const;
};

/// n_mc stochastic passes with independent latent dropout masks plus one
/// dropout-free pass for features and score.
McRecord predict_mc(const BackboneModel& model, const std::vector<double>& descriptor, int n_mc, std::uint64_t seed);

/// predict_mc for every grid patch; the per-patch seed is derived from `seed`
/// and the patch id.
std::vector<McRecord> predict_slide(const BackboneModel& model, const Raster& image, const PatchGrid& grid, int n_mc,
                                    std::uint64_t seed);

struct ThresholdConfig {
    double t_thresh = 0.33;
    double overlap = 0.5;
};

/// F1 of (score > t) over t = 0.01 .. 0.99, smallest maximiser.
ThresholdConfig optimize_threshold(const std::vector<double>& scores, const std::vector<int>& labels,
                                   double overlap = 0.5);

struct FeatureHeader {
    int version = 1;
    int d_latent = 0;
    int n_mc = 0;
    std::string slide_id;
};

struct FeatureFile {
    FeatureHeader header;
    std::vector<McRecord> records;
};

std::string export_features(const FeatureHeader& header, const std::vector<McRecord>& records);
/// Parses and validates an NDJSON feature file; errors carry the line number.
FeatureFile ingest_features(const std::string& text);

nlohmann::json model_to_json(const BackboneModel& model, const TrainConfig& config);
BackboneModel model_from_json(const nlohmann::json& j);

} // namespace wsic
