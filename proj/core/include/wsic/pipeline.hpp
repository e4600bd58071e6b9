#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "wsic/backbone.hpp"
#include "wsic/evalsim.hpp"
#include "wsic/imageops.hpp"
#include "wsic/scribblegen.hpp"
#include "wsic/synthcorpus.hpp"
#include "wsic/tiling.hpp"

namespace wsic {

/// Settings shared by training, prediction and simulation on a corpus.
struct PipelineConfig {
    PatchSpec spec;
    LabelConfig label;
    TissueConfig tissue;
    ScribbleParams scribble;
    TrainConfig train;
    int n_mc = 20;
    std::uint64_t seed = 0;
};

/// Model checkpoint plus everything tuned on the validation split.
struct TrainedPipeline {
    BackboneModel model;
    TrainConfig train;
    ThresholdConfig threshold;
    Calibration calibration;
    PatchSpec spec;
    int n_mc = 20;
    std::uint64_t seed = 0; // PipelineConfig::seed used for training
    double train_accuracy = 0.0;
    std::vector<double> epoch_loss;
};

/// Ground-truth scribble patches from every slide of the training split.
std::vector<LabeledPatch> training_patches(const std::filesystem::path& corpus, const CorpusManifest& manifest,
                                           const PipelineConfig& config);

/// Otsu tissue grid, MC predictions and ground-truth patch labels of one slide.
SlideCase prepare_slide(const std::filesystem::path& corpus, const CorpusEntry& entry, const BackboneModel& model,
                        const PipelineConfig& config);

std::vector<SlideCase> prepare_split(const std::filesystem::path& corpus, const CorpusManifest& manifest, Split split,
                                     const BackboneModel& model, const PipelineConfig& config);

/// Trains on the training split, tunes t_thresh and the entropy calibration
/// on the validation split.
TrainedPipeline train_pipeline(const std::filesystem::path& corpus, const CorpusManifest& manifest,
                               const PipelineConfig& config);

nlohmann::json pipeline_to_json(const TrainedPipeline& p);
TrainedPipeline pipeline_from_json(const nlohmann::json& j);
void save_pipeline(const TrainedPipeline& p, const std::filesystem::path& path);
TrainedPipeline load_pipeline(const std::filesystem::path& path);

/// Settings that reproduce the pipeline's own predictions.
PipelineConfig pipeline_config(const TrainedPipeline& p);

/// Session options for a trained pipeline (threshold and calibration).
SessionOptions session_options(const TrainedPipeline& p);

} // namespace wsic
