#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "wsic/raster.hpp"

namespace wsic {

/// Parameters of one synthetic slide.
struct SlideRecipe {
    std::uint64_t seed = 0;
    int width = 1024;
    int height = 1024;
    int tumor_blobs = 4;
    /// Tumour blob mean radius range as a fraction of min(width, height).
    double tumor_radius_min = 0.05;
    double tumor_radius_max = 0.12;
    /// Tissue blob mean radius range as a fraction of min(width, height).
    double tissue_radius_min = 0.38;
    double tissue_radius_max = 0.46;
    /// 0: classes drawn from one distribution, 1: trivially separable.
    double separability = 0.6;
    /// Per-pixel Gaussian noise (gray levels).
    double noise = 12.0;
    /// Amplitude of the slide-wide low-frequency colour modulation (gray levels).
    double modulation = 22.0;

    void validate() const;
};

struct SyntheticSlide {
    Raster image;
    BinaryMask tumor;
    BinaryMask tissue;
};

/// White background, one organic tissue blob, tumour blobs inside it. Masks
/// are exact by construction and tumour is a subset of tissue.
SyntheticSlide generate_slide(const SlideRecipe& recipe);

enum class Split { Train, Val, Test };
std::string_view to_string(Split s);
Split split_from_string(std::string_view s);

struct CorpusEntry {
    std::string slide_id;
    Split split = Split::Test;
    SlideRecipe recipe;
};

struct Calibration {
    double h_min = 0.0;
    double h_max = 1.0;
};

struct CorpusManifest {
    std::string corpus_id;
    std::uint64_t seed = 0;
    std::vector<CorpusEntry> slides;
    /// Entropy extremes over the validation split, once computed.
    std::optional<Calibration> calibration;

    std::vector<const CorpusEntry*> in_split(Split s) const;
    const CorpusEntry* find(const std::string& slide_id) const;
};

struct CorpusConfig {
    std::string corpus_id = "synthetic";
    std::uint64_t seed = 1;
    int train = 12;
    int val = 6;
    int test = 24;
    double separability_min = 0.3;
    double separability_max = 0.9;
    int tumor_blobs_min = 2;
    int tumor_blobs_max = 6;
    SlideRecipe base;
};

/// Per-slide recipes with seeds and separability drawn from the corpus seed.
CorpusManifest plan_corpus(const CorpusConfig& config);

/// plan_corpus + render every slide into `root`:
/// root/manifest.json and root/<slide_id>/{image.png, tumor_mask.png,
/// tissue_mask.png, recipe.json}.
CorpusManifest generate_corpus(const CorpusConfig& config, const std::filesystem::path& root);

nlohmann::json recipe_to_json(const SlideRecipe& r);
SlideRecipe recipe_from_json(const nlohmann::json& j);
nlohmann::json manifest_to_json(const CorpusManifest& m);
CorpusManifest manifest_from_json(const nlohmann::json& j);

void save_manifest(const CorpusManifest& m, const std::filesystem::path& root);
CorpusManifest load_manifest(const std::filesystem::path& root);

/// Loads image and both masks of one slide from a corpus directory.
SyntheticSlide load_slide(const std::filesystem::path& root, const std::string& slide_id);

} // namespace wsic
