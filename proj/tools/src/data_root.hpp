#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "wsic/backbone.hpp"
#include "wsic/corrector.hpp"
#include "wsic/pipeline.hpp"
#include "wsic/tiling.hpp"

namespace wsic::app {

// Layout of a data root (a corpus directory after `train` and `predict`):
//   manifest.json, <slide>/image.png ...     synthetic corpus (optional)
//   model.json                               trained pipeline (optional)
//   features/<slide>.grid.ndjson             patch grid
//   features/<slide>.features.ndjson         MC records
//   sessions/<session>.json                  persisted sessions
struct SlideData {
    std::string slide_id;
    PatchGrid grid;
    std::vector<McRecord> records;
    std::optional<std::vector<int>> truth; // only for slides with masks
    std::optional<std::filesystem::path> image;
};

struct SlideSummary {
    std::string slide_id;
    std::optional<std::string> split;
    std::optional<double> separability;
    int width = 0;
    int height = 0;
    int rows = 0;
    int cols = 0;
    int patches = 0;
    bool has_image = false;
    bool has_truth = false;
};

/// Slide ids double as file names; only [A-Za-z0-9_.-] without a leading dot.
bool valid_slide_id(const std::string& id);

std::filesystem::path grid_file(const std::filesystem::path& root, const std::string& slide_id);
std::filesystem::path features_file(const std::filesystem::path& root, const std::string& slide_id);

void write_slide_features(const std::filesystem::path& root, const PatchGrid& grid, int n_mc,
                          const std::vector<McRecord>& records);

class DataRoot {
public:
    explicit DataRoot(std::filesystem::path root);

    const std::filesystem::path& path() const { return root_; }
    std::filesystem::path sessions_dir() const { return root_ / "sessions"; }

    /// Slides that have a grid and a feature file, sorted by id.
    std::vector<SlideSummary> list_slides() const;
    SlideData load(const std::string& slide_id) const;
    std::optional<std::filesystem::path> image_path(const std::string& slide_id) const;

    /// Threshold and calibration from model.json when present, else defaults.
    SessionOptions session_options() const;

private:
    std::filesystem::path root_;
    std::optional<CorpusManifest> manifest_;
    std::optional<TrainedPipeline> pipeline_;
};

} // namespace wsic::app
