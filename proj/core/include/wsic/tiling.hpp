#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "wsic/geometry.hpp"
#include "wsic/raster.hpp"

namespace wsic {

struct PatchSpec {
    int size = 32;        // W
    double overlap = 0.5; // o_v in [0, 1)
    std::string magnification = "synthetic";

    /// Arc-length sampling step W(1 - o_v).
    double stride() const { return size * (1.0 - overlap); }
    /// Grid step in whole pixels.
    int grid_stride() const;
    void validate() const;
};

struct Patch {
    int id = -1;
    int x = 0; // top-left
    int y = 0;
    int row = -1;
    int col = -1;
    std::optional<int> label;

    Point center(int size) const { return {x + size / 2.0, y + size / 2.0}; }
};

class PatchGrid {
public:
    std::string slide_id;
    PatchSpec spec;
    int slide_width = 0;
    int slide_height = 0;
    int rows = 0;
    int cols = 0;
    std::vector<Patch> patches;
    /// rows x cols, -1 for cells without enough tissue.
    std::vector<int> index;

    std::size_t size() const { return patches.size(); }
    int at(int row, int col) const;
    /// Grid cell whose patch centre is nearest to p, clamped into the grid.
    std::pair<int, int> nearest_cell(Point p) const;
    /// Patch id for the nearest cell, if it is a tissue patch.
    std::optional<int> nearest_patch(Point p) const;
    /// Pixel rectangle of a cell's Voronoi region (stride-sized, centred on the
    /// patch centre), clipped to the slide.
    void cell_region(int row, int col, int& x0, int& y0, int& x1, int& y1) const;
};

/// Row-major grid at the spec's stride; cells keep a patch when at least
/// `min_tissue_fraction` of its pixels are tissue.
PatchGrid build_grid(const std::string& slide_id, int width, int height, const BinaryMask& tissue,
                     const PatchSpec& spec, double min_tissue_fraction = 0.25);

/// Number of samples on the half-open arc [0, l) at step s: ceil(l / s), at
/// least 1. Exact multiples of s yield exactly l / s.
int patch_count_for_length(double length, double step);

/// Patch windows centred at arc positions 0, s, 2s, ... (< l), clamped into the
/// slide. Ids are unassigned.
std::vector<Patch> patches_along_scribble(const Polyline& scribble, const PatchSpec& spec, int slide_width,
                                          int slide_height);

/// Along-scribble samples snapped to their nearest grid patch; off-tissue cells
/// dropped, duplicates removed keeping first occurrence.
std::vector<int> resolve_scribble_patches(const PatchGrid& grid, const Polyline& scribble);

enum class LabelRule { TumorFraction, CenterPixel };

struct LabelConfig {
    LabelRule rule = LabelRule::TumorFraction;
    double min_tumor_fraction = 0.5;
};

/// 1 when the patch meets the rule against the ground-truth mask, else 0.
int label_patch(const Patch& patch, int size, const IntegralMask& gt, const BinaryMask& gt_mask,
                const LabelConfig& config = {});
std::vector<int> grid_labels(const PatchGrid& grid, const BinaryMask& gt, const LabelConfig& config = {});

/// Grid file: NDJSON, header line then one object per patch.
std::string grid_to_ndjson(const PatchGrid& grid);
PatchGrid grid_from_ndjson(const std::string& text);

nlohmann::json patch_spec_to_json(const PatchSpec& spec);
PatchSpec patch_spec_from_json(const nlohmann::json& j);

} // namespace wsic
