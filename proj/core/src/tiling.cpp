#include "wsic/tiling.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "wsic/error.hpp"

namespace wsic {

int PatchSpec::grid_stride() const { return std::max(1, static_cast<int>(std::lround(stride()))); }

void PatchSpec::validate() const {
    require(size >= 8, ErrorCode::InvalidArgument, "patch size must be >= 8");
    require(overlap >= 0.0 && overlap < 1.0, ErrorCode::InvalidArgument, "overlap must be in [0, 1)");
    require(stride() >= 1.0, ErrorCode::InvalidArgument, "patch stride must be >= 1 pixel");
}

int PatchGrid::at(int row, int col) const {
    if (row < 0 || col < 0 || row >= rows || col >= cols) return -1;
    return index[static_cast<std::size_t>(row) * cols + col];
}

std::pair<int, int> PatchGrid::nearest_cell(Point p) const {
    const double s = spec.grid_stride();
    const double half = spec.size / 2.0;
    const int col = std::clamp(static_cast<int>(std::lround((p.x - half) / s)), 0, cols - 1);
    const int row = std::clamp(static_cast<int>(std::lround((p.y - half) / s)), 0, rows - 1);
    return {row, col};
}

std::optional<int> PatchGrid::nearest_patch(Point p) const {
    const auto [row, col] = nearest_cell(p);
    const int id = at(row, col);
    if (id < 0) return std::nullopt;
    return id;
}

void PatchGrid::cell_region(int row, int col, int& x0, int& y0, int& x1, int& y1) const {
    const int s = spec.grid_stride();
    const int cx = col * s + spec.size / 2;
    const int cy = row * s + spec.size / 2;
    x0 = std::max(0, cx - s / 2);
    y0 = std::max(0, cy - s / 2);
    x1 = std::min(slide_width, cx - s / 2 + s);
    y1 = std::min(slide_height, cy - s / 2 + s);
}

PatchGrid build_grid(const std::string& slide_id, int width, int height, const BinaryMask& tissue,
                     const PatchSpec& spec, double min_tissue_fraction) {
    spec.validate();
    require(tissue.width() == width && tissue.height() == height, ErrorCode::InvalidArgument,
            "tissue mask does not match slide dimensions");
    require(width >= spec.size && height >= spec.size, ErrorCode::InvalidArgument,
            "slide smaller than one patch");
    require(tissue.popcount() > 0, ErrorCode::DegenerateInput, "tissue mask is empty");

    PatchGrid grid;
    grid.slide_id = slide_id;
    grid.spec = spec;
    grid.slide_width = width;
    grid.slide_height = height;
    const int s = spec.grid_stride();
    grid.cols = (width - spec.size) / s + 1;
    grid.rows = (height - spec.size) / s + 1;
    grid.index.assign(static_cast<std::size_t>(grid.rows) * grid.cols, -1);

    const IntegralMask integral(tissue);
    const double needed = min_tissue_fraction * spec.size * spec.size;
    for (int r = 0; r < grid.rows; ++r) {
        for (int c = 0; c < grid.cols; ++c) {
            const int x = c * s;
            const int y = r * s;
            if (static_cast<double>(integral.count(x, y, spec.size, spec.size)) + 1e-9 < needed) continue;
            Patch p;
            p.id = static_cast<int>(grid.patches.size());
            p.x = x;
            p.y = y;
            p.row = r;
            p.col = c;
            grid.index[static_cast<std::size_t>(r) * grid.cols + c] = p.id;
            grid.patches.push_back(p);
        }
    }
    require(!grid.patches.empty(), ErrorCode::DegenerateInput, "no grid cell reaches the tissue fraction");
    return grid;
}

int patch_count_for_length(double length, double step) {
    require(step > 0.0, ErrorCode::InvalidArgument, "sampling step must be positive");
    if (length <= 0.0) return 1;
    // Relative slack so lengths accumulated in floating point still land on exact multiples.
    const double ratio = length / step;
    const int count = static_cast<int>(std::ceil(ratio - 1e-9 * std::max(1.0, ratio)));
    return std::max(1, count);
}

std::vector<Patch> patches_along_scribble(const Polyline& scribble, const PatchSpec& spec, int slide_width,
                                          int slide_height) {
    spec.validate();
    const double step = spec.stride();
    const int count = patch_count_for_length(scribble.length(), step);
    std::vector<Patch> out;
    out.reserve(count);
    const int max_x = std::max(0, slide_width - spec.size);
    const int max_y = std::max(0, slide_height - spec.size);
    for (int k = 0; k < count; ++k) {
        const Point c = scribble.point_at(k * step);
        Patch p;
        p.x = std::clamp(static_cast<int>(std::lround(c.x - spec.size / 2.0)), 0, max_x);
        p.y = std::clamp(static_cast<int>(std::lround(c.y - spec.size / 2.0)), 0, max_y);
        out.push_back(p);
    }
    return out;
}

std::vector<int> resolve_scribble_patches(const PatchGrid& grid, const Polyline& scribble) {
    std::vector<int> ids;
    std::unordered_set<int> seen;
    for (const Patch& p : patches_along_scribble(scribble, grid.spec, grid.slide_width, grid.slide_height)) {
        const auto id = grid.nearest_patch(p.center(grid.spec.size));
        if (id && seen.insert(*id).second) ids.push_back(*id);
    }
    return ids;
}

int label_patch(const Patch& patch, int size, const IntegralMask& gt, const BinaryMask& gt_mask,
                const LabelConfig& config) {
    if (config.rule == LabelRule::CenterPixel) {
        const int cx = std::min(gt_mask.width() - 1, patch.x + size / 2);
        const int cy = std::min(gt_mask.height() - 1, patch.y + size / 2);
        return gt_mask.get(cx, cy) ? 1 : 0;
    }
    const double fraction =
        static_cast<double>(gt.count(patch.x, patch.y, size, size)) / (static_cast<double>(size) * size);
    return fraction >= config.min_tumor_fraction ? 1 : 0;
}

std::vector<int> grid_labels(const PatchGrid& grid, const BinaryMask& gt, const LabelConfig& config) {
    require(gt.width() == grid.slide_width && gt.height() == grid.slide_height, ErrorCode::InvalidArgument,
            "ground-truth mask does not match the grid's slide");
    const IntegralMask integral(gt);
    std::vector<int> labels;
    labels.reserve(grid.size());
    for (const Patch& p : grid.patches) labels.push_back(label_patch(p, grid.spec.size, integral, gt, config));
    return labels;
}

nlohmann::json patch_spec_to_json(const PatchSpec& spec) {
    return {{"size", spec.size}, {"overlap", spec.overlap}, {"magnification", spec.magnification}};
}

PatchSpec patch_spec_from_json(const nlohmann::json& j) {
    PatchSpec spec;
    spec.size = j.at("size").get<int>();
    spec.overlap = j.at("overlap").get<double>();
    spec.magnification = j.value("magnification", std::string("synthetic"));
    spec.validate();
    return spec;
}

std::string grid_to_ndjson(const PatchGrid& grid) {
    std::ostringstream out;
    const nlohmann::json header{{"version", 1},
                                {"slide_id", grid.slide_id},
                                {"width", grid.slide_width},
                                {"height", grid.slide_height},
                                {"rows", grid.rows},
                                {"cols", grid.cols},
                                {"count", grid.size()},
                                {"spec", patch_spec_to_json(grid.spec)}};
    out << header.dump() << '\n';
    for (const Patch& p : grid.patches) {
        out << nlohmann::json{{"id", p.id}, {"row", p.row}, {"col", p.col}, {"x", p.x}, {"y", p.y}}.dump() << '\n';
    }
    return out.str();
}

PatchGrid grid_from_ndjson(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    PatchGrid grid;
    std::size_t expected = 0;
    try {
        require(static_cast<bool>(std::getline(in, line)), ErrorCode::ParseError, "grid: missing header");
        ++line_no;
        const auto header = nlohmann::json::parse(line);
        require(header.at("version").get<int>() == 1, ErrorCode::ParseError, "grid: unsupported version");
        grid.slide_id = header.at("slide_id").get<std::string>();
        grid.slide_width = header.at("width").get<int>();
        grid.slide_height = header.at("height").get<int>();
        grid.rows = header.at("rows").get<int>();
        grid.cols = header.at("cols").get<int>();
        grid.spec = patch_spec_from_json(header.at("spec"));
        expected = header.at("count").get<std::size_t>();
        grid.index.assign(static_cast<std::size_t>(grid.rows) * grid.cols, -1);
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            const auto j = nlohmann::json::parse(line);
            Patch p;
            p.id = j.at("id").get<int>();
            p.row = j.at("row").get<int>();
            p.col = j.at("col").get<int>();
            p.x = j.at("x").get<int>();
            p.y = j.at("y").get<int>();
            require(p.id == static_cast<int>(grid.patches.size()), ErrorCode::ParseError, "non-dense patch id");
            require(p.row >= 0 && p.row < grid.rows && p.col >= 0 && p.col < grid.cols, ErrorCode::ParseError,
                    "patch cell outside grid");
            grid.index[static_cast<std::size_t>(p.row) * grid.cols + p.col] = p.id;
            grid.patches.push_back(p);
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ParseError, "grid line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
        fail(ErrorCode::ParseError, "grid line " + std::to_string(line_no) + ": " + e.what());
    }
    require(grid.patches.size() == expected, ErrorCode::ParseError, "grid: patch count mismatch");
    return grid;
}

} // namespace wsic
