#include "data_root.hpp"

#include <algorithm>
#include <cctype>

#include "files.hpp"
#include "wsic/error.hpp"
#include "wsic/png_io.hpp"

namespace fs = std::filesystem;

namespace wsic::app {

bool valid_slide_id(const std::string& id) {
    if (id.empty() || id.size() > 128 || id.front() == '.') return false;
    return std::all_of(id.begin(), id.end(), [](unsigned char c) {
        return std::isalnum(c) || c == '_' || c == '-' || c == '.';
    });
}

fs::path grid_file(const fs::path& root, const std::string& slide_id) {
    return root / "features" / (slide_id + ".grid.ndjson");
}

fs::path features_file(const fs::path& root, const std::string& slide_id) {
    return root / "features" / (slide_id + ".features.ndjson");
}

void write_slide_features(const fs::path& root, const PatchGrid& grid, int n_mc, const std::vector<McRecord>& records) {
    FeatureHeader h;
    h.slide_id = grid.slide_id;
    h.n_mc = n_mc;
    h.d_latent = records.empty() ? 0 : static_cast<int>(records.front().features.size());
    write_text_atomic(grid_file(root, grid.slide_id), grid_to_ndjson(grid));
    write_text_atomic(features_file(root, grid.slide_id), export_features(h, records));
}

DataRoot::DataRoot(fs::path root) : root_(std::move(root)) {
    require(fs::is_directory(root_), ErrorCode::NotFound, "data root " + root_.string() + " is not a directory");
    if (fs::exists(root_ / "manifest.json")) manifest_ = load_manifest(root_);
    if (fs::exists(root_ / "model.json")) pipeline_ = load_pipeline(root_ / "model.json");
}

std::vector<SlideSummary> DataRoot::list_slides() const {
    std::vector<SlideSummary> out;
    const fs::path dir = root_ / "features";
    if (!fs::is_directory(dir)) return out;
    const std::string suffix = ".grid.ndjson";
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.size() <= suffix.size() || name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0)
            continue;
        const std::string id = name.substr(0, name.size() - suffix.size());
        if (!valid_slide_id(id) || !fs::exists(features_file(root_, id))) continue;
        const PatchGrid grid = grid_from_ndjson(read_text(entry.path()));
        SlideSummary s;
        s.slide_id = id;
        s.width = grid.slide_width;
        s.height = grid.slide_height;
        s.rows = grid.rows;
        s.cols = grid.cols;
        s.patches = static_cast<int>(grid.size());
        s.has_image = image_path(id).has_value();
        if (manifest_) {
            if (const CorpusEntry* e = manifest_->find(id)) {
                s.split = std::string(to_string(e->split));
                s.separability = e->recipe.separability;
                s.has_truth = fs::exists(root_ / id / "tumor_mask.png");
            }
        }
        out.push_back(std::move(s));
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.slide_id < b.slide_id; });
    return out;
}

std::optional<fs::path> DataRoot::image_path(const std::string& slide_id) const {
    if (!valid_slide_id(slide_id)) return std::nullopt;
    const fs::path p = root_ / slide_id / "image.png";
    if (fs::exists(p)) return p;
    return std::nullopt;
}

SlideData DataRoot::load(const std::string& slide_id) const {
    require(valid_slide_id(slide_id), ErrorCode::NotFound, "unknown slide '" + slide_id + "'");
    const fs::path gpath = grid_file(root_, slide_id), fpath = features_file(root_, slide_id);
    require(fs::exists(gpath) && fs::exists(fpath), ErrorCode::NotFound, "slide '" + slide_id + "' has no features");
    SlideData d;
    d.slide_id = slide_id;
    d.grid = grid_from_ndjson(read_text(gpath));
    d.records = ingest_features(read_text(fpath)).records;
    std::sort(d.records.begin(), d.records.end(), [](const auto& a, const auto& b) { return a.patch_id < b.patch_id; });
    require(d.records.size() == d.grid.size(), ErrorCode::ParseError,
            "slide '" + slide_id + "': grid has " + std::to_string(d.grid.size()) + " patches, features have " +
                std::to_string(d.records.size()));
    for (std::size_t i = 0; i < d.records.size(); ++i)
        require(d.records[i].patch_id == static_cast<int>(i), ErrorCode::ParseError,
                "slide '" + slide_id + "': feature patch ids are not 0..n-1");
    d.image = image_path(slide_id);
    const fs::path mask = root_ / slide_id / "tumor_mask.png";
    if (manifest_ && manifest_->find(slide_id) && fs::exists(mask))
        d.truth = grid_labels(d.grid, read_mask_png(mask));
    return d;
}

SessionOptions DataRoot::session_options() const {
    if (pipeline_) return wsic::session_options(*pipeline_);
    return SessionOptions{};
}

} // namespace wsic::app
