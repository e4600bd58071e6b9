#include "wsic/scribblegen.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <limits>
#include <optional>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "wsic/error.hpp"

namespace wsic {

void ScribbleParams::validate() const {
    require(contour_nodes >= 4, ErrorCode::InvalidArgument, "contour node count must be >= 4");
    require(samples_per_hop >= 2, ErrorCode::InvalidArgument, "spline samples per hop must be >= 2");
}

std::string_view to_string(ScribbleClass c) { return c == ScribbleClass::Tumor ? "tumor" : "non_tumor"; }

std::string_view to_string(ScribbleKind k) {
    switch (k) {
    case ScribbleKind::GroundTruth: return "ground_truth";
    case ScribbleKind::CorrectiveFp: return "corrective_fp";
    case ScribbleKind::CorrectiveFn: return "corrective_fn";
    }
    return "ground_truth";
}

ScribbleClass scribble_class_from_string(std::string_view s) {
    if (s == "tumor") return ScribbleClass::Tumor;
    if (s == "non_tumor") return ScribbleClass::NonTumor;
    fail(ErrorCode::ParseError, "unknown scribble class '" + std::string(s) + "'");
}

ScribbleKind scribble_kind_from_string(std::string_view s) {
    if (s == "ground_truth") return ScribbleKind::GroundTruth;
    if (s == "corrective_fp" || s == "fp" || s == "FP") return ScribbleKind::CorrectiveFp;
    if (s == "corrective_fn" || s == "fn" || s == "FN") return ScribbleKind::CorrectiveFn;
    fail(ErrorCode::ParseError, "unknown scribble kind '" + std::string(s) + "'");
}

ScribbleClass class_for_kind(ScribbleKind kind, ScribbleClass ground_truth_class) {
    switch (kind) {
    case ScribbleKind::CorrectiveFp: return ScribbleClass::NonTumor;
    case ScribbleKind::CorrectiveFn: return ScribbleClass::Tumor;
    case ScribbleKind::GroundTruth: break;
    }
    return ground_truth_class;
}

std::vector<Point> sample_contour_nodes(const Polyline& contour, int node_count, double phase) {
    require(node_count >= 4, ErrorCode::InvalidArgument, "contour node count must be >= 4");
    const double length = contour.length();
    require(length > 0.0, ErrorCode::DegenerateInput, "contour has zero length");
    const double gap = length / node_count;
    std::vector<Point> nodes;
    nodes.reserve(node_count);
    for (int k = 0; k < node_count; ++k) {
        nodes.push_back(contour.point_at(std::fmod(phase + k * gap, length)));
    }
    return nodes;
}

std::vector<Point> sample_simple_polygon(const Polyline& contour, int node_count, Rng& rng) {
    const double length = contour.length();
    require(length > 0.0, ErrorCode::DegenerateInput, "contour has zero length");
    const double phase = uniform01(rng) * (length / node_count);
    for (int n = node_count; n >= 4; --n) {
        auto nodes = sample_contour_nodes(contour, n, phase);
        if (is_simple_polygon(nodes)) return nodes;
    }
    fail(ErrorCode::NonSimplePolygon, "contour simplification is not simple for any node count >= 4");
}

Point sample_in_triangle(Point a, Point b, Point c, Rng& rng) {
    const double r1 = std::sqrt(uniform01(rng));
    const double r2 = uniform01(rng);
    return (1.0 - r1) * a + (r1 * (1.0 - r2)) * b + (r1 * r2) * c;
}

Scribble synth_scribble(const Component& component, const ScribbleParams& params, ScribbleClass cls,
                        ScribbleKind kind) {
    params.validate();
    require(component.area() >= std::max<std::size_t>(4, params.min_component_area), ErrorCode::DegenerateInput,
            "component too small to scribble");
    Rng rng(params.seed);
    const Polyline contour = trace_contour(component);
    const auto nodes = sample_simple_polygon(contour, params.contour_nodes, rng);
    const Triangulation tri = triangulate_polygon(nodes);
    const auto path = longest_triangle_path(tri);

    std::vector<Point> controls;
    controls.reserve(path.size() + 1);
    for (int t : path) {
        const auto& v = tri.triangles[t];
        controls.push_back(sample_in_triangle(tri.vertices[v[0]], tri.vertices[v[1]], tri.vertices[v[2]], rng));
    }
    if (controls.size() == 1) {
        const auto& v = tri.triangles[path.front()];
        controls.push_back(sample_in_triangle(tri.vertices[v[0]], tri.vertices[v[1]], tri.vertices[v[2]], rng));
    }

    Scribble s;
    s.polyline.points = catmull_rom(controls, params.samples_per_hop);
    s.cls = cls;
    s.kind = kind;
    s.seed = params.seed;
    return s;
}

std::vector<Component> select_tumor_components(const std::vector<Component>& components) {
    require(!components.empty(), ErrorCode::InvalidArgument, "no tumour components to select from");
    const std::size_t k = components.size();
    const std::size_t wanted = std::clamp<std::size_t>((k + 9) / 10, 1, 10);
    return {components.begin(), components.begin() + static_cast<std::ptrdiff_t>(std::min(wanted, k))};
}

double arc_fraction_inside(const Polyline& polyline, const BinaryMask& mask, double step) {
    const double length = polyline.length();
    if (length <= 0.0) {
        const Point p = polyline.points.empty() ? Point{} : polyline.points.front();
        return mask.test(static_cast<int>(std::lround(p.x)), static_cast<int>(std::lround(p.y))) ? 1.0 : 0.0;
    }
    const int samples = std::max(1, static_cast<int>(std::ceil(length / step)));
    int inside = 0;
    for (int k = 0; k < samples; ++k) {
        const Point p = polyline.point_at((k + 0.5) * length / samples);
        if (mask.test(static_cast<int>(std::lround(p.x)), static_cast<int>(std::lround(p.y)))) ++inside;
    }
    return static_cast<double>(inside) / samples;
}

std::vector<Scribble> ground_truth_scribbles(const BinaryMask& tumor, const BinaryMask& tissue,
                                             const ScribbleParams& params) {
    params.validate();
    std::vector<Scribble> out;
    const auto tumor_components = connected_components(tumor);
    if (!tumor_components.empty()) {
        const auto selected = select_tumor_components(tumor_components);
        for (std::size_t i = 0; i < selected.size(); ++i) {
            if (selected[i].area() < params.min_component_area) continue;
            ScribbleParams p = params;
            p.seed = derive_seed(params.seed, i);
            try {
                out.push_back(synth_scribble(selected[i], p, ScribbleClass::Tumor));
            } catch (const Error&) {
                // Contours that cannot be simplified into a simple polygon are skipped.
            }
        }
    }

    const BinaryMask healthy = subtract(tissue, tumor);
    const auto healthy_components = connected_components(healthy);
    if (!healthy_components.empty() && healthy_components.front().area() >= params.min_component_area) {
        const Component& region = healthy_components.front();
        const BinaryMask region_mask = region.to_mask(tissue.width(), tissue.height());
        // The outer contour ignores tumour holes; keep the draw that stays most inside.
        std::optional<Scribble> best;
        double best_fraction = -1.0;
        for (std::uint64_t attempt = 0; attempt < 4; ++attempt) {
            ScribbleParams p = params;
            p.seed = derive_seed(params.seed, 1000 + attempt);
            try {
                Scribble s = synth_scribble(region, p, ScribbleClass::NonTumor);
                const double f = arc_fraction_inside(s.polyline, region_mask, 1.0);
                if (f > best_fraction) {
                    best_fraction = f;
                    best = std::move(s);
                }
            } catch (const Error&) {
            }
        }
        if (best) out.push_back(std::move(*best));
    }
    return out;
}

Polyline trim_polyline(const Polyline& polyline, double length) {
    Polyline out;
    out.closed = false;
    if (polyline.points.empty()) return out;
    out.points.push_back(polyline.points.front());
    double walked = 0.0;
    for (std::size_t i = 1; i < polyline.points.size(); ++i) {
        const double seg = distance(polyline.points[i - 1], polyline.points[i]);
        if (walked + seg >= length) {
            const double t = seg > 0.0 ? (length - walked) / seg : 0.0;
            out.points.push_back(polyline.points[i - 1] + t * (polyline.points[i] - polyline.points[i - 1]));
            return out;
        }
        walked += seg;
        out.points.push_back(polyline.points[i]);
    }
    return out;
}

namespace {

// Pixel component covering the Voronoi cells of the region's patches.
Component region_component(const std::vector<int>& ids, const PatchGrid& grid) {
    int bx0 = grid.slide_width, by0 = grid.slide_height, bx1 = 0, by1 = 0;
    for (int id : ids) {
        int x0, y0, x1, y1;
        grid.cell_region(grid.patches[id].row, grid.patches[id].col, x0, y0, x1, y1);
        bx0 = std::min(bx0, x0);
        by0 = std::min(by0, y0);
        bx1 = std::max(bx1, x1);
        by1 = std::max(by1, y1);
    }
    BinaryMask local(bx1 - bx0, by1 - by0);
    for (int id : ids) {
        int x0, y0, x1, y1;
        grid.cell_region(grid.patches[id].row, grid.patches[id].col, x0, y0, x1, y1);
        for (int y = y0; y < y1; ++y) {
            for (int x = x0; x < x1; ++x) local.set(x - bx0, y - by0);
        }
    }
    auto comps = connected_components(local);
    Component c = std::move(comps.front());
    for (Pixel& p : c.pixels) {
        p.x += bx0;
        p.y += by0;
    }
    c.bbox.x0 += bx0;
    c.bbox.x1 += bx0;
    c.bbox.y0 += by0;
    c.bbox.y1 += by0;
    return c;
}

struct Fitted {
    Polyline polyline;
    std::size_t patches = 0;
};

// Trims to target * stride, then extends one stride at a time until the
// resolved in-region patch count reaches the target or the spline runs out.
std::optional<Fitted> fit_length(const Polyline& full, const PatchGrid& grid, const std::unordered_set<int>& region,
                                 int target) {
    const double step = grid.spec.stride();
    const double total = full.length();
    double length = std::min(total, target * step);
    std::optional<Fitted> best;
    while (true) {
        Fitted f{trim_polyline(full, length), 0};
        const auto ids = resolve_scribble_patches(grid, f.polyline);
        const bool contained =
            std::all_of(ids.begin(), ids.end(), [&](int id) { return region.count(id) != 0; });
        if (!contained) break;
        f.patches = ids.size();
        best = f;
        if (static_cast<int>(f.patches) >= target || length >= total) break;
        length = std::min(total, length + step);
    }
    return best;
}

} // namespace

Scribble corrective_scribble(const std::vector<int>& region_patch_ids, const PatchGrid& grid, int target_patches,
                             ScribbleKind kind, const ScribbleParams& params) {
    require(!region_patch_ids.empty(), ErrorCode::InvalidArgument, "error region has no patches");
    require(target_patches >= 1, ErrorCode::InvalidArgument, "target patch count must be >= 1");
    require(kind != ScribbleKind::GroundTruth, ErrorCode::InvalidArgument, "corrective scribble needs FP or FN kind");
    const std::unordered_set<int> region(region_patch_ids.begin(), region_patch_ids.end());
    const ScribbleClass cls = class_for_kind(kind, ScribbleClass::Tumor);

    std::optional<Fitted> best;
    if (region_patch_ids.size() > 1) {
        const Component comp = region_component(region_patch_ids, grid);
        for (std::uint64_t attempt = 0; attempt < 4; ++attempt) {
            ScribbleParams p = params;
            p.seed = derive_seed(params.seed, attempt);
            Scribble raw;
            try {
                raw = synth_scribble(comp, p, cls, kind);
            } catch (const Error&) {
                continue;
            }
            auto fitted = fit_length(raw.polyline, grid, region, target_patches);
            if (fitted && (!best || fitted->patches > best->patches)) best = std::move(fitted);
            if (best && static_cast<int>(best->patches) >= target_patches) break;
        }
    }

    Scribble out;
    out.cls = cls;
    out.kind = kind;
    out.seed = params.seed;
    if (best && best->patches > 0) {
        out.polyline = std::move(best->polyline);
        return out;
    }
    // Dot annotation on the patch nearest the region's centroid.
    Point centroid{};
    for (int id : region_patch_ids) centroid = centroid + grid.patches[id].center(grid.spec.size);
    centroid = (1.0 / static_cast<double>(region_patch_ids.size())) * centroid;
    int chosen = region_patch_ids.front();
    double best_d = std::numeric_limits<double>::infinity();
    for (int id : region_patch_ids) {
        const double d = distance(grid.patches[id].center(grid.spec.size), centroid);
        if (d < best_d) {
            best_d = d;
            chosen = id;
        }
    }
    const Point c = grid.patches[chosen].center(grid.spec.size);
    out.polyline.points = {c, c + Point{0.5, 0.0}};
    return out;
}

nlohmann::json scribble_to_json(const Scribble& scribble) {
    nlohmann::json points = nlohmann::json::array();
    for (const Point& p : scribble.polyline.points) points.push_back({p.x, p.y});
    return {{"class", to_string(scribble.cls)},
            {"kind", to_string(scribble.kind)},
            {"seed", scribble.seed},
            {"points", std::move(points)}};
}

Scribble scribble_from_json(const nlohmann::json& j) {
    Scribble s;
    try {
        s.kind = scribble_kind_from_string(j.at("kind").get<std::string>());
        s.cls = j.contains("class") ? scribble_class_from_string(j.at("class").get<std::string>())
                                    : class_for_kind(s.kind, ScribbleClass::Tumor);
        s.seed = j.value("seed", std::uint64_t{0});
        for (const auto& p : j.at("points")) {
            require(p.is_array() && p.size() == 2, ErrorCode::ParseError, "scribble point must be [x, y]");
            s.polyline.points.push_back({p[0].get<double>(), p[1].get<double>()});
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ParseError, std::string("scribble: ") + e.what());
    }
    return s;
}

std::string scribbles_to_jsonl(const std::vector<Scribble>& scribbles) {
    std::string out;
    for (const auto& s : scribbles) {
        out += scribble_to_json(s).dump();
        out += '\n';
    }
    return out;
}

std::vector<Scribble> scribbles_from_jsonl(const std::string& text) {
    std::vector<Scribble> out;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            out.push_back(scribble_from_json(nlohmann::json::parse(line)));
        } catch (const std::exception& e) {
            fail(ErrorCode::ParseError, "scribbles line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

} // namespace wsic
