#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "wsic/geometry.hpp"
#include "wsic/imageops.hpp"
#include "wsic/rng.hpp"
#include "wsic/tiling.hpp"
#include "wsic/triangulation.hpp"

namespace wsic {

struct ScribbleParams {
    int contour_nodes = 15; // n_c
    int samples_per_hop = 8;
    std::uint64_t seed = 0;
    /// Components below this area are not scribbled.
    std::size_t min_component_area = 16;

    void validate() const;
};

enum class ScribbleClass { Tumor, NonTumor };
enum class ScribbleKind { GroundTruth, CorrectiveFp, CorrectiveFn };

std::string_view to_string(ScribbleClass c);
std::string_view to_string(ScribbleKind k);
ScribbleClass scribble_class_from_string(std::string_view s);
ScribbleKind scribble_kind_from_string(std::string_view s);

/// Class implied by a kind: FP corrections assert non-tumour, FN assert tumour.
ScribbleClass class_for_kind(ScribbleKind kind, ScribbleClass ground_truth_class);

struct Scribble {
    Polyline polyline;
    ScribbleClass cls = ScribbleClass::Tumor;
    ScribbleKind kind = ScribbleKind::GroundTruth;
    std::uint64_t seed = 0;

    double length() const { return polyline.length(); }
};

/// n_c points equally spaced by arc length along a closed contour, starting at
/// arc position `phase`.
std::vector<Point> sample_contour_nodes(const Polyline& contour, int node_count, double phase);

/// Draws a random phase in [0, L / n_c) and samples; when the resulting polygon is
/// not simple, retries with n_c - 1 down to 4 nodes, then throws NonSimplePolygon.
std::vector<Point> sample_simple_polygon(const Polyline& contour, int node_count, Rng& rng);

/// Uniform point inside a triangle (square-root barycentric transform).
Point sample_in_triangle(Point a, Point b, Point c, Rng& rng);

/// Contour -> nodes -> constrained Delaunay -> longest dual path -> one random
/// point per path triangle -> Catmull-Rom spline. Overflows are not clipped.
Scribble synth_scribble(const Component& component, const ScribbleParams& params,
                        ScribbleClass cls = ScribbleClass::Tumor, ScribbleKind kind = ScribbleKind::GroundTruth);

/// Top ceil(10% of K) components clamped to [1, 10]; input sorted by area.
std::vector<Component> select_tumor_components(const std::vector<Component>& components);

/// Ground-truth scribbles for one slide: one per selected tumour component plus
/// one non-tumour scribble on the largest tissue-minus-tumour component.
std::vector<Scribble> ground_truth_scribbles(const BinaryMask& tumor, const BinaryMask& tissue,
                                             const ScribbleParams& params);

/// Polyline prefix of the given arc length.
Polyline trim_polyline(const Polyline& polyline, double length);

/// Corrective scribble over a connected set of misclassified grid patches.
/// The spline is trimmed or extended along its path so that its resolved grid
/// patches number min(target, achievable), all inside the error region. A region
/// too small to triangulate degenerates to a dot on one patch centre.
Scribble corrective_scribble(const std::vector<int>& region_patch_ids, const PatchGrid& grid, int target_patches,
                             ScribbleKind kind, const ScribbleParams& params);

/// Fraction of the polyline's arc length whose points fall inside the mask,
/// measured on a fine arc-length sampling.
double arc_fraction_inside(const Polyline& polyline, const BinaryMask& mask, double step = 0.25);

nlohmann::json scribble_to_json(const Scribble& scribble);
Scribble scribble_from_json(const nlohmann::json& j);
std::string scribbles_to_jsonl(const std::vector<Scribble>& scribbles);
std::vector<Scribble> scribbles_from_jsonl(const std::string& text);

} // namespace wsic
