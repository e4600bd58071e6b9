#pragma once

#include <array>
#include <span>
#include <vector>

#include "wsic/geometry.hpp"

namespace wsic {

/// Triangulation of a simple polygon's interior with its dual graph.
struct Triangulation {
    std::vector<Point> vertices;
    /// Vertex index triples, counter-clockwise.
    std::vector<std::array<int, 3>> triangles;
    /// dual[t] lists triangles sharing an interior edge with t, ascending.
    std::vector<std::vector<int>> dual;

    std::size_t dual_edge_count() const;
};

/// Constrained Delaunay triangulation of a simple polygon, restricted to the
/// interior and using only the polygon's vertices. Ear clipping followed by
/// Lawson flips of the interior diagonals. Throws NonSimplePolygon otherwise.
Triangulation triangulate_polygon(std::span<const Point> polygon);

/// Maximum-hop simple path of the dual tree via double breadth-first search.
/// Farthest-node ties pick the smallest triangle index; the returned sequence
/// starts at the smaller of its two end triangles.
std::vector<int> longest_triangle_path(const Triangulation& tri);

/// Longest path over an arbitrary adjacency (must be a forest); used by the
/// triangulation overload and directly testable on synthetic trees.
std::vector<int> tree_diameter_path(const std::vector<std::vector<int>>& adjacency);

} // namespace wsic
