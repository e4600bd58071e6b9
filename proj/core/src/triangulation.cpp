#include "wsic/triangulation.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>

#include "wsic/error.hpp"

namespace wsic {

std::size_t Triangulation::dual_edge_count() const {
    std::size_t twice = 0;
    for (const auto& n : dual) twice += n.size();
    return twice / 2;
}

namespace {

bool in_triangle_closed(Point p, Point a, Point b, Point c) {
    // Triangle a, b, c is counter-clockwise.
    return cross(a, b, p) >= 0.0 && cross(b, c, p) >= 0.0 && cross(c, a, p) >= 0.0;
}

// > 0 when d lies strictly inside the circumcircle of counter-clockwise a, b, c.
double in_circle(Point a, Point b, Point c, Point d) {
    const double adx = a.x - d.x, ady = a.y - d.y;
    const double bdx = b.x - d.x, bdy = b.y - d.y;
    const double cdx = c.x - d.x, cdy = c.y - d.y;
    const double ad = adx * adx + ady * ady;
    const double bd = bdx * bdx + bdy * bdy;
    const double cd = cdx * cdx + cdy * cdy;
    return adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx);
}

bool strictly_in_circle(Point a, Point b, Point c, Point d) {
    const double scale = std::max({std::abs(a.x - d.x), std::abs(a.y - d.y), std::abs(b.x - d.x),
                                   std::abs(b.y - d.y), std::abs(c.x - d.x), std::abs(c.y - d.y)});
    const double s2 = scale * scale;
    return in_circle(a, b, c, d) > 1e-12 * s2 * s2;
}

std::vector<std::array<int, 3>> ear_clip(const std::vector<Point>& v) {
    std::vector<int> ring(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) ring[i] = static_cast<int>(i);
    std::vector<std::array<int, 3>> tris;
    while (ring.size() > 3) {
        const std::size_t m = ring.size();
        bool clipped = false;
        for (std::size_t k = 0; k < m; ++k) {
            const int ip = ring[(k + m - 1) % m];
            const int ic = ring[k];
            const int in = ring[(k + 1) % m];
            if (cross(v[ip], v[ic], v[in]) <= 0.0) continue;
            bool ear = true;
            for (int other : ring) {
                if (other == ip || other == ic || other == in) continue;
                if (in_triangle_closed(v[other], v[ip], v[ic], v[in])) {
                    ear = false;
                    break;
                }
            }
            if (!ear) continue;
            tris.push_back({ip, ic, in});
            ring.erase(ring.begin() + static_cast<std::ptrdiff_t>(k));
            clipped = true;
            break;
        }
        if (!clipped) fail(ErrorCode::NonSimplePolygon, "triangulation: no ear found");
    }
    if (cross(v[ring[0]], v[ring[1]], v[ring[2]]) <= 0.0) {
        fail(ErrorCode::NonSimplePolygon, "triangulation: degenerate final triangle");
    }
    tris.push_back({ring[0], ring[1], ring[2]});
    return tris;
}

// Index of the vertex of t that is not a or b.
int opposite(const std::array<int, 3>& t, int a, int b) {
    for (int x : t) {
        if (x != a && x != b) return x;
    }
    return -1;
}

bool is_polygon_edge(int a, int b, int n) {
    const int d = std::abs(a - b);
    return d == 1 || d == n - 1;
}

// Reorders t so that it starts at vertex `first`, preserving orientation.
std::array<int, 3> rotate_to(const std::array<int, 3>& t, int first) {
    for (int k = 0; k < 3; ++k) {
        if (t[k] == first) return {t[k], t[(k + 1) % 3], t[(k + 2) % 3]};
    }
    return t;
}

void lawson_flips(const std::vector<Point>& v, std::vector<std::array<int, 3>>& tris) {
    const int n = static_cast<int>(v.size());
    const std::size_t max_sweeps = 4 * tris.size() * tris.size() + 8;
    for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
        bool flipped = false;
        for (std::size_t i = 0; i < tris.size() && !flipped; ++i) {
            for (std::size_t j = i + 1; j < tris.size() && !flipped; ++j) {
                for (int e = 0; e < 3 && !flipped; ++e) {
                    const int a = tris[i][e];
                    const int b = tris[i][(e + 1) % 3];
                    const auto& tj = tris[j];
                    if (std::find(tj.begin(), tj.end(), a) == tj.end() ||
                        std::find(tj.begin(), tj.end(), b) == tj.end()) {
                        continue;
                    }
                    if (is_polygon_edge(a, b, n)) continue;
                    const int c = tris[i][(e + 2) % 3];
                    const int d = opposite(tj, a, b);
                    // Quad a, d, b, c must be strictly convex for the flip to stay valid.
                    if (cross(v[c], v[d], v[a]) * cross(v[c], v[d], v[b]) >= 0.0) continue;
                    if (!strictly_in_circle(v[a], v[b], v[c], v[d])) continue;
                    // Replace diagonal ab with cd.
                    std::array<int, 3> t1{c, a, d};
                    std::array<int, 3> t2{d, b, c};
                    if (cross(v[t1[0]], v[t1[1]], v[t1[2]]) < 0.0) std::swap(t1[1], t1[2]);
                    if (cross(v[t2[0]], v[t2[1]], v[t2[2]]) < 0.0) std::swap(t2[1], t2[2]);
                    tris[i] = rotate_to(t1, *std::min_element(t1.begin(), t1.end()));
                    tris[j] = rotate_to(t2, *std::min_element(t2.begin(), t2.end()));
                    flipped = true;
                }
            }
        }
        if (!flipped) return;
    }
}

} // namespace

Triangulation triangulate_polygon(std::span<const Point> polygon) {
    if (!is_simple_polygon(polygon)) fail(ErrorCode::NonSimplePolygon, "triangulation: polygon is not simple");
    Triangulation tri;
    tri.vertices.assign(polygon.begin(), polygon.end());
    if (signed_area(tri.vertices) < 0.0) std::reverse(tri.vertices.begin(), tri.vertices.end());

    tri.triangles = ear_clip(tri.vertices);
    for (auto& t : tri.triangles) t = rotate_to(t, *std::min_element(t.begin(), t.end()));
    lawson_flips(tri.vertices, tri.triangles);

    const std::size_t count = tri.triangles.size();
    tri.dual.assign(count, {});
    std::map<std::pair<int, int>, int> edge_owner;
    for (std::size_t t = 0; t < count; ++t) {
        for (int e = 0; e < 3; ++e) {
            int a = tri.triangles[t][e];
            int b = tri.triangles[t][(e + 1) % 3];
            if (a > b) std::swap(a, b);
            auto [it, inserted] = edge_owner.try_emplace({a, b}, static_cast<int>(t));
            if (!inserted) {
                tri.dual[t].push_back(it->second);
                tri.dual[it->second].push_back(static_cast<int>(t));
            }
        }
    }
    for (auto& n : tri.dual) std::sort(n.begin(), n.end());
    return tri;
}

namespace {

// Distances from `source` (-1 when unreachable) plus BFS parents.
std::pair<std::vector<int>, std::vector<int>> bfs(const std::vector<std::vector<int>>& adj, int source) {
    std::vector<int> dist(adj.size(), -1), parent(adj.size(), -1);
    std::deque<int> queue{source};
    dist[source] = 0;
    while (!queue.empty()) {
        const int u = queue.front();
        queue.pop_front();
        for (int w : adj[u]) {
            if (dist[w] < 0) {
                dist[w] = dist[u] + 1;
                parent[w] = u;
                queue.push_back(w);
            }
        }
    }
    return {dist, parent};
}

int farthest(const std::vector<int>& dist) {
    int best = 0;
    for (std::size_t i = 0; i < dist.size(); ++i) {
        if (dist[i] > dist[best]) best = static_cast<int>(i);
    }
    return best;
}

} // namespace

std::vector<int> tree_diameter_path(const std::vector<std::vector<int>>& adjacency) {
    if (adjacency.empty()) return {};
    const int a = farthest(bfs(adjacency, 0).first);
    const auto [dist, parent] = bfs(adjacency, a);
    const int b = farthest(dist);
    std::vector<int> path;
    for (int u = b; u >= 0; u = parent[u]) path.push_back(u);
    // path runs b .. a
    if (path.front() > path.back()) std::reverse(path.begin(), path.end());
    return path;
}

std::vector<int> longest_triangle_path(const Triangulation& tri) {
    require(!tri.triangles.empty(), ErrorCode::InvalidArgument, "triangulation has no triangles");
    return tree_diameter_path(tri.dual);
}

} // namespace wsic
