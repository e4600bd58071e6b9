#include "wsic/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace wsic {

double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

double cross(Point a, Point b, Point c) {
    return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

double Polyline::length() const {
    double total = 0.0;
    for (std::size_t i = 1; i < points.size(); ++i) total += distance(points[i - 1], points[i]);
    return total;
}

Point Polyline::point_at(double s) const {
    if (points.empty()) return {};
    if (s <= 0.0) return points.front();
    double walked = 0.0;
    for (std::size_t i = 1; i < points.size(); ++i) {
        const double seg = distance(points[i - 1], points[i]);
        if (walked + seg >= s && seg > 0.0) {
            const double t = (s - walked) / seg;
            return points[i - 1] + t * (points[i] - points[i - 1]);
        }
        walked += seg;
    }
    return points.back();
}

double signed_area(std::span<const Point> polygon) {
    double twice = 0.0;
    const std::size_t n = polygon.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Point& a = polygon[i];
        const Point& b = polygon[(i + 1) % n];
        twice += a.x * b.y - b.x * a.y;
    }
    return 0.5 * twice;
}

namespace {

int sign(double v) { return (v > 0.0) - (v < 0.0); }

bool on_segment(Point a, Point b, Point p) {
    return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
           p.y <= std::max(a.y, b.y);
}

bool segments_touch(Point a, Point b, Point c, Point d) {
    const int o1 = sign(cross(a, b, c));
    const int o2 = sign(cross(a, b, d));
    const int o3 = sign(cross(c, d, a));
    const int o4 = sign(cross(c, d, b));
    if (o1 != o2 && o3 != o4) return true;
    if (o1 == 0 && on_segment(a, b, c)) return true;
    if (o2 == 0 && on_segment(a, b, d)) return true;
    if (o3 == 0 && on_segment(c, d, a)) return true;
    if (o4 == 0 && on_segment(c, d, b)) return true;
    return false;
}

} // namespace

bool is_simple_polygon(std::span<const Point> polygon) {
    const std::size_t n = polygon.size();
    if (n < 3) return false;
    if (std::abs(signed_area(polygon)) <= 0.0) return false;
    for (std::size_t i = 0; i < n; ++i) {
        if (polygon[i] == polygon[(i + 1) % n]) return false;
    }
    for (std::size_t i = 0; i < n; ++i) {
        const Point a = polygon[i];
        const Point b = polygon[(i + 1) % n];
        // Adjacent edges may only share their common vertex.
        const Point c = polygon[(i + 2) % n];
        if (sign(cross(a, b, c)) == 0) {
            const double dot = (b.x - a.x) * (c.x - b.x) + (b.y - a.y) * (c.y - b.y);
            if (dot < 0.0) return false;
        }
        for (std::size_t j = i + 2; j < n; ++j) {
            if (i == 0 && j == n - 1) continue;
            if (segments_touch(a, b, polygon[j], polygon[(j + 1) % n])) return false;
        }
    }
    return true;
}

std::vector<Point> catmull_rom(std::span<const Point> controls, int samples_per_hop) {
    std::vector<Point> out;
    const std::size_t m = controls.size();
    if (m == 0) return out;
    if (m == 1) {
        out.push_back(controls[0]);
        return out;
    }
    out.reserve((m - 1) * static_cast<std::size_t>(samples_per_hop) + 1);
    for (std::size_t i = 0; i + 1 < m; ++i) {
        const Point p0 = controls[i == 0 ? 0 : i - 1];
        const Point p1 = controls[i];
        const Point p2 = controls[i + 1];
        const Point p3 = controls[std::min(i + 2, m - 1)];
        for (int k = 0; k < samples_per_hop; ++k) {
            const double t = static_cast<double>(k) / samples_per_hop;
            const double t2 = t * t;
            const double t3 = t2 * t;
            auto blend = [&](double v0, double v1, double v2, double v3) {
                return 0.5 * (2.0 * v1 + (-v0 + v2) * t + (2.0 * v0 - 5.0 * v1 + 4.0 * v2 - v3) * t2 +
                              (-v0 + 3.0 * v1 - 3.0 * v2 + v3) * t3);
            };
            out.push_back({blend(p0.x, p1.x, p2.x, p3.x), blend(p0.y, p1.y, p2.y, p3.y)});
        }
    }
    out.push_back(controls[m - 1]);
    return out;
}

double hausdorff(std::span<const Point> a, std::span<const Point> b) {
    auto directed = [](std::span<const Point> from, std::span<const Point> to) {
        double worst = 0.0;
        for (const Point& p : from) {
            double best = std::numeric_limits<double>::infinity();
            for (const Point& q : to) best = std::min(best, distance(p, q));
            worst = std::max(worst, best);
        }
        return worst;
    };
    return std::max(directed(a, b), directed(b, a));
}

} // namespace wsic
