#pragma once

#include <span>
#include <vector>

namespace wsic {

struct Point {
    double x = 0.0;
    double y = 0.0;

    friend Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
    friend Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
    friend Point operator*(double s, Point p) { return {s * p.x, s * p.y}; }
    bool operator==(const Point&) const = default;
};

double distance(Point a, Point b);
/// z-component of (b - a) x (c - a); positive when a, b, c turn counter-clockwise
/// in a y-up frame.
double cross(Point a, Point b, Point c);

/// Ordered point list in pixel coordinates. A closed polyline repeats its first
/// point at the end.
struct Polyline {
    std::vector<Point> points;
    bool closed = false;

    double length() const;
    /// Point at arc-length position s, clamped to [0, length()].
    Point point_at(double s) const;
};

/// Shoelace area of a polygon given without the closing repeat. Signed.
double signed_area(std::span<const Point> polygon);

/// True when the polygon (no closing repeat) has >= 3 vertices, non-zero area,
/// and no pair of non-adjacent edges touches.
bool is_simple_polygon(std::span<const Point> polygon);

/// Catmull-Rom interpolation through the control points with uniform
/// parameterisation, `samples_per_hop` points per segment, endpoints clamped by
/// repeating the first/last control point.
std::vector<Point> catmull_rom(std::span<const Point> controls, int samples_per_hop);

/// Symmetric Hausdorff distance between two point sets.
double hausdorff(std::span<const Point> a, std::span<const Point> b);

} // namespace wsic
