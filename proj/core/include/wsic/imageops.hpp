#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "wsic/geometry.hpp"
#include "wsic/raster.hpp"

namespace wsic {

using Histogram = std::array<std::uint64_t, 256>;

/// Pixel coordinate of a component member.
struct Pixel {
    int x = 0;
    int y = 0;
    bool operator==(const Pixel&) const = default;
};

struct BoundingBox {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0; // inclusive
    int width() const { return x1 - x0 + 1; }
    int height() const { return y1 - y0 + 1; }
};

struct Component {
    int label = 0;
    std::vector<Pixel> pixels;
    BoundingBox bbox;

    std::size_t area() const { return pixels.size(); }
    /// Rasterises the component back into a mask of the given size.
    BinaryMask to_mask(int width, int height) const;
};

struct TissueConfig {
    int closing_radius = 4;
    /// Keep the bright Otsu class instead of the dark one.
    bool invert = false;
};

Histogram gray_histogram(const Raster& gray);

/// Otsu level t splitting the histogram into {< t} and {>= t}. The scan starts at
/// the lowest occupied level; ties go to the smallest level.
int otsu_threshold(const Histogram& histogram);

/// Between-class variance of the split {< t} / {>= t}.
double between_class_variance(const Histogram& histogram, int t);

/// Fixed luma weights 0.299 / 0.587 / 0.114, rounded to nearest.
Raster to_gray(const Raster& rgb);

BinaryMask dilate(const BinaryMask& mask, int radius);
BinaryMask erode(const BinaryMask& mask, int radius);
/// Dilation then erosion with a disc of the given radius. Pixels outside the
/// image count as background for dilation and as foreground for erosion, so the
/// result is a true closing on the image domain: extensive and idempotent.
BinaryMask morph_close(const BinaryMask& mask, int radius);

/// 8-connected components sorted by area, largest first; equal areas keep scan
/// order.
std::vector<Component> connected_components(const BinaryMask& mask);

/// Moore-neighbour boundary trace of the component's outer contour through pixel
/// centres. The returned polyline is closed (first point repeated at the end).
/// Components with area < 4 or an enclosed contour area of zero are rejected.
Polyline trace_contour(const Component& component);

/// gray -> Otsu -> keep the dark class -> closing.
BinaryMask tissue_mask(const Raster& slide, const TissueConfig& config = {});

} // namespace wsic
