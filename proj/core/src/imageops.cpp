#include "wsic/imageops.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace wsic {

namespace {
__extension__ typedef __int128 Int128;
} // namespace

BinaryMask Component::to_mask(int width, int height) const {
    BinaryMask mask(width, height);
    for (const Pixel& p : pixels) mask.set(p.x, p.y);
    return mask;
}

Histogram gray_histogram(const Raster& gray) {
    require(gray.channels() == 1, ErrorCode::InvalidArgument, "histogram needs a gray raster");
    Histogram h{};
    for (std::uint8_t v : gray.data()) ++h[v];
    return h;
}

double between_class_variance(const Histogram& histogram, int t) {
    // sigma_b^2 = (S0 * N - S * n0)^2 / (N^2 * n0 * n1), computed from exact integer sums.
    Int128 n = 0, s = 0, n0 = 0, s0 = 0;
    for (int i = 0; i < 256; ++i) {
        n += histogram[i];
        s += static_cast<Int128>(histogram[i]) * i;
        if (i < t) {
            n0 += histogram[i];
            s0 += static_cast<Int128>(histogram[i]) * i;
        }
    }
    const Int128 n1 = n - n0;
    if (n0 == 0 || n1 == 0) return 0.0;
    const long double diff = static_cast<long double>(s0 * n - s * n0);
    const long double nn = static_cast<long double>(n);
    return static_cast<double>(diff * diff /
                               (nn * nn * static_cast<long double>(n0) * static_cast<long double>(n1)));
}

int otsu_threshold(const Histogram& histogram) {
    int lowest = -1;
    for (int i = 0; i < 256; ++i) {
        if (histogram[i] != 0) {
            lowest = i;
            break;
        }
    }
    require(lowest >= 0, ErrorCode::DegenerateInput, "otsu: histogram is empty");

    Int128 n = 0, s = 0;
    for (int i = 0; i < 256; ++i) {
        n += histogram[i];
        s += static_cast<Int128>(histogram[i]) * i;
    }
    const long double nn = static_cast<long double>(n);

    int best_t = lowest;
    long double best = -1.0L;
    Int128 n0 = 0, s0 = 0;
    for (int i = 0; i < lowest; ++i) {
        n0 += histogram[i];
        s0 += static_cast<Int128>(histogram[i]) * i;
    }
    for (int t = lowest; t < 256; ++t) {
        // n0, s0 cover levels < t here.
        const Int128 n1 = n - n0;
        long double var = 0.0L;
        if (n0 != 0 && n1 != 0) {
            const long double diff = static_cast<long double>(s0 * n - s * n0);
            var = diff * diff / (nn * nn * static_cast<long double>(n0) * static_cast<long double>(n1));
        }
        if (var > best + 1e-12L * std::abs(best)) {
            best = var;
            best_t = t;
        }
        n0 += histogram[t];
        s0 += static_cast<Int128>(histogram[t]) * t;
    }
    return best_t;
}

Raster to_gray(const Raster& rgb) {
    if (rgb.channels() == 1) return rgb;
    Raster gray(rgb.width(), rgb.height(), 1);
    const auto& src = rgb.data();
    auto& dst = gray.data();
    for (std::size_t i = 0, n = dst.size(); i < n; ++i) {
        const double v = 0.299 * src[3 * i] + 0.587 * src[3 * i + 1] + 0.114 * src[3 * i + 2];
        dst[i] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
    return gray;
}

namespace {

// Disc dilation via run painting: each set run in row y widens by the disc's
// half-chord at every row offset.
BinaryMask dilate_disc(const BinaryMask& mask, int radius) {
    const int w = mask.width();
    const int h = mask.height();
    std::vector<int> chord(2 * radius + 1);
    for (int dy = -radius; dy <= radius; ++dy) {
        chord[dy + radius] = static_cast<int>(std::floor(std::sqrt(static_cast<double>(radius * radius - dy * dy))));
    }
    std::vector<int> delta(static_cast<std::size_t>(w + 1) * h, 0);
    for (int y = 0; y < h; ++y) {
        int x = 0;
        while (x < w) {
            if (!mask.get(x, y)) {
                ++x;
                continue;
            }
            const int a = x;
            while (x < w && mask.get(x, y)) ++x;
            const int b = x - 1;
            for (int dy = -radius; dy <= radius; ++dy) {
                const int yy = y + dy;
                if (yy < 0 || yy >= h) continue;
                const int hw = chord[dy + radius];
                const int lo = std::max(0, a - hw);
                const int hi = std::min(w - 1, b + hw);
                int* row = delta.data() + static_cast<std::size_t>(yy) * (w + 1);
                row[lo] += 1;
                row[hi + 1] -= 1;
            }
        }
    }
    BinaryMask out(w, h);
    for (int y = 0; y < h; ++y) {
        const int* row = delta.data() + static_cast<std::size_t>(y) * (w + 1);
        int acc = 0;
        for (int x = 0; x < w; ++x) {
            acc += row[x];
            if (acc > 0) out.set(x, y);
        }
    }
    return out;
}

BinaryMask complement(const BinaryMask& mask) {
    BinaryMask out(mask.width(), mask.height());
    for (std::size_t i = 0; i < mask.size(); ++i) out.bits()[i] = mask.bits()[i] ^ 1u;
    return out;
}

} // namespace

BinaryMask dilate(const BinaryMask& mask, int radius) {
    require(radius >= 0, ErrorCode::InvalidArgument, "radius must be non-negative");
    if (radius == 0) return mask;
    return dilate_disc(mask, radius);
}

BinaryMask erode(const BinaryMask& mask, int radius) {
    require(radius >= 0, ErrorCode::InvalidArgument, "radius must be non-negative");
    if (radius == 0) return mask;
    return complement(dilate_disc(complement(mask), radius));
}

BinaryMask morph_close(const BinaryMask& mask, int radius) {
    require(radius >= 1, ErrorCode::InvalidArgument, "closing radius must be >= 1");
    return erode(dilate(mask, radius), radius);
}

std::vector<Component> connected_components(const BinaryMask& mask) {
    const int w = mask.width();
    const int h = mask.height();
    std::vector<int> labels(mask.size(), -1);
    std::vector<Component> out;
    std::deque<Pixel> queue;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t idx = static_cast<std::size_t>(y) * w + x;
            if (!mask.bits()[idx] || labels[idx] >= 0) continue;
            Component comp;
            comp.label = static_cast<int>(out.size());
            comp.bbox = {x, y, x, y};
            labels[idx] = comp.label;
            queue.push_back({x, y});
            while (!queue.empty()) {
                const Pixel p = queue.front();
                queue.pop_front();
                comp.pixels.push_back(p);
                comp.bbox.x0 = std::min(comp.bbox.x0, p.x);
                comp.bbox.y0 = std::min(comp.bbox.y0, p.y);
                comp.bbox.x1 = std::max(comp.bbox.x1, p.x);
                comp.bbox.y1 = std::max(comp.bbox.y1, p.y);
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int nx = p.x + dx;
                        const int ny = p.y + dy;
                        if ((dx == 0 && dy == 0) || !mask.contains(nx, ny)) continue;
                        const std::size_t n = static_cast<std::size_t>(ny) * w + nx;
                        if (mask.bits()[n] && labels[n] < 0) {
                            labels[n] = comp.label;
                            queue.push_back({nx, ny});
                        }
                    }
                }
            }
            out.push_back(std::move(comp));
        }
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const Component& a, const Component& b) { return a.area() > b.area(); });
    return out;
}

namespace {

// Clockwise in image coordinates (y grows downward), starting east.
constexpr int kDx[8] = {1, 1, 0, -1, -1, -1, 0, 1};
constexpr int kDy[8] = {0, 1, 1, 1, 0, -1, -1, -1};

int direction_of(int dx, int dy) {
    for (int d = 0; d < 8; ++d) {
        if (kDx[d] == dx && kDy[d] == dy) return d;
    }
    return -1;
}

} // namespace

Polyline trace_contour(const Component& component) {
    require(component.area() >= 4, ErrorCode::DegenerateInput, "component too small to trace");

    // Local membership grid with a one-pixel background border.
    const BoundingBox& bb = component.bbox;
    const int lw = bb.width() + 2;
    const int lh = bb.height() + 2;
    std::vector<std::uint8_t> local(static_cast<std::size_t>(lw) * lh, 0);
    for (const Pixel& p : component.pixels) {
        local[static_cast<std::size_t>(p.y - bb.y0 + 1) * lw + (p.x - bb.x0 + 1)] = 1;
    }
    auto inside = [&](int x, int y) {
        return local[static_cast<std::size_t>(y - bb.y0 + 1) * lw + (x - bb.x0 + 1)] != 0;
    };

    Pixel start{bb.x1 + 1, bb.y1 + 1};
    for (int y = bb.y0; y <= bb.y1 && start.y > bb.y1; ++y) {
        for (int x = bb.x0; x <= bb.x1; ++x) {
            if (inside(x, y)) {
                start = {x, y};
                break;
            }
        }
    }

    std::vector<Pixel> boundary{start};
    Pixel current = start;
    int backtrack = 4; // west of the first pixel in scan order is background
    Pixel second{};
    bool have_second = false;
    const std::size_t limit = 4 * component.area() + 16;
    while (boundary.size() <= limit) {
        int found = -1;
        for (int k = 1; k <= 8; ++k) {
            const int d = (backtrack + k) % 8;
            if (inside(current.x + kDx[d], current.y + kDy[d])) {
                found = d;
                break;
            }
        }
        if (found < 0) break; // isolated pixel
        const Pixel next{current.x + kDx[found], current.y + kDy[found]};
        const int prev_dir = (found + 7) % 8;
        const Pixel prev{current.x + kDx[prev_dir], current.y + kDy[prev_dir]};
        if (current == start && have_second && next == second) break;
        if (!have_second) {
            second = next;
            have_second = true;
        }
        backtrack = direction_of(prev.x - next.x, prev.y - next.y);
        current = next;
        boundary.push_back(current);
    }

    Polyline contour;
    contour.closed = true;
    contour.points.reserve(boundary.size());
    for (const Pixel& p : boundary) contour.points.push_back({static_cast<double>(p.x), static_cast<double>(p.y)});
    if (contour.points.front() != contour.points.back()) contour.points.push_back(contour.points.front());

    std::vector<Point> ring(contour.points.begin(), contour.points.end() - 1);
    require(ring.size() >= 3 && std::abs(signed_area(ring)) > 0.0, ErrorCode::DegenerateInput,
            "component contour encloses no area");
    return contour;
}

BinaryMask tissue_mask(const Raster& slide, const TissueConfig& config) {
    require(slide.channels() == 3, ErrorCode::InvalidArgument, "tissue mask expects an RGB slide");
    const Raster gray = to_gray(slide);
    const Histogram hist = gray_histogram(gray);
    const auto occupied = std::count_if(hist.begin(), hist.end(), [](std::uint64_t c) { return c != 0; });
    require(occupied >= 2, ErrorCode::DegenerateInput, "slide has no contrast; cannot separate tissue");
    const int t = otsu_threshold(hist);

    BinaryMask mask(slide.width(), slide.height());
    const auto& g = gray.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
        const bool dark = g[i] < t;
        mask.bits()[i] = (config.invert ? !dark : dark) ? 1 : 0;
    }
    mask = morph_close(mask, config.closing_radius);
    require(mask.popcount() > 0, ErrorCode::DegenerateInput, "no tissue found");
    return mask;
}

} // namespace wsic
