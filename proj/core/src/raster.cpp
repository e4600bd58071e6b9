#include "wsic/raster.hpp"

#include <algorithm>

namespace wsic {

Raster::Raster(int width, int height, int channels, std::uint8_t fill)
    : width_(width), height_(height), channels_(channels) {
    require(width > 0 && height > 0, ErrorCode::InvalidArgument, "raster dimensions must be positive");
    require(channels == 1 || channels == 3, ErrorCode::InvalidArgument, "raster must have 1 or 3 channels");
    data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

Raster Raster::crop(int x0, int y0, int w, int h) const {
    require(x0 >= 0 && y0 >= 0 && w > 0 && h > 0 && x0 + w <= width_ && y0 + h <= height_,
            ErrorCode::InvalidArgument, "crop window outside raster");
    Raster out(w, h, channels_);
    const std::size_t row_bytes = static_cast<std::size_t>(w) * channels_;
    for (int y = 0; y < h; ++y) {
        auto src = data_.begin() + (static_cast<std::size_t>(y0 + y) * width_ + x0) * channels_;
        std::copy_n(src, row_bytes, out.data_.begin() + static_cast<std::size_t>(y) * row_bytes);
    }
    return out;
}

std::size_t BinaryMask::popcount() const {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

namespace {
void check_same(const BinaryMask& a, const BinaryMask& b) {
    require(a.same_shape(b), ErrorCode::InvalidArgument, "mask dimensions differ");
}
} // namespace

BinaryMask operator&(const BinaryMask& a, const BinaryMask& b) {
    check_same(a, b);
    BinaryMask out(a.width(), a.height());
    for (std::size_t i = 0; i < a.size(); ++i) out.bits()[i] = a.bits()[i] & b.bits()[i];
    return out;
}

BinaryMask operator|(const BinaryMask& a, const BinaryMask& b) {
    check_same(a, b);
    BinaryMask out(a.width(), a.height());
    for (std::size_t i = 0; i < a.size(); ++i) out.bits()[i] = a.bits()[i] | b.bits()[i];
    return out;
}

BinaryMask subtract(const BinaryMask& a, const BinaryMask& b) {
    check_same(a, b);
    BinaryMask out(a.width(), a.height());
    for (std::size_t i = 0; i < a.size(); ++i) out.bits()[i] = a.bits()[i] & (b.bits()[i] ^ 1u);
    return out;
}

bool is_subset(const BinaryMask& a, const BinaryMask& b) {
    check_same(a, b);
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a.bits()[i] && !b.bits()[i]) return false;
    }
    return true;
}

IntegralMask::IntegralMask(const BinaryMask& mask)
    : width_(mask.width()), height_(mask.height()),
      sums_(static_cast<std::size_t>(mask.width() + 1) * (mask.height() + 1), 0) {
    const std::size_t stride = static_cast<std::size_t>(width_) + 1;
    for (int y = 0; y < height_; ++y) {
        std::int64_t row = 0;
        for (int x = 0; x < width_; ++x) {
            row += mask.get(x, y) ? 1 : 0;
            sums_[(y + 1) * stride + (x + 1)] = sums_[y * stride + (x + 1)] + row;
        }
    }
}

std::int64_t IntegralMask::count(int x0, int y0, int w, int h) const {
    const int xa = std::clamp(x0, 0, width_);
    const int ya = std::clamp(y0, 0, height_);
    const int xb = std::clamp(x0 + w, 0, width_);
    const int yb = std::clamp(y0 + h, 0, height_);
    if (xb <= xa || yb <= ya) return 0;
    const std::size_t stride = static_cast<std::size_t>(width_) + 1;
    return sums_[yb * stride + xb] - sums_[ya * stride + xb] - sums_[yb * stride + xa] +
           sums_[ya * stride + xa];
}

} // namespace wsic
