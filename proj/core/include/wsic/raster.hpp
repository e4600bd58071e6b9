#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "wsic/error.hpp"

namespace wsic {

/// 8-bit interleaved image, 1 (gray) or 3 (RGB) channels.
class Raster {
public:
    Raster() = default;
    Raster(int width, int height, int channels, std::uint8_t fill = 0);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    int channels() const noexcept { return channels_; }
    bool empty() const noexcept { return data_.empty(); }

    std::uint8_t& at(int x, int y, int c = 0) {
        return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
    }
    std::uint8_t at(int x, int y, int c = 0) const {
        return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
    }

    std::vector<std::uint8_t>& data() noexcept { return data_; }
    const std::vector<std::uint8_t>& data() const noexcept { return data_; }

    /// Copies the w x h window with top-left (x0, y0). The window must fit.
    Raster crop(int x0, int y0, int w, int h) const;

    bool operator==(const Raster&) const = default;

private:
    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    std::vector<std::uint8_t> data_;
};

/// One boolean per pixel, row-major.
class BinaryMask {
public:
    BinaryMask() = default;
    BinaryMask(int width, int height, bool fill = false)
        : width_(width), height_(height),
          bits_(static_cast<std::size_t>(width) * height, fill ? 1 : 0) {
        require(width > 0 && height > 0, ErrorCode::InvalidArgument, "mask dimensions must be positive");
    }

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return bits_.size(); }

    bool get(int x, int y) const { return bits_[static_cast<std::size_t>(y) * width_ + x] != 0; }
    void set(int x, int y, bool v = true) { bits_[static_cast<std::size_t>(y) * width_ + x] = v ? 1 : 0; }
    bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }
    /// Out-of-bounds reads are false.
    bool test(int x, int y) const { return contains(x, y) && get(x, y); }

    std::size_t popcount() const;
    bool same_shape(const BinaryMask& other) const {
        return width_ == other.width_ && height_ == other.height_;
    }

    const std::vector<std::uint8_t>& bits() const noexcept { return bits_; }
    std::vector<std::uint8_t>& bits() noexcept { return bits_; }

    bool operator==(const BinaryMask&) const = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> bits_;
};

BinaryMask operator&(const BinaryMask& a, const BinaryMask& b);
BinaryMask operator|(const BinaryMask& a, const BinaryMask& b);
/// a AND NOT b
BinaryMask subtract(const BinaryMask& a, const BinaryMask& b);
bool is_subset(const BinaryMask& a, const BinaryMask& b);

/// Summed-area table over a mask for O(1) rectangle counts.
class IntegralMask {
public:
    explicit IntegralMask(const BinaryMask& mask);
    /// Set pixels in [x0, x0 + w) x [y0, y0 + h), clipped to the mask.
    std::int64_t count(int x0, int y0, int w, int h) const;

private:
    int width_;
    int height_;
    std::vector<std::int64_t> sums_;
};

} // namespace wsic
