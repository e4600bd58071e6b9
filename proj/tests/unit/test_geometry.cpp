#include <gtest/gtest.h>

#include <cmath>

#include "wsic/geometry.hpp"
#include "wsic/png_io.hpp"
#include "wsic/rng.hpp"

using namespace wsic;

TEST(Polyline, LengthAndPointAt) {
    Polyline p{{{0, 0}, {3, 4}, {3, 10}}, false};
    EXPECT_DOUBLE_EQ(p.length(), 11.0);
    const Point q = p.point_at(8.0);
    EXPECT_DOUBLE_EQ(q.x, 3.0);
    EXPECT_DOUBLE_EQ(q.y, 7.0);
    EXPECT_EQ(p.point_at(100.0), (Point{3, 10}));
}

TEST(SimplePolygon, DetectsBowtie) {
    const std::vector<Point> square{{0, 0}, {4, 0}, {4, 4}, {0, 4}};
    const std::vector<Point> bowtie{{0, 0}, {4, 4}, {4, 0}, {0, 4}};
    EXPECT_TRUE(is_simple_polygon(square));
    EXPECT_FALSE(is_simple_polygon(bowtie));
    EXPECT_FALSE(is_simple_polygon(std::vector<Point>{{0, 0}, {1, 1}, {2, 2}}));
}

TEST(CatmullRom, InterpolatesControlPoints) {
    const std::vector<Point> c{{0, 0}, {10, 0}, {10, 10}, {20, 15}};
    const auto out = catmull_rom(c, 8);
    ASSERT_EQ(out.size(), 3u * 8 + 1);
    for (std::size_t i = 0; i < c.size(); ++i) {
        EXPECT_NEAR(out[i * 8].x, c[i].x, 1e-12);
        EXPECT_NEAR(out[i * 8].y, c[i].y, 1e-12);
    }
}

TEST(Hausdorff, IdenticalSetsHaveZeroDistance) {
    const std::vector<Point> a{{0, 0}, {1, 2}};
    const std::vector<Point> b{{0, 0}, {1, 2}, {1, 5}};
    EXPECT_EQ(hausdorff(a, a), 0.0);
    EXPECT_DOUBLE_EQ(hausdorff(a, b), 3.0);
}

TEST(Png, RasterAndMaskRoundTrip) {
    Rng rng(2);
    Raster r(17, 9, 3);
    for (auto& v : r.data()) v = static_cast<std::uint8_t>(rng());
    EXPECT_EQ(decode_png(encode_png(r)), r);
    BinaryMask m(13, 7);
    for (auto& b : m.bits()) b = rng() & 1;
    EXPECT_EQ(decode_mask_png(encode_mask_png(m)), m);
    EXPECT_EQ(encode_png(r), encode_png(r));
}

TEST(Png, RejectsGarbage) {
    EXPECT_THROW(decode_png(std::vector<std::uint8_t>{1, 2, 3}), Error);
    auto bytes = encode_png(Raster(8, 8, 3, 7));
    bytes.resize(bytes.size() / 2);
    EXPECT_THROW(decode_png(bytes), Error);
}
