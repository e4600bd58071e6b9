#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "oracles/oracles.hpp"
#include "wsic/imageops.hpp"
#include "wsic/rng.hpp"

using namespace wsic;

namespace {

BinaryMask square(int size, int x0, int y0, int side) {
    BinaryMask m(size, size);
    for (int y = y0; y < y0 + side; ++y)
        for (int x = x0; x < x0 + side; ++x) m.set(x, y);
    return m;
}

BinaryMask disc(int size, double cx, double cy, double r) {
    BinaryMask m(size, size);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) m.set(x, y);
    return m;
}

} // namespace

TEST(Otsu, TwoSpikesMatchesExhaustiveOracle) {
    Histogram h{};
    h[50] = 40;
    h[200] = 60;
    const int expected = oracle::otsu_exhaustive(h);
    EXPECT_EQ(expected, 51); // frozen from the oracle
    const int t = otsu_threshold(h);
    EXPECT_EQ(t, expected);
    EXPECT_GT(t, 50);
    EXPECT_LE(t, 200);
}

TEST(Otsu, SingleSpikeReturnsItsLevel) {
    Histogram h{};
    h[128] = 1000;
    EXPECT_EQ(otsu_threshold(h), 128);
    EXPECT_EQ(between_class_variance(h, 128), 0.0);
}

TEST(Otsu, EmptyHistogramIsDegenerate) {
    Histogram h{};
    try {
        otsu_threshold(h);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DegenerateInput);
    }
}

TEST(Otsu, AgreesWithOracleOnRandomHistograms) {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        Histogram h{};
        const int occupied = 1 + static_cast<int>(rng() % 256);
        for (int k = 0; k < occupied; ++k) h[rng() % 256] += rng() % 1000;
        if (std::all_of(h.begin(), h.end(), [](auto c) { return c == 0; })) h[rng() % 256] = 1;
        ASSERT_EQ(otsu_threshold(h), oracle::otsu_exhaustive(h)) << "trial " << trial;
    }
}

TEST(MorphClose, FillsSinglePixelHole) {
    BinaryMask m = square(40, 10, 10, 20);
    m.set(20, 20, false);
    EXPECT_EQ(morph_close(m, 1), square(40, 10, 10, 20));
}

TEST(MorphClose, EmptyStaysEmpty) {
    BinaryMask m(16, 16);
    EXPECT_EQ(morph_close(m, 3).popcount(), 0u);
}

TEST(MorphClose, SolidSquareUnchanged) {
    const BinaryMask m = square(64, 10, 10, 30);
    for (int r : {1, 2, 4, 7}) EXPECT_EQ(morph_close(m, r), m) << "radius " << r;
}

TEST(MorphClose, RejectsZeroRadius) { EXPECT_THROW(morph_close(BinaryMask(4, 4), 0), Error); }

TEST(MorphClose, ExtensiveAndIdempotentOnRandomMasks) {
    Rng rng(5);
    for (int trial = 0; trial < 30; ++trial) {
        BinaryMask m(48, 40);
        for (auto& b : m.bits()) b = uniform01(rng) < 0.35 ? 1 : 0;
        const int r = 1 + trial % 4;
        const BinaryMask c = morph_close(m, r);
        EXPECT_TRUE(is_subset(m, c));
        EXPECT_EQ(morph_close(c, r), c);
    }
}

TEST(ConnectedComponents, TwoSquares) {
    BinaryMask m(20, 20);
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 3; ++x) {
            m.set(x + 1, y + 1);
            m.set(x + 10, y + 12);
        }
    const auto comps = connected_components(m);
    ASSERT_EQ(comps.size(), 2u);
    EXPECT_EQ(comps[0].area(), 9u);
    EXPECT_EQ(comps[1].area(), 9u);
}

TEST(ConnectedComponents, EmptyMask) { EXPECT_TRUE(connected_components(BinaryMask(5, 5)).empty()); }

TEST(ConnectedComponents, DiagonalCheckerboardIsOneComponent) {
    BinaryMask m(2, 2);
    m.set(0, 0);
    m.set(1, 1);
    EXPECT_EQ(connected_components(m).size(), 1u);
}

TEST(ConnectedComponents, PartitionsSetPixelsSortedByArea) {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        BinaryMask m(30, 30);
        for (auto& b : m.bits()) b = uniform01(rng) < 0.3 ? 1 : 0;
        const auto comps = connected_components(m);
        std::size_t total = 0;
        BinaryMask seen(30, 30);
        for (std::size_t i = 0; i < comps.size(); ++i) {
            total += comps[i].area();
            if (i > 0) EXPECT_GE(comps[i - 1].area(), comps[i].area());
            for (const auto& p : comps[i].pixels) {
                EXPECT_FALSE(seen.get(p.x, p.y));
                seen.set(p.x, p.y);
            }
        }
        EXPECT_EQ(total, m.popcount());
        EXPECT_EQ(seen, m);
    }
}

TEST(TraceContour, SquarePerimeter) {
    const auto comps = connected_components(square(20, 5, 5, 10));
    const Polyline c = trace_contour(comps.front());
    EXPECT_TRUE(c.closed);
    EXPECT_EQ(c.points.front(), c.points.back());
    EXPECT_NEAR(c.length(), 36.0, 1.0);
}

TEST(TraceContour, SingleRowIsDegenerate) {
    BinaryMask m(10, 3);
    for (int x = 2; x < 7; ++x) m.set(x, 1);
    const auto comps = connected_components(m);
    try {
        trace_contour(comps.front());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DegenerateInput);
    }
}

TEST(TraceContour, DiscCircumference) {
    const auto comps = connected_components(disc(64, 32, 32, 20));
    const Polyline c = trace_contour(comps.front());
    EXPECT_NEAR(c.length(), 2 * std::numbers::pi * 20, 0.1 * 2 * std::numbers::pi * 20);
}

TEST(TraceContour, PointsLieOnComponentBoundary) {
    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        BinaryMask m = disc(48, 24, 24, 6 + trial % 10);
        for (int k = 0; k < 30; ++k) m.set(static_cast<int>(rng() % 48), static_cast<int>(rng() % 48), false);
        const auto comps = connected_components(m);
        const Component& comp = comps.front();
        const BinaryMask cm = comp.to_mask(48, 48);
        Polyline contour;
        try {
            contour = trace_contour(comp);
        } catch (const Error&) {
            continue;
        }
        EXPECT_EQ(contour.points.front(), contour.points.back());
        for (const Point& p : contour.points) {
            const int x = static_cast<int>(p.x), y = static_cast<int>(p.y);
            ASSERT_TRUE(cm.get(x, y));
            bool boundary = false;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx)
                    if (!cm.test(x + dx, y + dy)) boundary = true;
            EXPECT_TRUE(boundary);
        }
    }
}

TEST(TissueMask, PureWhiteSlideIsDegenerate) {
    Raster white(32, 32, 3, 255);
    try {
        tissue_mask(white);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DegenerateInput);
    }
}

TEST(TissueMask, SingleBlobGivesOneLargeComponent) {
    Raster slide(96, 96, 3, 250);
    const BinaryMask truth = disc(96, 48, 48, 30);
    Rng rng(1);
    for (int y = 0; y < 96; ++y)
        for (int x = 0; x < 96; ++x)
            if (truth.get(x, y)) {
                slide.at(x, y, 0) = static_cast<std::uint8_t>(215 + rng() % 20);
                slide.at(x, y, 1) = static_cast<std::uint8_t>(140 + rng() % 20);
                slide.at(x, y, 2) = static_cast<std::uint8_t>(180 + rng() % 20);
            }
    const BinaryMask mask = tissue_mask(slide);
    const auto comps = connected_components(mask);
    ASSERT_EQ(comps.size(), 1u);
    const double covered = static_cast<double>((mask & truth).popcount()) / truth.popcount();
    EXPECT_GE(covered, 0.99);
}

TEST(Gray, LumaWeights) {
    Raster px(1, 1, 3);
    px.at(0, 0, 0) = 255;
    px.at(0, 0, 1) = 0;
    px.at(0, 0, 2) = 0;
    EXPECT_EQ(to_gray(px).at(0, 0), 76); // round(0.299 * 255)
}
