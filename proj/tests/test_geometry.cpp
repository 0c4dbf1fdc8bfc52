#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "textcot/geometry.hpp"

using namespace textcot;

namespace {

template <class F>
ErrorKind kind_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "expected an Error";
    return ErrorKind::UsageError;
}

CropConfig cfg(double alpha, int min_side, CropMode mode = CropMode::square_scaled) {
    return CropConfig{alpha, min_side, mode};
}

}  // namespace

TEST(ParseBbox, FractionTuple) {
    const auto b = parse_bbox_text("The region is [0.23, 0.41, 0.58, 0.77].", BoxConvention::fraction_0_1);
    EXPECT_EQ(std::get<NormalizedBox>(b), (NormalizedBox{0.23, 0.41, 0.58, 0.77}));
}

TEST(ParseBbox, PerMillePairs) {
    const auto b = parse_bbox_text("<box>(120,240),(600,820)</box>", BoxConvention::per_mille_0_999);
    EXPECT_EQ(std::get<NormalizedBox>(b), (NormalizedBox{120 / 999.0, 240 / 999.0, 600 / 999.0, 820 / 999.0}));
}

TEST(ParseBbox, NoBox) {
    EXPECT_EQ(kind_of([] { parse_bbox_text("I cannot locate it.", BoxConvention::fraction_0_1); }),
              ErrorKind::NoBoxFound);
}

TEST(ParseBbox, FirstTupleWins) {
    const auto b = parse_bbox_text("(1,2),(3,4) then [5, 6, 7, 8]", BoxConvention::absolute_pixels);
    EXPECT_EQ(std::get<PixelBox>(b), (PixelBox{1, 2, 3, 4}));
}

TEST(ParseBbox, RangeAndDegenerate) {
    EXPECT_EQ(kind_of([] { parse_bbox_text("[0.1, 0.2, 1.3, 0.4]", BoxConvention::fraction_0_1); }),
              ErrorKind::OutOfRange);
    EXPECT_EQ(kind_of([] { parse_bbox_text("[10, 20, 1000, 40]", BoxConvention::per_mille_0_999); }),
              ErrorKind::OutOfRange);
    EXPECT_EQ(kind_of([] { parse_bbox_text("[-1, 2, 3, 4]", BoxConvention::absolute_pixels); }),
              ErrorKind::OutOfRange);
    EXPECT_EQ(kind_of([] { parse_bbox_text("[0.5, 0.2, 0.5, 0.4]", BoxConvention::fraction_0_1); }),
              ErrorKind::DegenerateBox);
    EXPECT_EQ(kind_of([] { parse_bbox_text("[0.6, 0.2, 0.5, 0.4]", BoxConvention::fraction_0_1); }),
              ErrorKind::DegenerateBox);
}

TEST(ToPixel, Examples) {
    EXPECT_EQ(to_pixel({0.23, 0.41, 0.58, 0.77}, {1000, 800}), (PixelBox{230, 328, 580, 616}));
    EXPECT_EQ(to_pixel({0, 0, 1, 1}, {640, 480}), (PixelBox{0, 0, 640, 480}));
    EXPECT_EQ(to_pixel({0.5, 0.5, 0.5004, 0.5004}, {1000, 1000}), (PixelBox{500, 500, 501, 501}));
}

// Scratch enumeration of sub-pixel boxes: the result is always a valid in-bounds box of at
// least one pixel that starts at the rounded x1 unless that sits on the far edge.
TEST(ToPixel, SubPixelEnumeration) {
    const ImageDims dims{1000, 1000};
    for (int a = 0; a <= 1000; a += 7)
        for (int w = 1; w <= 12; ++w) {
            const double x1 = a / 1000.0, x2 = std::min(1.0, x1 + w * 0.0001);
            if (!(x2 > x1)) continue;
            const auto p = to_pixel({x1, x1, x2, x2}, dims);
            ASSERT_TRUE(p.within(dims));
            ASSERT_GE(p.width(), 1);
            if (a < 1000) {
                ASSERT_EQ(p.x1, a);
            }
        }
}

TEST(LocateBox, RepairsZeroExtentOnly) {
    EXPECT_EQ(locate_box("[0.5, 0.5, 0.5, 0.7]", BoxConvention::fraction_0_1, {100, 100}),
              (PixelBox{50, 50, 51, 70}));
    EXPECT_EQ(kind_of([] { locate_box("[0.6, 0.5, 0.5, 0.7]", BoxConvention::fraction_0_1, {100, 100}); }),
              ErrorKind::DegenerateBox);
    EXPECT_EQ(locate_box("[10, 10, 500, 50]", BoxConvention::absolute_pixels, {100, 100}),
              (PixelBox{10, 10, 100, 50}));
}

TEST(FormatBox, RoundTripsThroughParser) {
    const ImageDims dims{800, 600};
    const PixelBox b{120, 60, 400, 300};
    for (auto c : {BoxConvention::fraction_0_1, BoxConvention::absolute_pixels}) {
        EXPECT_EQ(locate_box(format_box(b, dims, c), c, dims), b) << to_string(c);
    }
}

TEST(ComputeCrop, HandTracedFixtures) {
    const auto a = compute_crop({100, 100, 200, 300}, {1000, 1000}, cfg(1.5, 448));
    EXPECT_EQ(a.box, (PixelBox{0, 0, 448, 448}));
    EXPECT_EQ(a.flags, (CropFlags{false, true, true}));

    const auto b = compute_crop({276, 276, 724, 724}, {1000, 1000}, cfg(1.0, 448));
    EXPECT_EQ(b.box, (PixelBox{276, 276, 724, 724}));
    EXPECT_EQ(b.flags, (CropFlags{}));

    const auto c = compute_crop({350, 250, 390, 290}, {400, 300}, cfg(1.5, 448));
    EXPECT_EQ(c.box, (PixelBox{100, 0, 400, 300}));
    EXPECT_EQ(c.flags, (CropFlags{true, true, false}));
}

TEST(ComputeCrop, FixturesAgreeWithBruteForce) {
    struct Case {
        PixelBox box;
        ImageDims dims;
        int num, den;
    };
    for (const auto& k : {Case{{100, 100, 200, 300}, {1000, 1000}, 3, 2}, Case{{276, 276, 724, 724}, {1000, 1000}, 1, 1},
                          Case{{350, 250, 390, 290}, {400, 300}, 3, 2}}) {
        const int side = oracle::expected_side(k.num, k.den, 448, k.box.width(), k.box.height(), k.dims.width,
                                               k.dims.height);
        const auto got = compute_crop(k.box, k.dims, cfg(double(k.num) / k.den, 448));
        ASSERT_EQ(got.box.width(), side);
        const auto best = oracle::best_placements(k.box.x1, k.box.y1, k.box.x2, k.box.y2, k.dims.width,
                                                  k.dims.height, side);
        ASSERT_EQ(best.size(), 1u);
        EXPECT_EQ(got.box.x1, best[0].sx);
        EXPECT_EQ(got.box.y1, best[0].sy);
    }
}

TEST(ComputeCrop, OtherModes) {
    const PixelBox b{10, 20, 110, 60};
    const ImageDims dims{500, 400};
    EXPECT_EQ(compute_crop(b, dims, cfg(1.5, 448, CropMode::strict_rect)).box, b);
    EXPECT_EQ(compute_crop(b, dims, cfg(1.5, 448, CropMode::full_image)).box, (PixelBox{0, 0, 500, 400}));
    const auto sq = compute_crop(b, dims, cfg(1.5, 448, CropMode::square)).box;
    EXPECT_EQ(sq.width(), 100);
    EXPECT_EQ(sq.height(), 100);
    EXPECT_TRUE(sq.contains(b));
}

TEST(ComputeCrop, RejectsOutsideBox) {
    EXPECT_EQ(kind_of([] { compute_crop({0, 0, 101, 10}, {100, 100}, {}); }), ErrorKind::BoxOutsideImage);
    EXPECT_EQ(kind_of([] { compute_crop({5, 5, 5, 10}, {100, 100}, {}); }), ErrorKind::BoxOutsideImage);
}

TEST(ComputeCrop, SeededProperties) {
    std::mt19937_64 rng(20240611);
    const int alphas[3][2] = {{1, 1}, {3, 2}, {2, 1}};
    for (int i = 0; i < 3000; ++i) {
        const int w = std::uniform_int_distribution<int>(1, 1200)(rng);
        const int h = std::uniform_int_distribution<int>(1, 1200)(rng);
        const int x1 = std::uniform_int_distribution<int>(0, w - 1)(rng);
        const int y1 = std::uniform_int_distribution<int>(0, h - 1)(rng);
        const int x2 = std::uniform_int_distribution<int>(x1 + 1, w)(rng);
        const int y2 = std::uniform_int_distribution<int>(y1 + 1, h)(rng);
        const auto& a = alphas[i % 3];
        const int min_side = (i / 3) % 2 ? 448 : 0;
        const PixelBox box{x1, y1, x2, y2};
        const auto r = compute_crop(box, {w, h}, cfg(double(a[0]) / a[1], min_side));
        const int side = oracle::expected_side(a[0], a[1], min_side, box.width(), box.height(), w, h);
        ASSERT_TRUE(r.box.within({w, h}));
        ASSERT_EQ(r.box.width(), side);
        ASSERT_EQ(r.box.height(), side);
        // The center lies in the crop (doubled coordinates, half-open).
        ASSERT_LE(2 * r.box.x1, x1 + x2);
        ASSERT_LT(x1 + x2, 2 * r.box.x2 + 1);
        ASSERT_LE(2 * r.box.y1, y1 + y2);
        ASSERT_LT(y1 + y2, 2 * r.box.y2 + 1);
        if (side >= std::max(box.width(), box.height())) {
            ASSERT_TRUE(r.box.contains(box));
        }
    }
}

TEST(ExtractCrop, Examples) {
    const RasterImage red(10, 10, Rgb{255, 0, 0});
    EXPECT_EQ(extract_crop(red, PixelBox{0, 0, 10, 10}), red);

    RasterImage img(10, 10, Rgb{0, 0, 0});
    img.set(5, 5, Rgb{1, 2, 3});
    const auto sub = extract_crop(img, PixelBox{4, 4, 8, 8});
    EXPECT_EQ(sub.width(), 4);
    EXPECT_EQ(sub.height(), 4);
    EXPECT_EQ(sub.at(1, 1), (Rgb{1, 2, 3}));
    EXPECT_EQ(sub.at(0, 0), (Rgb{0, 0, 0}));

    EXPECT_EQ(kind_of([&] { extract_crop(img, PixelBox{5, 5, 11, 9}); }), ErrorKind::RegionOutsideImage);
}

TEST(CropRegionJson, RoundTrip) {
    const CropRegion r{{1, 2, 30, 40}, {true, false, true}};
    const nlohmann::json j = r;
    EXPECT_EQ(j.get<CropRegion>(), r);
}
