#include <gtest/gtest.h>

#include <set>

#include "oracles.hpp"
#include "test_util.hpp"
#include "textcot/client.hpp"
#include "textcot/hashing.hpp"
#include "textcot/pipeline.hpp"
#include "textcot/synthetic.hpp"

using namespace textcot;
using namespace textcot::synthetic;
using testutil::kind_of;

namespace {

// A hand-built 4000 x 3000 scene with 40 px glyphs.
SyntheticScene big_scene(bool needs_context = false) {
    SyntheticScene s;
    s.id = "hand-1";
    s.archetype = needs_context ? Archetype::context_dependent : Archetype::large_small_text;
    s.dims = {4000, 3000};
    s.instances = {TextInstance{"K7Q2M", PixelBox{1800, 1400, 1950, 1460}, 40},
                   TextInstance{"ZZZZZ", PixelBox{100, 100, 250, 160}, 40}};
    s.question = "What is the code printed on the label?";
    s.distractor_answer = "ZZZZZ";
    if (needs_context) s.context_token = "ctx-ABCDE";
    return s;
}

VisionRequest view_request(const SyntheticScene& s, PixelBox region, std::string prompt,
                           Stage stage = Stage::observation) {
    auto img = make_image_ref(RasterImage(region.width(), region.height(), Rgb{0, 0, 0}));
    return VisionRequest{img, ImageProvenance{s.id, s.dims, region}, AssembledPrompt{std::move(prompt), stage}, {},
                         "oracle", "o"};
}

std::string image_hash(const RasterImage& img) {
    return sha256_hex(std::string_view(reinterpret_cast<const char*>(img.data().data()), img.data().size()));
}

}  // namespace

TEST(EffectiveHeight, Examples) {
    EXPECT_NEAR(effective_glyph_height(40, 4000, 3000, 336), 3.36, 1e-12);
    EXPECT_NEAR(effective_glyph_height(40, 448, 448, 336), 30.0, 1e-12);
    EXPECT_DOUBLE_EQ(effective_glyph_height(40, 4000, 3000, 336), oracle::effective_height(40, 4000, 3000, 336));
}

TEST(Oracle, LegibilityRule) {
    const auto s = big_scene();
    OracleBackend o({s}, OracleParams{});
    EXPECT_EQ(o.complete(view_request(s, {0, 0, 4000, 3000}, "Q")).text, "ZZZZZ");
    EXPECT_EQ(o.complete(view_request(s, {1651, 1206, 2099, 1654}, "Q")).text, "K7Q2M");
    // Legible but the target is cut off.
    EXPECT_EQ(o.complete(view_request(s, {1600, 1300, 1900, 1600}, "Q")).text, "ZZZZZ");
}

TEST(Oracle, ContextRequirement) {
    const auto s = big_scene(true);
    OracleBackend o({s}, OracleParams{});
    const PixelBox crop{1651, 1206, 2099, 1654};
    EXPECT_EQ(o.complete(view_request(s, crop, "Q")).text, "ZZZZZ");
    EXPECT_EQ(o.complete(view_request(s, crop, "context ctx-ABCDE\nQ")).text, "K7Q2M");
    const auto caption = o.complete(view_request(s, {0, 0, 4000, 3000}, "describe", Stage::overview)).text;
    EXPECT_NE(caption.find("ctx-ABCDE"), std::string::npos);
    EXPECT_EQ(caption, OracleBackend::caption_for(s));
}

TEST(Oracle, GroundingJitterIsBounded) {
    auto s = big_scene();
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        OracleParams p;
        p.seed = seed;
        OracleBackend o({s}, p);
        const auto text = o.complete(view_request(s, {0, 0, 4000, 3000}, "where", Stage::localization)).text;
        const auto box = locate_box(text, BoxConvention::fraction_0_1, s.dims);
        const auto& t = s.target().bbox;
        EXPECT_LE(std::abs(box.x1 - t.x1), t.width() / 4) << text;
        EXPECT_LE(std::abs(box.y1 - t.y1), t.height() / 4) << text;
        EXPECT_EQ(box.width(), t.width());
        EXPECT_EQ(box.height(), t.height());
        EXPECT_EQ(text, o.complete(view_request(s, {0, 0, 4000, 3000}, "where", Stage::localization)).text);
    }
}

TEST(Oracle, RejectsUnknownImagesAndMismatchedViews) {
    const auto s = big_scene();
    OracleBackend o({s}, OracleParams{});
    auto req = view_request(s, {0, 0, 4000, 3000}, "Q");
    req.view.source_id = "nope";
    EXPECT_EQ(kind_of([&] { o.complete(req); }), ErrorKind::UnknownImage);
    req = view_request(s, {0, 0, 4000, 3000}, "Q");
    req.view.region = {0, 0, 100, 100};
    EXPECT_EQ(kind_of([&] { o.complete(req); }), ErrorKind::UnknownImage);
}

TEST(Oracle, FullPipelineOnHandScene) {
    const auto s = big_scene(true);
    auto backend = std::make_shared<OracleBackend>(std::vector<SyntheticScene>{s}, OracleParams{});
    Client c(backend);
    PipelineContext ctx{c, PromptSet{}, CropConfig{}, GenParams{}};
    const Sample smp = scene_sample(s);
    const auto img = make_image_ref(RasterImage(4000, 3000, Rgb{0, 0, 0}));
    EXPECT_EQ(run_direct(ctx, smp, img).final_answer, "ZZZZZ");
    EXPECT_EQ(run_textcot(ctx, smp, img, Strategy::full_textcot()).final_answer, "K7Q2M");
    EXPECT_EQ(run_textcot(ctx, smp, img, Strategy::textcot_variant(true, false)).final_answer, "ZZZZZ");
}

TEST(Suite, DeterministicStratifiedAndInBounds) {
    const auto a = generate_suite(100, OracleParams{}, 42);
    const auto b = generate_suite(100, OracleParams{}, 42);
    ASSERT_EQ(a, b);
    EXPECT_NE(a, generate_suite(100, OracleParams{}, 43));
    std::set<Archetype> seen;
    std::set<std::string> ids;
    for (const auto& s : a) {
        seen.insert(s.archetype);
        ids.insert(s.id);
        for (const auto& inst : s.instances) EXPECT_TRUE(inst.bbox.within(s.dims)) << s.id;
        EXPECT_NE(s.target().content, s.distractor_answer);
        EXPECT_EQ(s.target().content.find(s.distractor_answer), std::string::npos);
        EXPECT_EQ(s.archetype == Archetype::context_dependent, s.context_token.has_value());
        if (s.context_token) {
            EXPECT_EQ(s.question.find(*s.context_token), std::string::npos);
        }
    }
    EXPECT_EQ(seen.size(), 5u);
    EXPECT_EQ(ids.size(), 100u);
    EXPECT_EQ(generate_suite(5, OracleParams{}, 1).size(), 5u);
}

TEST(Suite, ImagesAreHashEqualAcrossGenerations) {
    const auto a = generate_suite(10, OracleParams{}, 42);
    const auto b = generate_suite(10, OracleParams{}, 42);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(image_hash(render_scene(a[i])), image_hash(render_scene(b[i])));
}

TEST(Suite, ArchetypeDesign) {
    const OracleParams p;
    for (const auto& s : generate_suite(50, p, 7)) {
        const auto& t = s.target();
        const double full = oracle::effective_height(t.glyph_height, s.dims.width, s.dims.height, 336);
        EXPECT_EQ(full >= 12.0, s.archetype == Archetype::small_image) << s.id;
        if (s.archetype == Archetype::near_border) {
            const int gap = std::min({t.bbox.x1, t.bbox.y1, s.dims.width - t.bbox.x2, s.dims.height - t.bbox.y2});
            EXPECT_LE(gap, 8) << s.id;
        }
        if (s.archetype == Archetype::elongated) {
            EXPECT_GE(t.bbox.width(), 4 * t.bbox.height()) << s.id;
        }
    }
}

// Every grounding box the oracle can emit under jitter 0.25 yields a crop holding the target.
TEST(Suite, JitteredCropsContainTarget) {
    const OracleParams p;
    for (const auto& s : generate_suite(100, p, 42)) {
        const auto& t = s.target().bbox;
        const int jx = t.width() / 4, jy = t.height() / 4;
        for (int dy = -jy; dy <= jy; ++dy)
            for (int dx = -jx; dx <= jx; ++dx) {
                const PixelBox j{std::max(t.x1 + dx, 0), std::max(t.y1 + dy, 0), std::min(t.x2 + dx, s.dims.width),
                                 std::min(t.y2 + dy, s.dims.height)};
                ASSERT_TRUE(compute_crop(j, s.dims, CropConfig{}).box.contains(t)) << s.id;
            }
    }
}

TEST(Suite, WriteAndReload) {
    testutil::TempDir dir;
    const auto scenes = generate_suite(6, OracleParams{}, 5);
    std::vector<std::filesystem::path> saved;
    const auto files = write_suite(dir.path(), scenes, OracleParams{}, 5,
                                   [&](const RasterImage&, const std::filesystem::path& p) {
                                       testutil::spit(p, "png");
                                       saved.push_back(p);
                                   });
    EXPECT_EQ(saved.size(), 6u);
    const auto sidecar = load_sidecar(files.sidecar);
    EXPECT_EQ(sidecar.scenes, scenes);
    EXPECT_EQ(sidecar.suite_seed, 5u);
    const auto m = load_manifest(files.manifest);
    ASSERT_EQ(m.samples.size(), 6u);
    EXPECT_EQ(m.samples[0].answers, std::vector<std::string>{scenes[0].target().content});
    EXPECT_EQ(m.name, "synthetic");
}
