#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "textcot/backend.hpp"
#include "textcot/dataset.hpp"
#include "textcot/error.hpp"
#include "textcot/geometry.hpp"
#include "textcot/hashing.hpp"
#include "textcot/raster.hpp"

namespace textcot::synthetic {

enum class Archetype { large_small_text, small_image, near_border, elongated, context_dependent };

inline constexpr std::array<Archetype, 5> kArchetypes{Archetype::large_small_text, Archetype::small_image,
                                                      Archetype::near_border, Archetype::elongated,
                                                      Archetype::context_dependent};

inline std::string_view to_string(Archetype a) {
    switch (a) {
        case Archetype::large_small_text: return "large_small_text";
        case Archetype::small_image: return "small_image";
        case Archetype::near_border: return "near_border";
        case Archetype::elongated: return "elongated";
        case Archetype::context_dependent: return "context_dependent";
    }
    return "large_small_text";
}

inline Archetype archetype_from_string(std::string_view s) {
    for (auto a : kArchetypes)
        if (to_string(a) == s) return a;
    throw Error(ErrorKind::SchemaError, "unknown archetype '" + std::string(s) + "'");
}

struct TextInstance {
    std::string content;
    PixelBox bbox;
    int glyph_height = 0;

    friend bool operator==(const TextInstance&, const TextInstance&) = default;
};

struct SyntheticScene {
    std::string id;
    Archetype archetype = Archetype::large_small_text;
    ImageDims dims;
    std::vector<TextInstance> instances;
    std::size_t target_index = 0;
    std::string question;
    std::optional<std::string> context_token;
    std::string distractor_answer;
    std::uint64_t render_seed = 0;

    const TextInstance& target() const { return instances.at(target_index); }

    friend bool operator==(const SyntheticScene&, const SyntheticScene&) = default;
};

struct OracleParams {
    int model_input_side = 336;
    double legibility_threshold = 12.0;
    double grounding_jitter = 0.25;
    std::uint64_t seed = 0;

    void validate() const {
        if (model_input_side < 1) throw Error(ErrorKind::ConfigError, "model_input_side must be >= 1");
        if (!(legibility_threshold > 0.0)) throw Error(ErrorKind::ConfigError, "legibility threshold must be > 0");
        if (!(grounding_jitter >= 0.0 && grounding_jitter < 1.0))
            throw Error(ErrorKind::ConfigError, "grounding jitter must be in [0, 1)");
    }

    friend bool operator==(const OracleParams&, const OracleParams&) = default;
};

/// Effective glyph height after an aspect-preserving downscale of a vw x vh view to the
/// model's square input.
inline double effective_glyph_height(int glyph_height, int view_width, int view_height, int model_input_side) {
    return static_cast<double>(glyph_height) * model_input_side / std::max(view_width, view_height);
}

/// mt19937_64 with distributions written out, so sequences match across standard libraries.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform integer in [lo, hi].
    int uniform(int lo, int hi) {
        const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(engine_() % span);
    }
    std::uint64_t next() { return engine_(); }

private:
    std::mt19937_64 engine_;
};

inline std::uint64_t string_seed(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

/// Grounding answer the oracle gives for a scene: the target box translated by at most
/// jitter * extent on each axis (seeded per scene) and clipped to the image.
inline PixelBox jittered_target(const SyntheticScene& scene, const OracleParams& params) {
    const PixelBox t = scene.target().bbox;
    SeededRng rng(mix_seed(params.seed ^ string_seed(scene.id)));
    const int jx = static_cast<int>(params.grounding_jitter * t.width());
    const int jy = static_cast<int>(params.grounding_jitter * t.height());
    const int dx = rng.uniform(-jx, jx);
    const int dy = rng.uniform(-jy, jy);
    return clamp_to(PixelBox{t.x1 + dx, t.y1 + dy, t.x2 + dx, t.y2 + dy}, scene.dims);
}

// ---------------------------------------------------------------------------
// generation

namespace detail {

inline std::string random_code(SeededRng& rng, int len) {
    static constexpr std::string_view kAlphabet = "ABCDEFGHJKLMNPQRSTUVWXYZ23456789";
    std::string s;
    for (int i = 0; i < len; ++i) s.push_back(kAlphabet[static_cast<std::size_t>(rng.uniform(0, 31))]);
    return s;
}

inline PixelBox text_box(int x, int y, int glyph, int len) {
    const int char_w = (glyph * 3 + 4) / 5;  // ceil(0.6 * glyph)
    const int pad = glyph / 4;
    return PixelBox{x, y, x + len * char_w + 2 * pad, y + glyph + 2 * pad};
}

inline bool overlaps(const PixelBox& a, const PixelBox& b, int margin) {
    return a.x1 < b.x2 + margin && b.x1 < a.x2 + margin && a.y1 < b.y2 + margin && b.y1 < a.y2 + margin;
}

// Every jittered grounding box the oracle could emit still yields a crop holding the target.
inline bool crop_robust_to_jitter(const SyntheticScene& scene, const OracleParams& params, const CropConfig& cfg) {
    const PixelBox t = scene.target().bbox;
    const int jx = static_cast<int>(params.grounding_jitter * t.width());
    const int jy = static_cast<int>(params.grounding_jitter * t.height());
    for (int dy = -jy; dy <= jy; ++dy)
        for (int dx = -jx; dx <= jx; ++dx) {
            const PixelBox j = clamp_to(PixelBox{t.x1 + dx, t.y1 + dy, t.x2 + dx, t.y2 + dy}, scene.dims);
            if (!compute_crop(j, scene.dims, cfg).box.contains(t)) return false;
        }
    return true;
}

inline bool scene_meets_design(const SyntheticScene& scene, const OracleParams& params, const CropConfig& cfg) {
    const auto& t = scene.target();
    const double tau = params.legibility_threshold;
    const double full = effective_glyph_height(t.glyph_height, scene.dims.width, scene.dims.height,
                                               params.model_input_side);
    const bool wants_legible_full = scene.archetype == Archetype::small_image;
    if (wants_legible_full != (full >= tau)) return false;
    // Legible in every crop the jittered grounding can produce: the side only depends on the
    // box extent, which clipping can shrink but never grow.
    const PixelBox nominal = compute_crop(t.bbox, scene.dims, cfg).box;
    const double cropped = effective_glyph_height(t.glyph_height, nominal.width(), nominal.height(),
                                                  params.model_input_side);
    if (cropped < tau) return false;
    return crop_robust_to_jitter(scene, params, cfg);
}

inline SyntheticScene draw_scene(SeededRng& rng, Archetype arch, std::string id) {
    SyntheticScene s;
    s.id = std::move(id);
    s.archetype = arch;
    s.render_seed = rng.next();

    int glyph = 0, len = 0;
    switch (arch) {
        case Archetype::small_image:
            s.dims = {rng.uniform(300, 448), rng.uniform(240, 448)};
            glyph = rng.uniform(16, 24);
            len = rng.uniform(3, 6);
            break;
        case Archetype::elongated:
            s.dims = {rng.uniform(2400, 4000), rng.uniform(1800, 3000)};
            glyph = rng.uniform(20, 30);
            len = rng.uniform(16, 24);
            break;
        default:
            s.dims = {rng.uniform(2400, 4000), rng.uniform(1800, 3000)};
            glyph = rng.uniform(20, 40);
            len = rng.uniform(5, 9);
            break;
    }

    TextInstance target;
    target.content = random_code(rng, len);
    target.glyph_height = glyph;
    const PixelBox shape = text_box(0, 0, glyph, len);
    const int max_x = s.dims.width - shape.width();
    const int max_y = s.dims.height - shape.height();
    int x = rng.uniform(0, std::max(max_x, 0));
    int y = rng.uniform(0, std::max(max_y, 0));
    if (arch == Archetype::near_border) {
        const int off = rng.uniform(0, 8);
        switch (rng.uniform(0, 3)) {
            case 0: x = off; break;
            case 1: x = max_x - off; break;
            case 2: y = off; break;
            default: y = max_y - off; break;
        }
    }
    target.bbox = text_box(x, y, glyph, len);

    do {
        s.distractor_answer = random_code(rng, len);
    } while (s.distractor_answer.find(target.content) != std::string::npos ||
             target.content.find(s.distractor_answer) != std::string::npos);

    s.instances.push_back(target);
    s.target_index = 0;
    // A few other text blocks, one of them showing the distractor.
    const int extra = rng.uniform(2, 4);
    for (int k = 0, attempts = 0; k < extra && attempts < 50; ++attempts) {
        const int g = std::max(glyph - rng.uniform(0, 4), 8);
        const std::string content = k == 0 ? s.distractor_answer : random_code(rng, rng.uniform(3, 10));
        const PixelBox sz = text_box(0, 0, g, static_cast<int>(content.size()));
        if (sz.width() >= s.dims.width || sz.height() >= s.dims.height) continue;
        const PixelBox b = text_box(rng.uniform(0, s.dims.width - sz.width()),
                                    rng.uniform(0, s.dims.height - sz.height()), g,
                                    static_cast<int>(content.size()));
        bool clear = true;
        for (const auto& inst : s.instances) clear = clear && !overlaps(inst.bbox, b, 4);
        if (!clear) continue;
        s.instances.push_back(TextInstance{content, b, g});
        ++k;
    }

    if (arch == Archetype::context_dependent) {
        s.context_token = "ctx-" + random_code(rng, 5);
        s.question = "Which code is printed on the sign that the scene description refers to?";
    } else {
        s.question = "What is the code printed on the label?";
    }
    return s;
}

}  // namespace detail

/// Seeded, stratified suite; scene i has archetype i mod 5, so n >= 5 covers every archetype.
/// Scenes are redrawn until they satisfy their archetype's legibility design under the
/// oracle parameters and the default crop configuration.
inline std::vector<SyntheticScene> generate_suite(int n, const OracleParams& params, std::uint64_t seed,
                                                  const CropConfig& crop = {}) {
    if (n < 1) throw Error(ErrorKind::UsageError, "suite size must be >= 1");
    params.validate();
    std::vector<SyntheticScene> suite;
    suite.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const Archetype arch = kArchetypes[static_cast<std::size_t>(i) % kArchetypes.size()];
        SeededRng rng(mix_seed(seed * 0x100000001B3ull + static_cast<std::uint64_t>(i)));
        char id[32];
        std::snprintf(id, sizeof id, "syn-%05d", i);
        SyntheticScene scene;
        for (int attempt = 0;; ++attempt) {
            scene = detail::draw_scene(rng, arch, id);
            if (detail::scene_meets_design(scene, params, crop)) break;
            if (attempt > 1000) throw Error(ErrorKind::ConfigError, "oracle parameters admit no scene for archetype " +
                                                                        std::string(to_string(arch)));
        }
        suite.push_back(std::move(scene));
    }
    return suite;
}

/// Flat background, a pale label per text block and one solid cell per character whose colour
/// encodes the character code.
inline RasterImage render_scene(const SyntheticScene& scene) {
    SeededRng rng(scene.render_seed);
    const auto shade = [&](int lo, int hi) { return static_cast<std::uint8_t>(rng.uniform(lo, hi)); };
    RasterImage img(scene.dims.width, scene.dims.height, Rgb{shade(20, 120), shade(20, 120), shade(20, 120)});
    for (const auto& inst : scene.instances) {
        const auto& b = inst.bbox;
        img.fill_rect(b.x1, b.y1, b.x2, b.y2, Rgb{shade(200, 255), shade(200, 255), shade(200, 255)});
        const int pad = inst.glyph_height / 4;
        const int char_w = (inst.glyph_height * 3 + 4) / 5;
        int x = b.x1 + pad;
        for (unsigned char c : inst.content) {
            img.fill_rect(x + 1, b.y1 + pad, x + char_w - 1, b.y1 + pad + inst.glyph_height,
                          Rgb{static_cast<std::uint8_t>(c), static_cast<std::uint8_t>(255 - c),
                              static_cast<std::uint8_t>((c * 7) & 0xFF)});
            x += char_w;
        }
    }
    return img;
}

inline Sample scene_sample(const SyntheticScene& scene, const std::filesystem::path& image_path = {}) {
    return Sample{scene.id, image_path, scene.question, {scene.target().content}};
}

// ---------------------------------------------------------------------------
// oracle backend

/// Scene-aware mock model. Recognizes images by their registered provenance (scene id plus
/// the region cut from it) and answers by legibility arithmetic.
class OracleBackend : public VisionBackend {
public:
    OracleBackend(std::vector<SyntheticScene> scenes, OracleParams params,
                  BoxConvention convention = BoxConvention::fraction_0_1)
        : params_(params), convention_(convention) {
        params_.validate();
        for (auto& s : scenes) {
            const std::string id = s.id;
            scenes_.emplace(id, std::move(s));
        }
    }

    const SyntheticScene& scene(const std::string& id) const {
        const auto it = scenes_.find(id);
        if (it == scenes_.end()) throw Error(ErrorKind::UnknownImage, "no registered scene '" + id + "'");
        return it->second;
    }

    static std::string caption_for(const SyntheticScene& s) {
        std::string c = "A synthetic text-rich scene " + s.id + " with " + std::to_string(s.instances.size()) +
                        " text blocks";
        if (s.context_token) c += " whose context keyword is " + *s.context_token;
        return c + ".";
    }

    /// Target content iff legible in the view, fully inside it, and any required context
    /// token is present in the prompt; otherwise the distractor.
    std::string answer_for(const SyntheticScene& s, const PixelBox& view, std::string_view prompt) const {
        const auto& t = s.target();
        const bool legible = effective_glyph_height(t.glyph_height, view.width(), view.height(),
                                                    params_.model_input_side) >= params_.legibility_threshold;
        const bool inside = view.contains(t.bbox);
        const bool context_ok = !s.context_token || prompt.find(*s.context_token) != std::string_view::npos;
        return legible && inside && context_ok ? t.content : s.distractor_answer;
    }

    VisionResponse complete(const VisionRequest& request) override {
        const auto& s = scene(request.view.source_id);
        if (request.view.source_dims != s.dims || !request.view.region.within(s.dims))
            throw Error(ErrorKind::UnknownImage, "view does not match scene '" + s.id + "'");
        if (request.image && request.image->dims() != ImageDims{request.view.region.width(),
                                                                request.view.region.height()})
            throw Error(ErrorKind::UnknownImage, "image size does not match its registered crop");
        switch (request.prompt.stage) {
            case Stage::overview: return {caption_for(s), 0, false};
            case Stage::localization:
                return {"The answer region is " + format_box(jittered_target(s, params_), s.dims, convention_) + ".",
                        0, false};
            case Stage::zscot_reason:
                return {"Reading the image step by step, the relevant text says " +
                            answer_for(s, request.view.region, request.prompt.text) + ".",
                        0, false};
            default: return {answer_for(s, request.view.region, request.prompt.text), 0, false};
        }
    }

    std::string backend_id() const override { return "oracle"; }
    std::string model_id() const override {
        std::ostringstream os;
        os << "oracle-s" << params_.model_input_side << "-t" << params_.legibility_threshold << "-j"
           << params_.grounding_jitter << "-seed" << params_.seed;
        return os.str();
    }
    BoxConvention bbox_convention() const override { return convention_; }
    const OracleParams& params() const { return params_; }

private:
    std::map<std::string, SyntheticScene> scenes_;
    OracleParams params_;
    BoxConvention convention_;
};

// ---------------------------------------------------------------------------
// persistence: canonical manifest + scene sidecar

inline void to_json(nlohmann::json& j, const OracleParams& p) {
    j = nlohmann::json{{"model_input_side", p.model_input_side},
                       {"legibility_threshold", p.legibility_threshold},
                       {"grounding_jitter", p.grounding_jitter},
                       {"seed", p.seed}};
}
inline void from_json(const nlohmann::json& j, OracleParams& p) {
    p = OracleParams{};
    p.model_input_side = j.value("model_input_side", p.model_input_side);
    p.legibility_threshold = j.value("legibility_threshold", p.legibility_threshold);
    p.grounding_jitter = j.value("grounding_jitter", p.grounding_jitter);
    p.seed = j.value("seed", p.seed);
    p.validate();
}

inline void to_json(nlohmann::json& j, const TextInstance& t) {
    j = nlohmann::json{{"content", t.content}, {"bbox", t.bbox}, {"glyph_height", t.glyph_height}};
}
inline void from_json(const nlohmann::json& j, TextInstance& t) {
    t.content = j.at("content").get<std::string>();
    t.bbox = j.at("bbox").get<PixelBox>();
    t.glyph_height = j.at("glyph_height").get<int>();
}

inline void to_json(nlohmann::json& j, const SyntheticScene& s) {
    j = nlohmann::json{{"id", s.id},
                       {"archetype", std::string(to_string(s.archetype))},
                       {"width", s.dims.width},
                       {"height", s.dims.height},
                       {"instances", s.instances},
                       {"target_index", s.target_index},
                       {"question", s.question},
                       {"distractor_answer", s.distractor_answer},
                       {"render_seed", s.render_seed}};
    j["context_token"] = s.context_token ? nlohmann::json(*s.context_token) : nlohmann::json(nullptr);
}
inline void from_json(const nlohmann::json& j, SyntheticScene& s) {
    s.id = j.at("id").get<std::string>();
    s.archetype = archetype_from_string(j.at("archetype").get<std::string>());
    s.dims = {j.at("width").get<int>(), j.at("height").get<int>()};
    s.instances = j.at("instances").get<std::vector<TextInstance>>();
    s.target_index = j.at("target_index").get<std::size_t>();
    s.question = j.at("question").get<std::string>();
    s.distractor_answer = j.at("distractor_answer").get<std::string>();
    s.render_seed = j.at("render_seed").get<std::uint64_t>();
    s.context_token.reset();
    if (j.contains("context_token") && j.at("context_token").is_string())
        s.context_token = j.at("context_token").get<std::string>();
}

struct SuiteFiles {
    std::filesystem::path manifest;
    std::filesystem::path sidecar;
};

inline constexpr std::string_view kSidecarFormat = "textcot-synthetic/1";

/// Writes images/<id>.png, manifest.jsonl and scenes.json under dir.
inline SuiteFiles write_suite(const std::filesystem::path& dir, const std::vector<SyntheticScene>& scenes,
                              const OracleParams& params, std::uint64_t suite_seed,
                              const std::function<void(const RasterImage&, const std::filesystem::path&)>& save_image) {
    std::filesystem::create_directories(dir / "images");
    DatasetManifest manifest;
    manifest.name = "synthetic";
    manifest.split = "seed-" + std::to_string(suite_seed);
    manifest.source_notes = "generated text-rich scenes; oracle ground truth in scenes.json";
    for (const auto& s : scenes) {
        const auto image = std::filesystem::absolute(dir / "images" / (s.id + ".png"));
        save_image(render_scene(s), image);
        manifest.samples.push_back(scene_sample(s, image));
    }
    SuiteFiles files{dir / "manifest.jsonl", dir / "scenes.json"};
    save_manifest(manifest, files.manifest);
    const nlohmann::json sidecar{{"format", kSidecarFormat},
                                 {"suite_seed", suite_seed},
                                 {"oracle", params},
                                 {"manifest", "manifest.jsonl"},
                                 {"scenes", scenes}};
    std::ofstream(files.sidecar) << sidecar.dump(2) << '\n';
    return files;
}

struct SuiteSidecar {
    std::uint64_t suite_seed = 0;
    OracleParams params;
    std::vector<SyntheticScene> scenes;
};

inline SuiteSidecar load_sidecar(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::SchemaError, "cannot open scene sidecar '" + path.string() + "'");
    try {
        const auto j = nlohmann::json::parse(in);
        if (j.at("format").get<std::string>() != kSidecarFormat)
            throw Error(ErrorKind::SchemaError, "not a synthetic scene sidecar: " + path.string());
        return SuiteSidecar{j.at("suite_seed").get<std::uint64_t>(), j.at("oracle").get<OracleParams>(),
                            j.at("scenes").get<std::vector<SyntheticScene>>()};
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::SchemaError, path.string() + ": " + e.what());
    }
}

}  // namespace textcot::synthetic
