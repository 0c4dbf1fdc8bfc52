#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "textcot/backend.hpp"
#include "textcot/client.hpp"
#include "textcot/dataset.hpp"
#include "textcot/geometry.hpp"
#include "textcot/prompting.hpp"

namespace textcot {

enum class StrategyKind { direct, zscot, cot_sc, textcot };

struct TextCotOptions {
    bool use_crop = true;
    bool use_caption = true;
    std::optional<CropMode> crop_mode;  // overrides CropConfig::mode when set

    friend bool operator==(const TextCotOptions&, const TextCotOptions&) = default;
};

/// An answering strategy. Text form (also the report row label):
///   direct | zscot | cot_sc[:N] | textcot[:ground[+crop][+caption]][@crop_mode]
struct Strategy {
    StrategyKind kind = StrategyKind::textcot;
    TextCotOptions textcot;
    int cot_sc_paths = 5;

    static Strategy direct() { return {StrategyKind::direct, {}, 5}; }
    static Strategy zscot() { return {StrategyKind::zscot, {}, 5}; }
    static Strategy cot_sc(int n = 5) { return {StrategyKind::cot_sc, {}, n}; }
    static Strategy full_textcot(std::optional<CropMode> mode = std::nullopt) {
        return {StrategyKind::textcot, {true, true, mode}, 5};
    }
    static Strategy textcot_variant(bool use_crop, bool use_caption, std::optional<CropMode> mode = std::nullopt) {
        return {StrategyKind::textcot, {use_crop, use_caption, mode}, 5};
    }

    std::string label() const {
        switch (kind) {
            case StrategyKind::direct: return "direct";
            case StrategyKind::zscot: return "zscot";
            case StrategyKind::cot_sc: return cot_sc_paths == 5 ? "cot_sc" : "cot_sc:" + std::to_string(cot_sc_paths);
            case StrategyKind::textcot: {
                std::string s = "textcot";
                if (!(textcot.use_crop && textcot.use_caption)) {
                    s += ":ground";
                    if (textcot.use_crop) s += "+crop";
                    if (textcot.use_caption) s += "+caption";
                }
                if (textcot.crop_mode) s += "@" + std::string(to_string(*textcot.crop_mode));
                return s;
            }
        }
        return "direct";
    }

    static Strategy parse(std::string_view text) {
        std::string s(text);
        std::optional<CropMode> mode;
        if (const auto at = s.find('@'); at != std::string::npos) {
            mode = crop_mode_from_string(s.substr(at + 1));
            s.resize(at);
        }
        std::string head = s, tail;
        if (const auto colon = s.find(':'); colon != std::string::npos) {
            head = s.substr(0, colon);
            tail = s.substr(colon + 1);
        }
        const auto bad = [&] { return Error(ErrorKind::UsageError, "unknown strategy '" + std::string(text) + "'"); };
        if (head == "textcot") {
            Strategy st = full_textcot(mode);
            if (!tail.empty()) {
                st.textcot.use_crop = st.textcot.use_caption = false;
                std::size_t pos = 0;
                bool saw_ground = false;
                while (pos <= tail.size()) {
                    const auto plus = tail.find('+', pos);
                    const auto part = tail.substr(pos, plus == std::string::npos ? std::string::npos : plus - pos);
                    if (part == "ground") saw_ground = true;
                    else if (part == "crop") st.textcot.use_crop = true;
                    else if (part == "caption") st.textcot.use_caption = true;
                    else throw bad();
                    if (plus == std::string::npos) break;
                    pos = plus + 1;
                }
                if (!saw_ground) throw bad();
            }
            return st;
        }
        if (mode) throw bad();
        if (head == "direct" && tail.empty()) return direct();
        if (head == "zscot" && tail.empty()) return zscot();
        if (head == "cot_sc") {
            if (tail.empty()) return cot_sc();
            std::size_t used = 0;
            int n = 0;
            try {
                n = std::stoi(tail, &used);
            } catch (const std::exception&) {
                throw bad();
            }
            if (used != tail.size() || n < 1) throw bad();
            return cot_sc(n);
        }
        throw bad();
    }

    friend bool operator==(const Strategy&, const Strategy&) = default;
};

/// One backend call as recorded in a trace.
struct CallRecord {
    Stage stage = Stage::baseline_direct;
    std::string prompt;
    ImageProvenance view;
    GenParams params;
    VisionResponse response;

    friend bool operator==(const CallRecord&, const CallRecord&) = default;
};

struct PipelineTrace {
    static constexpr int kSchemaVersion = 1;

    int schema_version = kSchemaVersion;
    std::string sample_id;
    std::string dataset;
    std::string strategy;
    std::string question;
    std::optional<std::string> caption_answer;
    std::optional<std::string> grounding_raw;
    std::optional<PixelBox> parsed_box;
    std::optional<CropRegion> crop_region;
    std::vector<CallRecord> calls;
    std::string final_answer;
    std::vector<std::string> fallback_events;
    std::optional<std::string> error;

    const CallRecord* find_call(Stage stage) const {
        for (const auto& c : calls)
            if (c.stage == stage) return &c;
        return nullptr;
    }

    friend bool operator==(const PipelineTrace&, const PipelineTrace&) = default;
};

namespace fallback {
inline constexpr std::string_view kBboxParseFailed = "BboxParseFailed";
inline constexpr std::string_view kEmptyCaption = "EmptyCaption";
inline constexpr std::string_view kEmptyReasoning = "EmptyReasoning";
}  // namespace fallback

/// Everything a strategy run needs besides the sample itself.
struct PipelineContext {
    Client& client;
    PromptSet prompts;
    CropConfig crop;
    GenParams params;  // temperature is overridden per strategy
};

namespace detail {

inline ImageProvenance full_view(const Sample& sample, ImageDims dims) {
    return {sample.id, dims, PixelBox{0, 0, dims.width, dims.height}};
}

inline PipelineTrace new_trace(const Sample& sample, const Strategy& strategy) {
    PipelineTrace t;
    t.sample_id = sample.id;
    t.strategy = strategy.label();
    t.question = trim(sample.question);
    return t;
}

inline const std::string& call(PipelineContext& ctx, PipelineTrace& trace, const ImageRef& image,
                               const ImageProvenance& view, AssembledPrompt prompt, const GenParams& params) {
    auto request = ctx.client.make_request(image, view, std::move(prompt), params);
    auto response = ctx.client.generate(request);
    trace.calls.push_back(CallRecord{request.prompt.stage, request.prompt.text, view, params, std::move(response)});
    return trace.calls.back().response.text;
}

inline GenParams greedy(const GenParams& p) {
    GenParams out = p;
    out.temperature = 0.0;
    return out;
}

}  // namespace detail

/// One call with the global image and the bare question.
inline PipelineTrace run_direct(PipelineContext& ctx, const Sample& sample, const ImageRef& image) {
    PipelineTrace trace = detail::new_trace(sample, Strategy::direct());
    auto prompt = assemble_direct(sample.question);
    trace.final_answer = detail::call(ctx, trace, image, detail::full_view(sample, image->dims()), std::move(prompt),
                                      detail::greedy(ctx.params));
    return trace;
}

namespace detail {

// One zero-shot CoT path: reasoning turn, then answer extraction. Falls back to a direct
// answer when the reasoning turn comes back empty.
inline std::string zscot_path(PipelineContext& ctx, PipelineTrace& trace, const Sample& sample, const ImageRef& image,
                              const GenParams& params) {
    const auto view = full_view(sample, image->dims());
    const std::string reasoning =
        call(ctx, trace, image, view, assemble_zscot_reason(ctx.prompts, sample.question), params);
    if (trim(reasoning).empty()) {
        trace.fallback_events.emplace_back(fallback::kEmptyReasoning);
        return call(ctx, trace, image, view, assemble_direct(sample.question), params);
    }
    return call(ctx, trace, image, view, assemble_zscot_extract(ctx.prompts, sample.question, reasoning), params);
}

}  // namespace detail

inline PipelineTrace run_zscot(PipelineContext& ctx, const Sample& sample, const ImageRef& image) {
    PipelineTrace trace = detail::new_trace(sample, Strategy::zscot());
    assemble_direct(sample.question);  // EmptyQuestion before any call
    trace.final_answer = detail::zscot_path(ctx, trace, sample, image, detail::greedy(ctx.params));
    return trace;
}

/// Case-fold, trim and collapse whitespace; the key CoT-SC votes on.
inline std::string normalize_vote(std::string_view s) {
    std::string out;
    bool space = false;
    for (unsigned char c : trim(s)) {
        if (std::isspace(c)) {
            space = true;
            continue;
        }
        if (space) out.push_back(' ');
        space = false;
        out.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
    }
    return out;
}

/// Majority over normalized answers; ties go to the lexicographically smallest key. Returns
/// the first raw answer carrying the winning key.
inline std::string majority_vote(const std::vector<std::string>& answers) {
    if (answers.empty()) return {};
    std::map<std::string, int> votes;
    for (const auto& a : answers) ++votes[normalize_vote(a)];
    const auto winner = std::max_element(votes.begin(), votes.end(), [](const auto& a, const auto& b) {
        return a.second < b.second;  // max_element keeps the first (smallest key) among equals
    });
    for (const auto& a : answers)
        if (normalize_vote(a) == winner->first) return a;
    return answers.front();
}

/// n sampled zero-shot CoT paths at the self-consistency temperature, then a vote.
inline PipelineTrace run_cot_sc(PipelineContext& ctx, const Sample& sample, const ImageRef& image, int n) {
    if (n < 1) throw Error(ErrorKind::InvalidParams, "cot_sc needs at least one path");
    PipelineTrace trace = detail::new_trace(sample, Strategy::cot_sc(n));
    assemble_direct(sample.question);
    // A single path is plain zero-shot CoT, decoded greedily.
    GenParams params = ctx.params;
    params.temperature = n == 1 ? 0.0 : GenParams::kSelfConsistencyTemperature;
    std::vector<std::string> answers;
    for (int i = 0; i < n; ++i)
        answers.push_back(detail::zscot_path(ctx, trace, sample, image, n == 1 ? params : path_params(params, i)));
    trace.final_answer = majority_vote(answers);
    return trace;
}

/// Overview, coarse localization and fine-grained observation, with the ablation switches
/// in strategy.textcot.
inline PipelineTrace run_textcot(PipelineContext& ctx, const Sample& sample, const ImageRef& image,
                                 const Strategy& strategy) {
    PipelineTrace trace = detail::new_trace(sample, strategy);
    const auto& opts = strategy.textcot;
    const ImageDims dims = image->dims();
    const auto global = detail::full_view(sample, dims);
    const GenParams params = detail::greedy(ctx.params);
    // Same Q in stages 2 and 3.
    const std::string question = trim(sample.question);
    if (question.empty()) throw Error(ErrorKind::EmptyQuestion, "question is empty");

    // (1) overview
    std::optional<std::string> caption;
    if (opts.use_caption) {
        const auto& a_c = detail::call(ctx, trace, image, global, assemble_overview(ctx.prompts), params);
        trace.caption_answer = a_c;
        if (trim(a_c).empty()) trace.fallback_events.emplace_back(fallback::kEmptyCaption);
        else caption = a_c;
    }

    // (2) coarse localization
    trace.grounding_raw =
        detail::call(ctx, trace, image, global, assemble_localization(ctx.prompts, question), params);
    const BoxConvention convention = ctx.client.bbox_convention();
    try {
        trace.parsed_box = locate_box(*trace.grounding_raw, convention, dims);
    } catch (const Error& e) {
        trace.fallback_events.push_back(std::string(fallback::kBboxParseFailed) + ": " +
                                        std::string(to_string(e.kind())));
    }

    ImageRef stage3_image = image;
    ImageProvenance stage3_view = global;
    std::string box_hint;
    if (opts.use_crop) {
        CropConfig cfg = ctx.crop;
        if (opts.crop_mode) cfg.mode = *opts.crop_mode;
        trace.crop_region = trace.parsed_box ? compute_crop(*trace.parsed_box, dims, cfg)
                                             : CropRegion{global.region, {}};
        if (trace.crop_region->box != global.region) {
            stage3_image = make_image_ref(extract_crop(image->pixels(), trace.crop_region->box));
            stage3_view.region = trace.crop_region->box;
        }
    } else if (trace.parsed_box) {
        box_hint = format_box(*trace.parsed_box, dims, convention);
    }

    // (3) fine-grained observation
    AssembledPrompt prompt;
    if (caption) {
        prompt = assemble_observation(ctx.prompts, *caption, question);
        if (!box_hint.empty()) prompt.text += "\nThe answer is located in the region " + box_hint + ".";
    } else {
        prompt = assemble_question_only(question, box_hint);
    }
    trace.final_answer = detail::call(ctx, trace, stage3_image, stage3_view, std::move(prompt), params);
    return trace;
}

/// Dispatches on the strategy kind.
inline PipelineTrace run_strategy(PipelineContext& ctx, const Strategy& strategy, const Sample& sample,
                                  const ImageRef& image) {
    switch (strategy.kind) {
        case StrategyKind::direct: return run_direct(ctx, sample, image);
        case StrategyKind::zscot: return run_zscot(ctx, sample, image);
        case StrategyKind::cot_sc: return run_cot_sc(ctx, sample, image, strategy.cot_sc_paths);
        case StrategyKind::textcot: return run_textcot(ctx, sample, image, strategy);
    }
    throw Error(ErrorKind::UsageError, "unreachable");
}

// ---------------------------------------------------------------------------
// JSON

inline void to_json(nlohmann::json& j, const ImageProvenance& v) {
    j = nlohmann::json{{"source_id", v.source_id},
                       {"source_width", v.source_dims.width},
                       {"source_height", v.source_dims.height},
                       {"region", v.region}};
}
inline void from_json(const nlohmann::json& j, ImageProvenance& v) {
    v.source_id = j.at("source_id").get<std::string>();
    v.source_dims = {j.at("source_width").get<int>(), j.at("source_height").get<int>()};
    v.region = j.at("region").get<PixelBox>();
}

inline void to_json(nlohmann::json& j, const GenParams& p) {
    j = nlohmann::json{{"temperature", p.temperature}, {"max_output_tokens", p.max_output_tokens}};
    j["seed"] = p.seed ? nlohmann::json(*p.seed) : nlohmann::json(nullptr);
}
inline void from_json(const nlohmann::json& j, GenParams& p) {
    p = GenParams{};
    p.temperature = j.value("temperature", 0.0);
    p.max_output_tokens = j.value("max_output_tokens", 512);
    if (j.contains("seed") && !j.at("seed").is_null()) p.seed = j.at("seed").get<std::uint64_t>();
}

inline void to_json(nlohmann::json& j, const CallRecord& c) {
    j = nlohmann::json{{"stage", std::string(to_string(c.stage))},
                       {"prompt", c.prompt},
                       {"view", c.view},
                       {"params", c.params},
                       {"response", c.response}};
}
inline void from_json(const nlohmann::json& j, CallRecord& c) {
    c.stage = stage_from_string(j.at("stage").get<std::string>());
    c.prompt = j.at("prompt").get<std::string>();
    c.view = j.at("view").get<ImageProvenance>();
    c.params = j.at("params").get<GenParams>();
    c.response = j.at("response").get<VisionResponse>();
}

namespace detail {
template <class T>
nlohmann::json opt_json(const std::optional<T>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}
template <class T>
std::optional<T> json_opt(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<T>();
}
}  // namespace detail

inline void to_json(nlohmann::json& j, const PipelineTrace& t) {
    j = nlohmann::json{{"schema_version", t.schema_version},
                       {"sample_id", t.sample_id},
                       {"dataset", t.dataset},
                       {"strategy", t.strategy},
                       {"question", t.question},
                       {"caption_answer", detail::opt_json(t.caption_answer)},
                       {"grounding_raw", detail::opt_json(t.grounding_raw)},
                       {"parsed_box", detail::opt_json(t.parsed_box)},
                       {"crop_region", detail::opt_json(t.crop_region)},
                       {"calls", t.calls},
                       {"final_answer", t.final_answer},
                       {"fallback_events", t.fallback_events},
                       {"error", detail::opt_json(t.error)}};
}

inline void from_json(const nlohmann::json& j, PipelineTrace& t) {
    t.schema_version = j.at("schema_version").get<int>();
    if (t.schema_version != PipelineTrace::kSchemaVersion)
        throw Error(ErrorKind::SchemaError, "unsupported trace schema version " + std::to_string(t.schema_version));
    t.sample_id = j.at("sample_id").get<std::string>();
    t.dataset = j.value("dataset", std::string{});
    t.strategy = j.at("strategy").get<std::string>();
    t.question = j.value("question", std::string{});
    t.caption_answer = detail::json_opt<std::string>(j, "caption_answer");
    t.grounding_raw = detail::json_opt<std::string>(j, "grounding_raw");
    t.parsed_box = detail::json_opt<PixelBox>(j, "parsed_box");
    t.crop_region = detail::json_opt<CropRegion>(j, "crop_region");
    t.calls = j.at("calls").get<std::vector<CallRecord>>();
    t.final_answer = j.at("final_answer").get<std::string>();
    t.fallback_events = j.value("fallback_events", std::vector<std::string>{});
    t.error = detail::json_opt<std::string>(j, "error");
}

}  // namespace textcot
