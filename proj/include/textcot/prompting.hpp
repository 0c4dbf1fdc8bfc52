#pragma once

#include <string>
#include <string_view>

#include "json.hpp"

#include "textcot/error.hpp"

namespace textcot {

enum class Stage { overview, localization, observation, baseline_direct, zscot_reason, zscot_extract };

inline std::string_view to_string(Stage s) {
    switch (s) {
        case Stage::overview: return "overview";
        case Stage::localization: return "localization";
        case Stage::observation: return "observation";
        case Stage::baseline_direct: return "baseline_direct";
        case Stage::zscot_reason: return "zscot_reason";
        case Stage::zscot_extract: return "zscot_extract";
    }
    return "overview";
}

inline Stage stage_from_string(std::string_view s) {
    for (Stage st : {Stage::overview, Stage::localization, Stage::observation, Stage::baseline_direct,
                     Stage::zscot_reason, Stage::zscot_extract})
        if (to_string(st) == s) return st;
    throw Error(ErrorKind::SchemaError, "unknown stage '" + std::string(s) + "'");
}

inline constexpr std::string_view kQuestionSlot = "{question}";
inline constexpr std::string_view kCaptionConstraint = "in one sentence";

/// Trims ASCII whitespace on both ends.
inline std::string trim(std::string_view s) {
    const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
    std::size_t b = 0, e = s.size();
    while (b < e && is_space(s[b])) ++b;
    while (e > b && is_space(s[e - 1])) --e;
    return std::string(s.substr(b, e - b));
}

/// The stage prompts. Construction through make() enforces the invariants.
class PromptSet {
public:
    static constexpr std::string_view kDefaultCaption = "Describe this image in one sentence.";
    static constexpr std::string_view kDefaultGrounding =
        "Provide the bounding box coordinate of the region that can answer the following question: {question}";
    static constexpr std::string_view kDefaultTask = "Answer the question using the context above and the image.";
    static constexpr std::string_view kDefaultContextPrefix = "This is the context of the scene:";
    static constexpr std::string_view kDefaultStepByStep = "Let's think step-by-step.";
    static constexpr std::string_view kDefaultAnswerDirective =
        "Based on the reasoning above, give only the final answer to the question.";

    PromptSet() : PromptSet(make()) {}

    static PromptSet make(std::string caption_prompt = std::string(kDefaultCaption),
                          std::string grounding_prompt_template = std::string(kDefaultGrounding),
                          std::string task_prompt = std::string(kDefaultTask),
                          std::string context_prefix = std::string(kDefaultContextPrefix),
                          std::string step_by_step = std::string(kDefaultStepByStep),
                          std::string answer_directive = std::string(kDefaultAnswerDirective)) {
        if (caption_prompt.find(kCaptionConstraint) == std::string::npos)
            throw Error(ErrorKind::InvalidPromptSet, "caption prompt must contain \"in one sentence\"");
        const auto slot = grounding_prompt_template.find(kQuestionSlot);
        if (slot == std::string::npos ||
            grounding_prompt_template.find(kQuestionSlot, slot + kQuestionSlot.size()) != std::string::npos)
            throw Error(ErrorKind::InvalidPromptSet, "grounding template needs exactly one {question} slot");
        if (trim(context_prefix).empty())
            throw Error(ErrorKind::InvalidPromptSet, "context prefix must be non-empty");
        if (trim(task_prompt).empty()) throw Error(ErrorKind::InvalidPromptSet, "task prompt must be non-empty");
        if (trim(step_by_step).empty() || trim(answer_directive).empty())
            throw Error(ErrorKind::InvalidPromptSet, "zero-shot CoT prompts must be non-empty");
        return PromptSet(std::move(caption_prompt), std::move(grounding_prompt_template), std::move(task_prompt),
                         std::move(context_prefix), std::move(step_by_step), std::move(answer_directive));
    }

    const std::string& caption_prompt() const { return caption_; }
    const std::string& grounding_prompt_template() const { return grounding_; }
    const std::string& task_prompt() const { return task_; }
    const std::string& context_prefix() const { return prefix_; }
    const std::string& step_by_step() const { return step_; }
    const std::string& answer_directive() const { return directive_; }

    friend bool operator==(const PromptSet&, const PromptSet&) = default;

private:
    PromptSet(std::string c, std::string g, std::string t, std::string p, std::string s, std::string d)
        : caption_(std::move(c)), grounding_(std::move(g)), task_(std::move(t)), prefix_(std::move(p)),
          step_(std::move(s)), directive_(std::move(d)) {}

    std::string caption_, grounding_, task_, prefix_, step_, directive_;
};

struct AssembledPrompt {
    std::string text;
    Stage stage = Stage::baseline_direct;

    friend bool operator==(const AssembledPrompt&, const AssembledPrompt&) = default;
};

namespace detail {

inline std::string require_question(std::string_view question) {
    auto q = trim(question);
    if (q.empty()) throw Error(ErrorKind::EmptyQuestion, "question is empty");
    return q;
}

}  // namespace detail

inline AssembledPrompt assemble_overview(const PromptSet& prompts) {
    return {prompts.caption_prompt(), Stage::overview};
}

inline AssembledPrompt assemble_localization(const PromptSet& prompts, std::string_view question) {
    const std::string q = detail::require_question(question);
    std::string text = prompts.grounding_prompt_template();
    text.replace(text.find(kQuestionSlot), kQuestionSlot.size(), q);
    return {std::move(text), Stage::localization};
}

/// prefix + " " + caption, then the task prompt, then the question, one per line.
inline AssembledPrompt assemble_observation(const PromptSet& prompts, std::string_view caption_answer,
                                            std::string_view question) {
    const std::string q = detail::require_question(question);
    const std::string caption = trim(caption_answer);
    if (caption.empty()) throw Error(ErrorKind::EmptyCaption, "caption answer is empty");
    std::string text = trim(prompts.context_prefix());
    text += ' ';
    text += caption;
    text += '\n';
    text += trim(prompts.task_prompt());
    text += '\n';
    text += q;
    return {std::move(text), Stage::observation};
}

/// Stage-3 prompt when the caption stage is disabled: the bare question, optionally followed
/// by the grounding coordinates when the image is not cropped.
inline AssembledPrompt assemble_question_only(std::string_view question, std::string_view box_hint = {}) {
    std::string text = detail::require_question(question);
    if (!box_hint.empty()) {
        text += "\nThe answer is located in the region ";
        text += box_hint;
        text += '.';
    }
    return {std::move(text), Stage::observation};
}

inline AssembledPrompt assemble_direct(std::string_view question) {
    return {detail::require_question(question), Stage::baseline_direct};
}

inline AssembledPrompt assemble_zscot_reason(const PromptSet& prompts, std::string_view question) {
    return {detail::require_question(question) + "\n" + trim(prompts.step_by_step()), Stage::zscot_reason};
}

inline AssembledPrompt assemble_zscot_extract(const PromptSet& prompts, std::string_view question,
                                              std::string_view reasoning) {
    return {detail::require_question(question) + "\n" + trim(prompts.step_by_step()) + "\n" + trim(reasoning) +
                "\n" + trim(prompts.answer_directive()),
            Stage::zscot_extract};
}

inline void to_json(nlohmann::json& j, const PromptSet& p) {
    j = nlohmann::json{{"caption_prompt", p.caption_prompt()},
                       {"grounding_prompt_template", p.grounding_prompt_template()},
                       {"task_prompt", p.task_prompt()},
                       {"context_prefix", p.context_prefix()},
                       {"step_by_step", p.step_by_step()},
                       {"answer_directive", p.answer_directive()}};
}

/// Missing keys fall back to the defaults.
inline PromptSet prompt_set_from_json(const nlohmann::json& j) {
    const auto get = [&](const char* key, std::string_view fallback) {
        return j.contains(key) ? j.at(key).get<std::string>() : std::string(fallback);
    };
    return PromptSet::make(get("caption_prompt", PromptSet::kDefaultCaption),
                           get("grounding_prompt_template", PromptSet::kDefaultGrounding),
                           get("task_prompt", PromptSet::kDefaultTask),
                           get("context_prefix", PromptSet::kDefaultContextPrefix),
                           get("step_by_step", PromptSet::kDefaultStepByStep),
                           get("answer_directive", PromptSet::kDefaultAnswerDirective));
}

}  // namespace textcot
