#pragma once

// Prompt templates for the three generation methods and the rubric judge.
// Template text is frozen; any edit must bump the corresponding version
// string because versions are recorded in dataset manifests.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "polyglot/inference_client.hpp"
#include "polyglot/seed_corpus.hpp"

namespace polyglot {

enum class Method { Generate, Translate, Respond };

inline constexpr Method kAllMethods[] = {Method::Generate, Method::Translate, Method::Respond};

std::string_view to_string(Method m);
/// Accepts "generate", "translate", "respond" (case-insensitive).
Method parse_method(std::string_view name);

inline constexpr std::string_view kGenerateTemplateVersion = "generate@1";
inline constexpr std::string_view kTranslateTemplateVersion = "translate@1+json-suffix@1";
inline constexpr std::string_view kRespondTemplateVersion = "respond@1";
inline constexpr std::string_view kJudgeTemplateVersion = "judge-rubric@1";

std::string_view template_version(Method m);

/// Slot values for render_template. Generate needs `examples`; Translate and
/// Respond need `prompt`.
struct TemplateSlots {
  std::vector<SeedExample> examples;
  std::optional<std::string> prompt;
};

struct RenderedPrompt {
  std::vector<ChatMessage> messages;
  std::string template_version;
};

/// Renders the method's template as a single user message. Throws
/// ValidationError when a required slot is missing or empty.
RenderedPrompt render_template(Method method, std::string_view language_name,
                               const TemplateSlots& slots);

/// Appended to the Translate instructions to request machine-readable output.
extern const std::string_view kTranslateJsonSuffix;

/// Rubric judge prompt for one (instruction, response) pair.
RenderedPrompt render_judge_prompt(std::string_view language_name, std::string_view instruction,
                                   std::string_view response);

}  // namespace polyglot
