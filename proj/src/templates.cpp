#include "polyglot/templates.hpp"

#include "polyglot/error.hpp"
#include "polyglot/util.hpp"

namespace polyglot {
namespace {

constexpr std::string_view kGenerateHead =
    R"(As a multilingual data generator, your task is to generate a new example (`prompt` and `response`) for a dataset demonstrating how AI agents can fulfill general instructions for {lang_name}.

To do this, you will want to generate two pieces of information:
1) A "prompt" specifying a task to be completed or a question to be answered (what, where, when, how, who, why). The task should be very challenging yet solvable.
2) A "response" representing a valid completion of that task in natural language. If the "response" does not satisfy the "prompt", then you have failed at your job. Do not provide unnecessary details, beyond what is explicitly needed to satisfy the instruction you generated.

Hard constraint: The generated task MUST belong to exactly one of the following categories (pick one at random and do NOT mention the category).
1. Logical reasoning / error analysis
2. Math or quantitative reasoning with explanation
3. Classification or labeling
4. Dialogue or role-play
5. Translation or paraphrasing with constraints
6. Procedural instructions (step-by-step)
7. Grammar correction or linguistic analysis
8. Short-form creative output (≤50 words)
9. Knowledge recall with verification or correction
10. Cultural or pragmatic judgment

Add diversity to your generations by varying the types of tasks you create, the styles and tones of the responses, and the complexity of the language used. This will help ensure a rich and varied dataset.
For example, you might create tasks that involve answering knowledge-based questions, answering math questions, providing explanations, generating creative content, or performing translations.

Please provide a JSON dictionary response that includes the new `prompt` and its corresponding `response`. Use the `prompt` and `response` keys in the dictionary.
Do not generate any other text in your response (for example, do not start your message with any greetings, and never ask for clarification or apologize for struggling with the task).
Try you best to ensure that the input and response you generate are distinct from the provided examples while maintaining a diverse, detailed, precise, comprehensive, and high-quality response.
It is important to generate responses that are contextually relevant and culturally appropriate for {lang_name}.

Here are some examples to guide your generation. The best way to use these examples is to identify the patterns and structures they follow, rather than copying them directly:

)";

constexpr std::string_view kGenerateTail = "\nNew Example:";

constexpr std::string_view kTranslate =
    R"(As a multilingual data generator, your task is to translate the given prompt from English into {lang_name} and generate the appropriate response in the same language.
Important: you must return both the translated prompt (into {lang_name}) and the response. Ensure that both the translated prompt and the response are coherent, culturally appropriate, and demonstrate a deep understanding of the language nuances.

Do not generate any other text in your response (for example, do not start your message with any greetings, and never ask for clarification or apologize for struggling with the task).
Do not return the original English prompt. Remember, you must translate the prompt first and return it.
Here is the prompt you need to translate and respond to:

{prompt})";

constexpr std::string_view kRespond =
    R"(As a multilingual data generator, you will be presented a user request or instruction in the {lang_name} language. Your task is to generate an appropriate response for the given request.
Ensure that your response is coherent, culturally appropriate, and demonstrates a deep understanding of the language nuances
Do not generate any other text in your response (for example, do not start your message with any greetings, and never ask for clarification or apologize for struggling with the task).
Here is the prompt you need to respond to:

{prompt})";

constexpr std::string_view kJudge =
    R"(Task Description:
An instruction (might include an Input inside it) in {language}, a response to evaluate, and a score rubric representing a evaluation criteria are given.
1. Write a detailed feedback that assess the quality of the response strictly based on the given score rubric, not evaluating in general.
2. After writing a feedback, write a score that is an integer between 1 and 5. You should refer to the score rubric.
3. The output should contain the score and feedback only.
4. Please do not generate any other opening, closing, and explanations.

The instruction to evaluate:
{instruction}

Response to evaluate:
{response}

Score Rubrics:
[Is the model proficient in language {lang_name}, including its cultural nuance and grammatical usage, and responds in a helpful and harmless manner according to the instruction?]
Score 1: The response contains severe grammatical errors, lacks cultural appropriateness, or is unhelpful/harmful. The language proficiency is very poor.
Score 2: The response has noticeable grammatical errors and limited cultural awareness. It partially addresses the instruction but with significant gaps in language proficiency or helpfulness.
Score 3: The response demonstrates adequate language proficiency with some minor grammatical errors. It shows reasonable cultural awareness and addresses the instruction in a helpful manner, though improvements are possible.
Score 4: The response exhibits strong language proficiency with minimal grammatical errors and good cultural nuance. It addresses the instruction in a helpful and harmless way with only minor room for improvement.
Score 5: The response demonstrates excellent language proficiency with proper grammar, appropriate cultural nuance, and idiomatic usage. It fully addresses the instruction in a helpful and harmless manner.

Feedback:)";

// Single-pass substitution: slot values are never re-scanned, so text that
// happens to contain "{prompt}" is inserted literally.
std::string substitute(std::string_view tmpl,
                       std::initializer_list<std::pair<std::string_view, std::string_view>> slots) {
  std::string out;
  out.reserve(tmpl.size() + 256);
  std::size_t i = 0;
  while (i < tmpl.size()) {
    bool replaced = false;
    if (tmpl[i] == '{') {
      for (const auto& [name, value] : slots) {
        if (tmpl.substr(i + 1, name.size()) == name && i + 1 + name.size() < tmpl.size() &&
            tmpl[i + 1 + name.size()] == '}') {
          out += value;
          i += name.size() + 2;
          replaced = true;
          break;
        }
      }
    }
    if (!replaced) out += tmpl[i++];
  }
  return out;
}

void require_prompt(const TemplateSlots& slots, Method m) {
  if (!slots.prompt || trim(*slots.prompt).empty()) {
    throw ValidationError(std::string(to_string(m)) + " template requires a non-empty prompt slot");
  }
}

}  // namespace

const std::string_view kTranslateJsonSuffix =
    "\n\nReturn your answer as a JSON dictionary with two keys: `prompt` holding the translated "
    "prompt and `response` holding the response.";

std::string_view to_string(Method m) {
  switch (m) {
    case Method::Generate:
      return "generate";
    case Method::Translate:
      return "translate";
    case Method::Respond:
      return "respond";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  const std::string lower = to_lower(trim(name));
  if (lower == "generate") return Method::Generate;
  if (lower == "translate") return Method::Translate;
  if (lower == "respond") return Method::Respond;
  throw ValidationError("unknown generation method '" + std::string(name) + "'");
}

std::string_view template_version(Method m) {
  switch (m) {
    case Method::Generate:
      return kGenerateTemplateVersion;
    case Method::Translate:
      return kTranslateTemplateVersion;
    case Method::Respond:
      return kRespondTemplateVersion;
  }
  return "";
}

RenderedPrompt render_template(Method method, std::string_view language_name,
                               const TemplateSlots& slots) {
  if (trim(language_name).empty()) throw ValidationError("language name slot is empty");
  std::string text;
  switch (method) {
    case Method::Generate: {
      if (slots.examples.empty()) {
        throw ValidationError("generate template requires at least one few-shot example");
      }
      text = substitute(kGenerateHead, {{"lang_name", language_name}});
      for (const auto& ex : slots.examples) {
        text += "Prompt: ";
        text += ex.prompt;
        text += "\nResponse: ";
        text += ex.response;
        text += '\n';
      }
      text += kGenerateTail;
      break;
    }
    case Method::Translate:
      require_prompt(slots, method);
      text = substitute(kTranslate, {{"lang_name", language_name}, {"prompt", *slots.prompt}});
      text += kTranslateJsonSuffix;
      break;
    case Method::Respond:
      require_prompt(slots, method);
      text = substitute(kRespond, {{"lang_name", language_name}, {"prompt", *slots.prompt}});
      break;
  }
  return {{{"user", std::move(text)}}, std::string(template_version(method))};
}

RenderedPrompt render_judge_prompt(std::string_view language_name, std::string_view instruction,
                                   std::string_view response) {
  if (trim(language_name).empty()) throw ValidationError("language name slot is empty");
  std::string text = substitute(kJudge, {{"language", language_name},
                                         {"lang_name", language_name},
                                         {"instruction", instruction},
                                         {"response", response}});
  return {{{"user", std::move(text)}}, std::string(kJudgeTemplateVersion)};
}

}  // namespace polyglot
