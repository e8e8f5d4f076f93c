#include "objnav/promptgen/prompt.hpp"

#include "objnav/common/errors.hpp"

namespace objnav::promptgen {

std::string build_prompt(const std::string& noun, const std::optional<std::string>& sentence) {
  if (noun.empty()) throw ContractError("build_prompt: empty noun");
  if (noun.find(kPromptSeparator) != std::string::npos) {
    throw ContractError("build_prompt: noun contains the prompt separator: '" + noun + "'");
  }
  if (!sentence || sentence->empty()) return noun;
  return noun + std::string(kPromptSeparator) + *sentence;
}

std::pair<std::string, std::optional<std::string>> parse_prompt(const std::string& prompt) {
  const auto pos = prompt.find(kPromptSeparator);
  if (pos == std::string::npos) return {prompt, std::nullopt};
  return {prompt.substr(0, pos), prompt.substr(pos + kPromptSeparator.size())};
}

std::string format_query(PromptTemplate tmpl, const std::string& noun, const std::optional<std::string>& sentence) {
  switch (tmpl) {
    case PromptTemplate::kNounThenSentence:
      return build_prompt(noun, sentence);
    case PromptTemplate::kSentenceOnly:
      if (sentence && !sentence->empty()) return *sentence;
      return build_prompt(noun);
    case PromptTemplate::kNounOnly:
      return build_prompt(noun);
  }
  throw ContractError("format_query: unknown template");
}

PromptTemplate parse_template(const std::string& name) {
  if (name == "on-qs") return PromptTemplate::kNounThenSentence;
  if (name == "qs") return PromptTemplate::kSentenceOnly;
  if (name == "on") return PromptTemplate::kNounOnly;
  throw ContractError("unknown prompt template '" + name + "' (expected on-qs, qs or on)");
}

std::string template_name(PromptTemplate tmpl) {
  switch (tmpl) {
    case PromptTemplate::kNounThenSentence:
      return "on-qs";
    case PromptTemplate::kSentenceOnly:
      return "qs";
    case PromptTemplate::kNounOnly:
      return "on";
  }
  return "on-qs";
}

}  // namespace objnav::promptgen
