#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>

namespace objnav::promptgen {

inline constexpr std::string_view kPromptSeparator = ". ";

// Object noun first, then the query sentence: "sofa. Where can I sit down?".
// The noun alone when no sentence is given. The noun must be nonempty and must
// not contain the separator, so the result parses back uniquely.
std::string build_prompt(const std::string& noun, const std::optional<std::string>& sentence = std::nullopt);

enum class PromptTemplate {
  kNounThenSentence,  // "sofa. Where can I sit down?"
  kSentenceOnly,      // "Where can I sit down?"
  kNounOnly,          // "sofa"
};

// Query text under a template; falls back to the noun when the sentence is absent.
std::string format_query(PromptTemplate tmpl, const std::string& noun, const std::optional<std::string>& sentence);
PromptTemplate parse_template(const std::string& name);  // "on-qs", "qs" or "on"
std::string template_name(PromptTemplate tmpl);

// Inverse of build_prompt: splits at the first separator.
std::pair<std::string, std::optional<std::string>> parse_prompt(const std::string& prompt);

}  // namespace objnav::promptgen
