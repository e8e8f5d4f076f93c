#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "objnav/promptgen/client.hpp"

#include <httplib.h>

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <json.hpp>
#include <set>
#include <sstream>

#include "objnav/common/errors.hpp"
#include "objnav/common/rng.hpp"

namespace objnav::promptgen {

namespace {

const std::set<std::string>& stopwords() {
  static const std::set<std::string> words = {
      "a", "an", "the", "i", "me", "my", "you", "your", "we", "it", "its", "is", "are", "am", "was", "be",
      "can", "could", "would", "should", "will", "do", "does", "did", "to", "of", "in", "on", "at", "for",
      "with", "by", "from", "into", "onto", "near", "next", "under", "over", "where", "what", "which", "who",
      "how", "there", "here", "this", "that", "these", "those", "some", "any", "and", "or", "please", "find",
      "see", "look", "looking", "need", "want", "get", "go", "take", "show", "bring", "help", "sit", "down",
      "up", "use", "put", "check", "locate", "spot", "search", "searching", "room", "hey", "robot",
      "quick", "question", "excuse", "navigate", "head", "move", "toward", "towards", "around", "s"};
  return words;
}

std::vector<std::string> words_of(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || ch == '-') {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::string article_for(const std::string& noun) {
  const char c = noun.empty() ? 'x' : static_cast<char>(std::tolower(static_cast<unsigned char>(noun.front())));
  return std::string("aeiou").find(c) != std::string::npos ? "an" : "a";
}

std::string fill(const std::string& tmpl, const std::string& noun) {
  std::string out;
  for (std::size_t i = 0; i < tmpl.size();) {
    if (tmpl.compare(i, 6, "{noun}") == 0) {
      out += noun;
      i += 6;
    } else if (tmpl.compare(i, 5, "{a/n}") == 0) {
      out += article_for(noun);
      i += 5;
    } else {
      out.push_back(tmpl[i++]);
    }
  }
  return out;
}

const std::vector<std::string>& openers() {
  static const std::vector<std::string> list = {
      "Please tell me:", "Quick question:", "Hey robot,", "Excuse me,", "When you have a moment,",
      "Out of curiosity,", "Sorry to bother you,", "One more thing:"};
  return list;
}

bool contains(const std::vector<std::string>& items, const std::string& s) {
  return std::find(items.begin(), items.end(), s) != items.end();
}

std::string lower_first(std::string s) {
  if (!s.empty() && s.front() != 'I') s.front() = static_cast<char>(std::tolower(static_cast<unsigned char>(s.front())));
  return s;
}

}  // namespace

StubBackend::StubBackend(std::uint64_t seed) : seed_(seed) {}

const std::vector<std::string>& StubBackend::templates() {
  static const std::vector<std::string> bank = {
      "Where is the {noun}?",
      "I am looking for {a/n} {noun}.",
      "Can you take me to the {noun}?",
      "Find the {noun} for me.",
      "Is there {a/n} {noun} in this room?",
      "Show me where the {noun} is.",
      "I need to get to the {noun}.",
      "Where can I find {a/n} {noun}?",
      "Go to the {noun}, please.",
      "Which way is the {noun}?",
      "Help me locate the {noun}.",
      "Navigate to the nearest {noun}.",
  };
  return bank;
}

std::string StubBackend::sentence_for(const std::string& noun, const std::vector<std::string>& history) {
  for (const std::string& t : templates()) {
    std::string s = fill(t, noun);
    if (!contains(history, s)) return s;
  }
  std::uint64_t& draw = draws_[noun];
  for (int attempt = 0; attempt < 64; ++attempt) {
    Rng rng(derive_seed(seed_ ^ fnv1a(noun), draw++));
    const std::string& opener = openers()[rng.below(openers().size())];
    const std::string& t = templates()[rng.below(templates().size())];
    std::string s = opener + " " + lower_first(fill(t, noun));
    if (!contains(history, s)) return s;
  }
  for (std::size_t n = 2;; ++n) {
    std::string s = fill(templates().front(), noun) + " (" + std::to_string(n) + ")";
    if (!contains(history, s)) return s;
  }
}

std::string StubBackend::noun_for(const std::string& sentence) {
  const std::vector<std::string> words = words_of(sentence);
  const auto& stop = stopwords();
  std::ptrdiff_t last = static_cast<std::ptrdiff_t>(words.size()) - 1;
  while (last >= 0 && stop.count(words[static_cast<std::size_t>(last)]) != 0) --last;
  if (last < 0) return words.empty() ? std::string() : words.back();
  std::ptrdiff_t first = last;
  while (first > 0 && last - first < 3 && stop.count(words[static_cast<std::size_t>(first - 1)]) == 0) --first;
  std::string out;
  for (std::ptrdiff_t i = first; i <= last; ++i) {
    if (!out.empty()) out += ' ';
    out += words[static_cast<std::size_t>(i)];
  }
  return out;
}

ChatCompletionBackend::ChatCompletionBackend(ChatEndpoint endpoint) : endpoint_(std::move(endpoint)) {
  if (endpoint_.url.empty()) throw ContractError("chat endpoint url is empty");
}

std::string ChatCompletionBackend::request_body(const std::string& model, const std::string& system,
                                                const std::string& user) {
  nlohmann::ordered_json body;
  body["model"] = model;
  body["messages"] = nlohmann::ordered_json::array(
      {{{"role", "system"}, {"content", system}}, {{"role", "user"}, {"content", user}}});
  body["temperature"] = 1.0;
  return body.dump();
}

std::string ChatCompletionBackend::reply_text(const std::string& response_body) {
  const auto parsed = nlohmann::json::parse(response_body, nullptr, false);
  if (parsed.is_discarded()) throw GenerationError("chat endpoint returned malformed JSON");
  try {
    return parsed.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw GenerationError("chat endpoint response has no choices[0].message.content");
  }
}

std::string ChatCompletionBackend::complete(const std::string& system, const std::string& user) {
  const std::string& url = endpoint_.url;
  const auto scheme_end = url.find("://");
  const auto path_start = url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  const std::string origin = path_start == std::string::npos ? url : url.substr(0, path_start);
  const std::string path = path_start == std::string::npos ? "/v1/chat/completions" : url.substr(path_start);

  httplib::Client client(origin);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(endpoint_.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(endpoint_.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  httplib::Headers headers;
  if (!endpoint_.api_key.empty()) headers.emplace("Authorization", "Bearer " + endpoint_.api_key);

  auto res = client.Post(path, headers, request_body(endpoint_.model, system, user), "application/json");
  if (!res) {
    const auto err = res.error();
    const std::string what = "chat request failed: " + httplib::to_string(err);
    if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read) throw GenerationTimeout(what);
    throw GenerationError(what);
  }
  if (res->status != 200) throw GenerationError("chat endpoint returned HTTP " + std::to_string(res->status));
  return trim(reply_text(res->body));
}

std::string ChatCompletionBackend::sentence_for(const std::string& noun, const std::vector<std::string>& history) {
  std::ostringstream user;
  user << "Object: " << noun << "\n";
  if (!history.empty()) {
    user << "Previous generations:\n";
    for (const std::string& h : history) user << "- " << h << "\n";
  }
  user << "Write one new sentence or question that is different from all previous generations.";
  return complete(
      "You write short requests that a person might give a household robot. Given an object noun, reply with "
      "one sentence or question that asks for the object, either by name or by what it is used for. Reply with "
      "the sentence only.",
      user.str());
}

std::string ChatCompletionBackend::noun_for(const std::string& sentence) {
  return complete(
      "Reply with a short noun of at most four words naming the object that the sentence is looking for. Reply "
      "with the noun only.",
      sentence);
}

GenerationClient::GenerationClient(std::unique_ptr<GenerationBackend> backend, int retries, bool stub)
    : backend_(std::move(backend)), retries_(retries), stub_(stub) {
  if (!backend_) throw ContractError("GenerationClient: null backend");
  if (retries_ < 0) throw ContractError("GenerationClient: negative retry budget");
}

GenerationClient GenerationClient::stub(std::uint64_t seed) {
  return GenerationClient(std::make_unique<StubBackend>(seed), 0, true);
}

GenerationClient GenerationClient::from_environment(bool offline, std::uint64_t seed, int retries) {
  const char* url = std::getenv("OBJNAV_LLM_ENDPOINT");
  if (offline || url == nullptr || *url == '\0') return stub(seed);
  ChatEndpoint endpoint;
  endpoint.url = url;
  if (const char* key = std::getenv("OBJNAV_LLM_API_KEY")) endpoint.api_key = key;
  if (const char* model = std::getenv("OBJNAV_LLM_MODEL")) endpoint.model = model;
  if (const char* ms = std::getenv("OBJNAV_LLM_TIMEOUT_MS")) endpoint.timeout = std::chrono::milliseconds(std::atol(ms));
  return GenerationClient(std::make_unique<ChatCompletionBackend>(std::move(endpoint)), retries, false);
}

const std::vector<std::string>& GenerationClient::history(const std::string& noun) const {
  static const std::vector<std::string> empty;
  const auto it = history_.find(noun);
  return it == history_.end() ? empty : it->second;
}

SentenceBatch noun_to_sentences(const std::string& noun, int count, GenerationClient& client) {
  if (noun.empty()) throw ContractError("noun_to_sentences: empty noun");
  if (count < 1) throw ContractError("noun_to_sentences: count must be at least 1");
  SentenceBatch out;
  for (int i = 0; i < count; ++i) {
    bool produced = false;
    int failures = 0;
    for (int attempt = 0; attempt <= client.retries(); ++attempt) {
      std::string s;
      try {
        s = trim(client.backend().sentence_for(noun, client.history(noun)));
      } catch (const GenerationError& e) {
        ++failures;
        if (failures > client.retries()) {
          out.error = "generation for '" + noun + "' stopped after " + std::to_string(out.sentences.size()) +
                      " of " + std::to_string(count) + " sentences: " + e.what();
          return out;
        }
        continue;
      }
      if (s.empty() || contains(client.history(noun), s)) continue;
      client.remember(noun, s);
      out.sentences.push_back(std::move(s));
      produced = true;
      break;
    }
    if (!produced) {
      out.warnings.push_back("dropped a duplicate generation for '" + noun + "' after " +
                             std::to_string(client.retries() + 1) + " attempts");
    }
  }
  return out;
}

std::string sentence_to_noun(const std::string& sentence, GenerationClient& client) {
  if (trim(sentence).empty()) throw ContractError("sentence_to_noun: empty sentence");
  std::string raw;
  for (int attempt = 0;; ++attempt) {
    try {
      raw = client.backend().noun_for(sentence);
      break;
    } catch (const GenerationError& e) {
      if (attempt >= client.retries()) {
        throw GenerationError("sentence_to_noun failed for \"" + sentence + "\": " + e.what());
      }
    }
  }
  std::istringstream in(raw);
  std::string word;
  std::string noun;
  for (int n = 0; n < 4 && in >> word; ++n) {
    if (!noun.empty()) noun += ' ';
    noun += word;
  }
  while (!noun.empty() && std::string(".?!,;:\"'").find(noun.back()) != std::string::npos) noun.pop_back();
  while (!noun.empty() && (noun.front() == '"' || noun.front() == '\'')) noun.erase(noun.begin());
  if (noun.empty()) throw GenerationError("sentence_to_noun produced no noun for \"" + sentence + "\"");
  return noun;
}

}  // namespace objnav::promptgen
