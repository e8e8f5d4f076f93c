#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace objnav::promptgen {

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GenerationTimeout : public GenerationError {
 public:
  using GenerationError::GenerationError;
};

// Source of generated text. Implementations may throw GenerationError or
// GenerationTimeout; the client handles retries.
class GenerationBackend {
 public:
  virtual ~GenerationBackend() = default;
  // One new sentence or question that refers to `noun`, different from every entry of `history`.
  virtual std::string sentence_for(const std::string& noun, const std::vector<std::string>& history) = 0;
  // A short noun naming the object the sentence asks for.
  virtual std::string noun_for(const std::string& sentence) = 0;
};

// Offline generator: a fixed template bank in order, then seeded variations.
class StubBackend : public GenerationBackend {
 public:
  explicit StubBackend(std::uint64_t seed);
  std::string sentence_for(const std::string& noun, const std::vector<std::string>& history) override;
  // Last noun-like token of the sentence.
  std::string noun_for(const std::string& sentence) override;

  static const std::vector<std::string>& templates();

 private:
  std::uint64_t seed_;
  std::map<std::string, std::uint64_t> draws_;
};

struct ChatEndpoint {
  std::string url;  // e.g. http://host:port/v1/chat/completions
  std::string api_key;
  std::string model = "gpt-3.5-turbo";
  std::chrono::milliseconds timeout{30000};
};

// Minimal chat-completion client: one system and one user message per request,
// the reply text is read from choices[0].message.content.
class ChatCompletionBackend : public GenerationBackend {
 public:
  explicit ChatCompletionBackend(ChatEndpoint endpoint);
  std::string sentence_for(const std::string& noun, const std::vector<std::string>& history) override;
  std::string noun_for(const std::string& sentence) override;

  // Request body for the given messages (exposed for wire-format tests).
  static std::string request_body(const std::string& model, const std::string& system, const std::string& user);
  static std::string reply_text(const std::string& response_body);

 private:
  std::string complete(const std::string& system, const std::string& user);
  ChatEndpoint endpoint_;
};

// Single-owner generation session. Keeps, per noun, every sentence generated so far.
class GenerationClient {
 public:
  GenerationClient(std::unique_ptr<GenerationBackend> backend, int retries, bool stub);

  static GenerationClient stub(std::uint64_t seed);
  // Live client when OBJNAV_LLM_ENDPOINT is set and offline is false; the stub otherwise.
  // Reads OBJNAV_LLM_API_KEY, OBJNAV_LLM_MODEL and OBJNAV_LLM_TIMEOUT_MS as well.
  static GenerationClient from_environment(bool offline, std::uint64_t seed, int retries = 2);

  bool is_stub() const { return stub_; }
  int retries() const { return retries_; }
  GenerationBackend& backend() { return *backend_; }
  const std::vector<std::string>& history(const std::string& noun) const;
  void remember(const std::string& noun, const std::string& sentence) { history_[noun].push_back(sentence); }

 private:
  std::unique_ptr<GenerationBackend> backend_;
  int retries_;
  bool stub_;
  std::map<std::string, std::vector<std::string>> history_;
};

struct SentenceBatch {
  std::vector<std::string> sentences;
  std::vector<std::string> warnings;
  std::optional<std::string> error;  // set when generation stopped early
};

// `count` new distinct sentences for `noun`. Duplicates of the session history
// are retried, then dropped with a warning; a timeout after the retry budget
// returns the partial list with an error.
SentenceBatch noun_to_sentences(const std::string& noun, int count, GenerationClient& client);

// Short noun phrase (at most 4 words) naming the object of `sentence`.
// Throws GenerationError (message includes the sentence) when the backend fails.
std::string sentence_to_noun(const std::string& sentence, GenerationClient& client);

}  // namespace objnav::promptgen
