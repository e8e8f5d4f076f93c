#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "objnav/navsim/world.hpp"
#include "objnav/promptgen/prompt.hpp"
#include "objnav/retrieval/index.hpp"

namespace objnav::navsim {

struct MemoryEntry {
  std::string image_id;
  Pose pose;
  retrieval::Embedding embedding;  // unit norm
};

struct EpisodeQuery {
  std::string noun;                     // target object, also the prompt's leading noun
  std::optional<std::string> sentence;  // query sentence; absent for noun-only prompts
};

struct EpisodeOptions {
  std::size_t k = 3;
  FovOptions fov;
  promptgen::PromptTemplate prompt = promptgen::PromptTemplate::kNounThenSentence;
};

struct EpisodeResult {
  std::string query;                    // prompt text
  std::string target;                   // target noun
  std::vector<std::string> candidates;  // ranked memory ids
  std::vector<std::string> visited_ids;
  std::vector<Pose> visited;            // arrival pose at each visited candidate
  Pose stop;
  double distance = 0.0;                // meters from stop pose to the target object
  bool in_fov = false;
  std::size_t path_cells = 0;           // grid moves travelled
  bool failed = false;                  // no candidate was reachable
  std::vector<std::string> notes;
};

using QueryEncoder = std::function<retrieval::Embedding(const std::string&)>;

// Encodes the prompt, ranks the memory, and visits the top-k poses in rank
// order until the target noun is in view. The robot stops at the first such
// pose, otherwise at the last candidate it reached.
EpisodeResult execute_episode(const EpisodeQuery& query, const std::vector<MemoryEntry>& memory,
                              const GridWorld& world, const EpisodeOptions& options, const QueryEncoder& encode,
                              const Pose& start);

// Same, with the query embedding supplied directly.
EpisodeResult execute_episode(const EpisodeQuery& query, const retrieval::Embedding& query_embedding,
                              const std::vector<MemoryEntry>& memory, const GridWorld& world,
                              const EpisodeOptions& options, const Pose& start);

struct SuccessReport {
  double radius = 0.0;
  std::size_t episodes = 0;
  std::size_t successes = 0;
  double success_rate = 0.0;  // distance <= radius and object in view
  double fov_rate = 0.0;      // object in view, any distance
};

SuccessReport success_rate(const std::vector<EpisodeResult>& episodes, double radius);

// One JSON object per line.
std::string format_episode(const EpisodeResult& episode);
void write_episode_log(std::ostream& out, const std::vector<EpisodeResult>& episodes);

}  // namespace objnav::navsim
