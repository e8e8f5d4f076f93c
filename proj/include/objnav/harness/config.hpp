#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "objnav/encoder/config.hpp"
#include "objnav/objectives/losses.hpp"

namespace objnav::harness {

struct TrainConfig {
  double learning_rate = 1e-5;
  double decay = 1e-2;  // multiplier reached at the last step
  int batch_size = 4;
  int warmup_steps = 0;
  int total_steps = 100;
  std::uint64_t seed = 0;
  objectives::LossWeights weights;
  objectives::MatchingCost matching = objectives::MatchingCost::kOneMinusGiou;
  int caption_index = 0;  // caption used per object; -1 draws one per step
  encoder::EncoderConfig encoder;

  // Batch 32, 1000 warmup steps, 50k steps on the full-size encoder.
  static TrainConfig paper();

  void validate() const;
};

// "key = value" lines; '#' starts a comment. Throws ParseError on unknown keys or bad values.
void apply_config_file(TrainConfig& config, const std::filesystem::path& path);
void apply_setting(TrainConfig& config, const std::string& key, const std::string& value);

// Flat key -> value view, also the manifest's config snapshot.
std::map<std::string, std::string> describe(const TrainConfig& config);

// Linear warmup to the base rate, then exponential decay to base * decay at total_steps.
double learning_rate(const TrainConfig& config, int step);

}  // namespace objnav::harness
