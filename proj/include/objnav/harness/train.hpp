#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "objnav/autodiff/graph.hpp"
#include "objnav/encoder/text_cache.hpp"
#include "objnav/harness/config.hpp"
#include "objnav/objectives/losses.hpp"
#include "objnav/promptgen/dataset.hpp"
#include "objnav/retrieval/recall.hpp"

namespace objnav::harness {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Seed tags for the streams derived from the global seed.
inline constexpr std::uint64_t kInitTag = 0x1417;
inline constexpr std::uint64_t kOrderTag = 0x0d3e;
inline constexpr std::uint64_t kStepTag = 0x57e9;
inline constexpr std::uint64_t kEvalTag = 0xe7a1;

struct LabeledImage {
  promptgen::CaptionRecord record;
  encoder::Image image;
};

// Reads <dir>/dataset.jsonl and <dir>/images/<image_id>.ppm.
std::vector<LabeledImage> load_training_set(const std::filesystem::path& dir);

// One annotation per object; the caption is chosen by config.caption_index
// (clamped to the last caption), or drawn with `seed` when it is -1.
objectives::TrainingExample to_example(const LabeledImage& item, int caption_index, std::uint64_t seed);

// Indices of the batch used at `step`: the data is reshuffled every epoch.
std::vector<std::size_t> batch_indices(std::size_t dataset_size, const TrainConfig& config, int step);

// Loss, gradient and one gradient-descent update of the "img.*" parameters.
// Throws TrainingError naming the component when the loss is not finite.
objectives::LossReport train_step(ad::ParameterStore& params, const std::vector<objectives::TrainingExample>& batch,
                                  const TrainConfig& config, int step, encoder::TextCache& texts);

// Image embedding used for indexing and evaluation (fixed slot seed).
encoder::Embedding index_embedding(const encoder::Image& image, const ad::ParameterStore& params,
                                   const TrainConfig& config);

struct TrainingRun {
  ad::ParameterStore params;
  std::vector<objectives::LossReport> losses;  // one per step, before the update
};

TrainingRun train(const std::vector<LabeledImage>& data, const TrainConfig& config, ad::ParameterStore params);

// Per-caption text-to-image queries over a labeled set: query ids are the
// captions, ground truth is every image showing an object with that caption.
struct CaptionQueries {
  std::vector<std::string> captions;
  retrieval::GroundTruth truth;
};
CaptionQueries caption_queries(const std::vector<LabeledImage>& data);

retrieval::RecallReport training_set_recall(const std::vector<LabeledImage>& data, const ad::ParameterStore& params,
                                            const TrainConfig& config, const std::vector<std::size_t>& ks);

struct OverfitReport {
  std::vector<objectives::LossReport> losses;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  bool converged = false;  // loss reached target_fraction of its initial value
  int steps = 0;
  double recall_at_1 = 0.0;
  ad::ParameterStore params;
};

// Trains on the whole set until the total loss is at most target_fraction of
// its first value or config.total_steps is reached, then measures AR@1.
OverfitReport overfit_harness(const std::vector<LabeledImage>& data, const TrainConfig& config,
                              ad::ParameterStore params, double target_fraction = 0.1);

// Full-objective loss of the whole set under `params` (same seed for every call).
objectives::LossReport evaluate_loss(const std::vector<LabeledImage>& data, const ad::ParameterStore& params,
                                     const TrainConfig& config, std::uint64_t seed);

// Git blob hash: sha1("blob <size>\0" + content), lowercase hex.
std::string git_blob_sha1(const std::string& content);
std::string file_sha1(const std::filesystem::path& path);

std::string format_loss_line(int step, const objectives::LossReport& report);

}  // namespace objnav::harness
