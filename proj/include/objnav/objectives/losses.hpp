#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "objnav/autodiff/graph.hpp"
#include "objnav/encoder/encoder.hpp"
#include "objnav/encoder/text_cache.hpp"
#include "objnav/objectives/box.hpp"
#include "objnav/objectives/hungarian.hpp"

namespace objnav::objectives {

// One (caption, box) pair of an image.
struct Annotation {
  std::string caption;
  Box<double> box;
};

using AnnotationSet = std::vector<Annotation>;

// Throws ContractError unless the set is nonempty and every box is a valid corner box in [0, 1].
void validate(const AnnotationSet& annotations);

enum class MatchingCost {
  kOneMinusGiou,  // d = L1 + (1 - GIoU)
  kLiteralGiou,   // d = L1 + GIoU, as printed; rewards poor overlap
};

// K x N matrix of matching costs between predicted boxes (K x 4 corners) and annotations.
ad::Matrix pairwise_cost(const ad::Matrix& boxes, const AnnotationSet& annotations,
                         MatchingCost mode = MatchingCost::kOneMinusGiou);

struct LossWeights {
  double alpha = 1.0;  // contrastive
  double beta = 1.0;   // box L1
  double gamma = 1.0;  // box GIoU
  double delta = 1.0;  // multi-label contrastive
  double tau = 0.07;
};

struct LossReport {
  double contrastive = 0.0;
  double l1 = 0.0;
  double giou = 0.0;
  double multilabel = 0.0;
  double total = 0.0;
  bool multilabel_empty = false;
};

// Symmetric batch InfoNCE over B x B logits E_I E_T^T / tau with diagonal targets.
ad::Var contrastive_loss(ad::Graph& g, ad::Var image_embeddings, ad::Var text_embeddings, double tau);

// Captions joined with ". " after a seeded uniform permutation.
std::string concat_captions(std::vector<std::string> captions, std::uint64_t seed);

// Per-row L1 distance (M x 1) between M x 4 box tensors.
ad::Var l1_box_rows(ad::Graph& g, ad::Var pred, ad::Var target);
// Per-row GIoU (M x 1). Both inputs must have positive-area rows where the union could vanish.
ad::Var giou_rows(ad::Graph& g, ad::Var pred, ad::Var target);

// Matched slots of one image and the batch-text row of each annotation.
struct SlotMatches {
  ad::Var slots;                 // K x D_s
  Assignment assignment;
  std::vector<ad::Index> text_row;  // annotation j -> row of the batch text matrix
};

struct MultilabelResult {
  ad::Var loss;
  bool empty = false;  // no matched slot anywhere in the batch; loss is 0
};

// Each matched slot is projected to D, unit-normalized and classified against
// every annotation text of the batch (logits / tau); the loss is the mean
// cross-entropy with the assigned annotation as target.
MultilabelResult multilabel_contrastive_loss(ad::Graph& g, const std::vector<SlotMatches>& matches,
                                             const ad::Matrix& batch_texts, const ad::ParameterStore& params,
                                             const encoder::EncoderConfig& config, double tau);

struct TrainingExample {
  std::string id;
  encoder::Image image;
  AnnotationSet annotations;
};

struct LossOptions {
  LossWeights weights;
  MatchingCost matching = MatchingCost::kOneMinusGiou;
  std::uint64_t seed = 0;  // drives slot initialization and caption permutation for this step
};

// A fully built loss graph. Heap-allocated because Vars point into the graph.
struct LossGraph {
  ad::Graph graph;
  ad::Var total;
  ad::Var contrastive;
  ad::Var l1;
  ad::Var giou;
  ad::Var multilabel;
  LossReport report;
  std::vector<Assignment> assignments;
  std::vector<ad::Matrix> boxes;
};

std::unique_ptr<LossGraph> build_total_loss(const std::vector<TrainingExample>& batch,
                                            const ad::ParameterStore& params,
                                            const encoder::EncoderConfig& config, const LossOptions& options,
                                            encoder::TextCache& texts);

LossReport total_loss(const std::vector<TrainingExample>& batch, const ad::ParameterStore& params,
                      const encoder::EncoderConfig& config, const LossOptions& options, encoder::TextCache& texts);

}  // namespace objnav::objectives
