#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "objnav/autodiff/graph.hpp"
#include "objnav/encoder/config.hpp"
#include "objnav/encoder/image.hpp"

namespace objnav::encoder {

using Embedding = Eigen::RowVectorXd;

// Fresh image-encoder ("img.*") and text-encoder ("txt.*") parameters.
ad::ParameterStore init_parameters(const EncoderConfig& config, std::uint64_t seed);

// Only image-encoder parameters are trained; the text encoder stays frozen.
bool is_trainable(const std::string& name);
ad::ParameterStore trainable_subset(const ad::ParameterStore& params);

struct PatchFeatures {
  ad::Var tokens;  // N x D, last transformer layer
  ad::Var pooled;  // 1 x D, mean over tokens
};

struct SlotState {
  ad::Var slots;      // K x D_s
  ad::Var attention;  // N x K, rows sum to 1
  ad::Var weights;    // N x K, columns sum to 1
  int iteration = 0;
};

struct SlotTrace {
  SlotState final;
  std::vector<SlotState> iterations;  // one entry per update, in order
};

PatchFeatures encode_image(ad::Graph& g, const Image& image, const ad::ParameterStore& params,
                           const EncoderConfig& config);

// One slot update:
//   A = softmax over slots of k(tokens) q(slots)^T / sqrt(D_s)
//   W = A with each column divided by its sum
//   S <- S + MLP(LN(GRU(W^T v(tokens), S)))
SlotState slot_attention_step(ad::Graph& g, const SlotState& state, const PatchFeatures& feats,
                              const ad::ParameterStore& params, const EncoderConfig& config);

// Draws K x D_s initial slots from N(mu, diag(sigma)).
ad::Matrix sample_initial_slots(const EncoderConfig& config, std::uint64_t seed);

SlotTrace run_slot_attention(ad::Graph& g, const PatchFeatures& feats, const ad::ParameterStore& params,
                             const EncoderConfig& config, std::uint64_t seed);
SlotTrace run_slot_attention(ad::Graph& g, const PatchFeatures& feats, const ad::ParameterStore& params,
                             const EncoderConfig& config, const ad::Matrix& initial_slots);

// K x 4 boxes in normalized corners (x1, y1, x2, y2).
ad::Var predict_boxes(ad::Graph& g, const SlotState& state, const ad::ParameterStore& params,
                      const EncoderConfig& config);

// Box decoding from sigmoid outputs (cx, cy, w, h): corners clipped to [0, 1].
ad::Var boxes_from_center_size(ad::Graph& g, ad::Var center_size);

// Per-slot projection to D through the aggregation linear map: slot i uses
// rows [i D_s, (i+1) D_s) of the K D_s x D weight, so the sum over slots of
// these projections equals linear(flatten(S)). Returns K x D (unnormalized).
ad::Var project_slots(ad::Graph& g, ad::Var slots, const ad::ParameterStore& params, const EncoderConfig& config);

// e = normalize(MLP(concat(pooled, linear(flatten(S))))), 1 x D.
ad::Var aggregate_embedding(ad::Graph& g, const PatchFeatures& feats, const SlotState& state,
                            const ad::ParameterStore& params, const EncoderConfig& config);

// Lower-cased alphanumeric words hashed into the vocabulary, truncated to
// text_max_tokens.
std::vector<ad::Index> tokenize(const std::string& text, const EncoderConfig& config);

// Frozen text tower: token lookup, transformer, mean-pool, projection, L2 norm. 1 x D.
ad::Var encode_text(ad::Graph& g, const std::string& text, const ad::ParameterStore& params,
                    const EncoderConfig& config);

// Value-level conveniences that build and discard a private graph.
Embedding embed_text(const std::string& text, const ad::ParameterStore& params, const EncoderConfig& config);

struct ImageEncoding {
  ad::Matrix tokens;
  ad::Matrix slots;
  ad::Matrix boxes;
  Embedding embedding;
};

ImageEncoding embed_image(const Image& image, const ad::ParameterStore& params, const EncoderConfig& config,
                          std::uint64_t slot_seed);

}  // namespace objnav::encoder
