#pragma once

#include <map>
#include <string>

#include "objnav/autodiff/graph.hpp"
#include "objnav/encoder/config.hpp"
#include "objnav/encoder/encoder.hpp"

namespace objnav::encoder {

// Memoizes frozen text-encoder outputs. Holds references: the store must
// outlive the cache and its "txt.*" entries must not change meanwhile.
class TextCache {
 public:
  TextCache(const ad::ParameterStore& params, const EncoderConfig& config) : params_(params), config_(config) {}

  const Embedding& operator()(const std::string& text) {
    auto it = cache_.find(text);
    if (it == cache_.end()) it = cache_.emplace(text, embed_text(text, params_, config_)).first;
    return it->second;
  }

  std::size_t size() const { return cache_.size(); }

 private:
  const ad::ParameterStore& params_;
  const EncoderConfig& config_;
  std::map<std::string, Embedding> cache_;
};

}  // namespace objnav::encoder
