#include "objnav/encoder/encoder.hpp"

#include <cctype>
#include <cmath>
#include <functional>
#include <sstream>

#include "objnav/common/errors.hpp"
#include "objnav/common/rng.hpp"

namespace objnav::encoder {

using ad::Graph;
using ad::Index;
using ad::Matrix;
using ad::Var;

void EncoderConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ContractError("encoder config: " + msg); };
  if (num_slots < 1) fail("K must be >= 1");
  if (slot_iters < 1) fail("U must be >= 1");
  if (dim < 2 || slot_dim < 2) fail("D and D_s must be >= 2");
  if (patch_size < 1 || image_size % patch_size != 0) fail("image size must be a multiple of the patch size");
  if (heads < 1 || dim % heads != 0) fail("D must be divisible by the head count");
  if (depth < 0 || text_depth < 0 || mlp_hidden < 1) fail("bad transformer shape");
  if (text_vocab < 1 || text_max_tokens < 1) fail("bad text vocabulary");
  if (slot_mu.size() != 1 && slot_mu.size() != static_cast<std::size_t>(slot_dim)) fail("mu must have 1 or D_s entries");
  if (slot_sigma.size() != 1 && slot_sigma.size() != static_cast<std::size_t>(slot_dim)) {
    fail("sigma must have 1 or D_s entries");
  }
  for (double s : slot_sigma) {
    if (!(s > 0.0)) fail("sigma must be elementwise > 0");
  }
}

namespace {

using Leaf = std::function<Var(const std::string&)>;

Matrix gaussian(Rng& rng, Index rows, Index cols, double stddev) {
  Matrix m(rows, cols);
  for (Index k = 0; k < m.size(); ++k) m.data()[k] = stddev * rng.normal();
  return m;
}

struct Initializer {
  ad::ParameterStore& store;
  Rng& rng;

  void linear(const std::string& prefix, Index in, Index out, bool bias = true) {
    store[prefix + ".w"] = gaussian(rng, in, out, 1.0 / std::sqrt(static_cast<double>(in)));
    if (bias) store[prefix + ".b"] = Matrix::Zero(1, out);
  }

  void norm(const std::string& prefix, Index width) {
    store[prefix + ".g"] = Matrix::Ones(1, width);
    store[prefix + ".b"] = Matrix::Zero(1, width);
  }

  void transformer(const std::string& prefix, int depth, Index dim, Index hidden) {
    for (int l = 0; l < depth; ++l) {
      const std::string blk = prefix + ".blk" + std::to_string(l);
      norm(blk + ".ln1", dim);
      linear(blk + ".attn.q", dim, dim);
      linear(blk + ".attn.k", dim, dim);
      linear(blk + ".attn.v", dim, dim);
      linear(blk + ".attn.o", dim, dim);
      norm(blk + ".ln2", dim);
      linear(blk + ".mlp.l1", dim, hidden);
      linear(blk + ".mlp.l2", hidden, dim);
    }
    norm(prefix + ".ln_f", dim);
  }
};

Var linear(Graph&, Var x, const Leaf& leaf, const std::string& prefix, bool bias = true) {
  Var y = ad::matmul(x, leaf(prefix + ".w"));
  return bias ? y + leaf(prefix + ".b") : y;
}

Var norm_affine(Graph&, Var x, const Leaf& leaf, const std::string& prefix) {
  return ad::layer_norm(x) * leaf(prefix + ".g") + leaf(prefix + ".b");
}

Var self_attention(Graph& g, Var x, const Leaf& leaf, const std::string& prefix, int heads) {
  const Index dim = x.cols();
  const Index head_dim = dim / heads;
  Var q = linear(g, x, leaf, prefix + ".q");
  Var k = linear(g, x, leaf, prefix + ".k");
  Var v = linear(g, x, leaf, prefix + ".v");
  std::vector<Var> outs;
  for (int h = 0; h < heads; ++h) {
    Var qh = ad::slice_cols(q, h * head_dim, head_dim);
    Var kh = ad::slice_cols(k, h * head_dim, head_dim);
    Var vh = ad::slice_cols(v, h * head_dim, head_dim);
    Var scores = (1.0 / std::sqrt(static_cast<double>(head_dim))) * ad::matmul(qh, ad::transpose(kh));
    outs.push_back(ad::matmul(ad::softmax_rows(scores), vh));
  }
  return linear(g, ad::concat_cols(outs), leaf, prefix + ".o");
}

// Pre-norm transformer followed by a final layer norm.
Var transformer(Graph& g, Var x, const Leaf& leaf, const std::string& prefix, int depth, int heads) {
  for (int l = 0; l < depth; ++l) {
    const std::string blk = prefix + ".blk" + std::to_string(l);
    x = x + self_attention(g, norm_affine(g, x, leaf, blk + ".ln1"), leaf, blk + ".attn", heads);
    Var h = ad::gelu(linear(g, norm_affine(g, x, leaf, blk + ".ln2"), leaf, blk + ".mlp.l1"));
    x = x + linear(g, h, leaf, blk + ".mlp.l2");
  }
  return norm_affine(g, x, leaf, prefix + ".ln_f");
}

const Matrix& lookup(const ad::ParameterStore& params, const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw ContractError("missing parameter: " + name);
  return it->second;
}

Leaf trainable_leaf(Graph& g, const ad::ParameterStore& params) {
  return [&g, &params](const std::string& name) { return g.parameter(name, lookup(params, name)); };
}

Leaf frozen_leaf(Graph& g, const ad::ParameterStore& params) {
  return [&g, &params](const std::string& name) { return g.constant(lookup(params, name)); };
}

void require_shape(Var v, Index rows, Index cols, const char* what) {
  if (v.rows() != rows || v.cols() != cols) {
    std::ostringstream os;
    os << what << " has shape " << v.rows() << "x" << v.cols() << ", expected " << rows << "x" << cols;
    throw ContractError(os.str());
  }
}

}  // namespace

ad::ParameterStore init_parameters(const EncoderConfig& config, std::uint64_t seed) {
  config.validate();
  ad::ParameterStore store;
  Rng rng(seed);
  Initializer init{store, rng};
  const Index d = config.dim;
  const Index ds = config.slot_dim;
  const Index k = config.num_slots;

  init.linear("img.patch", config.patch_width(), d);
  store["img.pos"] = gaussian(rng, config.num_patches(), d, 0.1);
  init.transformer("img.vit", config.depth, d, config.mlp_hidden);

  init.linear("img.slot.q", ds, ds, false);
  init.linear("img.slot.k", d, ds, false);
  init.linear("img.slot.v", d, ds, false);
  for (const char* gate : {"z", "r", "n"}) {
    init.linear(std::string("img.slot.gru.w") + gate, ds, ds);
    init.linear(std::string("img.slot.gru.u") + gate, ds, ds);
  }
  init.norm("img.slot.ln", ds);
  init.linear("img.slot.mlp.l1", ds, ds);
  init.linear("img.slot.mlp.l2", ds, ds);

  init.linear("img.box.l1", ds, ds);
  init.linear("img.box.l2", ds, ds);
  init.linear("img.box.l3", ds, 4);

  init.linear("img.agg.slot", k * ds, d);
  init.linear("img.agg.l1", 2 * d, d);
  init.linear("img.agg.l2", d, d);

  store["txt.embed"] = gaussian(rng, config.text_vocab, d, 1.0);
  store["txt.pos"] = gaussian(rng, config.text_max_tokens, d, 0.1);
  init.transformer("txt.enc", config.text_depth, d, config.mlp_hidden);
  init.linear("txt.proj", d, d);
  return store;
}

bool is_trainable(const std::string& name) { return name.rfind("img.", 0) == 0; }

ad::ParameterStore trainable_subset(const ad::ParameterStore& params) {
  ad::ParameterStore out;
  for (const auto& [name, value] : params) {
    if (is_trainable(name)) out.emplace(name, value);
  }
  return out;
}

PatchFeatures encode_image(Graph& g, const Image& image, const ad::ParameterStore& params,
                           const EncoderConfig& config) {
  const Matrix patches = patchify(image, config.patch_size);
  const Matrix& pos = lookup(params, "img.pos");
  if (patches.rows() != pos.rows()) {
    throw ContractError("image yields " + std::to_string(patches.rows()) + " patches but the positional table has " +
                        std::to_string(pos.rows()));
  }
  const Leaf leaf = trainable_leaf(g, params);
  Var x = linear(g, g.constant(patches), leaf, "img.patch") + leaf("img.pos");
  Var tokens = transformer(g, x, leaf, "img.vit", config.depth, config.heads);
  Var pooled = (1.0 / static_cast<double>(tokens.rows())) * ad::sum_cols(tokens);
  return {tokens, pooled};
}

SlotState slot_attention_step(Graph& g, const SlotState& state, const PatchFeatures& feats,
                              const ad::ParameterStore& params, const EncoderConfig& config) {
  const Index ds = config.slot_dim;
  require_shape(state.slots, config.num_slots, ds, "slot state");
  require_shape(feats.tokens, feats.tokens.rows(), config.dim, "patch tokens");
  const Leaf leaf = trainable_leaf(g, params);

  Var keys = linear(g, feats.tokens, leaf, "img.slot.k", false);
  Var values = linear(g, feats.tokens, leaf, "img.slot.v", false);
  Var queries = linear(g, state.slots, leaf, "img.slot.q", false);

  Var logits = (1.0 / std::sqrt(static_cast<double>(ds))) * ad::matmul(keys, ad::transpose(queries));
  Var attention = ad::softmax_rows(logits);                  // N x K, softmax over slots
  Var weights = attention / ad::sum_cols(attention);         // each column sums to 1
  Var updates = ad::matmul(ad::transpose(weights), values);  // K x D_s

  // GRU cell, applied row-wise with shared parameters.
  Var h = state.slots;
  Var z = ad::sigmoid(linear(g, updates, leaf, "img.slot.gru.wz") + linear(g, h, leaf, "img.slot.gru.uz"));
  Var r = ad::sigmoid(linear(g, updates, leaf, "img.slot.gru.wr") + linear(g, h, leaf, "img.slot.gru.ur"));
  Var n = ad::tanh(linear(g, updates, leaf, "img.slot.gru.wn") + r * linear(g, h, leaf, "img.slot.gru.un"));
  Var gru = (1.0 - z) * n + z * h;

  Var mlp = linear(g, ad::gelu(linear(g, norm_affine(g, gru, leaf, "img.slot.ln"), leaf, "img.slot.mlp.l1")), leaf,
                   "img.slot.mlp.l2");
  return SlotState{state.slots + mlp, attention, weights, state.iteration + 1};
}

Matrix sample_initial_slots(const EncoderConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  Matrix slots(config.num_slots, config.slot_dim);
  for (Index i = 0; i < slots.rows(); ++i) {
    for (Index d = 0; d < slots.cols(); ++d) {
      slots(i, d) = config.mu(static_cast<int>(d)) + config.sigma(static_cast<int>(d)) * rng.normal();
    }
  }
  return slots;
}

SlotTrace run_slot_attention(Graph& g, const PatchFeatures& feats, const ad::ParameterStore& params,
                             const EncoderConfig& config, std::uint64_t seed) {
  return run_slot_attention(g, feats, params, config, sample_initial_slots(config, seed));
}

SlotTrace run_slot_attention(Graph& g, const PatchFeatures& feats, const ad::ParameterStore& params,
                             const EncoderConfig& config, const Matrix& initial_slots) {
  if (config.slot_iters < 1) throw ContractError("slot attention needs U >= 1");
  SlotTrace trace;
  SlotState state{g.constant(initial_slots), {}, {}, 0};
  for (int u = 0; u < config.slot_iters; ++u) {
    state = slot_attention_step(g, state, feats, params, config);
    trace.iterations.push_back(state);
  }
  trace.final = state;
  return trace;
}

Var boxes_from_center_size(Graph& g, Var center_size) {
  const Index k = center_size.rows();
  Var zeros = g.constant(Matrix::Zero(k, 1));
  Var ones = g.constant(Matrix::Ones(k, 1));
  auto clip = [&](Var v) { return ad::min(ad::max(v, zeros), ones); };
  Var cx = ad::slice_cols(center_size, 0, 1);
  Var cy = ad::slice_cols(center_size, 1, 1);
  Var half_w = 0.5 * ad::slice_cols(center_size, 2, 1);
  Var half_h = 0.5 * ad::slice_cols(center_size, 3, 1);
  return ad::concat_cols({clip(cx - half_w), clip(cy - half_h), clip(cx + half_w), clip(cy + half_h)});
}

Var predict_boxes(Graph& g, const SlotState& state, const ad::ParameterStore& params, const EncoderConfig& config) {
  require_shape(state.slots, config.num_slots, config.slot_dim, "slot state");
  const Leaf leaf = trainable_leaf(g, params);
  Var h = ad::gelu(linear(g, state.slots, leaf, "img.box.l1"));
  h = ad::gelu(linear(g, h, leaf, "img.box.l2"));
  return boxes_from_center_size(g, ad::sigmoid(linear(g, h, leaf, "img.box.l3")));
}

Var project_slots(Graph& g, Var slots, const ad::ParameterStore& params, const EncoderConfig& config) {
  require_shape(slots, config.num_slots, config.slot_dim, "slot state");
  const Leaf leaf = trainable_leaf(g, params);
  Var weight = leaf("img.agg.slot.w");
  Var bias = leaf("img.agg.slot.b");
  std::vector<Var> rows;
  for (Index i = 0; i < slots.rows(); ++i) {
    std::vector<Index> block;
    for (Index d = 0; d < config.slot_dim; ++d) block.push_back(i * config.slot_dim + d);
    rows.push_back(ad::matmul(ad::gather_rows(slots, {i}), ad::gather_rows(weight, std::move(block))) + bias);
  }
  return ad::concat_rows(rows);
}

Var aggregate_embedding(Graph& g, const PatchFeatures& feats, const SlotState& state,
                        const ad::ParameterStore& params, const EncoderConfig& config) {
  require_shape(state.slots, config.num_slots, config.slot_dim, "slot state");
  const Leaf leaf = trainable_leaf(g, params);
  Var flat = ad::reshape(state.slots, 1, static_cast<Index>(config.num_slots) * config.slot_dim);
  Var slot_part = linear(g, flat, leaf, "img.agg.slot");
  Var h = ad::gelu(linear(g, ad::concat_cols({feats.pooled, slot_part}), leaf, "img.agg.l1"));
  return ad::normalize_rows(linear(g, h, leaf, "img.agg.l2"));
}

std::vector<Index> tokenize(const std::string& text, const EncoderConfig& config) {
  std::vector<Index> ids;
  std::string word;
  auto flush = [&] {
    if (!word.empty() && static_cast<int>(ids.size()) < config.text_max_tokens) {
      ids.push_back(static_cast<Index>(fnv1a(word) % static_cast<std::uint64_t>(config.text_vocab)));
    }
    word.clear();
  };
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u)) {
      word.push_back(static_cast<char>(std::tolower(u)));
    } else {
      flush();
    }
  }
  flush();
  return ids;
}

Var encode_text(Graph& g, const std::string& text, const ad::ParameterStore& params, const EncoderConfig& config) {
  if (text.empty()) throw ContractError("encode_text: empty query");
  const std::vector<Index> ids = tokenize(text, config);
  if (ids.empty()) throw ContractError("encode_text: query has no tokens: '" + text + "'");
  const Leaf leaf = frozen_leaf(g, params);
  std::vector<Index> positions(ids.size());
  for (std::size_t p = 0; p < ids.size(); ++p) positions[p] = static_cast<Index>(p);
  Var x = ad::gather_rows(leaf("txt.embed"), ids) + ad::gather_rows(leaf("txt.pos"), positions);
  x = transformer(g, x, leaf, "txt.enc", config.text_depth, config.heads);
  Var pooled = (1.0 / static_cast<double>(ids.size())) * ad::sum_cols(x);
  return ad::normalize_rows(linear(g, pooled, leaf, "txt.proj"));
}

Embedding embed_text(const std::string& text, const ad::ParameterStore& params, const EncoderConfig& config) {
  Graph g;
  return encode_text(g, text, params, config).value().row(0);
}

ImageEncoding embed_image(const Image& image, const ad::ParameterStore& params, const EncoderConfig& config,
                          std::uint64_t slot_seed) {
  Graph g;
  const PatchFeatures feats = encode_image(g, image, params, config);
  const SlotTrace trace = run_slot_attention(g, feats, params, config, slot_seed);
  Var boxes = predict_boxes(g, trace.final, params, config);
  Var e = aggregate_embedding(g, feats, trace.final, params, config);
  return {feats.tokens.value(), trace.final.slots.value(), boxes.value(), e.value().row(0)};
}

}  // namespace objnav::encoder
