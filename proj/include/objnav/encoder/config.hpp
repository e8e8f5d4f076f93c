#pragma once

#include <cstdint>
#include <vector>

namespace objnav::encoder {

struct EncoderConfig {
  int image_size = 16;  // square input, pixels
  int patch_size = 8;
  int dim = 32;         // token / embedding width D
  int slot_dim = 32;    // D_s
  int num_slots = 4;    // K
  int slot_iters = 3;   // U
  int depth = 1;        // image transformer layers
  int heads = 2;
  int mlp_hidden = 64;

  // Slot initialization N(mu, diag(sigma)); a single entry is broadcast over D_s.
  std::vector<double> slot_mu{0.0};
  std::vector<double> slot_sigma{1.0};

  int text_vocab = 512;
  int text_max_tokens = 24;
  int text_depth = 1;

  std::uint64_t seed = 0;

  static EncoderConfig desk() { return {}; }

  // ViT-B/16 scale with K = 10 slots and U = 20 iterations.
  static EncoderConfig paper() {
    EncoderConfig c;
    c.image_size = 224;
    c.patch_size = 16;
    c.dim = 768;
    c.slot_dim = 768;
    c.num_slots = 10;
    c.slot_iters = 20;
    c.depth = 12;
    c.heads = 12;
    c.mlp_hidden = 3072;
    c.text_depth = 12;
    return c;
  }

  int tokens_per_side() const { return image_size / patch_size; }
  int num_patches() const { return tokens_per_side() * tokens_per_side(); }
  int patch_width() const { return 3 * patch_size * patch_size; }

  double mu(int d) const { return slot_mu.size() == 1 ? slot_mu[0] : slot_mu.at(static_cast<std::size_t>(d)); }
  double sigma(int d) const {
    return slot_sigma.size() == 1 ? slot_sigma[0] : slot_sigma.at(static_cast<std::size_t>(d));
  }

  // Throws ContractError when an invariant does not hold.
  void validate() const;
};

}  // namespace objnav::encoder
