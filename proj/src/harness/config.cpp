#include "objnav/harness/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "objnav/common/errors.hpp"

namespace objnav::harness {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty() || !std::isfinite(out)) throw ContractError(key + ": expected a number, got '" + v + "'");
  return out;
}

long long to_integer(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw ContractError(key + ": expected an integer, got '" + v + "'");
  return out;
}

int to_int(const std::string& key, const std::string& v) { return static_cast<int>(to_integer(key, v)); }

std::vector<double> to_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream in(v);
  for (std::string item; std::getline(in, item, ',');) out.push_back(to_double(key, trim(item)));
  if (out.empty()) throw ContractError(key + ": empty list");
  return out;
}

std::string join(const std::vector<double>& xs) {
  std::ostringstream out;
  out.precision(17);
  for (std::size_t i = 0; i < xs.size(); ++i) out << (i ? "," : "") << xs[i];
  return out.str();
}

std::string num(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

TrainConfig TrainConfig::paper() {
  TrainConfig c;
  c.batch_size = 32;
  c.warmup_steps = 1000;
  c.total_steps = 50000;
  c.encoder = encoder::EncoderConfig::paper();
  return c;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ContractError("lr must be positive");
  if (!(decay > 0.0)) throw ContractError("decay must be positive");
  if (batch_size < 1) throw ContractError("batch_size must be at least 1");
  if (total_steps < 0 || warmup_steps < 0 || warmup_steps > total_steps) {
    throw ContractError("need 0 <= warmup_steps <= total_steps");
  }
  if (weights.alpha < 0 || weights.beta < 0 || weights.gamma < 0 || weights.delta < 0) {
    throw ContractError("loss weights must be nonnegative");
  }
  if (!(weights.tau > 0.0)) throw ContractError("tau must be positive");
  if (caption_index < -1) throw ContractError("caption_index must be -1 or a caption position");
  encoder.validate();
}

void apply_setting(TrainConfig& c, const std::string& key, const std::string& v) {
  if (key == "preset") {
    if (v == "desk") {
      c = TrainConfig{};
    } else if (v == "paper") {
      c = TrainConfig::paper();
    } else {
      throw ContractError("preset: expected desk or paper");
    }
  } else if (key == "lr") {
    c.learning_rate = to_double(key, v);
  } else if (key == "decay") {
    c.decay = to_double(key, v);
  } else if (key == "batch_size") {
    c.batch_size = to_int(key, v);
  } else if (key == "warmup_steps") {
    c.warmup_steps = to_int(key, v);
  } else if (key == "total_steps") {
    c.total_steps = to_int(key, v);
  } else if (key == "seed") {
    c.seed = static_cast<std::uint64_t>(to_integer(key, v));
  } else if (key == "alpha") {
    c.weights.alpha = to_double(key, v);
  } else if (key == "beta") {
    c.weights.beta = to_double(key, v);
  } else if (key == "gamma") {
    c.weights.gamma = to_double(key, v);
  } else if (key == "delta") {
    c.weights.delta = to_double(key, v);
  } else if (key == "tau") {
    c.weights.tau = to_double(key, v);
  } else if (key == "matching") {
    if (v == "one-minus-giou") {
      c.matching = objectives::MatchingCost::kOneMinusGiou;
    } else if (v == "literal-giou") {
      c.matching = objectives::MatchingCost::kLiteralGiou;
    } else {
      throw ContractError("matching: expected one-minus-giou or literal-giou");
    }
  } else if (key == "caption_index") {
    c.caption_index = to_int(key, v);
  } else if (key == "image_size") {
    c.encoder.image_size = to_int(key, v);
  } else if (key == "patch_size") {
    c.encoder.patch_size = to_int(key, v);
  } else if (key == "dim") {
    c.encoder.dim = to_int(key, v);
  } else if (key == "slot_dim") {
    c.encoder.slot_dim = to_int(key, v);
  } else if (key == "num_slots") {
    c.encoder.num_slots = to_int(key, v);
  } else if (key == "slot_iters") {
    c.encoder.slot_iters = to_int(key, v);
  } else if (key == "depth") {
    c.encoder.depth = to_int(key, v);
  } else if (key == "heads") {
    c.encoder.heads = to_int(key, v);
  } else if (key == "mlp_hidden") {
    c.encoder.mlp_hidden = to_int(key, v);
  } else if (key == "slot_mu") {
    c.encoder.slot_mu = to_list(key, v);
  } else if (key == "slot_sigma") {
    c.encoder.slot_sigma = to_list(key, v);
  } else if (key == "text_vocab") {
    c.encoder.text_vocab = to_int(key, v);
  } else if (key == "text_max_tokens") {
    c.encoder.text_max_tokens = to_int(key, v);
  } else if (key == "text_depth") {
    c.encoder.text_depth = to_int(key, v);
  } else {
    throw ContractError("unknown config key '" + key + "'");
  }
}

void apply_config_file(TrainConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), 0, "cannot open config file");
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(path.string(), n, "expected key = value");
    try {
      apply_setting(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ContractError& e) {
      throw ParseError(path.string(), n, e.what());
    }
  }
}

std::map<std::string, std::string> describe(const TrainConfig& c) {
  const auto& e = c.encoder;
  return {
      {"lr", num(c.learning_rate)},
      {"decay", num(c.decay)},
      {"batch_size", std::to_string(c.batch_size)},
      {"warmup_steps", std::to_string(c.warmup_steps)},
      {"total_steps", std::to_string(c.total_steps)},
      {"seed", std::to_string(c.seed)},
      {"alpha", num(c.weights.alpha)},
      {"beta", num(c.weights.beta)},
      {"gamma", num(c.weights.gamma)},
      {"delta", num(c.weights.delta)},
      {"tau", num(c.weights.tau)},
      {"matching", c.matching == objectives::MatchingCost::kOneMinusGiou ? "one-minus-giou" : "literal-giou"},
      {"caption_index", std::to_string(c.caption_index)},
      {"image_size", std::to_string(e.image_size)},
      {"patch_size", std::to_string(e.patch_size)},
      {"dim", std::to_string(e.dim)},
      {"slot_dim", std::to_string(e.slot_dim)},
      {"num_slots", std::to_string(e.num_slots)},
      {"slot_iters", std::to_string(e.slot_iters)},
      {"depth", std::to_string(e.depth)},
      {"heads", std::to_string(e.heads)},
      {"mlp_hidden", std::to_string(e.mlp_hidden)},
      {"slot_mu", join(e.slot_mu)},
      {"slot_sigma", join(e.slot_sigma)},
      {"text_vocab", std::to_string(e.text_vocab)},
      {"text_max_tokens", std::to_string(e.text_max_tokens)},
      {"text_depth", std::to_string(e.text_depth)},
  };
}

double learning_rate(const TrainConfig& c, int step) {
  if (step < c.warmup_steps) return c.learning_rate * static_cast<double>(step + 1) / c.warmup_steps;
  const int span = std::max(1, c.total_steps - c.warmup_steps);
  return c.learning_rate * std::pow(c.decay, static_cast<double>(step - c.warmup_steps) / span);
}

}  // namespace objnav::harness
