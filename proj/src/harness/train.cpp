#include "objnav/harness/train.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <numeric>
#include <sstream>

#include "objnav/common/errors.hpp"
#include "objnav/common/rng.hpp"
#include "objnav/encoder/encoder.hpp"
#include "objnav/retrieval/index.hpp"

namespace objnav::harness {

std::vector<LabeledImage> load_training_set(const std::filesystem::path& dir) {
  std::vector<LabeledImage> out;
  for (promptgen::CaptionRecord& r : promptgen::load_dataset((dir / "dataset.jsonl").string())) {
    if (r.objects.empty()) continue;
    const auto image_path = dir / "images" / (r.image_id + ".ppm");
    encoder::Image image = encoder::read_ppm(image_path.string());
    if (image.width != r.width || image.height != r.height) {
      throw ParseError(image_path.string(), 0, "image size differs from its dataset record");
    }
    out.push_back({std::move(r), std::move(image)});
  }
  if (out.empty()) throw ParseError((dir / "dataset.jsonl").string(), 0, "no annotated images");
  return out;
}

objectives::TrainingExample to_example(const LabeledImage& item, int caption_index, std::uint64_t seed) {
  objectives::TrainingExample ex;
  ex.id = item.record.image_id;
  ex.image = item.image;
  Rng rng(seed);
  for (const promptgen::ObjectRecord& o : item.record.objects) {
    const std::size_t n = o.captions.size();
    const std::size_t pick = caption_index < 0 ? static_cast<std::size_t>(rng.below(n))
                                               : std::min(static_cast<std::size_t>(caption_index), n - 1);
    ex.annotations.push_back({o.captions[pick], o.box});
  }
  return ex;
}

std::vector<std::size_t> batch_indices(std::size_t dataset_size, const TrainConfig& config, int step) {
  const auto bs = static_cast<std::size_t>(config.batch_size);
  const std::size_t per_epoch = std::max<std::size_t>(1, dataset_size / std::min(bs, dataset_size));
  const std::size_t epoch = static_cast<std::size_t>(step) / per_epoch;
  const std::size_t slot = static_cast<std::size_t>(step) % per_epoch;
  std::vector<std::size_t> order(dataset_size);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(derive_seed(config.seed, kOrderTag), epoch));
  rng.shuffle(order);
  const std::size_t take = std::min(bs, dataset_size);
  return {order.begin() + static_cast<std::ptrdiff_t>(slot * take),
          order.begin() + static_cast<std::ptrdiff_t>(slot * take + take)};
}

namespace {

objectives::LossOptions options_for(const TrainConfig& config, std::uint64_t seed) {
  objectives::LossOptions o;
  o.weights = config.weights;
  o.matching = config.matching;
  o.seed = seed;
  return o;
}

void check_finite(const objectives::LossReport& r) {
  const std::pair<const char*, double> parts[] = {
      {"contrastive", r.contrastive}, {"l1", r.l1}, {"giou", r.giou}, {"multilabel", r.multilabel}, {"total", r.total}};
  for (const auto& [name, value] : parts) {
    if (!std::isfinite(value)) throw TrainingError(std::string("non-finite loss component: ") + name);
  }
}

}  // namespace

objectives::LossReport train_step(ad::ParameterStore& params, const std::vector<objectives::TrainingExample>& batch,
                                  const TrainConfig& config, int step, encoder::TextCache& texts) {
  std::unique_ptr<objectives::LossGraph> lg;
  try {
    lg = objectives::build_total_loss(batch, params, config.encoder,
                                      options_for(config, derive_seed(derive_seed(config.seed, kStepTag), step)), texts);
  } catch (const ad::OverflowError& e) {
    throw TrainingError(std::string("non-finite value in the loss graph: ") + e.what());
  }
  check_finite(lg->report);
  const double lr = learning_rate(config, step);
  if (lr == 0.0) return lg->report;
  const ad::GradientReport grads = ad::gradient(lg->graph, lg->total);
  for (const auto& [name, grad] : grads.gradients) {
    if (!encoder::is_trainable(name)) continue;
    if (!grad.allFinite()) throw TrainingError("non-finite gradient for " + name);
    params.at(name) -= lr * grad;
  }
  return lg->report;
}

encoder::Embedding index_embedding(const encoder::Image& image, const ad::ParameterStore& params,
                                   const TrainConfig& config) {
  return encoder::embed_image(image, params, config.encoder, derive_seed(config.seed, kEvalTag)).embedding;
}

TrainingRun train(const std::vector<LabeledImage>& data, const TrainConfig& config, ad::ParameterStore params) {
  config.validate();
  if (data.empty()) throw ContractError("train: empty dataset");
  TrainingRun run;
  encoder::TextCache texts(params, config.encoder);
  for (int step = 0; step < config.total_steps; ++step) {
    std::vector<objectives::TrainingExample> batch;
    for (std::size_t i : batch_indices(data.size(), config, step)) {
      batch.push_back(to_example(data[i], config.caption_index, derive_seed(derive_seed(config.seed, kStepTag + 1), step)));
    }
    run.losses.push_back(train_step(params, batch, config, step, texts));
  }
  run.params = std::move(params);
  return run;
}

CaptionQueries caption_queries(const std::vector<LabeledImage>& data) {
  CaptionQueries q;
  for (const LabeledImage& item : data) {
    for (const promptgen::ObjectRecord& o : item.record.objects) {
      for (const std::string& c : o.captions) {
        auto [it, fresh] = q.truth.try_emplace(c);
        if (fresh) q.captions.push_back(c);
        it->second.insert(item.record.image_id);
      }
    }
  }
  return q;
}

retrieval::RecallReport training_set_recall(const std::vector<LabeledImage>& data, const ad::ParameterStore& params,
                                            const TrainConfig& config, const std::vector<std::size_t>& ks) {
  ad::Matrix rows(static_cast<ad::Index>(data.size()), config.encoder.dim);
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < data.size(); ++i) {
    rows.row(static_cast<ad::Index>(i)) = index_embedding(data[i].image, params, config);
    ids.push_back(data[i].record.image_id);
  }
  const retrieval::EmbeddingIndex index = retrieval::build_index(rows, ids);
  const CaptionQueries q = caption_queries(data);
  const std::size_t k_max = std::min(*std::max_element(ks.begin(), ks.end()), data.size());
  retrieval::RankedResults results;
  for (const std::string& c : q.captions) {
    results.emplace_back(c, retrieval::topk_images(encoder::embed_text(c, params, config.encoder), index, k_max));
  }
  return retrieval::average_recall(results, q.truth, ks);
}

objectives::LossReport evaluate_loss(const std::vector<LabeledImage>& data, const ad::ParameterStore& params,
                                     const TrainConfig& config, std::uint64_t seed) {
  std::vector<objectives::TrainingExample> batch;
  for (const LabeledImage& item : data) batch.push_back(to_example(item, config.caption_index < 0 ? 0 : config.caption_index, seed));
  encoder::TextCache texts(params, config.encoder);
  return objectives::total_loss(batch, params, config.encoder, options_for(config, seed), texts);
}

OverfitReport overfit_harness(const std::vector<LabeledImage>& data, const TrainConfig& config,
                              ad::ParameterStore params, double target_fraction) {
  config.validate();
  for (const LabeledImage& item : data) {
    if (item.record.objects.empty()) throw ContractError("overfit_harness: image " + item.record.image_id + " has no annotations");
  }
  OverfitReport report;
  encoder::TextCache texts(params, config.encoder);
  for (int step = 0; step < config.total_steps; ++step) {
    std::vector<objectives::TrainingExample> batch;
    for (std::size_t i : batch_indices(data.size(), config, step)) {
      batch.push_back(to_example(data[i], config.caption_index, derive_seed(derive_seed(config.seed, kStepTag + 1), step)));
    }
    const objectives::LossReport r = train_step(params, batch, config, step, texts);
    report.losses.push_back(r);
    report.steps = step + 1;
    if (step == 0) report.initial_loss = r.total;
    if (r.total <= target_fraction * report.initial_loss) {
      report.converged = true;
      break;
    }
  }
  report.final_loss = report.losses.empty() ? 0.0 : report.losses.back().total;
  report.recall_at_1 = training_set_recall(data, params, config, {1}).recall.at(1);
  report.params = std::move(params);
  return report;
}

std::string git_blob_sha1(const std::string& content) {
  const std::string header = "blob " + std::to_string(content.size()) + std::string(1, '\0');
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
  EVP_DigestUpdate(ctx, header.data(), header.size());
  EVP_DigestUpdate(ctx, content.data(), content.size());
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return hex.str();
}

std::string file_sha1(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string(), 0, "cannot open file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return git_blob_sha1(buf.str());
}

std::string format_loss_line(int step, const objectives::LossReport& r) {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["L_C"] = r.contrastive;
  j["L_L1"] = r.l1;
  j["L_GIoU"] = r.giou;
  j["L_MC"] = r.multilabel;
  j["total"] = r.total;
  return j.dump();
}

}  // namespace objnav::harness
