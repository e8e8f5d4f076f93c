#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "objnav/common/errors.hpp"
#include "objnav/common/rng.hpp"
#include "objnav/encoder/encoder.hpp"
#include "objnav/harness/config.hpp"
#include "objnav/harness/train.hpp"

using namespace objnav;
using namespace objnav::harness;

namespace {

const std::string kOverfit = OBJNAV_SOURCE_DIR "/fixtures/overfit";

std::filesystem::path write_temp(const std::string& name, const std::string& text) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream(path) << text;
  return path;
}

std::vector<objectives::TrainingExample> fixture_batch(const std::vector<LabeledImage>& data, std::size_t n) {
  std::vector<objectives::TrainingExample> batch;
  for (std::size_t i = 0; i < n; ++i) batch.push_back(to_example(data[i], 0, 0));
  return batch;
}

objectives::LossOptions step_options(const TrainConfig& cfg, int step) {
  objectives::LossOptions o;
  o.weights = cfg.weights;
  o.matching = cfg.matching;
  o.seed = derive_seed(derive_seed(cfg.seed, kStepTag), static_cast<std::uint64_t>(step));
  return o;
}

}  // namespace

TEST_CASE("default and preset configuration") {
  const TrainConfig d;
  CHECK(d.learning_rate == 1e-5);
  CHECK(d.decay == 1e-2);
  CHECK(d.batch_size == 4);
  CHECK(d.weights.alpha == 1.0);
  CHECK(d.weights.beta == 1.0);
  CHECK(d.weights.gamma == 1.0);
  CHECK(d.weights.delta == 1.0);
  const TrainConfig p = TrainConfig::paper();
  CHECK(p.batch_size == 32);
  CHECK(p.warmup_steps == 1000);
  CHECK(p.total_steps == 50000);
  CHECK(p.encoder.num_slots == 10);
  CHECK(p.encoder.slot_iters == 20);
  CHECK_NOTHROW(p.validate());

  TrainConfig bad;
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(bad.validate(), ContractError);
  bad = TrainConfig{};
  bad.warmup_steps = 200;
  CHECK_THROWS_AS(bad.validate(), ContractError);
}

TEST_CASE("configuration file") {
  const auto path = write_temp("objnav_cfg.txt",
                               "# desk run\nlr = 0.05\nbatch_size = 8\n\ntotal_steps=20\ndelta = 0\n"
                               "matching = literal-giou\nnum_slots = 3\nslot_mu = 0.5\n");
  TrainConfig cfg;
  apply_config_file(cfg, path);
  CHECK(cfg.learning_rate == 0.05);
  CHECK(cfg.batch_size == 8);
  CHECK(cfg.total_steps == 20);
  CHECK(cfg.weights.delta == 0.0);
  CHECK(cfg.matching == objectives::MatchingCost::kLiteralGiou);
  CHECK(cfg.encoder.num_slots == 3);
  CHECK(cfg.encoder.mu(5) == 0.5);

  TrainConfig again;
  for (const auto& [k, v] : describe(cfg)) apply_setting(again, k, v);
  CHECK(describe(again) == describe(cfg));

  const auto broken = write_temp("objnav_cfg_bad.txt", "lr = 0.1\n\nwhat = 3\n");
  try {
    TrainConfig c;
    apply_config_file(c, broken);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  const auto nonnumeric = write_temp("objnav_cfg_nan.txt", "batch_size = many\n");
  TrainConfig c;
  CHECK_THROWS_AS(apply_config_file(c, nonnumeric), ParseError);
  std::filesystem::remove(path);
  std::filesystem::remove(broken);
  std::filesystem::remove(nonnumeric);
}

TEST_CASE("learning rate schedule") {
  TrainConfig cfg;
  cfg.learning_rate = 1.0;
  cfg.decay = 0.01;
  cfg.warmup_steps = 10;
  cfg.total_steps = 110;
  CHECK(learning_rate(cfg, 0) == doctest::Approx(0.1));
  CHECK(learning_rate(cfg, 9) == doctest::Approx(1.0));
  CHECK(learning_rate(cfg, 10) == doctest::Approx(1.0));
  CHECK(learning_rate(cfg, 60) == doctest::Approx(0.1));
  CHECK(learning_rate(cfg, 110) == doctest::Approx(0.01));
  for (int s = 10; s < 110; ++s) CHECK(learning_rate(cfg, s + 1) < learning_rate(cfg, s));
}

TEST_CASE("training set loading and batches") {
  const auto data = load_training_set(kOverfit);
  REQUIRE(data.size() == 8);
  for (const auto& item : data) {
    CHECK(item.image.height == 16);
    CHECK(item.record.objects.size() >= 2);
    CHECK(item.record.objects.size() <= 3);
  }
  const auto ex = to_example(data[0], 0, 0);
  CHECK(ex.annotations.size() == data[0].record.objects.size());
  CHECK(ex.annotations[0].caption == data[0].record.objects[0].captions[0]);

  TrainConfig cfg;
  cfg.batch_size = 3;
  std::multiset<std::size_t> epoch;
  for (int step = 0; step < 8; ++step) {
    const auto idx = batch_indices(8, cfg, step);
    CHECK(idx.size() == 3);
    CHECK(idx == batch_indices(8, cfg, step));
    for (auto i : idx) CHECK(i < 8);
    if (step < 2) epoch.insert(idx.begin(), idx.end());
  }
  CHECK(std::set<std::size_t>(epoch.begin(), epoch.end()).size() == 6);
}

TEST_CASE("zero learning rate leaves every parameter bit-identical") {
  const auto data = load_training_set(kOverfit);
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  auto params = encoder::init_parameters(cfg.encoder, 1);
  const auto before = params;
  encoder::TextCache texts(params, cfg.encoder);
  (void)train_step(params, fixture_batch(data, 4), cfg, 0, texts);
  CHECK(params == before);
}

TEST_CASE("text parameters are frozen and image parameters move") {
  const auto data = load_training_set(kOverfit);
  TrainConfig cfg;
  cfg.learning_rate = 0.05;
  auto params = encoder::init_parameters(cfg.encoder, 2);
  const auto before = params;
  encoder::TextCache texts(params, cfg.encoder);
  for (int step = 0; step < 3; ++step) (void)train_step(params, fixture_batch(data, 4), cfg, step, texts);
  std::size_t moved = 0;
  for (const auto& [name, value] : params) {
    if (name.rfind("txt.", 0) == 0) {
      CHECK(value == before.at(name));
    } else if (value != before.at(name)) {
      ++moved;
    }
  }
  CHECK(moved > 0);
}

TEST_CASE("first step descends on a fixed batch") {
  const auto data = load_training_set(kOverfit);
  TrainConfig cfg;
  cfg.learning_rate = 1e-4;
  const auto batch = fixture_batch(data, 4);
  ad::ParameterStore params = encoder::init_parameters(cfg.encoder, 3);
  const ad::ParameterStore start = params;
  encoder::TextCache texts(params, cfg.encoder);
  const auto opts = step_options(cfg, 0);

  const double l0 = objectives::total_loss(batch, start, cfg.encoder, opts, texts).total;
  const auto before = train_step(params, batch, cfg, 0, texts);
  CHECK(before.total == l0);
  const double l1 = objectives::total_loss(batch, params, cfg.encoder, opts, texts).total;
  CHECK(l1 <= l0);

  // The update direction is a descent direction: central difference of the
  // loss along it is negative.
  const double h = 1e-3;
  auto along = [&](double t) {
    ad::ParameterStore p = start;
    for (auto& [name, value] : p) value += t * (params.at(name) - start.at(name)) / cfg.learning_rate;
    return objectives::total_loss(batch, p, cfg.encoder, opts, texts).total;
  };
  CHECK((along(h) - along(-h)) / (2 * h) < 0.0);
}

TEST_CASE("non-finite parameters abort the step") {
  const auto data = load_training_set(kOverfit);
  TrainConfig cfg;
  auto params = encoder::init_parameters(cfg.encoder, 4);
  params["img.patch.w"](0, 0) = std::nan("");
  encoder::TextCache texts(params, cfg.encoder);
  CHECK_THROWS_AS(train_step(params, fixture_batch(data, 2), cfg, 0, texts), TrainingError);
}

TEST_CASE("training is deterministic and its first loss is the direct loss") {
  const auto data = load_training_set(kOverfit);
  TrainConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.total_steps = 4;
  cfg.seed = 5;
  const auto init = encoder::init_parameters(cfg.encoder, derive_seed(cfg.seed, kInitTag));
  const auto a = train(data, cfg, init);
  const auto b = train(data, cfg, init);
  CHECK(a.params == b.params);
  REQUIRE(a.losses.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(a.losses[i].total == b.losses[i].total);

  std::vector<objectives::TrainingExample> batch;
  for (std::size_t i : batch_indices(data.size(), cfg, 0)) {
    batch.push_back(to_example(data[i], cfg.caption_index, derive_seed(derive_seed(cfg.seed, kStepTag + 1), 0)));
  }
  encoder::TextCache texts(init, cfg.encoder);
  CHECK(objectives::total_loss(batch, init, cfg.encoder, step_options(cfg, 0), texts).total == a.losses[0].total);
}

TEST_CASE("overfit report on a short budget") {
  const auto data = load_training_set(kOverfit);
  TrainConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.batch_size = 8;
  cfg.total_steps = 5;
  const auto report = overfit_harness(data, cfg, encoder::init_parameters(cfg.encoder, 1));
  CHECK(report.steps == 5);
  CHECK(report.losses.size() == 5);
  CHECK(report.initial_loss == report.losses.front().total);
  CHECK_FALSE(report.converged);
  CHECK(report.recall_at_1 >= 0.0);
  CHECK(report.recall_at_1 <= 1.0);
}

TEST_CASE("caption queries cover every caption") {
  const auto data = load_training_set(kOverfit);
  const auto q = caption_queries(data);
  CHECK(q.captions.size() == 6);
  std::size_t objects = 0;
  for (const auto& item : data) objects += item.record.objects.size();
  std::size_t pairs = 0;
  for (const auto& [c, images] : q.truth) pairs += images.size();
  CHECK(pairs <= objects);
  CHECK(pairs >= q.captions.size());
}

TEST_CASE("content hashes") {
  CHECK(git_blob_sha1("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  CHECK(git_blob_sha1("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
  const auto path = write_temp("objnav_hash.txt", "hello\n");
  CHECK(file_sha1(path) == git_blob_sha1("hello\n"));
  std::filesystem::remove(path);
}

TEST_CASE("loss line") {
  objectives::LossReport r{0.5, 0.25, 0.125, 1.0, 1.875, false};
  CHECK(format_loss_line(3, r) == R"({"step":3,"L_C":0.5,"L_L1":0.25,"L_GIoU":0.125,"L_MC":1.0,"total":1.875})");
}
