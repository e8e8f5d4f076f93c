#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "objnav/autodiff/gradcheck.hpp"
#include "objnav/common/errors.hpp"
#include "objnav/common/rng.hpp"
#include "objnav/objectives/box.hpp"
#include "objnav/objectives/hungarian.hpp"
#include "objnav/objectives/losses.hpp"

using namespace objnav;
using namespace objnav::objectives;
using ad::Graph;
using ad::Matrix;
using B = Box<double>;

namespace {

Box<double> random_box(Rng& rng) {
  const double x1 = rng.uniform(0.0, 0.9);
  const double y1 = rng.uniform(0.0, 0.9);
  return {x1, y1, rng.uniform(x1 + 1e-3, 1.0), rng.uniform(y1 + 1e-3, 1.0)};
}

// Minimum over all injective maps of the smaller side into the larger one.
double brute_force(const Matrix& cost) {
  const bool flip = cost.rows() > cost.cols();
  const Matrix c = flip ? Matrix(cost.transpose()) : cost;
  std::vector<int> cols(static_cast<std::size_t>(c.cols()));
  std::iota(cols.begin(), cols.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (ad::Index i = 0; i < c.rows(); ++i) total += c(i, cols[static_cast<std::size_t>(i)]);
    best = std::min(best, total);
  } while (std::next_permutation(cols.begin(), cols.end()));
  return best;
}

Matrix one_hot_rows(std::initializer_list<int> hot, ad::Index width) {
  Matrix m = Matrix::Zero(static_cast<ad::Index>(hot.size()), width);
  ad::Index r = 0;
  for (int h : hot) m(r++, h) = 1.0;
  return m;
}

encoder::Image random_image(int size, std::uint64_t seed) {
  Rng rng(seed);
  encoder::Image img(size, size);
  for (double& v : img.planar) v = rng.uniform();
  return img;
}

std::vector<TrainingExample> toy_batch() {
  std::vector<TrainingExample> batch(2);
  batch[0] = {"a", random_image(16, 1), {{"sofa", {0.1, 0.1, 0.5, 0.6}}, {"lamp", {0.6, 0.2, 0.9, 0.5}}}};
  batch[1] = {"b", random_image(16, 2), {{"chair", {0.2, 0.3, 0.7, 0.9}}, {"sofa", {0.0, 0.0, 0.4, 0.3}}}};
  return batch;
}

}  // namespace

TEST_CASE("giou worked examples") {
  CHECK(giou(B{0, 0, 2, 2}, B{0, 0, 2, 2}) == 1.0);
  // inter 1, union 7, hull 9
  CHECK(std::abs(giou(B{0, 0, 2, 2}, B{1, 1, 3, 3}) - (1.0 / 7 - 2.0 / 9)) < 1e-12);
  // inter 0, union 2, hull 9
  CHECK(std::abs(giou(B{0, 0, 1, 1}, B{2, 2, 3, 3}) - (0.0 - 7.0 / 9)) < 1e-12);
  CHECK(giou(B{0, 0, 2, 2}, B{1, 1, 3, 3}) == doctest::Approx(-0.07937).epsilon(1e-4));
  CHECK(giou(B{0, 0, 1, 1}, B{2, 2, 3, 3}) == doctest::Approx(-0.77778).epsilon(1e-4));
}

TEST_CASE("giou properties on random pairs") {
  Rng rng(42);
  for (int t = 0; t < 2000; ++t) {
    const B a = random_box(rng);
    const B b = random_box(rng);
    const double g = giou(a, b);
    CHECK(g <= iou(a, b) + 1e-15);
    CHECK(g > -1.0);
    CHECK(g <= 1.0);
    CHECK(g == giou(b, a));
  }
  CHECK(giou(B{0.5, 0.5, 0.5, 0.5}, B{0.5, 0.5, 0.5, 0.5}) == 1.0);
}

TEST_CASE("giou of nested boxes never exceeds iou") {
  // hull equals union here, but the rounded union can land above the hull
  Rng rng(10000);
  for (int t = 0; t < 5000; ++t) {
    const B a = random_box(rng);
    const B b{a.x1, a.y1, rng.uniform(a.x1, a.x2), a.y2};
    CHECK(giou(a, b) <= iou(a, b));
    CHECK(giou(b, a) == giou(a, b));
  }
}

TEST_CASE("l1 box distance") {
  CHECK(l1_box(B{0, 0, 2, 2}, B{0, 0, 2, 2}) == 0.0);
  CHECK(l1_box(B{0, 0, 2, 2}, B{1, 1, 3, 3}) == 4.0);
  Rng rng(3);
  for (int t = 0; t < 100; ++t) {
    const B a = random_box(rng);
    const B b = random_box(rng);
    CHECK(l1_box(a, b) == l1_box(b, a));
  }
}

TEST_CASE("graph giou and l1 match the scalar versions") {
  Rng rng(5);
  Matrix p(50, 4), t(50, 4);
  for (int i = 0; i < 50; ++i) {
    const B a = random_box(rng);
    const B b = random_box(rng);
    p.row(i) << a.x1, a.y1, a.x2, a.y2;
    t.row(i) << b.x1, b.y1, b.x2, b.y2;
  }
  Graph g;
  const Matrix gi = giou_rows(g, g.constant(p), g.constant(t)).value();
  const Matrix l1 = l1_box_rows(g, g.constant(p), g.constant(t)).value();
  for (int i = 0; i < 50; ++i) {
    const B a{p(i, 0), p(i, 1), p(i, 2), p(i, 3)};
    const B b{t(i, 0), t(i, 1), t(i, 2), t(i, 3)};
    CHECK(std::abs(gi(i, 0) - giou(a, b)) < 1e-12);
    CHECK(std::abs(l1(i, 0) - l1_box(a, b)) < 1e-12);
  }
}

TEST_CASE("matching cost") {
  Matrix pred(2, 4);
  pred << 0, 0, 2, 2, 0.1, 0.2, 0.4, 0.9;
  const AnnotationSet anns{{"x", {0, 0, 2, 2}}, {"y", {1, 1, 3, 3}}};
  const Matrix c = pairwise_cost(pred, anns);
  CHECK(c(0, 0) == 0.0);
  CHECK(std::abs(c(0, 1) - (4.0 + 1.0 - (1.0 / 7 - 2.0 / 9))) < 1e-12);
  CHECK(c(0, 1) == doctest::Approx(5.07937).epsilon(1e-5));
  CHECK(c.minCoeff() >= 0.0);
  const Matrix literal = pairwise_cost(pred, anns, MatchingCost::kLiteralGiou);
  CHECK(std::abs(literal(0, 1) - (4.0 + (1.0 / 7 - 2.0 / 9))) < 1e-12);
  CHECK_THROWS_AS(pairwise_cost(Matrix(0, 4), anns), ContractError);
}

TEST_CASE("annotation validation") {
  CHECK_THROWS_AS(validate({}), ContractError);
  CHECK_THROWS_AS(validate({{"a", {0.5, 0.1, 0.2, 0.3}}}), ContractError);
  CHECK_THROWS_AS(validate({{"a", {0.0, 0.1, 1.2, 0.3}}}), ContractError);
  CHECK_NOTHROW(validate({{"a", {0.0, 0.1, 1.0, 0.3}}}));
}

TEST_CASE("hungarian examples") {
  Matrix diag(3, 3);
  diag << 0, 9, 9, 9, 0, 9, 9, 9, 0;
  auto a = hungarian(diag);
  CHECK(a.pairs == std::vector<std::pair<int, int>>{{0, 0}, {1, 1}, {2, 2}});
  CHECK(a.cost == 0.0);

  Matrix two(2, 2);
  two << 1, 2, 3, 0;
  auto b = hungarian(two);
  CHECK(b.pairs == std::vector<std::pair<int, int>>{{0, 0}, {1, 1}});
  CHECK(b.cost == 1.0);

  Matrix tall(3, 2);
  tall << 5, 1, 2, 4, 3, 3;
  auto c = hungarian(tall);
  CHECK(c.pairs == std::vector<std::pair<int, int>>{{0, 1}, {1, 0}});
  CHECK(c.unmatched == std::vector<int>{2});
  CHECK(c.cost == 3.0);

  Matrix wide(2, 4);
  wide << 4, 3, 1, 7, 2, 8, 1, 5;
  auto d = hungarian(wide);
  CHECK(d.pairs.size() == 2);
  CHECK(d.unmatched.empty());
  CHECK(d.cost == 3.0);

  auto ties = hungarian(Matrix::Zero(3, 3));
  CHECK(ties.pairs == std::vector<std::pair<int, int>>{{0, 0}, {1, 1}, {2, 2}});

  CHECK(hungarian(Matrix(0, 3)).pairs.empty());
  Matrix bad = Matrix::Zero(2, 2);
  bad(0, 1) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(hungarian(bad), ContractError);
}

TEST_CASE("hungarian agrees with enumeration") {
  Rng rng(9);
  for (int t = 0; t < 200; ++t) {
    const auto k = static_cast<ad::Index>(1 + rng.below(6));
    const auto n = static_cast<ad::Index>(1 + rng.below(6));
    Matrix cost(k, n);
    for (ad::Index i = 0; i < cost.size(); ++i) cost.data()[i] = static_cast<double>(rng.below(20));
    const auto a = hungarian(cost);
    CHECK(a.cost == brute_force(cost));
    CHECK(a.pairs.size() == static_cast<std::size_t>(std::min(k, n)));
    CHECK(a.pairs.size() + a.unmatched.size() == static_cast<std::size_t>(k));
    std::vector<int> used;
    for (const auto& [i, j] : a.pairs) used.push_back(j);
    std::sort(used.begin(), used.end());
    CHECK(std::adjacent_find(used.begin(), used.end()) == used.end());
  }
}

TEST_CASE("contrastive loss") {
  Graph g;
  const Matrix one = one_hot_rows({0}, 3);
  CHECK(contrastive_loss(g, g.constant(one), g.constant(one), 0.07).scalar() == doctest::Approx(0.0).epsilon(1e-15));

  const Matrix two = one_hot_rows({0, 1}, 2);
  const double expected = -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0));
  const double loss = contrastive_loss(g, g.constant(two), g.constant(two), 1.0).scalar();
  CHECK(std::abs(loss - expected) < 1e-12);
  CHECK(loss == doctest::Approx(0.31326).epsilon(1e-5));

  Rng rng(4);
  Matrix img(4, 5), txt(4, 5);
  for (ad::Index i = 0; i < img.size(); ++i) {
    img.data()[i] = rng.normal();
    txt.data()[i] = rng.normal();
  }
  const std::vector<ad::Index> perm{3, 1, 0, 2};
  Matrix pi(4, 5), pt(4, 5);
  for (int i = 0; i < 4; ++i) {
    pi.row(i) = img.row(perm[static_cast<std::size_t>(i)]);
    pt.row(i) = txt.row(perm[static_cast<std::size_t>(i)]);
  }
  const double base = contrastive_loss(g, g.constant(img), g.constant(txt), 0.5).scalar();
  const double permuted = contrastive_loss(g, g.constant(pi), g.constant(pt), 0.5).scalar();
  CHECK(std::abs(base - permuted) < 1e-12);
  CHECK_THROWS_AS(contrastive_loss(g, g.constant(img), g.constant(one), 1.0), ContractError);
}

TEST_CASE("caption concatenation") {
  CHECK(concat_captions({"sofa"}, 3) == "sofa");
  CHECK(concat_captions({"a", "b", "c"}, 5) == concat_captions({"a", "b", "c"}, 5));
  CHECK_THROWS_AS(concat_captions({}, 0), ContractError);

  // Fisher-Yates over two items swaps them iff the first raw draw is even.
  std::uint64_t swap_seed = 0;
  while (std::mt19937_64(swap_seed)() % 2 != 0) ++swap_seed;
  std::uint64_t keep_seed = 0;
  while (std::mt19937_64(keep_seed)() % 2 != 1) ++keep_seed;
  CHECK(concat_captions({"sofa", "lamp"}, swap_seed) == "lamp. sofa");
  CHECK(concat_captions({"sofa", "lamp"}, keep_seed) == "sofa. lamp");
}

TEST_CASE("multi-label contrastive loss") {
  auto cfg = encoder::EncoderConfig::desk();
  cfg.dim = 2;
  cfg.slot_dim = 2;
  cfg.num_slots = 2;
  ad::ParameterStore params;
  params["img.agg.slot.w"] = Matrix::Zero(4, 2);
  params["img.agg.slot.w"].topRows(2) = Matrix::Identity(2, 2);
  params["img.agg.slot.w"].bottomRows(2) = Matrix::Identity(2, 2);
  params["img.agg.slot.b"] = Matrix::Zero(1, 2);

  Matrix slots(2, 2);
  slots << 1, 0, 0.3, 0.7;
  const Matrix texts = Matrix::Identity(2, 2);
  Assignment assign;
  assign.pairs = {{0, 0}};
  assign.unmatched = {1};

  Graph g;
  auto r = multilabel_contrastive_loss(g, {{g.constant(slots), assign, {0}}}, texts, params, cfg, 1.0);
  CHECK_FALSE(r.empty);
  CHECK(std::abs(r.loss.scalar() + std::log(std::exp(1.0) / (std::exp(1.0) + 1.0))) < 1e-12);

  Matrix zeroed = slots;
  zeroed.row(1).setZero();
  auto z = multilabel_contrastive_loss(g, {{g.constant(zeroed), assign, {0}}}, texts, params, cfg, 1.0);
  CHECK(z.loss.scalar() == r.loss.scalar());

  auto single = multilabel_contrastive_loss(g, {{g.constant(slots), assign, {0}}}, texts.topRows(1), params, cfg, 1.0);
  CHECK(single.loss.scalar() == doctest::Approx(0.0).epsilon(1e-15));

  auto none = multilabel_contrastive_loss(g, {{g.constant(slots), Assignment{}, {}}}, texts, params, cfg, 1.0);
  CHECK(none.empty);
  CHECK(none.loss.scalar() == 0.0);
}

TEST_CASE("total loss composition") {
  const auto cfg = encoder::EncoderConfig::desk();
  const auto params = encoder::init_parameters(cfg, 1);
  encoder::TextCache texts(params, cfg);
  const auto batch = toy_batch();

  LossOptions opt;
  opt.seed = 17;
  const LossReport r = total_loss(batch, params, cfg, opt, texts);
  CHECK(std::abs(r.total - (r.contrastive + r.l1 + r.giou + r.multilabel)) < 1e-12);
  CHECK(r.contrastive > 0.0);
  CHECK(r.l1 > 0.0);
  CHECK(r.giou > 0.0);
  CHECK(r.multilabel > 0.0);
  CHECK_FALSE(r.multilabel_empty);

  LossOptions zero = opt;
  zero.weights = {0.0, 0.0, 0.0, 0.0, 0.07};
  CHECK(total_loss(batch, params, cfg, zero, texts).total == 0.0);

  LossOptions twice = opt;
  twice.weights.delta = 2.0;
  const LossReport d = total_loss(batch, params, cfg, twice, texts);
  CHECK(std::abs((d.total - r.total) - r.multilabel) < 1e-12);

  const LossReport again = total_loss(batch, params, cfg, opt, texts);
  CHECK(again.total == r.total);

  auto graph = build_total_loss(batch, params, cfg, opt, texts);
  CHECK(graph->assignments.size() == 2);
  for (const auto& a : graph->assignments) {
    CHECK(a.pairs.size() == 2);
    CHECK(a.unmatched.size() == static_cast<std::size_t>(cfg.num_slots - 2));
  }
}

TEST_CASE("total loss gradient on a two-slot toy instance") {
  auto cfg = encoder::EncoderConfig::desk();
  cfg.dim = 8;
  cfg.slot_dim = 8;
  cfg.num_slots = 2;
  cfg.mlp_hidden = 16;
  const auto params = encoder::init_parameters(cfg, 2);
  encoder::TextCache texts(params, cfg);
  auto batch = toy_batch();
  batch.resize(1);
  LossOptions opt;
  opt.seed = 3;
  auto lg = build_total_loss(batch, params, cfg, opt, texts);
  const auto report = ad::finite_difference_check(lg->graph, lg->total, 3e-4, 1e-4, ad::Difference::kRichardson);
  CHECK(report.passed);
  CHECK(report.worst < 1e-4);
  for (const auto& [name, check] : report.per_parameter) CHECK(name.rfind("img.", 0) == 0);
}
