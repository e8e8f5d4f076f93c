#include <doctest.h>

#include <cmath>
#include <cstring>
#include <sstream>

#include "objnav/autodiff/checkpoint.hpp"
#include "objnav/autodiff/gradcheck.hpp"
#include "objnav/autodiff/graph.hpp"
#include "objnav/common/rng.hpp"

using namespace objnav;
using ad::Graph;
using ad::Matrix;

namespace {

Matrix row(std::initializer_list<double> v) {
  Matrix m(1, static_cast<ad::Index>(v.size()));
  ad::Index i = 0;
  for (double x : v) m(0, i++) = x;
  return m;
}

Matrix random_matrix(ad::Index r, ad::Index c, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(r, c);
  for (ad::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

// Central difference of a scalar function of a row vector, used as an
// independent oracle for hand-written gradients.
template <class F>
Matrix numeric_gradient(F f, Matrix x, double h) {
  Matrix g(x.rows(), x.cols());
  for (ad::Index i = 0; i < x.size(); ++i) {
    const double keep = x.data()[i];
    x.data()[i] = keep + h;
    const double up = f(x);
    x.data()[i] = keep - h;
    const double down = f(x);
    x.data()[i] = keep;
    g.data()[i] = (up - down) / (2 * h);
  }
  return g;
}

}  // namespace

TEST_CASE("forward values") {
  Graph g;
  auto x = g.parameter("x", row({3}));
  CHECK((x * x).value()(0, 0) == 9.0);

  auto s = ad::softmax_rows(g.constant(row({0, 0, 0})));
  for (int i = 0; i < 3; ++i) CHECK(s.value()(0, i) == doctest::Approx(1.0 / 3).epsilon(1e-15));

  auto a = g.constant(Matrix::Ones(2, 3));
  auto b = g.constant(Matrix::Ones(3, 4));
  auto m = ad::matmul(a, b);
  CHECK(m.rows() == 2);
  CHECK(m.cols() == 4);
  CHECK(m.value()(1, 3) == 3.0);
}

TEST_CASE("shape errors name the node") {
  Graph g;
  auto a = g.constant(Matrix::Ones(2, 3));
  auto b = g.constant(Matrix::Ones(2, 3));
  CHECK_THROWS_AS(ad::matmul(a, b), ad::ShapeError);
  CHECK_THROWS_AS(a + g.constant(Matrix::Ones(3, 3)), ad::ShapeError);
}

TEST_CASE("broadcast of a row over rows") {
  Graph g;
  auto a = g.constant(Matrix::Ones(3, 2));
  auto r = g.constant(row({1, 2}));
  auto c = a + r;
  CHECK(c.value()(2, 1) == 3.0);
}

TEST_CASE("derivative of x*x") {
  Graph g;
  auto x = g.parameter("x", row({3}));
  auto out = ad::sum(x * x);
  auto grad = ad::gradient(g, out);
  CHECK(grad.gradients.at("x")(0, 0) == 6.0);
  CHECK(grad.loss == 9.0);
}

TEST_CASE("L1 subgradient away from the kink") {
  Graph g;
  auto x = g.parameter("x", row({0.5, -2.0, 4.0}));
  auto c = g.constant(row({1.0, -3.0, 4.5}));
  auto grad = ad::gradient(g, ad::sum(ad::abs(x - c)));
  const Matrix& d = grad.gradients.at("x");
  CHECK(d(0, 0) == -1.0);
  CHECK(d(0, 1) == 1.0);
  CHECK(d(0, 2) == -1.0);
}

TEST_CASE("softmax cross-entropy gradient at uniform logits") {
  auto loss = [](const Matrix& logits) {
    Graph g;
    auto x = g.parameter("x", logits);
    return -(ad::sum(ad::gather_elements(ad::log_softmax_rows(x), {0})).scalar());
  };
  Graph g;
  auto x = g.parameter("x", row({0, 0, 0}));
  auto out = -1.0 * ad::sum(ad::gather_elements(ad::log_softmax_rows(x), {0}));
  const Matrix analytic = ad::gradient(g, out).gradients.at("x");
  const Matrix numeric = numeric_gradient(loss, row({0, 0, 0}), 1e-5);

  CHECK(analytic(0, 0) == doctest::Approx(-2.0 / 3).epsilon(1e-12));
  CHECK(analytic(0, 1) == doctest::Approx(1.0 / 3).epsilon(1e-12));
  CHECK(analytic(0, 2) == doctest::Approx(1.0 / 3).epsilon(1e-12));
  CHECK((analytic - numeric).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("gradients of every op match finite differences") {
  Graph g;
  auto a = g.parameter("a", random_matrix(3, 4, 1));
  auto b = g.parameter("b", random_matrix(4, 2, 2));
  auto r = g.parameter("r", random_matrix(1, 4, 3));
  auto m = ad::matmul(ad::layer_norm(a + r), b);
  auto n = ad::normalize_rows(ad::gelu(m));
  auto t = ad::tanh(ad::transpose(n)) * ad::sigmoid(ad::transpose(m));
  auto p = ad::softmax_cols(ad::concat_rows({t, ad::slice_cols(ad::reshape(a, 2, 6), 0, 3)}));
  auto q = ad::gather_rows(ad::softmax_rows(m), {2, 0, 0});
  auto w = ad::sum_cols(p) / (ad::sum_cols(ad::transpose(q)) + 3.0);
  auto out = ad::mean(ad::concat_cols({w, ad::sum_cols(ad::log_softmax_rows(ad::transpose(q)))})) + ad::sum(2.0 * (1.0 - ad::sum_rows(n)));
  auto report = ad::finite_difference_check(g, out, 1e-6, 1e-6);
  CHECK(report.passed);
  CHECK(report.worst < 1e-6);
  CHECK(report.per_parameter.size() == 3);
}

TEST_CASE("gradient check on a quadratic") {
  Graph g;
  auto x = g.parameter("x", random_matrix(4, 5, 7));
  auto out = ad::sum(x * x);
  auto report = ad::finite_difference_check(g, out, 1e-5, 1e-6);
  CHECK(report.passed);
  CHECK(report.worst < 1e-6);
  CHECK(report.per_parameter.at("x").checked == 20);
}

TEST_CASE("richardson extrapolation is more accurate than central differences") {
  Graph g;
  auto x = g.parameter("x", random_matrix(2, 3, 11));
  auto out = ad::sum(ad::tanh(3.0 * x) * ad::sigmoid(x));
  const auto central = ad::finite_difference_check(g, out, 1e-2, 1.0);
  const auto extrapolated = ad::finite_difference_check(g, out, 1e-2, 1.0, ad::Difference::kRichardson);
  CHECK(extrapolated.worst < central.worst / 100);
  CHECK(extrapolated.worst < 1e-7);
}

TEST_CASE("coordinates at a kink are skipped") {
  Graph g;
  auto x = g.parameter("x", row({1.0, 2.0, 3.0}));
  auto c = g.constant(row({1.0, 0.0, 3.0}));
  auto out = ad::sum(ad::max(x, c) + ad::abs(x - c));
  auto report = ad::finite_difference_check(g, out, 1e-5, 1e-6);
  const auto& check = report.per_parameter.at("x");
  CHECK(check.skipped_at_kink == 2);
  CHECK(check.checked == 1);
  CHECK(report.passed);
}

TEST_CASE("gradient check restores the graph") {
  Graph g;
  const Matrix x0 = random_matrix(2, 2, 5);
  auto x = g.parameter("x", x0);
  auto out = ad::sum(ad::tanh(x));
  const double before = out.scalar();
  (void)ad::finite_difference_check(g, out, 1e-4, 1e-6);
  CHECK(out.scalar() == before);
  CHECK(g.value(x.id) == x0);
}

TEST_CASE("replay after rebinding") {
  Graph g;
  auto x = g.input("x", row({1.0, 2.0}));
  auto w = g.parameter("w", row({3.0, 4.0}));
  auto out = ad::sum(x * w);
  CHECK(out.scalar() == 11.0);
  auto values = ad::evaluate(g, {{"x", row({2.0, 0.5})}});
  (void)values;
  CHECK(out.scalar() == 8.0);
  CHECK_THROWS_AS(g.bind("x", Matrix::Ones(2, 2)), ad::ShapeError);
}

TEST_CASE("non-finite values raise an overflow error") {
  Graph g;
  auto x = g.parameter("x", row({1.0, 0.0}));
  auto y = g.constant(row({0.0, 0.0}));
  CHECK_THROWS_AS(x / y, ad::OverflowError);
}

TEST_CASE("checkpoint round trip is exact") {
  ad::ParameterStore params;
  params["img.a"] = random_matrix(3, 5, 1);
  params["img.row"] = random_matrix(1, 7, 2);
  params["txt.b"] = random_matrix(4, 1, 3);
  params["img.a"](0, 0) = 1e-310;
  params["img.a"](0, 1) = -0.0;

  std::stringstream buffer;
  ad::write_checkpoint(buffer, params);
  const std::string bytes = buffer.str();
  CHECK(bytes.substr(0, 4) == "LZP1");
  auto loaded = ad::read_checkpoint(buffer);
  REQUIRE(loaded.size() == params.size());
  for (const auto& [name, value] : params) {
    REQUIRE(loaded.count(name) == 1);
    CHECK(loaded.at(name).rows() == value.rows());
    CHECK(loaded.at(name).cols() == value.cols());
    CHECK(std::memcmp(loaded.at(name).data(), value.data(), sizeof(double) * static_cast<std::size_t>(value.size())) == 0);
  }

  std::stringstream again;
  ad::write_checkpoint(again, loaded);
  CHECK(again.str() == bytes);
}

TEST_CASE("truncated checkpoint is rejected") {
  ad::ParameterStore params{{"w", random_matrix(2, 2, 9)}};
  std::stringstream buffer;
  ad::write_checkpoint(buffer, params);
  std::string bytes = buffer.str();
  bytes.resize(bytes.size() - 3);
  std::stringstream cut(bytes);
  CHECK_THROWS(ad::read_checkpoint(cut));
  std::stringstream bad("LZP2");
  CHECK_THROWS(ad::read_checkpoint(bad));
}
