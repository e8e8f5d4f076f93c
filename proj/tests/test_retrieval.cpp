#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "objnav/common/errors.hpp"
#include "objnav/common/rng.hpp"
#include "objnav/retrieval/index.hpp"
#include "objnav/retrieval/recall.hpp"

using namespace objnav;
using namespace objnav::retrieval;

namespace {

std::vector<std::string> ids(std::size_t n, const std::string& prefix = "id") {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

Matrix random_rows(ad::Index n, ad::Index d, Rng& rng) {
  Matrix m(n, d);
  for (ad::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

// Stable full sort by descending score, then ascending id.
std::vector<std::string> sorted_oracle(const Embedding& q, const EmbeddingIndex& index, std::size_t k) {
  std::vector<std::pair<double, std::string>> scored;
  for (std::size_t i = 0; i < index.size(); ++i) {
    scored.emplace_back(index.matrix().row(static_cast<ad::Index>(i)).dot(q), index.ids()[i]);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < std::min(k, scored.size()); ++i) out.push_back(scored[i].second);
  return out;
}

}  // namespace

TEST_CASE("building an index") {
  const EmbeddingIndex idx = build_index(Matrix::Identity(3, 3), ids(3));
  CHECK(idx.size() == 3);
  CHECK(idx.dim() == 3);
  CHECK(idx.find("id1") == 1);
  CHECK(idx.find("nope") == -1);

  Matrix raw(1, 2);
  raw << 3.0, 4.0;
  const EmbeddingIndex n = build_index(raw, {"x"});
  CHECK(std::abs(n.matrix().row(0).norm() - 1.0) < 1e-9);
  CHECK(n.matrix()(0, 0) == doctest::Approx(0.6));

  CHECK_THROWS_AS(build_index(Matrix::Identity(2, 2), {"a", "a"}), ContractError);
  CHECK_THROWS_AS(build_index(Matrix::Identity(2, 2), {"a"}), ContractError);
  CHECK_THROWS_AS(build_index(Matrix::Zero(1, 2), {"a"}), ContractError);
  CHECK_THROWS_AS(adopt_index(raw, {"x"}), ContractError);
}

TEST_CASE("top-k examples") {
  const EmbeddingIndex ortho = build_index(Matrix::Identity(4, 4), ids(4));
  CHECK(topk(Embedding(ortho.matrix().row(2)), ortho, 1) == std::vector<std::string>{"id2"});

  Matrix rows(3, 2);
  rows << 0.1, std::sqrt(1 - 0.01), 0.9, std::sqrt(1 - 0.81), 0.5, std::sqrt(1 - 0.25);
  const EmbeddingIndex idx = build_index(rows, ids(3));
  Embedding q(2);
  q << 1.0, 0.0;
  CHECK(topk(q, idx, 2) == std::vector<std::string>{"id1", "id2"});

  auto all = topk(q, idx, 3);
  std::sort(all.begin(), all.end());
  CHECK(all == ids(3));
  CHECK_THROWS_AS(topk(q, idx, 4), ContractError);
  CHECK_THROWS_AS(topk(q, idx, 0), ContractError);

  const EmbeddingIndex single = build_index(Matrix::Identity(1, 2), {"only"});
  CHECK(topk_texts(q, single, 1) == std::vector<std::string>{"only"});
  CHECK(topk_texts(Embedding(ortho.matrix().row(3)), ortho, 1) == std::vector<std::string>{"id3"});
}

TEST_CASE("equal scores rank by id") {
  Matrix rows = Matrix::Ones(3, 2);
  const EmbeddingIndex idx = build_index(rows, {"c", "a", "b"});
  Embedding q(2);
  q << 1.0, 1.0;
  CHECK(topk(q, idx, 3) == std::vector<std::string>{"a", "b", "c"});
}

TEST_CASE("top-k matches a full sort") {
  Rng rng(21);
  for (int t = 0; t < 50; ++t) {
    const auto n = static_cast<ad::Index>(1 + rng.below(30));
    const EmbeddingIndex idx = build_index(random_rows(n, 6, rng), ids(static_cast<std::size_t>(n)));
    const Embedding q = random_rows(1, 6, rng).row(0);
    const std::size_t k = 1 + rng.below(static_cast<std::uint64_t>(n));
    CHECK(topk(q, idx, k) == sorted_oracle(q, idx, k));
    CHECK(topk(q, idx, idx.size()) == sorted_oracle(q, idx, idx.size()));
  }
}

TEST_CASE("ranking is invariant under row permutation") {
  Rng rng(31);
  const Matrix rows = random_rows(9, 4, rng);
  std::vector<ad::Index> perm(9);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  Matrix shuffled(9, 4);
  std::vector<std::string> shuffled_ids;
  for (std::size_t i = 0; i < 9; ++i) {
    shuffled.row(static_cast<ad::Index>(i)) = rows.row(perm[i]);
    shuffled_ids.push_back("id" + std::to_string(perm[i]));
  }
  const EmbeddingIndex a = build_index(rows, ids(9));
  const EmbeddingIndex b = build_index(shuffled, shuffled_ids);
  for (int t = 0; t < 10; ++t) {
    const Embedding q = random_rows(1, 4, rng).row(0);
    CHECK(topk(q, a, 9) == topk(q, b, 9));
  }
}

TEST_CASE("image-to-text ranking is text-to-image on the transposed similarity") {
  Rng rng(5);
  const EmbeddingIndex texts = build_index(random_rows(5, 4, rng), ids(5, "t"));
  const EmbeddingIndex images = build_index(random_rows(7, 4, rng), ids(7, "i"));
  const Matrix sim = similarity(texts, images);
  CHECK(sim.rows() == 5);
  CHECK(sim.cols() == 7);
  for (std::size_t j = 0; j < images.size(); ++j) {
    const auto ranked = topk_texts(Embedding(images.matrix().row(static_cast<ad::Index>(j))), texts, 5);
    std::vector<std::pair<double, std::string>> col;
    for (ad::Index i = 0; i < 5; ++i) col.emplace_back(sim(i, static_cast<ad::Index>(j)), texts.ids()[static_cast<std::size_t>(i)]);
    std::sort(col.begin(), col.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t r = 0; r < 5; ++r) CHECK(ranked[r] == col[r].second);
  }
}

TEST_CASE("average recall") {
  const GroundTruth truth{{"q1", {"a"}}, {"q2", {"c"}}};
  const RankedResults results{{"q1", {"a", "b", "c", "d", "e"}}, {"q2", {"a", "b", "c", "d", "e"}}};
  const auto r = average_recall(results, truth, {1, 5});
  CHECK(r.recall.at(1) == 0.5);
  CHECK(r.recall.at(5) == 1.0);
  CHECK(r.hits.at(1) == std::vector<bool>{true, false});

  const auto all = average_recall({{"q1", {"a"}}, {"q2", {"c"}}}, truth, {1});
  CHECK(all.recall.at(1) == 1.0);

  const auto missing = average_recall({{"q3", {"a"}}}, truth, {1});
  CHECK(missing.recall.at(1) == 0.0);
  CHECK(missing.warnings.size() == 1);
  CHECK_THROWS_AS(average_recall({{"q1", {"a"}}}, truth, {2}), ContractError);
}

TEST_CASE("recall is monotone in k") {
  Rng rng(8);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 2 + rng.below(10);
    const EmbeddingIndex images = build_index(random_rows(static_cast<ad::Index>(n), 5, rng), ids(n, "i"));
    GroundTruth truth;
    RankedResults results;
    for (int q = 0; q < 6; ++q) {
      const std::string qid = "q" + std::to_string(q);
      truth[qid].insert("i" + std::to_string(rng.below(n)));
      results.emplace_back(qid, topk(random_rows(1, 5, rng).row(0), images, n));
    }
    std::vector<std::size_t> ks;
    for (std::size_t k = 1; k <= n; ++k) ks.push_back(k);
    const auto r = average_recall(results, truth, ks);
    double prev = 0.0;
    for (const auto& [k, v] : r.recall) {
      CHECK(v >= prev);
      prev = v;
    }
  }
}

TEST_CASE("ground truth transpose and file") {
  const GroundTruth truth{{"q1", {"a", "b"}}, {"q2", {"b"}}};
  const GroundTruth inv = transpose(truth);
  CHECK(inv.at("a") == std::set<std::string>{"q1"});
  CHECK(inv.at("b") == std::set<std::string>{"q1", "q2"});

  const auto path = std::filesystem::temp_directory_path() / "objnav_gt.tsv";
  {
    std::ofstream f(path);
    f << "q1\ta\nq1\tb\n\nq2\tb\n";
  }
  CHECK(read_ground_truth(path) == truth);
  {
    std::ofstream f(path);
    f << "q1\ta\nbroken line\n";
  }
  try {
    (void)read_ground_truth(path);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  std::filesystem::remove(path);
}

TEST_CASE("embedding file round trip") {
  Rng rng(2);
  Matrix rows = random_rows(4, 3, rng);
  for (ad::Index i = 0; i < 4; ++i) rows.row(i) = (rows.row(i).cast<float>().cast<double>()).normalized();
  std::stringstream buf;
  write_embeddings(buf, rows, ids(4));
  const std::string bytes = buf.str();
  CHECK(bytes.substr(0, 4) == "LZE1");
  CHECK(bytes.size() == 4 + 4 + 4 + 4 * 3 * 4 + 4 * 4);

  auto [back, names] = read_embeddings(buf, "mem");
  CHECK(names == ids(4));
  CHECK((back - rows).cwiseAbs().maxCoeff() < 1e-7);

  std::stringstream again;
  write_embeddings(again, back, names);
  CHECK(again.str() == bytes);

  const auto path = std::filesystem::temp_directory_path() / "objnav_rt.lze";
  save_embeddings(path, adopt_index(back, names));
  std::ifstream f(path, std::ios::binary);
  std::stringstream disk;
  disk << f.rdbuf();
  CHECK(disk.str() == bytes);
  const EmbeddingIndex loaded = load_embeddings(path);
  CHECK(loaded.matrix() == back);
  std::filesystem::remove(path);

  std::stringstream bad("LZE2");
  CHECK_THROWS(read_embeddings(bad, "bad"));
}
