#include "objnav/retrieval/index.hpp"

#include <algorithm>
#include <cmath>
#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>

#include "objnav/common/errors.hpp"

namespace objnav::retrieval {

static_assert(std::endian::native == std::endian::little, "embedding I/O assumes a little-endian host");

namespace {

std::map<std::string, ad::Index> make_lookup(const std::vector<std::string>& ids) {
  std::map<std::string, ad::Index> lookup;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i].find('\n') != std::string::npos) throw ContractError("id contains a newline: " + ids[i]);
    if (!lookup.emplace(ids[i], static_cast<ad::Index>(i)).second) throw ContractError("duplicate id: " + ids[i]);
  }
  return lookup;
}

}  // namespace

ad::Index EmbeddingIndex::find(const std::string& id) const {
  auto it = lookup_.find(id);
  return it == lookup_.end() ? -1 : it->second;
}

EmbeddingIndex build_index(const Matrix& embeddings, std::vector<std::string> ids) {
  if (static_cast<std::size_t>(embeddings.rows()) != ids.size()) {
    throw ContractError("build_index: " + std::to_string(embeddings.rows()) + " rows but " +
                        std::to_string(ids.size()) + " ids");
  }
  EmbeddingIndex index;
  index.lookup_ = make_lookup(ids);
  index.rows_ = embeddings;
  for (ad::Index r = 0; r < index.rows_.rows(); ++r) {
    const double norm = index.rows_.row(r).norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) throw ContractError("build_index: row '" + ids[static_cast<std::size_t>(r)] + "' cannot be normalized");
    index.rows_.row(r) /= norm;
  }
  index.ids_ = std::move(ids);
  return index;
}

EmbeddingIndex adopt_index(Matrix rows, std::vector<std::string> ids, double tolerance) {
  if (static_cast<std::size_t>(rows.rows()) != ids.size()) throw ContractError("adopt_index: row/id count mismatch");
  EmbeddingIndex index;
  index.lookup_ = make_lookup(ids);
  for (ad::Index r = 0; r < rows.rows(); ++r) {
    if (std::abs(rows.row(r).norm() - 1.0) > tolerance) {
      throw ContractError("adopt_index: row '" + ids[static_cast<std::size_t>(r)] + "' is not unit norm");
    }
  }
  index.rows_ = std::move(rows);
  index.ids_ = std::move(ids);
  return index;
}

Matrix similarity(const EmbeddingIndex& texts, const EmbeddingIndex& images) {
  if (texts.dim() != images.dim()) throw ContractError("similarity: dimension mismatch");
  return texts.matrix() * images.matrix().transpose();
}

std::vector<std::string> topk(const Embedding& query, const EmbeddingIndex& index, std::size_t k) {
  if (k < 1 || k > index.size()) {
    throw ContractError("topk: k = " + std::to_string(k) + " outside [1, " + std::to_string(index.size()) + "]");
  }
  if (query.size() != index.dim()) throw ContractError("topk: query dimension mismatch");
  const Eigen::VectorXd scores = index.matrix() * query.transpose();
  std::vector<std::size_t> order(index.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto& ids = index.ids();
  auto better = [&](std::size_t a, std::size_t b) {
    const double sa = scores(static_cast<ad::Index>(a));
    const double sb = scores(static_cast<ad::Index>(b));
    if (sa != sb) return sa > sb;
    return ids[a] < ids[b];
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), better);
  std::vector<std::string> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(ids[order[i]]);
  return out;
}

void write_embeddings(std::ostream& out, const Matrix& rows, const std::vector<std::string>& ids) {
  if (static_cast<std::size_t>(rows.rows()) != ids.size()) throw ContractError("write_embeddings: row/id count mismatch");
  out.write("LZE1", 4);
  const auto n = static_cast<std::uint32_t>(rows.rows());
  const auto d = static_cast<std::uint32_t>(rows.cols());
  out.write(reinterpret_cast<const char*>(&n), 4);
  out.write(reinterpret_cast<const char*>(&d), 4);
  for (ad::Index k = 0; k < rows.size(); ++k) {
    const auto f = static_cast<float>(rows.data()[k]);
    out.write(reinterpret_cast<const char*>(&f), 4);
  }
  for (const std::string& id : ids) {
    if (id.find('\n') != std::string::npos) throw ContractError("id contains a newline: " + id);
    out << id << '\n';
  }
  if (!out) throw ContractError("write_embeddings: write failed");
}

void save_embeddings(const std::filesystem::path& path, const EmbeddingIndex& index) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ContractError("cannot open " + path.string() + " for writing");
  write_embeddings(out, index.matrix(), index.ids());
}

std::pair<Matrix, std::vector<std::string>> read_embeddings(std::istream& in, const std::string& source) {
  char magic[4] = {};
  if (!in.read(magic, 4) || std::memcmp(magic, "LZE1", 4) != 0) throw ParseError(source, 0, "bad embedding file magic");
  std::uint32_t n = 0;
  std::uint32_t d = 0;
  if (!in.read(reinterpret_cast<char*>(&n), 4) || !in.read(reinterpret_cast<char*>(&d), 4)) {
    throw ParseError(source, 0, "truncated embedding header");
  }
  Matrix rows(n, d);
  std::vector<float> buf(static_cast<std::size_t>(n) * d);
  if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4))) {
    throw ParseError(source, 0, "truncated embedding values");
  }
  for (std::size_t k = 0; k < buf.size(); ++k) rows.data()[k] = static_cast<double>(buf[k]);
  std::vector<std::string> ids;
  ids.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string id;
    if (!std::getline(in, id)) throw ParseError(source, i + 1, "missing id line " + std::to_string(i + 1));
    ids.push_back(std::move(id));
  }
  return {std::move(rows), std::move(ids)};
}

EmbeddingIndex load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string(), 0, "cannot open embedding file");
  auto [rows, ids] = read_embeddings(in, path.string());
  try {
    return adopt_index(std::move(rows), std::move(ids));
  } catch (const ContractError& e) {
    throw ParseError(path.string(), 0, e.what());
  }
}

}  // namespace objnav::retrieval
