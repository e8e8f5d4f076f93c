#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "objnav/autodiff/graph.hpp"

namespace objnav::retrieval {

using ad::Matrix;
using Embedding = Eigen::RowVectorXd;

// Immutable N x D matrix of unit rows with unique ids.
class EmbeddingIndex {
 public:
  EmbeddingIndex() = default;

  const Matrix& matrix() const { return rows_; }
  const std::vector<std::string>& ids() const { return ids_; }
  std::size_t size() const { return ids_.size(); }
  ad::Index dim() const { return rows_.cols(); }
  // Row of an id, or -1.
  ad::Index find(const std::string& id) const;

 private:
  friend EmbeddingIndex build_index(const Matrix&, std::vector<std::string>);
  friend EmbeddingIndex adopt_index(Matrix, std::vector<std::string>, double);

  Matrix rows_;
  std::vector<std::string> ids_;
  std::map<std::string, ad::Index> lookup_;
};

// Copies and L2-normalizes every row. Rejects duplicate ids, count mismatch and zero rows.
EmbeddingIndex build_index(const Matrix& embeddings, std::vector<std::string> ids);

// Takes rows as-is after checking that every norm is within `tolerance` of 1.
// Used for embeddings loaded from disk so that a save/load cycle is bit-exact.
EmbeddingIndex adopt_index(Matrix rows, std::vector<std::string> ids, double tolerance = 1e-6);

// Sim = E_T E_I^T (M x N).
Matrix similarity(const EmbeddingIndex& texts, const EmbeddingIndex& images);

// Ids of the k rows with the largest dot product with `query`, descending;
// equal scores are ordered by ascending id.
std::vector<std::string> topk(const Embedding& query, const EmbeddingIndex& index, std::size_t k);

// Text-to-image: query is a text embedding, index holds images.
inline std::vector<std::string> topk_images(const Embedding& query, const EmbeddingIndex& images, std::size_t k) {
  return topk(query, images, k);
}

// Image-to-text: the same ranking on the transposed similarity.
inline std::vector<std::string> topk_texts(const Embedding& image, const EmbeddingIndex& texts, std::size_t k) {
  return topk(image, texts, k);
}

// --- embedding file ------------------------------------------------------------
// "LZE1", u32 N, u32 D, N*D float32 (row-major), N newline-terminated ids; little-endian.

void write_embeddings(std::ostream& out, const Matrix& rows, const std::vector<std::string>& ids);
void save_embeddings(const std::filesystem::path& path, const EmbeddingIndex& index);
// Raw contents; rows are widened from float32 without renormalization.
std::pair<Matrix, std::vector<std::string>> read_embeddings(std::istream& in, const std::string& source);
EmbeddingIndex load_embeddings(const std::filesystem::path& path);

}  // namespace objnav::retrieval
