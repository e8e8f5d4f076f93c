#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace objnav::ad {

// All graph arithmetic is float64; float32 appears only at file boundaries.
template <class Scalar>
using MatrixT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Matrix = MatrixT<double>;
using Index = Eigen::Index;

// Named trainable tensors. std::map keeps iteration order stable, which the
// checkpoint format and the gradient report rely on.
using ParameterStore = std::map<std::string, Matrix>;

class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

class OverflowError : public std::runtime_error {
 public:
  explicit OverflowError(const std::string& what) : std::runtime_error(what) {}
};

enum class Op : std::uint8_t {
  kInput,
  kParameter,
  kConstant,
  kMatMul,
  kTranspose,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kScale,
  kAddScalar,
  kConcatCols,
  kConcatRows,
  kSliceCols,
  kReshape,
  kGatherRows,
  kGatherElements,
  kSoftmaxRows,
  kSoftmaxCols,
  kLogSoftmaxRows,
  kLayerNorm,
  kNormalizeRows,
  kSigmoid,
  kTanh,
  kGelu,
  kMin,
  kMax,
  kAbs,
  kSum,
  kMean,
  kSumRows,
  kSumCols,
};

const char* op_name(Op op);

struct Node {
  Op op = Op::kConstant;
  std::vector<int> inputs;
  Matrix value;
  std::string name;                 // leaves only
  double scalar = 0.0;              // scale factor, additive constant, or epsilon
  Index arg0 = 0;                   // slice start / reshape rows
  Index arg1 = 0;                   // slice count / reshape cols
  std::vector<Index> indices;       // gather targets
  Matrix cache;                     // per-op forward cache (norms, inverse std)
  std::vector<std::uint8_t> branch; // min/max/abs: 1 where the first branch was taken
};

class Graph;

// Lightweight handle to a node. Free functions below build new nodes eagerly:
// each node's value is available as soon as it is created.
struct Var {
  Graph* graph = nullptr;
  int id = -1;

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  double scalar() const;
};

// A define-by-run tape. Nodes are appended in topological order; replay()
// re-evaluates every node after leaves have been rebound, so the same graph can
// be evaluated at perturbed parameters (used by the finite-difference checker).
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = default;
  Graph& operator=(const Graph&) = default;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  Var input(const std::string& name, Matrix value);
  // Registers (or reuses, when the name is already present) a trainable leaf.
  Var parameter(const std::string& name, const Matrix& value);
  Var constant(Matrix value);

  // Appends a computed node and evaluates it immediately.
  Var push(Node node);

  const Node& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  const Matrix& value(int id) const { return node(id).value; }
  std::size_t size() const { return nodes_.size(); }

  // Rebinds an input or parameter leaf. Shape must match the original binding.
  void bind(const std::string& name, const Matrix& value);
  void bind_parameter(const std::string& name, const Matrix& value);
  bool has_input(const std::string& name) const { return inputs_.count(name) != 0; }
  bool has_parameter(const std::string& name) const { return parameters_.count(name) != 0; }

  // Re-evaluates nodes [from, size()). Throws ShapeError / OverflowError naming the node.
  void replay(std::size_t from = 0);

  void mark_output(const std::string& name, Var v) { outputs_[name] = v.id; }
  const std::map<std::string, int>& outputs() const { return outputs_; }
  const std::map<std::string, int>& parameters() const { return parameters_; }
  const std::map<std::string, int>& inputs() const { return inputs_; }

  // Index of the first non-leaf node that consumes the given leaf (size() if none).
  std::size_t first_consumer(int leaf) const;

  // Concatenated min/max/abs branch choices; changes iff some kink was crossed.
  std::vector<std::uint8_t> branch_signature() const;

 private:
  void evaluate_node(std::size_t id);

  std::vector<Node> nodes_;
  std::map<std::string, int> inputs_;
  std::map<std::string, int> parameters_;
  std::map<std::string, int> outputs_;
};

// --- node constructors -------------------------------------------------------
// Elementwise binary ops accept b with the same shape as a, or b as a 1 x n row
// that is broadcast over the leading (row) dimension.

Var matmul(Var a, Var b);
Var transpose(Var a);
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);  // Hadamard
Var operator/(Var a, Var b);
Var operator*(double s, Var a);
Var operator+(Var a, double c);
Var operator-(double c, Var a);
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_cols(Var a, Index start, Index count);
Var reshape(Var a, Index rows, Index cols);
Var gather_rows(Var a, std::vector<Index> rows);
// Picks a(i, cols[i]) for every row i; result is rows x 1.
Var gather_elements(Var a, std::vector<Index> cols);
Var softmax_rows(Var a);  // each row sums to 1
Var softmax_cols(Var a);  // each column sums to 1
Var log_softmax_rows(Var a);
// Per-row normalization to zero mean and unit variance (no affine part).
Var layer_norm(Var a, double eps = 1e-9);
Var normalize_rows(Var a);  // unit L2 norm per row
Var sigmoid(Var a);
Var tanh(Var a);
Var gelu(Var a);
Var min(Var a, Var b);
Var max(Var a, Var b);
Var abs(Var a);
Var sum(Var a);
Var mean(Var a);
Var sum_rows(Var a);  // rows x 1
Var sum_cols(Var a);  // 1 x cols

// --- evaluation and differentiation -----------------------------------------

using Bindings = std::map<std::string, Matrix>;

// Rebinds the named inputs/parameters, replays the graph and returns every
// marked output.
std::map<std::string, Matrix> evaluate(Graph& graph, const Bindings& bindings);

struct GradientReport {
  std::map<std::string, Matrix> gradients;  // one per graph parameter
  double loss = 0.0;
};

// Reverse-mode gradient of a 1 x 1 node with respect to every parameter leaf.
GradientReport gradient(const Graph& graph, Var output);

}  // namespace objnav::ad
