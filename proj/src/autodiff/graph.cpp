#include "objnav/autodiff/graph.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "objnav/common/errors.hpp"

namespace objnav::ad {

namespace {

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

[[noreturn]] void shape_fail(std::size_t id, Op op, const std::string& msg) {
  std::ostringstream os;
  os << "node " << id << " (" << op_name(op) << "): " << msg;
  throw ShapeError(os.str());
}

// Elementwise binary ops: b is either the same shape as a or a 1 x n row.
bool row_broadcast(std::size_t id, Op op, const Matrix& a, const Matrix& b) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return false;
  if (b.rows() == 1 && b.cols() == a.cols()) return true;
  shape_fail(id, op, "operand shapes " + shape_str(a) + " and " + shape_str(b) + " are incompatible");
}

Matrix expand(const Matrix& b, Index rows, bool bcast) {
  if (!bcast) return b;
  return b.replicate(rows, 1);
}

// Gradient flowing into a broadcast operand collapses over the leading dimension.
void accumulate(Matrix& dst, const Matrix& g, bool bcast) {
  if (bcast) {
    dst += g.colwise().sum();
  } else {
    dst += g;
  }
}

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_slope(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

Var make(Graph* g, Op op, std::vector<int> inputs) {
  Node n;
  n.op = op;
  n.inputs = std::move(inputs);
  return g->push(std::move(n));
}

Graph* same_graph(Var a, Var b) {
  if (a.graph == nullptr || a.graph != b.graph) throw ContractError("operands belong to different graphs");
  return a.graph;
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::kInput: return "input";
    case Op::kParameter: return "parameter";
    case Op::kConstant: return "constant";
    case Op::kMatMul: return "matmul";
    case Op::kTranspose: return "transpose";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kDiv: return "div";
    case Op::kScale: return "scale";
    case Op::kAddScalar: return "add_scalar";
    case Op::kConcatCols: return "concat_cols";
    case Op::kConcatRows: return "concat_rows";
    case Op::kSliceCols: return "slice_cols";
    case Op::kReshape: return "reshape";
    case Op::kGatherRows: return "gather_rows";
    case Op::kGatherElements: return "gather_elements";
    case Op::kSoftmaxRows: return "softmax_rows";
    case Op::kSoftmaxCols: return "softmax_cols";
    case Op::kLogSoftmaxRows: return "log_softmax_rows";
    case Op::kLayerNorm: return "layer_norm";
    case Op::kNormalizeRows: return "normalize_rows";
    case Op::kSigmoid: return "sigmoid";
    case Op::kTanh: return "tanh";
    case Op::kGelu: return "gelu";
    case Op::kMin: return "min";
    case Op::kMax: return "max";
    case Op::kAbs: return "abs";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kSumRows: return "sum_rows";
    case Op::kSumCols: return "sum_cols";
  }
  return "unknown";
}

const Matrix& Var::value() const { return graph->value(id); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw ContractError("node " + std::to_string(id) + " is not a scalar");
  return v(0, 0);
}

Var Graph::input(const std::string& name, Matrix value) {
  if (inputs_.count(name) || parameters_.count(name)) throw ContractError("duplicate leaf name: " + name);
  Node n;
  n.op = Op::kInput;
  n.name = name;
  n.value = std::move(value);
  Var v = push(std::move(n));
  inputs_[name] = v.id;
  return v;
}

Var Graph::parameter(const std::string& name, const Matrix& value) {
  if (auto it = parameters_.find(name); it != parameters_.end()) return Var{this, it->second};
  if (inputs_.count(name)) throw ContractError("duplicate leaf name: " + name);
  Node n;
  n.op = Op::kParameter;
  n.name = name;
  n.value = value;
  Var v = push(std::move(n));
  parameters_[name] = v.id;
  return v;
}

Var Graph::constant(Matrix value) {
  Node n;
  n.op = Op::kConstant;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Graph::push(Node node) {
  for (int in : node.inputs) {
    if (in < 0 || static_cast<std::size_t>(in) >= nodes_.size()) throw ContractError("node input out of range");
  }
  nodes_.push_back(std::move(node));
  const std::size_t id = nodes_.size() - 1;
  try {
    evaluate_node(id);
  } catch (...) {
    nodes_.pop_back();
    throw;
  }
  return Var{this, static_cast<int>(id)};
}

void Graph::bind(const std::string& name, const Matrix& value) {
  int id = -1;
  if (auto it = inputs_.find(name); it != inputs_.end()) {
    id = it->second;
  } else if (auto pt = parameters_.find(name); pt != parameters_.end()) {
    id = pt->second;
  } else {
    throw ContractError("unknown leaf: " + name);
  }
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.value.rows() != value.rows() || n.value.cols() != value.cols()) {
    shape_fail(static_cast<std::size_t>(id), n.op,
               "binding for '" + name + "' has shape " + shape_str(value) + ", expected " + shape_str(n.value));
  }
  n.value = value;
}

void Graph::bind_parameter(const std::string& name, const Matrix& value) {
  if (!parameters_.count(name)) throw ContractError("unknown parameter: " + name);
  bind(name, value);
}

void Graph::replay(std::size_t from) {
  for (std::size_t id = from; id < nodes_.size(); ++id) evaluate_node(id);
}

std::size_t Graph::first_consumer(int leaf) const {
  for (std::size_t id = static_cast<std::size_t>(leaf) + 1; id < nodes_.size(); ++id) {
    for (int in : nodes_[id].inputs) {
      if (in == leaf) return id;
    }
  }
  return nodes_.size();
}

std::vector<std::uint8_t> Graph::branch_signature() const {
  std::vector<std::uint8_t> sig;
  for (const Node& n : nodes_) sig.insert(sig.end(), n.branch.begin(), n.branch.end());
  return sig;
}

void Graph::evaluate_node(std::size_t id) {
  Node& n = nodes_[id];
  auto in = [&](std::size_t k) -> const Matrix& { return nodes_[static_cast<std::size_t>(n.inputs[k])].value; };

  switch (n.op) {
    case Op::kInput:
    case Op::kParameter:
    case Op::kConstant:
      break;
    case Op::kMatMul: {
      const Matrix& a = in(0);
      const Matrix& b = in(1);
      if (a.cols() != b.rows()) shape_fail(id, n.op, "cannot multiply " + shape_str(a) + " by " + shape_str(b));
      n.value.noalias() = a * b;
      break;
    }
    case Op::kTranspose:
      n.value = in(0).transpose();
      break;
    case Op::kAdd:
    case Op::kSub:
    case Op::kMul:
    case Op::kDiv: {
      const Matrix& a = in(0);
      const Matrix& b = in(1);
      if (row_broadcast(id, n.op, a, b)) {
        const auto row = b.row(0).array();
        if (n.op == Op::kAdd) n.value = (a.array().rowwise() + row).matrix();
        if (n.op == Op::kSub) n.value = (a.array().rowwise() - row).matrix();
        if (n.op == Op::kMul) n.value = (a.array().rowwise() * row).matrix();
        if (n.op == Op::kDiv) n.value = (a.array().rowwise() / row).matrix();
      } else {
        if (n.op == Op::kAdd) n.value = a + b;
        if (n.op == Op::kSub) n.value = a - b;
        if (n.op == Op::kMul) n.value = a.cwiseProduct(b);
        if (n.op == Op::kDiv) n.value = a.cwiseQuotient(b);
      }
      break;
    }
    case Op::kScale:
      n.value = n.scalar * in(0);
      break;
    case Op::kAddScalar:
      n.value = in(0).array() + n.scalar;
      break;
    case Op::kConcatCols: {
      Index rows = in(0).rows();
      Index cols = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        if (in(k).rows() != rows) shape_fail(id, n.op, "row counts differ");
        cols += in(k).cols();
      }
      n.value.resize(rows, cols);
      Index c = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        n.value.middleCols(c, in(k).cols()) = in(k);
        c += in(k).cols();
      }
      break;
    }
    case Op::kConcatRows: {
      Index cols = in(0).cols();
      Index rows = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        if (in(k).cols() != cols) shape_fail(id, n.op, "column counts differ");
        rows += in(k).rows();
      }
      n.value.resize(rows, cols);
      Index r = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        n.value.middleRows(r, in(k).rows()) = in(k);
        r += in(k).rows();
      }
      break;
    }
    case Op::kSliceCols: {
      const Matrix& a = in(0);
      if (n.arg0 < 0 || n.arg1 < 0 || n.arg0 + n.arg1 > a.cols()) shape_fail(id, n.op, "slice out of range for " + shape_str(a));
      n.value = a.middleCols(n.arg0, n.arg1);
      break;
    }
    case Op::kReshape: {
      const Matrix& a = in(0);
      if (n.arg0 * n.arg1 != a.size()) shape_fail(id, n.op, "cannot reshape " + shape_str(a));
      n.value = Eigen::Map<const Matrix>(a.data(), n.arg0, n.arg1);
      break;
    }
    case Op::kGatherRows: {
      const Matrix& a = in(0);
      n.value.resize(static_cast<Index>(n.indices.size()), a.cols());
      for (std::size_t r = 0; r < n.indices.size(); ++r) {
        if (n.indices[r] < 0 || n.indices[r] >= a.rows()) shape_fail(id, n.op, "row index out of range");
        n.value.row(static_cast<Index>(r)) = a.row(n.indices[r]);
      }
      break;
    }
    case Op::kGatherElements: {
      const Matrix& a = in(0);
      if (static_cast<Index>(n.indices.size()) != a.rows()) shape_fail(id, n.op, "one index per row required");
      n.value.resize(a.rows(), 1);
      for (Index r = 0; r < a.rows(); ++r) {
        const Index c = n.indices[static_cast<std::size_t>(r)];
        if (c < 0 || c >= a.cols()) shape_fail(id, n.op, "column index out of range");
        n.value(r, 0) = a(r, c);
      }
      break;
    }
    case Op::kSoftmaxRows:
    case Op::kLogSoftmaxRows: {
      const Matrix& a = in(0);
      n.value.resize(a.rows(), a.cols());
      for (Index r = 0; r < a.rows(); ++r) {
        const double m = a.row(r).maxCoeff();
        const auto shifted = (a.row(r).array() - m).eval();
        const double z = shifted.exp().sum();
        if (n.op == Op::kSoftmaxRows) {
          n.value.row(r) = shifted.exp() / z;
        } else {
          n.value.row(r) = shifted - std::log(z);
        }
      }
      break;
    }
    case Op::kSoftmaxCols: {
      const Matrix& a = in(0);
      n.value.resize(a.rows(), a.cols());
      for (Index c = 0; c < a.cols(); ++c) {
        const double m = a.col(c).maxCoeff();
        const auto e = (a.col(c).array() - m).exp().eval();
        n.value.col(c) = e / e.sum();
      }
      break;
    }
    case Op::kLayerNorm: {
      const Matrix& a = in(0);
      const auto cols = static_cast<double>(a.cols());
      n.value.resize(a.rows(), a.cols());
      n.cache.resize(a.rows(), 1);
      for (Index r = 0; r < a.rows(); ++r) {
        const double mu = a.row(r).mean();
        const auto centered = (a.row(r).array() - mu).eval();
        const double var = centered.square().sum() / cols;
        const double inv_std = 1.0 / std::sqrt(var + n.scalar);
        n.cache(r, 0) = inv_std;
        n.value.row(r) = centered * inv_std;
      }
      break;
    }
    case Op::kNormalizeRows: {
      const Matrix& a = in(0);
      n.cache = a.rowwise().norm();
      n.value.resize(a.rows(), a.cols());
      for (Index r = 0; r < a.rows(); ++r) {
        if (n.cache(r, 0) == 0.0) throw OverflowError("node " + std::to_string(id) + " (normalize_rows): zero-norm row");
        n.value.row(r) = a.row(r) / n.cache(r, 0);
      }
      break;
    }
    case Op::kSigmoid:
      n.value = (1.0 / (1.0 + (-in(0).array()).exp())).matrix();
      break;
    case Op::kTanh:
      n.value = in(0).array().tanh().matrix();
      break;
    case Op::kGelu:
      n.value = in(0).unaryExpr([](double x) { return gelu_value(x); });
      break;
    case Op::kMin:
    case Op::kMax: {
      const Matrix& a = in(0);
      const Matrix& b = in(1);
      const bool bc = row_broadcast(id, n.op, a, b);
      const Matrix be = expand(b, a.rows(), bc);
      n.value.resize(a.rows(), a.cols());
      n.branch.resize(static_cast<std::size_t>(a.size()));
      for (Index k = 0; k < a.size(); ++k) {
        const double x = a.data()[k];
        const double y = be.data()[k];
        const bool first = n.op == Op::kMax ? x >= y : x <= y;
        n.branch[static_cast<std::size_t>(k)] = first ? 1 : 0;
        n.value.data()[k] = first ? x : y;
      }
      break;
    }
    case Op::kAbs: {
      const Matrix& a = in(0);
      n.value = a.cwiseAbs();
      n.branch.resize(static_cast<std::size_t>(a.size()));
      for (Index k = 0; k < a.size(); ++k) n.branch[static_cast<std::size_t>(k)] = a.data()[k] >= 0.0 ? 1 : 0;
      break;
    }
    case Op::kSum:
      n.value = Matrix::Constant(1, 1, in(0).sum());
      break;
    case Op::kMean:
      if (in(0).size() == 0) shape_fail(id, n.op, "mean of an empty tensor");
      n.value = Matrix::Constant(1, 1, in(0).mean());
      break;
    case Op::kSumRows:
      n.value = in(0).rowwise().sum();
      break;
    case Op::kSumCols:
      n.value = in(0).colwise().sum();
      break;
  }

  if (!n.value.allFinite()) {
    std::ostringstream os;
    os << "node " << id << " (" << op_name(n.op) << (n.name.empty() ? "" : " '" + n.name + "'")
       << "): non-finite value";
    throw OverflowError(os.str());
  }
}

// --- constructors ------------------------------------------------------------

Var matmul(Var a, Var b) { return make(same_graph(a, b), Op::kMatMul, {a.id, b.id}); }
Var transpose(Var a) { return make(a.graph, Op::kTranspose, {a.id}); }
Var operator+(Var a, Var b) { return make(same_graph(a, b), Op::kAdd, {a.id, b.id}); }
Var operator-(Var a, Var b) { return make(same_graph(a, b), Op::kSub, {a.id, b.id}); }
Var operator*(Var a, Var b) { return make(same_graph(a, b), Op::kMul, {a.id, b.id}); }
Var operator/(Var a, Var b) { return make(same_graph(a, b), Op::kDiv, {a.id, b.id}); }

Var operator*(double s, Var a) {
  Node n;
  n.op = Op::kScale;
  n.inputs = {a.id};
  n.scalar = s;
  return a.graph->push(std::move(n));
}

Var operator+(Var a, double c) {
  Node n;
  n.op = Op::kAddScalar;
  n.inputs = {a.id};
  n.scalar = c;
  return a.graph->push(std::move(n));
}

Var operator-(double c, Var a) { return (-1.0 * a) + c; }

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat of zero tensors");
  std::vector<int> ids;
  for (Var p : parts) {
    same_graph(parts.front(), p);
    ids.push_back(p.id);
  }
  return make(parts.front().graph, Op::kConcatCols, std::move(ids));
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat of zero tensors");
  std::vector<int> ids;
  for (Var p : parts) {
    same_graph(parts.front(), p);
    ids.push_back(p.id);
  }
  return make(parts.front().graph, Op::kConcatRows, std::move(ids));
}

Var slice_cols(Var a, Index start, Index count) {
  Node n;
  n.op = Op::kSliceCols;
  n.inputs = {a.id};
  n.arg0 = start;
  n.arg1 = count;
  return a.graph->push(std::move(n));
}

Var reshape(Var a, Index rows, Index cols) {
  Node n;
  n.op = Op::kReshape;
  n.inputs = {a.id};
  n.arg0 = rows;
  n.arg1 = cols;
  return a.graph->push(std::move(n));
}

Var gather_rows(Var a, std::vector<Index> rows) {
  Node n;
  n.op = Op::kGatherRows;
  n.inputs = {a.id};
  n.indices = std::move(rows);
  return a.graph->push(std::move(n));
}

Var gather_elements(Var a, std::vector<Index> cols) {
  Node n;
  n.op = Op::kGatherElements;
  n.inputs = {a.id};
  n.indices = std::move(cols);
  return a.graph->push(std::move(n));
}

Var softmax_rows(Var a) { return make(a.graph, Op::kSoftmaxRows, {a.id}); }
Var softmax_cols(Var a) { return make(a.graph, Op::kSoftmaxCols, {a.id}); }
Var log_softmax_rows(Var a) { return make(a.graph, Op::kLogSoftmaxRows, {a.id}); }

Var layer_norm(Var a, double eps) {
  Node n;
  n.op = Op::kLayerNorm;
  n.inputs = {a.id};
  n.scalar = eps;
  return a.graph->push(std::move(n));
}

Var normalize_rows(Var a) { return make(a.graph, Op::kNormalizeRows, {a.id}); }
Var sigmoid(Var a) { return make(a.graph, Op::kSigmoid, {a.id}); }
Var tanh(Var a) { return make(a.graph, Op::kTanh, {a.id}); }
Var gelu(Var a) { return make(a.graph, Op::kGelu, {a.id}); }
Var min(Var a, Var b) { return make(same_graph(a, b), Op::kMin, {a.id, b.id}); }
Var max(Var a, Var b) { return make(same_graph(a, b), Op::kMax, {a.id, b.id}); }
Var abs(Var a) { return make(a.graph, Op::kAbs, {a.id}); }
Var sum(Var a) { return make(a.graph, Op::kSum, {a.id}); }
Var mean(Var a) { return make(a.graph, Op::kMean, {a.id}); }
Var sum_rows(Var a) { return make(a.graph, Op::kSumRows, {a.id}); }
Var sum_cols(Var a) { return make(a.graph, Op::kSumCols, {a.id}); }

// --- evaluation ----------------------------------------------------------------

std::map<std::string, Matrix> evaluate(Graph& graph, const Bindings& bindings) {
  for (const auto& [name, value] : bindings) graph.bind(name, value);
  graph.replay();
  std::map<std::string, Matrix> out;
  for (const auto& [name, id] : graph.outputs()) out[name] = graph.value(id);
  return out;
}

GradientReport gradient(const Graph& graph, Var output) {
  const Matrix& out = graph.value(output.id);
  if (out.size() != 1) {
    throw ContractError("gradient requires a scalar output; node " + std::to_string(output.id) + " has shape " +
                        shape_str(out));
  }

  const auto count = static_cast<std::size_t>(output.id) + 1;
  std::vector<Matrix> grads(count);
  std::vector<bool> live(count, false);
  grads[count - 1] = Matrix::Ones(1, 1);
  live[count - 1] = true;

  auto seed = [&](int id) -> Matrix& {
    const auto k = static_cast<std::size_t>(id);
    if (!live[k]) {
      const Matrix& v = graph.value(id);
      grads[k] = Matrix::Zero(v.rows(), v.cols());
      live[k] = true;
    }
    return grads[k];
  };

  for (std::size_t id = count; id-- > 0;) {
    if (!live[id]) continue;
    const Node& n = graph.node(static_cast<int>(id));
    const Matrix g = grads[id];
    auto val = [&](std::size_t k) -> const Matrix& { return graph.value(n.inputs[k]); };

    switch (n.op) {
      case Op::kInput:
      case Op::kParameter:
      case Op::kConstant:
        break;
      case Op::kMatMul:
        seed(n.inputs[0]).noalias() += g * val(1).transpose();
        seed(n.inputs[1]).noalias() += val(0).transpose() * g;
        break;
      case Op::kTranspose:
        seed(n.inputs[0]) += g.transpose();
        break;
      case Op::kAdd:
      case Op::kSub: {
        const bool bc = val(0).rows() != val(1).rows() || val(0).cols() != val(1).cols();
        seed(n.inputs[0]) += g;
        accumulate(seed(n.inputs[1]), n.op == Op::kAdd ? g : Matrix(-g), bc);
        break;
      }
      case Op::kMul: {
        const bool bc = val(0).rows() != val(1).rows() || val(0).cols() != val(1).cols();
        const Matrix be = expand(val(1), val(0).rows(), bc);
        seed(n.inputs[0]) += g.cwiseProduct(be);
        accumulate(seed(n.inputs[1]), g.cwiseProduct(val(0)), bc);
        break;
      }
      case Op::kDiv: {
        const bool bc = val(0).rows() != val(1).rows() || val(0).cols() != val(1).cols();
        const Matrix be = expand(val(1), val(0).rows(), bc);
        seed(n.inputs[0]) += g.cwiseQuotient(be);
        const Matrix db = -(g.cwiseProduct(n.value)).cwiseQuotient(be);
        accumulate(seed(n.inputs[1]), db, bc);
        break;
      }
      case Op::kScale:
        seed(n.inputs[0]) += n.scalar * g;
        break;
      case Op::kAddScalar:
        seed(n.inputs[0]) += g;
        break;
      case Op::kConcatCols: {
        Index c = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          const Index w = val(k).cols();
          seed(n.inputs[k]) += g.middleCols(c, w);
          c += w;
        }
        break;
      }
      case Op::kConcatRows: {
        Index r = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          const Index h = val(k).rows();
          seed(n.inputs[k]) += g.middleRows(r, h);
          r += h;
        }
        break;
      }
      case Op::kSliceCols:
        seed(n.inputs[0]).middleCols(n.arg0, n.arg1) += g;
        break;
      case Op::kReshape: {
        Matrix& dst = seed(n.inputs[0]);
        dst += Eigen::Map<const Matrix>(g.data(), dst.rows(), dst.cols());
        break;
      }
      case Op::kGatherRows: {
        Matrix& dst = seed(n.inputs[0]);
        for (std::size_t r = 0; r < n.indices.size(); ++r) dst.row(n.indices[r]) += g.row(static_cast<Index>(r));
        break;
      }
      case Op::kGatherElements: {
        Matrix& dst = seed(n.inputs[0]);
        for (std::size_t r = 0; r < n.indices.size(); ++r) dst(static_cast<Index>(r), n.indices[r]) += g(static_cast<Index>(r), 0);
        break;
      }
      case Op::kSoftmaxRows: {
        const Matrix& y = n.value;
        const Eigen::VectorXd dots = g.cwiseProduct(y).rowwise().sum();
        seed(n.inputs[0]) += y.cwiseProduct(g - dots.replicate(1, g.cols()));
        break;
      }
      case Op::kSoftmaxCols: {
        const Matrix& y = n.value;
        const Eigen::RowVectorXd dots = g.cwiseProduct(y).colwise().sum();
        seed(n.inputs[0]) += y.cwiseProduct(g - dots.replicate(g.rows(), 1));
        break;
      }
      case Op::kLogSoftmaxRows: {
        const Matrix p = n.value.array().exp().matrix();
        const Eigen::VectorXd totals = g.rowwise().sum();
        seed(n.inputs[0]) += g - p.cwiseProduct(totals.replicate(1, g.cols()));
        break;
      }
      case Op::kLayerNorm: {
        const Matrix& xhat = n.value;
        const auto cols = static_cast<double>(g.cols());
        Matrix& dst = seed(n.inputs[0]);
        for (Index r = 0; r < g.rows(); ++r) {
          const double gsum = g.row(r).sum();
          const double gx = g.row(r).dot(xhat.row(r));
          dst.row(r).array() +=
              n.cache(r, 0) / cols * (cols * g.row(r).array() - gsum - xhat.row(r).array() * gx);
        }
        break;
      }
      case Op::kNormalizeRows: {
        const Matrix& y = n.value;
        Matrix& dst = seed(n.inputs[0]);
        for (Index r = 0; r < g.rows(); ++r) {
          const double gy = g.row(r).dot(y.row(r));
          dst.row(r) += (g.row(r) - gy * y.row(r)) / n.cache(r, 0);
        }
        break;
      }
      case Op::kSigmoid:
        seed(n.inputs[0]) += (g.array() * n.value.array() * (1.0 - n.value.array())).matrix();
        break;
      case Op::kTanh:
        seed(n.inputs[0]) += (g.array() * (1.0 - n.value.array().square())).matrix();
        break;
      case Op::kGelu:
        seed(n.inputs[0]) += g.cwiseProduct(val(0).unaryExpr([](double x) { return gelu_slope(x); }));
        break;
      case Op::kMin:
      case Op::kMax: {
        const bool bc = val(0).rows() != val(1).rows() || val(0).cols() != val(1).cols();
        Matrix ga = Matrix::Zero(g.rows(), g.cols());
        Matrix gb = Matrix::Zero(g.rows(), g.cols());
        for (Index k = 0; k < g.size(); ++k) {
          if (n.branch[static_cast<std::size_t>(k)]) {
            ga.data()[k] = g.data()[k];
          } else {
            gb.data()[k] = g.data()[k];
          }
        }
        seed(n.inputs[0]) += ga;
        accumulate(seed(n.inputs[1]), gb, bc);
        break;
      }
      case Op::kAbs: {
        Matrix& dst = seed(n.inputs[0]);
        for (Index k = 0; k < g.size(); ++k) dst.data()[k] += n.branch[static_cast<std::size_t>(k)] ? g.data()[k] : -g.data()[k];
        break;
      }
      case Op::kSum:
        seed(n.inputs[0]).array() += g(0, 0);
        break;
      case Op::kMean: {
        Matrix& dst = seed(n.inputs[0]);
        dst.array() += g(0, 0) / static_cast<double>(dst.size());
        break;
      }
      case Op::kSumRows: {
        Matrix& dst = seed(n.inputs[0]);
        dst += g.replicate(1, dst.cols());
        break;
      }
      case Op::kSumCols: {
        Matrix& dst = seed(n.inputs[0]);
        dst += g.replicate(dst.rows(), 1);
        break;
      }
    }
  }

  GradientReport report;
  report.loss = out(0, 0);
  if (!std::isfinite(report.loss)) throw OverflowError("gradient: loss is not finite");
  for (const auto& [name, id] : graph.parameters()) {
    const auto k = static_cast<std::size_t>(id);
    if (k < count && live[k]) {
      report.gradients[name] = grads[k];
    } else {
      const Matrix& v = graph.value(id);
      report.gradients[name] = Matrix::Zero(v.rows(), v.cols());
    }
  }
  return report;
}

}  // namespace objnav::ad
