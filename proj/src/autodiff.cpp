#include "compat_reason/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <utility>

namespace compat_reason::ad {

std::string to_string(Shape s) {
  std::ostringstream os;
  os << s.rows << "x" << s.cols;
  return os.str();
}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : shape_{rows, cols}, data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw ShapeError("tensor data size " + std::to_string(data_.size()) + " does not match " +
                     to_string(shape_));
  }
}

Tensor Tensor::column(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor(n, 1, std::move(v));
}

Tensor Tensor::row(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor(1, n, std::move(v));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

double Tensor::item() const {
  if (shape_.rows != 1 || shape_.cols != 1) {
    throw ShapeError("item() on non-scalar tensor " + to_string(shape_));
  }
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string_view to_string(Op op) {
  switch (op) {
    case Op::constant: return "constant";
    case Op::variable: return "variable";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::scale: return "scale";
    case Op::reciprocal: return "reciprocal";
    case Op::matmul: return "matmul";
    case Op::concat_cols: return "concat_cols";
    case Op::slice_cols: return "slice_cols";
    case Op::pad_cols: return "pad_cols";
    case Op::sum: return "sum";
    case Op::expand: return "expand";
    case Op::row_sum: return "row_sum";
    case Op::tile_cols: return "tile_cols";
    case Op::col_sum: return "col_sum";
    case Op::tile_rows: return "tile_rows";
    case Op::relu: return "relu";
    case Op::exp: return "exp";
    case Op::log: return "log";
    case Op::softmax_rows: return "softmax_rows";
    case Op::logsumexp_rows: return "logsumexp_rows";
    case Op::pick_cols: return "pick_cols";
    case Op::scatter_cols: return "scatter_cols";
    case Op::transpose: return "transpose";
  }
  return "unknown";
}

Shape Var::shape() const { return graph_->nodes_[id_].value.shape(); }
bool Var::requires_grad() const { return graph_->nodes_[id_].requires_grad; }
const Tensor& Var::value() const { return graph_->nodes_[id_].value; }

Var Graph::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.op = Op::constant;
  return record(std::move(n), {});
}

Var Graph::variable(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.op = Op::variable;
  n.requires_grad = true;
  if (!n.value.all_finite()) throw NonFiniteError("variable initialized with non-finite value");
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Graph::record(Node node, std::span<const Var> parents) {
  for (const Var& p : parents) {
    if (p.graph_ != this) throw GraphMismatchError("operand belongs to a different graph");
  }
  if (!node.value.all_finite()) {
    throw NonFiniteError("non-finite result in op '" + std::string(to_string(node.op)) + "'");
  }
  bool any_grad = false;
  for (const Var& p : parents) any_grad = any_grad || nodes_[p.id_].requires_grad;
  if (recording_ && any_grad) {
    node.requires_grad = true;
    node.parents.reserve(parents.size());
    for (const Var& p : parents) node.parents.push_back(p.id_);
  } else {
    node.op = Op::constant;
    node.requires_grad = false;
    node.parents.clear();
  }
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

namespace {

Graph& same_graph(Var a, Var b) {
  if (&a.graph() != &b.graph()) throw GraphMismatchError("operands belong to different graphs");
  return a.graph();
}

void require_same_shape(Var a, Var b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

template <class F>
Tensor zip(const Tensor& a, const Tensor& b, F f) {
  Tensor out(a.rows(), a.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

template <class F>
Tensor map(const Tensor& a, F f) {
  Tensor out(a.rows(), a.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a[i]);
  return out;
}

Node node_of(Op op, Tensor value) {
  Node n;
  n.op = op;
  n.value = std::move(value);
  return n;
}

// C = op(A) * op(B); the inner loops are ordered for row-major access.
Tensor matmul_values(const Tensor& a, const Tensor& b, bool ta, bool tb) {
  const std::size_t m = ta ? a.cols() : a.rows();
  const std::size_t k = ta ? a.rows() : a.cols();
  const std::size_t kb = tb ? b.cols() : b.rows();
  const std::size_t n = tb ? b.rows() : b.cols();
  if (k != kb) {
    throw ShapeError("matmul: inner dimensions differ (" + to_string(a.shape()) +
                     (ta ? "^T" : "") + " * " + to_string(b.shape()) + (tb ? "^T" : "") + ")");
  }
  Tensor c(m, n);
  const double* A = a.data().data();
  const double* B = b.data().data();
  double* C = c.data().data();
  if (!ta && !tb) {
    for (std::size_t i = 0; i < m; ++i) {
      double* crow = C + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = A[i * k + p];
        if (av == 0.0) continue;
        const double* brow = B + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else if (!ta && tb) {
    for (std::size_t i = 0; i < m; ++i) {
      const double* arow = A + i * k;
      for (std::size_t j = 0; j < n; ++j) {
        const double* brow = B + j * k;
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
        C[i * n + j] = s;
      }
    }
  } else if (ta && !tb) {
    for (std::size_t p = 0; p < k; ++p) {
      const double* arow = A + p * m;
      const double* brow = B + p * n;
      for (std::size_t i = 0; i < m; ++i) {
        const double av = arow[i];
        if (av == 0.0) continue;
        double* crow = C + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) s += A[p * m + i] * B[j * k + p];
        C[i * n + j] = s;
      }
    }
  }
  return c;
}

class RecordingGuard {
 public:
  RecordingGuard(bool& flag, bool value) : flag_(flag), saved_(flag) { flag_ = value; }
  ~RecordingGuard() { flag_ = saved_; }
  RecordingGuard(const RecordingGuard&) = delete;
  RecordingGuard& operator=(const RecordingGuard&) = delete;

 private:
  bool& flag_;
  bool saved_;
};

}  // namespace

// ---- forward ops -----------------------------------------------------------

Var add(Var a, Var b) {
  Graph& g = same_graph(a, b);
  require_same_shape(a, b, "add");
  return g.record(node_of(Op::add, zip(a.value(), b.value(), std::plus<>())), {a, b});
}

Var sub(Var a, Var b) {
  Graph& g = same_graph(a, b);
  require_same_shape(a, b, "sub");
  return g.record(node_of(Op::sub, zip(a.value(), b.value(), std::minus<>())), {a, b});
}

Var mul(Var a, Var b) {
  Graph& g = same_graph(a, b);
  require_same_shape(a, b, "mul");
  return g.record(node_of(Op::mul, zip(a.value(), b.value(), std::multiplies<>())), {a, b});
}

Var scale(Var a, double factor) {
  Node n = node_of(Op::scale, map(a.value(), [factor](double v) { return v * factor; }));
  n.factor = factor;
  return a.graph().record(std::move(n), {a});
}

Var reciprocal(Var a) {
  return a.graph().record(node_of(Op::reciprocal, map(a.value(), [](double v) { return 1.0 / v; })),
                          {a});
}

Var square(Var a) { return mul(a, a); }

Var matmul(Var a, Var b, bool trans_a, bool trans_b) {
  Graph& g = same_graph(a, b);
  Node n = node_of(Op::matmul, matmul_values(a.value(), b.value(), trans_a, trans_b));
  n.trans_a = trans_a;
  n.trans_b = trans_b;
  return g.record(std::move(n), {a, b});
}

Var matrix_product(Var a, Var b) { return matmul(a, b); }

Var matrix_vector_product(Var m, Var v) {
  if (v.shape().cols != 1) {
    throw ShapeError("matrix_vector_product: expected a column vector, got " +
                     to_string(v.shape()));
  }
  return matmul(m, v);
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  Graph& g = parts.front().graph();
  const std::size_t rows = parts.front().shape().rows;
  std::size_t total = 0;
  std::vector<std::size_t> offsets;
  for (const Var& p : parts) {
    if (&p.graph() != &g) throw GraphMismatchError("concat_cols: operands from different graphs");
    if (p.shape().rows != rows) throw ShapeError("concat_cols: row counts differ");
    offsets.push_back(total);
    total += p.shape().cols;
  }
  Tensor out(rows, total);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(v.data().data() + r * v.cols(), v.cols(), out.data().data() + r * total + offsets[k]);
    }
  }
  Node n = node_of(Op::concat_cols, std::move(out));
  n.offsets = std::move(offsets);
  return g.record(std::move(n), parts);
}

Var concat_cols(std::initializer_list<Var> parts) {
  return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  const Tensor& v = a.value();
  if (begin + count > v.cols() || count == 0) {
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") outside " + to_string(v.shape()));
  }
  Tensor out(v.rows(), count);
  for (std::size_t r = 0; r < v.rows(); ++r) {
    std::copy_n(v.data().data() + r * v.cols() + begin, count, out.data().data() + r * count);
  }
  Node n = node_of(Op::slice_cols, std::move(out));
  n.offset = begin;
  return a.graph().record(std::move(n), {a});
}

Var pad_cols(Var a, std::size_t offset, std::size_t width) {
  const Tensor& v = a.value();
  if (offset + v.cols() > width) throw ShapeError("pad_cols: segment exceeds target width");
  Tensor out(v.rows(), width);
  for (std::size_t r = 0; r < v.rows(); ++r) {
    std::copy_n(v.data().data() + r * v.cols(), v.cols(), out.data().data() + r * width + offset);
  }
  Node n = node_of(Op::pad_cols, std::move(out));
  n.offset = offset;
  n.width = width;
  return a.graph().record(std::move(n), {a});
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.graph().record(node_of(Op::sum, Tensor::scalar(s)), {a});
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.shape().size())); }

Var expand(Var scalar, Shape shape) {
  const double v = scalar.value().item();
  return scalar.graph().record(node_of(Op::expand, Tensor(shape.rows, shape.cols, v)), {scalar});
}

Var row_sum(Var a) {
  const Tensor& v = a.value();
  Tensor out(v.rows(), 1);
  for (std::size_t r = 0; r < v.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < v.cols(); ++c) s += v(r, c);
    out(r, 0) = s;
  }
  return a.graph().record(node_of(Op::row_sum, std::move(out)), {a});
}

Var tile_cols(Var a, std::size_t cols) {
  const Tensor& v = a.value();
  if (v.cols() != 1) throw ShapeError("tile_cols: expected a column, got " + to_string(v.shape()));
  Tensor out(v.rows(), cols);
  for (std::size_t r = 0; r < v.rows(); ++r) {
    for (std::size_t c = 0; c < cols; ++c) out(r, c) = v(r, 0);
  }
  return a.graph().record(node_of(Op::tile_cols, std::move(out)), {a});
}

Var col_sum(Var a) {
  const Tensor& v = a.value();
  Tensor out(1, v.cols());
  for (std::size_t r = 0; r < v.rows(); ++r) {
    for (std::size_t c = 0; c < v.cols(); ++c) out(0, c) += v(r, c);
  }
  return a.graph().record(node_of(Op::col_sum, std::move(out)), {a});
}

Var tile_rows(Var a, std::size_t rows) {
  const Tensor& v = a.value();
  if (v.rows() != 1) throw ShapeError("tile_rows: expected a row, got " + to_string(v.shape()));
  Tensor out(rows, v.cols());
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(v.data().data(), v.cols(), out.data().data() + r * v.cols());
  }
  return a.graph().record(node_of(Op::tile_rows, std::move(out)), {a});
}

Var add_row_bias(Var a, Var bias) {
  if (bias.shape().rows != 1 || bias.shape().cols != a.shape().cols) {
    throw ShapeError("add_row_bias: bias " + to_string(bias.shape()) + " does not fit " +
                     to_string(a.shape()));
  }
  return add(a, tile_rows(bias, a.shape().rows));
}

Var relu(Var a) {
  return a.graph().record(node_of(Op::relu, map(a.value(), [](double v) { return v > 0.0 ? v : 0.0; })),
                          {a});
}

Var exp(Var a) {
  return a.graph().record(node_of(Op::exp, map(a.value(), [](double v) { return std::exp(v); })), {a});
}

Var log(Var a) {
  return a.graph().record(node_of(Op::log, map(a.value(), [](double v) { return std::log(v); })), {a});
}

Var softmax_rows(Var a) {
  const Tensor& v = a.value();
  Tensor out(v.rows(), v.cols());
  for (std::size_t r = 0; r < v.rows(); ++r) {
    double m = v(r, 0);
    for (std::size_t c = 1; c < v.cols(); ++c) m = std::max(m, v(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < v.cols(); ++c) {
      out(r, c) = std::exp(v(r, c) - m);
      z += out(r, c);
    }
    for (std::size_t c = 0; c < v.cols(); ++c) out(r, c) /= z;
  }
  return a.graph().record(node_of(Op::softmax_rows, std::move(out)), {a});
}

Var logsumexp_rows(Var a) {
  const Tensor& v = a.value();
  Tensor out(v.rows(), 1);
  for (std::size_t r = 0; r < v.rows(); ++r) {
    double m = v(r, 0);
    for (std::size_t c = 1; c < v.cols(); ++c) m = std::max(m, v(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < v.cols(); ++c) z += std::exp(v(r, c) - m);
    out(r, 0) = m + std::log(z);
  }
  return a.graph().record(node_of(Op::logsumexp_rows, std::move(out)), {a});
}

Var pick_cols(Var a, std::vector<std::size_t> index) {
  const Tensor& v = a.value();
  if (index.size() != v.rows()) throw ShapeError("pick_cols: one index per row required");
  Tensor out(v.rows(), 1);
  for (std::size_t r = 0; r < v.rows(); ++r) {
    if (index[r] >= v.cols()) throw ShapeError("pick_cols: column index out of range");
    out(r, 0) = v(r, index[r]);
  }
  Node n = node_of(Op::pick_cols, std::move(out));
  n.index = std::move(index);
  return a.graph().record(std::move(n), {a});
}

Var scatter_cols(Var a, std::vector<std::size_t> index, std::size_t width) {
  const Tensor& v = a.value();
  if (v.cols() != 1) throw ShapeError("scatter_cols: expected a column, got " + to_string(v.shape()));
  if (index.size() != v.rows()) throw ShapeError("scatter_cols: one index per row required");
  Tensor out(v.rows(), width);
  for (std::size_t r = 0; r < v.rows(); ++r) {
    if (index[r] >= width) throw ShapeError("scatter_cols: column index out of range");
    out(r, index[r]) = v(r, 0);
  }
  Node n = node_of(Op::scatter_cols, std::move(out));
  n.index = std::move(index);
  n.width = width;
  return a.graph().record(std::move(n), {a});
}

Var max_cols(Var a) { return pick_cols(a, argmax_rows(a.value())); }

Var transpose(Var a) {
  const Tensor& v = a.value();
  Tensor out(v.cols(), v.rows());
  for (std::size_t r = 0; r < v.rows(); ++r) {
    for (std::size_t c = 0; c < v.cols(); ++c) out(c, r) = v(r, c);
  }
  return a.graph().record(node_of(Op::transpose, std::move(out)), {a});
}

std::size_t max_index(const Tensor& t) {
  if (t.size() == 0) throw ShapeError("max_index of empty tensor");
  std::size_t best = 0;
  for (std::size_t i = 1; i < t.size(); ++i) {
    if (t[i] > t[best]) best = i;
  }
  return best;
}

std::size_t max_index(Var a) { return max_index(a.value()); }

std::vector<std::size_t> argmax_rows(const Tensor& t) {
  std::vector<std::size_t> out(t.rows(), 0);
  for (std::size_t r = 0; r < t.rows(); ++r) {
    for (std::size_t c = 1; c < t.cols(); ++c) {
      if (t(r, c) > t(r, out[r])) out[r] = c;
    }
  }
  return out;
}

Var softmax_cross_entropy(Var logits, std::size_t target) {
  Var row = logits;
  if (logits.shape().cols == 1 && logits.shape().rows > 1) row = transpose(logits);
  if (row.shape().rows != 1) {
    throw ShapeError("softmax_cross_entropy: expected a single row of logits, got " +
                     to_string(logits.shape()));
  }
  return softmax_cross_entropy_rows(row, {target});
}

Var softmax_cross_entropy_rows(Var logits, std::vector<std::size_t> targets) {
  return sub(logsumexp_rows(logits), pick_cols(logits, std::move(targets)));
}

// ---- backward --------------------------------------------------------------

namespace {

// Calls emit(parent_slot, thunk) per parent; the thunk builds that parent's
// vector-Jacobian product and is only invoked for parents that need it.
template <class Emit>
void backprop_node(Graph& g, const Node& node, Var out, Var gout, const std::vector<Var>& in,
                   Emit&& emit) {
  switch (node.op) {
    case Op::constant:
    case Op::variable:
      return;
    case Op::add:
      emit(0, [&] { return gout; });
      emit(1, [&] { return gout; });
      return;
    case Op::sub:
      emit(0, [&] { return gout; });
      emit(1, [&] { return scale(gout, -1.0); });
      return;
    case Op::mul:
      emit(0, [&] { return mul(gout, in[1]); });
      emit(1, [&] { return mul(gout, in[0]); });
      return;
    case Op::scale:
      emit(0, [&] { return scale(gout, node.factor); });
      return;
    case Op::reciprocal:
      emit(0, [&] { return mul(scale(gout, -1.0), mul(out, out)); });
      return;
    case Op::matmul: {
      const bool ta = node.trans_a;
      const bool tb = node.trans_b;
      // With A' = op(A), B' = op(B): dA' = G B'^T and dB' = A'^T G.
      emit(0, [&] { return ta ? matmul(in[1], gout, tb, true) : matmul(gout, in[1], false, !tb); });
      emit(1, [&] { return tb ? matmul(gout, in[0], true, ta) : matmul(in[0], gout, !ta, false); });
      return;
    }
    case Op::concat_cols:
      for (std::size_t k = 0; k < in.size(); ++k) {
        emit(k, [&] { return slice_cols(gout, node.offsets[k], in[k].shape().cols); });
      }
      return;
    case Op::slice_cols:
      emit(0, [&] { return pad_cols(gout, node.offset, in[0].shape().cols); });
      return;
    case Op::pad_cols:
      emit(0, [&] { return slice_cols(gout, node.offset, in[0].shape().cols); });
      return;
    case Op::sum:
      emit(0, [&] { return expand(gout, in[0].shape()); });
      return;
    case Op::expand:
      emit(0, [&] { return sum(gout); });
      return;
    case Op::row_sum:
      emit(0, [&] { return tile_cols(gout, in[0].shape().cols); });
      return;
    case Op::tile_cols:
      emit(0, [&] { return row_sum(gout); });
      return;
    case Op::col_sum:
      emit(0, [&] { return tile_rows(gout, in[0].shape().rows); });
      return;
    case Op::tile_rows:
      emit(0, [&] { return col_sum(gout); });
      return;
    case Op::relu: {
      // Subgradient 0 at 0; the mask is a constant so relu'' is 0.
      const Tensor& x = in[0].value();
      Tensor mask(x.rows(), x.cols());
      for (std::size_t i = 0; i < x.size(); ++i) mask[i] = x[i] > 0.0 ? 1.0 : 0.0;
      emit(0, [&] { return mul(gout, g.constant(std::move(mask))); });
      return;
    }
    case Op::exp:
      emit(0, [&] { return mul(gout, out); });
      return;
    case Op::log:
      emit(0, [&] { return mul(gout, reciprocal(in[0])); });
      return;
    case Op::softmax_rows: {
      const std::size_t cols = out.shape().cols;
      emit(0, [&] { return mul(out, sub(gout, tile_cols(row_sum(mul(gout, out)), cols))); });
      return;
    }
    case Op::logsumexp_rows:
      emit(0, [&] { return mul(tile_cols(gout, in[0].shape().cols), softmax_rows(in[0])); });
      return;
    case Op::pick_cols:
      emit(0, [&] { return scatter_cols(gout, node.index, in[0].shape().cols); });
      return;
    case Op::scatter_cols:
      emit(0, [&] { return pick_cols(gout, node.index); });
      return;
    case Op::transpose:
      emit(0, [&] { return transpose(gout); });
      return;
  }
}

}  // namespace

std::vector<Var> Graph::grad(Var output, std::span<const Var> wrt, bool create_graph) {
  if (output.graph_ != this) throw GraphMismatchError("grad: output belongs to a different graph");
  if (output.shape() != Shape{1, 1}) {
    throw ShapeError("grad: output must be scalar, got " + to_string(output.shape()));
  }
  for (const Var& w : wrt) {
    if (w.graph_ != this) throw GraphMismatchError("grad: wrt belongs to a different graph");
    if (!w.requires_grad()) throw Error("grad: wrt node does not require gradient");
  }

  const std::size_t n = static_cast<std::size_t>(output.id_) + 1;
  // A node is relevant when some wrt node is among its ancestors (or itself);
  // vector-Jacobian products are only formed along relevant edges.
  std::vector<char> relevant(n, 0);
  for (const Var& w : wrt) {
    if (w.id_ < n) relevant[w.id_] = 1;
  }
  for (std::size_t id = 0; id < n; ++id) {
    if (relevant[id]) continue;
    for (std::uint32_t p : nodes_[id].parents) {
      if (relevant[p]) {
        relevant[id] = 1;
        break;
      }
    }
  }

  std::vector<Var> adjoint(n);
  if (relevant[output.id_]) {
    RecordingGuard guard(recording_, create_graph);
    adjoint[output.id_] = constant(Tensor::scalar(1.0));
    for (std::size_t id = n; id-- > 0;) {
      if (!adjoint[id].valid()) continue;
      const Node& node = nodes_[id];
      if (node.parents.empty()) continue;
      std::vector<Var> in;
      in.reserve(node.parents.size());
      bool any_relevant = false;
      for (std::uint32_t p : node.parents) {
        in.push_back(Var(this, p));
        any_relevant = any_relevant || relevant[p];
      }
      if (!any_relevant) continue;
      auto emit = [&](std::size_t slot, auto&& make_contribution) {
        const std::uint32_t p = node.parents[slot];
        if (!relevant[p]) return;
        Var contribution = make_contribution();
        adjoint[p] = adjoint[p].valid() ? add(adjoint[p], contribution) : contribution;
      };
      backprop_node(*this, node, Var(this, static_cast<std::uint32_t>(id)), adjoint[id], in, emit);
    }
  }

  std::vector<Var> result;
  result.reserve(wrt.size());
  for (const Var& w : wrt) {
    if (w.id_ < n && adjoint[w.id_].valid()) {
      result.push_back(adjoint[w.id_]);
    } else {
      result.push_back(constant(Tensor(w.shape().rows, w.shape().cols)));
    }
  }
  return result;
}

}  // namespace compat_reason::ad
