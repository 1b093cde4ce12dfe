#pragma once

// Reverse-mode automatic differentiation over dense row-major matrices.
//
// Every value is a rows x cols matrix of doubles; scalars are 1x1 and
// vectors are n x 1 (or 1 x n for batched rows). Nodes are appended in
// creation order, so node id order is a topological order and backward
// passes walk ids in descending order. grad() with create_graph=true
// expresses every vector-Jacobian product with ordinary graph ops, which
// makes the returned gradients differentiable again (double backprop).

#include <cstddef>
#include <cstdint>
#include <deque>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "compat_reason/types.hpp"

namespace compat_reason::ad {

struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t size() const { return rows * cols; }
  bool operator==(const Shape&) const = default;
};

std::string to_string(Shape s);

class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
      : shape_{rows, cols}, data_(rows * cols, fill) {}
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor(1, 1, v); }
  static Tensor column(std::vector<double> v);
  static Tensor row(std::vector<double> v);
  static Tensor identity(std::size_t n);

  Shape shape() const { return shape_; }
  std::size_t rows() const { return shape_.rows; }
  std::size_t cols() const { return shape_.cols; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_.cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_.cols + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  /// Value of a 1x1 tensor.
  double item() const;
  bool all_finite() const;

 private:
  Shape shape_;
  std::vector<double> data_;
};

struct ShapeError : DimensionError {
  using DimensionError::DimensionError;
};

struct GraphMismatchError : Error {
  using Error::Error;
};

struct NonFiniteError : Error {
  using Error::Error;
};

enum class Op : std::uint8_t {
  constant,
  variable,
  add,
  sub,
  mul,
  scale,
  reciprocal,
  matmul,
  concat_cols,
  slice_cols,
  pad_cols,
  sum,
  expand,
  row_sum,
  tile_cols,
  col_sum,
  tile_rows,
  relu,
  exp,
  log,
  softmax_rows,
  logsumexp_rows,
  pick_cols,
  scatter_cols,
  transpose,
};

std::string_view to_string(Op op);

class Graph;

/// Handle to one node of one graph. Cheap to copy.
class Var {
 public:
  Var() = default;

  Graph& graph() const { return *graph_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

  Shape shape() const;
  bool requires_grad() const;
  const Tensor& value() const;

 private:
  friend class Graph;
  Var(Graph* g, std::uint32_t id) : graph_(g), id_(id) {}

  Graph* graph_ = nullptr;
  std::uint32_t id_ = 0;
};

struct Node {
  Tensor value;
  Op op = Op::constant;
  std::vector<std::uint32_t> parents;
  bool requires_grad = false;
  // Op attributes.
  bool trans_a = false;
  bool trans_b = false;
  double factor = 0.0;
  std::size_t offset = 0;
  std::size_t width = 0;
  std::vector<std::size_t> offsets;  // concat_cols segment starts
  std::vector<std::size_t> index;    // pick_cols / scatter_cols per-row column
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);
  Var scalar(double v) { return constant(Tensor::scalar(v)); }

  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::uint32_t id) const { return nodes_[id]; }

  /// Gradients of the scalar `output` with respect to each of `wrt`.
  ///
  /// A wrt node that `output` does not depend on gets an all-zero constant
  /// gradient rather than an error. With create_graph set, the returned
  /// handles are ordinary differentiable nodes of this graph.
  std::vector<Var> grad(Var output, std::span<const Var> wrt, bool create_graph = false);
  std::vector<Var> grad(Var output, std::initializer_list<Var> wrt, bool create_graph = false) {
    return grad(output, std::span<const Var>(wrt.begin(), wrt.size()), create_graph);
  }

  // Used by the op functions below; records a node built from parents.
  Var record(Node node, std::span<const Var> parents);
  Var record(Node node, std::initializer_list<Var> parents) {
    return record(std::move(node), std::span<const Var>(parents.begin(), parents.size()));
  }

 private:
  friend class Var;

  std::deque<Node> nodes_;
  bool recording_ = true;
};

// ---- primitive ops --------------------------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var reciprocal(Var a);
Var square(Var a);

/// op(a) * op(b) where op transposes when the flag is set.
Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false);
Var matrix_product(Var a, Var b);
Var matrix_vector_product(Var m, Var v);

Var concat_cols(std::span<const Var> parts);
Var concat_cols(std::initializer_list<Var> parts);
Var slice_cols(Var a, std::size_t begin, std::size_t count);
/// Places `a` at column `offset` of a zero matrix `width` columns wide.
Var pad_cols(Var a, std::size_t offset, std::size_t width);

/// Sum of all elements, as 1x1.
Var sum(Var a);
Var mean(Var a);
/// Broadcasts a 1x1 value to `shape`.
Var expand(Var scalar, Shape shape);
/// Per-row sums, rows x 1.
Var row_sum(Var a);
/// Repeats a rows x 1 column `cols` times.
Var tile_cols(Var a, std::size_t cols);
/// Per-column sums, 1 x cols.
Var col_sum(Var a);
/// Repeats a 1 x cols row `rows` times.
Var tile_rows(Var a, std::size_t rows);
/// a + bias, with a 1 x cols bias added to every row.
Var add_row_bias(Var a, Var bias);

Var relu(Var a);
Var exp(Var a);
Var log(Var a);

Var softmax_rows(Var a);
Var logsumexp_rows(Var a);
/// out[r] = a[r, index[r]], rows x 1.
Var pick_cols(Var a, std::vector<std::size_t> index);
/// Inverse layout of pick_cols: rows x width, zero except out[r, index[r]] = a[r].
Var scatter_cols(Var a, std::vector<std::size_t> index, std::size_t width);
/// Per-row maximum, rows x 1; the gradient flows to the lowest-index maximizer.
Var max_cols(Var a);
Var transpose(Var a);

/// Index of the largest element in row-major order; ties go to the lowest index.
std::size_t max_index(const Tensor& t);
std::size_t max_index(Var a);
/// Per-row argmax with lowest-index tie-break.
std::vector<std::size_t> argmax_rows(const Tensor& t);

/// -log softmax(logits)[target] for a single row (1 x n or n x 1) of logits.
Var softmax_cross_entropy(Var logits, std::size_t target);
/// Per-row cross-entropy, rows x 1.
Var softmax_cross_entropy_rows(Var logits, std::vector<std::size_t> targets);

}  // namespace compat_reason::ad
