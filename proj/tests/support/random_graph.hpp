#pragma once

// Replayable random expression graphs for gradient checks. A program is a
// list of instructions over a growing value list; build() replays it into a
// fresh Graph for any leaf values, so finite differences can re-evaluate it.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "compat_reason/autodiff.hpp"

namespace compat_reason::testing {

class RandomProgram {
 public:
  enum class Kind {
    add, sub, mul, scale, matmul_const, matmul_value, matmul_nt, relu, softplus, sigmoidish,
    softmax_rows, logsumexp_rows, row_sum, col_sum, tile_cols, tile_rows, transpose, slice,
    concat, pick, max_cols, cross_entropy_rows,
  };

  struct Instr {
    Kind kind;
    std::size_t a = 0;
    std::size_t b = 0;
    double factor = 1.0;
    std::size_t p0 = 0;
    std::size_t p1 = 0;
    std::vector<std::size_t> index;
    ad::Tensor constant;
  };

  RandomProgram(std::uint64_t seed, std::size_t max_depth = 6, std::size_t max_dim = 16)
      : rng_(seed), max_dim_(max_dim) {
    const std::size_t leaves = 1 + rng_() % 3;
    for (std::size_t i = 0; i < leaves; ++i) {
      ad::Shape s{dim(), dim()};
      leaf_shapes_.push_back(s);
      shapes_.push_back(s);
      depth_.push_back(0);
      for (std::size_t k = 0; k < s.size(); ++k) initial_.push_back(uniform(-1.0, 1.0));
    }
    const std::size_t steps = 3 + rng_() % 10;
    for (std::size_t step = 0; step < steps; ++step) add_instruction(max_depth);
    // Readout weights for the last value and one earlier value.
    readout_a_ = shapes_.size() - 1;
    readout_b_ = rng_() % shapes_.size();
    readout_wa_ = random_tensor(shapes_[readout_a_]);
    readout_wb_ = random_tensor(shapes_[readout_b_]);
  }

  const std::vector<ad::Shape>& leaf_shapes() const { return leaf_shapes_; }
  const std::vector<double>& initial_values() const { return initial_; }
  std::size_t instruction_count() const { return instrs_.size(); }

  std::vector<ad::Var> make_leaves(ad::Graph& g, const std::vector<double>& flat) const {
    std::vector<ad::Var> leaves;
    std::size_t pos = 0;
    for (const ad::Shape& s : leaf_shapes_) {
      std::vector<double> v(flat.begin() + static_cast<std::ptrdiff_t>(pos),
                            flat.begin() + static_cast<std::ptrdiff_t>(pos + s.size()));
      pos += s.size();
      leaves.push_back(g.variable(ad::Tensor(s.rows, s.cols, std::move(v))));
    }
    return leaves;
  }

  ad::Var build(ad::Graph& g, const std::vector<ad::Var>& leaves) const {
    using namespace ad;
    std::vector<Var> v(leaves.begin(), leaves.end());
    for (const Instr& in : instrs_) {
      const Var a = v[in.a];
      switch (in.kind) {
        case Kind::add: v.push_back(add(a, v[in.b])); break;
        case Kind::sub: v.push_back(sub(a, v[in.b])); break;
        case Kind::mul: v.push_back(mul(a, v[in.b])); break;
        case Kind::scale: v.push_back(scale(a, in.factor)); break;
        case Kind::matmul_const: v.push_back(matmul(a, g.constant(in.constant))); break;
        case Kind::matmul_value: v.push_back(matmul(a, v[in.b])); break;
        case Kind::matmul_nt: v.push_back(matmul(a, v[in.b], false, true)); break;
        case Kind::relu: v.push_back(relu(a)); break;
        case Kind::softplus: {
          Var ones = g.constant(Tensor(a.shape().rows, a.shape().cols, 1.0));
          v.push_back(log(add(exp(scale(a, 0.5)), ones)));
          break;
        }
        case Kind::sigmoidish: {
          Var ones = g.constant(Tensor(a.shape().rows, a.shape().cols, 1.0));
          v.push_back(reciprocal(add(exp(scale(a, -0.5)), ones)));
          break;
        }
        case Kind::softmax_rows: v.push_back(softmax_rows(a)); break;
        case Kind::logsumexp_rows: v.push_back(logsumexp_rows(a)); break;
        case Kind::row_sum: v.push_back(row_sum(a)); break;
        case Kind::col_sum: v.push_back(col_sum(a)); break;
        case Kind::tile_cols: v.push_back(tile_cols(a, in.p0)); break;
        case Kind::tile_rows: v.push_back(tile_rows(a, in.p0)); break;
        case Kind::transpose: v.push_back(transpose(a)); break;
        case Kind::slice: v.push_back(slice_cols(a, in.p0, in.p1)); break;
        case Kind::concat: v.push_back(concat_cols({a, v[in.b]})); break;
        case Kind::pick: v.push_back(pick_cols(a, in.index)); break;
        case Kind::max_cols: v.push_back(max_cols(a)); break;
        case Kind::cross_entropy_rows: v.push_back(softmax_cross_entropy_rows(a, in.index)); break;
      }
    }
    Var out = add(sum(mul(v[readout_a_], g.constant(readout_wa_))),
                  sum(mul(v[readout_b_], g.constant(readout_wb_))));
    return out;
  }

  double evaluate(const std::vector<double>& flat) const {
    ad::Graph g;
    return build(g, make_leaves(g, flat)).value().item();
  }

 private:
  std::size_t dim() { return 1 + rng_() % max_dim_; }
  double uniform(double lo, double hi) {
    return lo + (hi - lo) * static_cast<double>(rng_() >> 11) * 0x1.0p-53;
  }
  ad::Tensor random_tensor(ad::Shape s, double bound = 1.0) {
    ad::Tensor t(s.rows, s.cols);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = uniform(-bound, bound);
    return t;
  }

  void push(Instr in, ad::Shape s, std::size_t depth) {
    instrs_.push_back(std::move(in));
    shapes_.push_back(s);
    depth_.push_back(depth);
  }

  void add_instruction(std::size_t max_depth) {
    for (int attempt = 0; attempt < 64; ++attempt) {
      const std::size_t a = rng_() % shapes_.size();
      if (depth_[a] >= max_depth) continue;
      const ad::Shape sa = shapes_[a];
      const std::size_t d = depth_[a] + 1;
      const Kind kind = static_cast<Kind>(rng_() % 22);
      Instr in{kind, a};
      switch (kind) {
        case Kind::add:
        case Kind::sub:
        case Kind::mul: {
          std::vector<std::size_t> same;
          for (std::size_t i = 0; i < shapes_.size(); ++i) {
            if (shapes_[i] == sa && depth_[i] < max_depth) same.push_back(i);
          }
          in.b = same[rng_() % same.size()];
          push(in, sa, std::max(d, depth_[in.b] + 1));
          return;
        }
        case Kind::scale:
          in.factor = uniform(-2.0, 2.0);
          push(in, sa, d);
          return;
        case Kind::matmul_const: {
          const std::size_t m = dim();
          in.constant = random_tensor({sa.cols, m}, 1.0 / std::sqrt(static_cast<double>(sa.cols)));
          push(in, {sa.rows, m}, d);
          return;
        }
        case Kind::matmul_value:
        case Kind::matmul_nt: {
          std::vector<std::size_t> fit;
          for (std::size_t i = 0; i < shapes_.size(); ++i) {
            const bool ok = kind == Kind::matmul_value ? shapes_[i].rows == sa.cols
                                                       : shapes_[i].cols == sa.cols;
            if (ok && depth_[i] < max_depth) fit.push_back(i);
          }
          if (fit.empty()) continue;
          in.b = fit[rng_() % fit.size()];
          const ad::Shape sb = shapes_[in.b];
          push(in, {sa.rows, kind == Kind::matmul_value ? sb.cols : sb.rows},
               std::max(d, depth_[in.b] + 1));
          return;
        }
        case Kind::relu:
        case Kind::softplus:
        case Kind::sigmoidish:
        case Kind::softmax_rows:
          push(in, sa, d);
          return;
        case Kind::logsumexp_rows:
        case Kind::row_sum:
        case Kind::max_cols:
          push(in, {sa.rows, 1}, d);
          return;
        case Kind::col_sum:
          push(in, {1, sa.cols}, d);
          return;
        case Kind::tile_cols:
          if (sa.cols != 1) continue;
          in.p0 = dim();
          push(in, {sa.rows, in.p0}, d);
          return;
        case Kind::tile_rows:
          if (sa.rows != 1) continue;
          in.p0 = dim();
          push(in, {in.p0, sa.cols}, d);
          return;
        case Kind::transpose:
          push(in, {sa.cols, sa.rows}, d);
          return;
        case Kind::slice:
          in.p0 = rng_() % sa.cols;
          in.p1 = 1 + rng_() % (sa.cols - in.p0);
          push(in, {sa.rows, in.p1}, d);
          return;
        case Kind::concat: {
          std::vector<std::size_t> fit;
          for (std::size_t i = 0; i < shapes_.size(); ++i) {
            if (shapes_[i].rows == sa.rows && depth_[i] < max_depth) fit.push_back(i);
          }
          in.b = fit[rng_() % fit.size()];
          push(in, {sa.rows, sa.cols + shapes_[in.b].cols}, std::max(d, depth_[in.b] + 1));
          return;
        }
        case Kind::pick:
        case Kind::cross_entropy_rows:
          for (std::size_t r = 0; r < sa.rows; ++r) in.index.push_back(rng_() % sa.cols);
          push(in, {sa.rows, 1}, d);
          return;
      }
    }
  }

  std::mt19937_64 rng_;
  std::size_t max_dim_;
  std::vector<ad::Shape> leaf_shapes_;
  std::vector<double> initial_;
  std::vector<ad::Shape> shapes_;
  std::vector<std::size_t> depth_;
  std::vector<Instr> instrs_;
  std::size_t readout_a_ = 0;
  std::size_t readout_b_ = 0;
  ad::Tensor readout_wa_;
  ad::Tensor readout_wb_;
};

/// Flattens gradient handles into one vector in leaf order.
inline std::vector<double> flatten(const std::vector<ad::Var>& vars) {
  std::vector<double> out;
  for (const ad::Var& v : vars) {
    const auto d = v.value().data();
    out.insert(out.end(), d.begin(), d.end());
  }
  return out;
}

}  // namespace compat_reason::testing
