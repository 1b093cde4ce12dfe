#pragma once

// Loop-based reference for the network and its input gradients, written
// without the graph so the engine can be checked against it.

#include <algorithm>
#include <vector>

#include "compat_reason/compatnet.hpp"
#include "compat_reason/records.hpp"

namespace plain {

using Vec = std::vector<double>;

struct MlpTrace {
  Vec pre1, pre2, out;
};

inline Vec dense(const compat_reason::DenseLayer& l, const Vec& in) {
  Vec out(l.weight.rows());
  for (std::size_t o = 0; o < out.size(); ++o) {
    double s = l.bias(0, o);
    for (std::size_t i = 0; i < in.size(); ++i) s += l.weight(o, i) * in[i];
    out[o] = s;
  }
  return out;
}

inline Vec relu(Vec v) {
  for (double& x : v) x = x > 0.0 ? x : 0.0;
  return v;
}

inline MlpTrace mlp(const compat_reason::MlpParams& p, const Vec& in) {
  MlpTrace t;
  t.pre1 = dense(p.layers[0], in);
  t.pre2 = dense(p.layers[1], relu(t.pre1));
  t.out = dense(p.layers[2], relu(t.pre2));
  return t;
}

/// d out_j / d in, by the chain rule written out layer by layer.
inline Vec mlp_input_gradient(const compat_reason::MlpParams& p, const Vec& in, std::size_t j) {
  const MlpTrace t = mlp(p, in);
  const auto& w1 = p.layers[0].weight;
  const auto& w2 = p.layers[1].weight;
  const auto& w3 = p.layers[2].weight;
  Vec d2(w3.cols());
  for (std::size_t h = 0; h < d2.size(); ++h) d2[h] = t.pre2[h] > 0.0 ? w3(j, h) : 0.0;
  Vec d1(w2.cols(), 0.0);
  for (std::size_t h = 0; h < d1.size(); ++h) {
    if (t.pre1[h] <= 0.0) continue;
    for (std::size_t k = 0; k < d2.size(); ++k) d1[h] += w2(k, h) * d2[k];
  }
  Vec din(w1.cols(), 0.0);
  for (std::size_t i = 0; i < din.size(); ++i) {
    for (std::size_t h = 0; h < d1.size(); ++h) din[i] += w1(h, i) * d1[h];
  }
  return din;
}

inline Vec factor_input(const compat_reason::OutfitRecord& r, compat_reason::Factor f) {
  Vec in = r.top[f];
  in.insert(in.end(), r.bottom[f].begin(), r.bottom[f].end());
  return in;
}

/// Compatibility feature x of one outfit.
inline Vec compat_feature(const compat_reason::CompatModel& m, const compat_reason::OutfitRecord& r) {
  Vec x;
  for (compat_reason::Factor f : compat_reason::kAllFactors) {
    const Vec o = mlp(m.intra[compat_reason::index_of(f)], factor_input(r, f)).out;
    x.insert(x.end(), o.begin(), o.end());
  }
  return x;
}

inline Vec logits(const compat_reason::CompatModel& m, const compat_reason::OutfitRecord& r) {
  return mlp(m.inter, compat_feature(m, r)).out;
}

/// Per-group mean of values over index groups.
inline std::array<double, 3> group_means(const Vec& v, const std::array<std::vector<std::size_t>, 3>& groups) {
  std::array<double, 3> out{};
  for (std::size_t r = 0; r < 3; ++r) {
    double s = 0.0;
    for (std::size_t i : groups[r]) s += v[i];
    out[r] = s / static_cast<double>(groups[r].size());
  }
  return out;
}

/// C+_j for a given x and head gradient.
inline std::array<double, 3> positive_contribution(const Vec& x, const Vec& grad,
                                                   const std::array<std::vector<std::size_t>, 3>& groups) {
  Vec v(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) v[i] = std::max(grad[i], 0.0) * std::max(x[i], 0.0);
  return group_means(v, groups);
}

}  // namespace plain
