#include "compat_reason/reasoning.hpp"

#include <algorithm>
#include <string>

namespace compat_reason {

std::string_view to_string(RegularizerKind k) {
  switch (k) {
    case RegularizerKind::cross_entropy: return "ce";
    case RegularizerKind::linear: return "linear";
    case RegularizerKind::square: return "square";
  }
  return "?";
}

RegularizerKind parse_regularizer(std::string_view s) {
  if (s == "ce" || s == "cross_entropy") return RegularizerKind::cross_entropy;
  if (s == "linear") return RegularizerKind::linear;
  if (s == "square") return RegularizerKind::square;
  throw ParseError("unknown regularizer '" + std::string(s) + "' (expected ce, linear or square)");
}

std::string_view to_string(Formulation f) {
  switch (f) {
    case Formulation::contribution: return "F1_contribution";
    case Formulation::contribution_difference: return "F2_contribution_difference";
    case Formulation::positive_gradient: return "F3_positive_gradient";
    case Formulation::positive_contribution: return "F4_positive_contribution";
    case Formulation::rectified_contribution_difference: return "F5_rectified_contribution_difference";
    case Formulation::positive_contribution_difference: return "F6_positive_contribution_difference";
  }
  return "?";
}

namespace {

std::vector<std::size_t> judgment_indices(std::span<const Judgment> js) {
  std::vector<std::size_t> idx;
  idx.reserve(js.size());
  for (Judgment j : js) idx.push_back(index_of(j));
  return idx;
}

std::vector<std::size_t> reason_indices(std::span<const Reason> rs) {
  std::vector<std::size_t> idx;
  idx.reserve(rs.size());
  for (Reason r : rs) idx.push_back(index_of(r));
  return idx;
}

std::vector<Judgment> repeat(Judgment j, std::size_t n) { return std::vector<Judgment>(n, j); }

void require_rows(ad::Var x, ad::Var y, std::size_t n) {
  if (x.shape().rows != n || y.shape().rows != n) {
    throw DimensionError("one judgment per batch row required");
  }
  if (y.shape().cols != kNumJudgments) throw DimensionError("logits must have 3 columns");
}

ad::Var pool(ad::Var per_element, const FactorPartition& partition) {
  if (per_element.shape().cols != partition.x_dim()) {
    throw DimensionError("feature width " + std::to_string(per_element.shape().cols) +
                         " does not match the factor partition (" + std::to_string(partition.x_dim()) + ")");
  }
  return ad::matmul(per_element, per_element.graph().constant(partition.pooling_matrix()));
}

}  // namespace

ad::Var logit_gradient(ad::Var x, ad::Var y, std::span<const Judgment> per_row, bool create_graph) {
  require_rows(x, y, per_row.size());
  ad::Var selected = ad::sum(ad::pick_cols(y, judgment_indices(per_row)));
  return x.graph().grad(selected, {x}, create_graph)[0];
}

ad::Var contrib(ad::Var x, ad::Var y, std::span<const Judgment> per_row) {
  return ad::mul(logit_gradient(x, y, per_row), ad::relu(x));
}

ad::Var contrib(ad::Var x, ad::Var y, Judgment j) { return contrib(x, y, repeat(j, x.shape().rows)); }

ad::Var positive_contrib(ad::Var x, ad::Var y, std::span<const Judgment> per_row, const FactorPartition& partition) {
  return pool(ad::mul(ad::relu(logit_gradient(x, y, per_row)), ad::relu(x)), partition);
}

ad::Var positive_contrib(ad::Var x, ad::Var y, Judgment j, const FactorPartition& partition) {
  return positive_contrib(x, y, repeat(j, x.shape().rows), partition);
}

ad::Var f_vector(ad::Var x, ad::Var y, std::span<const Judgment> ground_truth, const FactorPartition& partition) {
  ad::Var target = positive_contrib(x, y, ground_truth, partition);
  ad::Var normal = positive_contrib(x, y, Judgment::normal, partition);
  return ad::sub(target, normal);
}

ad::Var reg_ce(ad::Var f, std::span<const Reason> ground_truth) {
  return ad::softmax_cross_entropy_rows(f, reason_indices(ground_truth));
}

ad::Var reg_linear(ad::Var f, std::span<const Reason> ground_truth) {
  return ad::sub(ad::max_cols(f), ad::pick_cols(f, reason_indices(ground_truth)));
}

ad::Var reg_square(ad::Var f, std::span<const Reason> ground_truth) {
  return ad::square(reg_linear(f, ground_truth));
}

ad::Var regularizer(RegularizerKind kind, ad::Var f, std::span<const Reason> ground_truth) {
  switch (kind) {
    case RegularizerKind::cross_entropy: return reg_ce(f, ground_truth);
    case RegularizerKind::linear: return reg_linear(f, ground_truth);
    case RegularizerKind::square: return reg_square(f, ground_truth);
  }
  throw Error("unknown regularizer kind");
}

LossTerms total_loss(ad::Graph& g, const ModelVars& vars, const FactorPartition& partition, const OutfitBatch& batch,
                     double alpha, RegularizerKind kind) {
  if (batch.size() == 0) throw Error("total_loss: empty batch");
  if (!(alpha >= 0.0)) throw Error("total_loss: alpha must be non-negative");
  const double inv_n = 1.0 / static_cast<double>(batch.size());

  const ForwardPass fp = forward(g, vars, batch);
  LossTerms terms;
  terms.judgment = ad::scale(ad::sum(ad::softmax_cross_entropy_rows(fp.y, judgment_indices(batch.judgments))), inv_n);
  if (alpha == 0.0) {
    terms.reason = g.scalar(0.0);
    terms.total = terms.judgment;
    return terms;
  }

  std::vector<Reason> reasons;
  ad::Tensor mask(batch.size(), 1);
  reasons.reserve(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (batch.judgments[b] == Judgment::normal) {
      reasons.push_back(Reason::color);  // masked out below
    } else {
      if (!batch.reasons[b]) throw Error("total_loss: good/bad sample without a reason label");
      reasons.push_back(*batch.reasons[b]);
      mask(b, 0) = 1.0;
    }
  }
  ad::Var f = f_vector(fp.x, fp.y, batch.judgments, partition);
  ad::Var per_row = ad::mul(regularizer(kind, f, reasons), g.constant(std::move(mask)));
  terms.reason = ad::scale(ad::sum(per_row), inv_n);
  terms.total = ad::add(terms.judgment, ad::scale(terms.reason, alpha));
  return terms;
}

Reason argmax_reason(const ContributionVector& scores) {
  std::size_t best = 0;
  for (std::size_t r = 1; r < kNumReasons; ++r) {
    if (scores[r] > scores[best]) best = r;
  }
  return static_cast<Reason>(best);
}

namespace {

ContributionVector difference(const ContributionVector& a, const ContributionVector& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}

}  // namespace

Reason reason_good(const ContributionVector& positive_good, const ContributionVector& positive_normal) {
  return argmax_reason(difference(positive_good, positive_normal));
}

Reason reason_bad(const ContributionVector& positive_bad, const ContributionVector& positive_normal) {
  return argmax_reason(difference(positive_bad, positive_normal));
}

ContributionVector row_of(const ad::Tensor& t, std::size_t row) {
  if (t.cols() != kNumReasons) throw DimensionError("expected a batch x 3 tensor");
  return {t(row, 0), t(row, 1), t(row, 2)};
}

ad::Tensor formulation_scores(ad::Var x, ad::Var y, std::span<const Judgment> per_row, Formulation formulation,
                              const FactorPartition& partition) {
  const std::size_t n = per_row.size();
  ad::Var grad_j = logit_gradient(x, y, per_row, false);
  ad::Var pos_x = ad::relu(x);
  auto mean_contrib = [&](ad::Var grad) { return pool(ad::mul(grad, pos_x), partition); };
  auto positive = [&](ad::Var grad) { return pool(ad::mul(ad::relu(grad), pos_x), partition); };
  auto grad_normal = [&] { return logit_gradient(x, y, repeat(Judgment::normal, n), false); };

  switch (formulation) {
    case Formulation::contribution:
      return mean_contrib(grad_j).value();
    case Formulation::contribution_difference:
      return ad::sub(mean_contrib(grad_j), mean_contrib(grad_normal())).value();
    case Formulation::positive_gradient:
      return pool(ad::mul(ad::relu(grad_j), x), partition).value();
    case Formulation::positive_contribution:
      return positive(grad_j).value();
    case Formulation::rectified_contribution_difference:
      return ad::relu(ad::sub(mean_contrib(grad_j), mean_contrib(grad_normal()))).value();
    case Formulation::positive_contribution_difference:
      return ad::sub(positive(grad_j), positive(grad_normal())).value();
  }
  throw Error("unknown formulation");
}

ReasonTrace trace_reasons(const CompatModel& model, const OutfitBatch& batch) {
  ad::Graph g;
  const ModelVars vars = bind_model(g, model, false);
  const ForwardPass fp = forward(g, vars, batch);
  const std::size_t n = batch.size();

  ReasonTrace t;
  t.logits = fp.y.value();
  t.judgments = predict_judgments(t.logits);
  auto positive_for = [&](Judgment j) {
    ad::Var grad = logit_gradient(fp.x, fp.y, repeat(j, n), false);
    return pool(ad::mul(ad::relu(grad), ad::relu(fp.x)), model.partition).value();
  };
  t.positive_good = positive_for(Judgment::good);
  t.positive_normal = positive_for(Judgment::normal);
  t.positive_bad = positive_for(Judgment::bad);
  {
    ad::Var grad = logit_gradient(fp.x, fp.y, t.judgments, false);
    t.contribution = pool(ad::mul(grad, ad::relu(fp.x)), model.partition).value();
  }
  t.reasons.resize(n);
  for (std::size_t b = 0; b < n; ++b) {
    const ContributionVector normal = row_of(t.positive_normal, b);
    switch (t.judgments[b]) {
      case Judgment::good: t.reasons[b] = reason_good(row_of(t.positive_good, b), normal); break;
      case Judgment::bad: t.reasons[b] = reason_bad(row_of(t.positive_bad, b), normal); break;
      case Judgment::normal: t.reasons[b] = std::nullopt; break;
    }
  }
  return t;
}

std::optional<Reason> predict_reason(const CompatModel& model, const OutfitRecord& record) {
  const std::vector<OutfitRecord> one{record};
  return trace_reasons(model, make_batch(one, model.config.dims)).reasons[0];
}

FactorTable factor_table(const CompatModel& model, const OutfitRecord& record) {
  const std::vector<OutfitRecord> one{record};
  const OutfitBatch batch = make_batch(one, model.config.dims);
  ad::Graph g;
  const ForwardPass fp = forward(g, bind_model(g, model, false), batch);
  const FactorPartition& part = model.partition;
  const auto x = fp.x.value().data();

  FactorTable t;
  for (std::size_t k = 0; k < kNumJudgments; ++k) t.logits[k] = fp.y.value()(0, k);
  t.judgment = predict_judgment(t.logits);
  auto segment_means = [&](Judgment j, bool positive_only) {
    const std::vector<Judgment> js{j};
    const ad::Tensor grad = logit_gradient(fp.x, fp.y, js, false).value();
    std::array<double, kNumFactors> out{};
    for (Factor f : kAllFactors) {
      const std::size_t off = part.offset[index_of(f)], w = part.width[index_of(f)];
      if (w == 0) continue;
      double s = 0.0;
      for (std::size_t i = off; i < off + w; ++i) {
        const double gi = positive_only ? std::max(grad(0, i), 0.0) : grad(0, i);
        s += gi * std::max(x[i], 0.0);
      }
      out[index_of(f)] = s / static_cast<double>(w);
    }
    return out;
  };
  for (Judgment j : kAllJudgments) t.positive[index_of(j)] = segment_means(j, true);
  t.contribution = segment_means(t.judgment, false);
  t.reason = trace_reasons(model, batch).reasons[0];
  return t;
}

std::optional<Factor> FactorTable::design_factor() const {
  if (reason != Reason::design || judgment == Judgment::normal) return std::nullopt;
  const auto& pj = positive[index_of(judgment)];
  const auto& pn = positive[index_of(Judgment::normal)];
  std::optional<Factor> best;
  double best_v = 0.0;
  for (Factor f : {Factor::material, Factor::silhouette, Factor::detail}) {
    const double v = pj[index_of(f)] - pn[index_of(f)];
    if (!best || v > best_v) {
      best = f;
      best_v = v;
    }
  }
  return best;
}

}  // namespace compat_reason
