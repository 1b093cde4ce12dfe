#include "compat_reason/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "compat_reason/compatnet.hpp"
#include "compat_reason/random.hpp"
#include "compat_reason/reasoning.hpp"

namespace compat_reason {

double relative_gradient_error(const std::vector<double>& a, const std::vector<double>& b, double floor) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

namespace {

ModelConfig random_config(Rng& rng) {
  ModelConfig c;
  for (auto& d : c.dims.dims) d = 1 + rng.below(6);
  c.intra_hidden1 = 2 + rng.below(7);
  c.intra_hidden2 = 2 + rng.below(7);
  c.intra_out = 1 + rng.below(3);
  c.inter_hidden1 = 2 + rng.below(9);
  c.inter_hidden2 = 2 + rng.below(9);
  return c;
}

std::vector<OutfitRecord> random_outfits(Rng& rng, const FeatureDims& dims, std::size_t n) {
  std::vector<OutfitRecord> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    OutfitRecord& r = out[k];
    r.outfit_id = std::to_string(k);
    for (Factor f : kAllFactors) {
      for (std::size_t i = 0; i < dims[f]; ++i) {
        r.top[f].push_back(rng.uniform(-1.0, 1.0));
        r.bottom[f].push_back(rng.uniform(-1.0, 1.0));
      }
    }
    // Mostly good/bad so the reason term is present.
    r.judgment = k % 4 == 3 ? Judgment::normal : (rng.below(2) ? Judgment::good : Judgment::bad);
    if (r.judgment != Judgment::normal) r.reason = static_cast<Reason>(rng.below(kNumReasons));
  }
  return out;
}

std::vector<double> flat(const CompatModel& m) {
  std::vector<double> out;
  for (const ad::Tensor* t : m.parameters()) out.insert(out.end(), t->data().begin(), t->data().end());
  return out;
}

void assign(CompatModel& m, const std::vector<double>& v) {
  std::size_t pos = 0;
  for (ad::Tensor* t : m.parameters()) {
    for (double& x : t->storage()) x = v[pos++];
  }
}

// Loss term selected by `reason_only`: the reason term alone, else the total.
double loss_value(const CompatModel& m, const OutfitBatch& b, double alpha, RegularizerKind k, bool reason_only) {
  ad::Graph g;
  const LossTerms t = total_loss(g, bind_model(g, m, false), m.partition, b, alpha, k);
  return (reason_only ? t.reason : t.total).value().item();
}

std::vector<double> loss_grad(const CompatModel& m, const OutfitBatch& b, double alpha, RegularizerKind k,
                              bool reason_only) {
  ad::Graph g;
  const ModelVars vars = bind_model(g, m, true);
  const LossTerms t = total_loss(g, vars, m.partition, b, alpha, k);
  std::vector<double> out;
  for (ad::Var v : g.grad(reason_only ? t.reason : t.total, vars.all(), false)) {
    out.insert(out.end(), v.value().data().begin(), v.value().data().end());
  }
  return out;
}

double check(CompatModel& m, const OutfitBatch& b, double alpha, RegularizerKind k, bool reason_only) {
  const std::vector<double> analytic = loss_grad(m, b, alpha, k, reason_only);
  std::vector<double> p = flat(m);
  std::vector<double> numeric(p.size());
  const double h = 1e-6;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double saved = p[i];
    p[i] = saved + h;
    assign(m, p);
    const double up = loss_value(m, b, alpha, k, reason_only);
    p[i] = saved - h;
    assign(m, p);
    const double down = loss_value(m, b, alpha, k, reason_only);
    p[i] = saved;
    numeric[i] = (up - down) / (2.0 * h);
  }
  assign(m, p);
  return relative_gradient_error(analytic, numeric);
}

}  // namespace

SelfCheckReport run_selfcheck(std::size_t cases) {
  SelfCheckReport report;
  for (std::size_t s = 1; s <= cases; ++s) {
    Rng rng(s);
    const ModelConfig cfg = random_config(rng);
    CompatModel m = init_model(cfg, s);
    // Nonzero biases: with zero biases a unit fed only by dead units sits exactly on the relu kink.
    for (ad::Tensor* t : m.parameters()) {
      if (t->rows() == 1) {
        for (double& v : t->storage()) v = rng.uniform(-0.1, 0.1);
      }
    }
    const auto records = random_outfits(rng, cfg.dims, 2 + rng.below(4));
    const OutfitBatch batch = make_batch(records, cfg.dims);
    const RegularizerKind kind = kAllRegularizers[s % kAllRegularizers.size()];

    const double first = check(m, batch, 0.0, kind, false);
    const double second = check(m, batch, 1.0, kind, true);
    report.worst_first_order = std::max(report.worst_first_order, first);
    report.worst_second_order = std::max(report.worst_second_order, second);
    const bool ok = first <= kFirstOrderTolerance && second <= kSecondOrderTolerance;
    report.passed = report.passed && ok;
    char line[160];
    std::snprintf(line, sizeof line, "case %zu params %zu reg %s first-order %.2e second-order %.2e %s", s,
                  m.parameter_count(), std::string(to_string(kind)).c_str(), first, second, ok ? "ok" : "FAIL");
    report.lines.push_back(line);
  }
  char line[128];
  std::snprintf(line, sizeof line, "worst first-order %.2e (tol %.0e), second-order %.2e (tol %.0e)",
                report.worst_first_order, kFirstOrderTolerance, report.worst_second_order, kSecondOrderTolerance);
  report.lines.push_back(line);
  return report;
}

}  // namespace compat_reason
