#include "compat_reason/metrics.hpp"

#include <algorithm>

namespace compat_reason {

namespace {

void require_same_size(std::size_t a, std::size_t b) {
  if (a != b) throw DimensionError("prediction and ground-truth lists differ in length");
}

bool eligible(Judgment truth) { return truth != Judgment::normal; }

}  // namespace

double judgment_accuracy(std::span<const Judgment> predicted, std::span<const Judgment> truth) {
  require_same_size(predicted.size(), truth.size());
  if (truth.empty()) throw Error("judgment accuracy of an empty set");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += predicted[i] == truth[i];
  return 100.0 * static_cast<double>(hit) / static_cast<double>(truth.size());
}

std::optional<double> reason_accuracy(std::span<const Judgment> predicted_j,
                                      std::span<const std::optional<Reason>> predicted_r,
                                      std::span<const Judgment> truth_j, std::span<const std::optional<Reason>> truth_r) {
  require_same_size(predicted_j.size(), truth_j.size());
  require_same_size(predicted_r.size(), truth_r.size());
  require_same_size(predicted_j.size(), predicted_r.size());
  std::size_t num = 0;
  std::size_t den = 0;
  for (std::size_t i = 0; i < truth_j.size(); ++i) {
    if (!eligible(truth_j[i]) || predicted_j[i] != truth_j[i]) continue;
    ++den;
    if (predicted_r[i] && predicted_r[i] == truth_r[i]) ++num;
  }
  if (den == 0) return std::nullopt;
  return 100.0 * static_cast<double>(num) / static_cast<double>(den);
}

std::optional<double> reason_accuracy_filtered(std::span<const Judgment> predicted_j,
                                               std::span<const std::optional<Reason>> predicted_r,
                                               std::span<const Judgment> truth_j,
                                               std::span<const std::optional<Reason>> truth_r) {
  require_same_size(predicted_j.size(), truth_j.size());
  require_same_size(predicted_r.size(), truth_r.size());
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < truth_j.size(); ++i) {
    if (eligible(truth_j[i]) && predicted_j[i] == truth_j[i]) kept.push_back(i);
  }
  if (kept.empty()) return std::nullopt;
  const auto correct = std::count_if(kept.begin(), kept.end(), [&](std::size_t i) {
    return predicted_r[i].has_value() && truth_r[i].has_value() && *predicted_r[i] == *truth_r[i];
  });
  return 100.0 * static_cast<double>(correct) / static_cast<double>(kept.size());
}

ConfusionMatrix confusion_matrix(std::span<const Judgment> predicted, std::span<const Judgment> truth) {
  require_same_size(predicted.size(), truth.size());
  ConfusionMatrix m{};
  for (std::size_t i = 0; i < truth.size(); ++i) ++m[index_of(truth[i])][index_of(predicted[i])];
  return m;
}

Evaluation evaluate(const CompatModel& model, const std::vector<OutfitRecord>& records,
                    const EvaluationOptions& options) {
  if (records.empty()) throw Error("evaluate: no records");
  Evaluation ev;
  ev.count = records.size();
  std::vector<Judgment> truth_j;
  std::vector<std::optional<Reason>> truth_r;
  const std::size_t chunk = std::max<std::size_t>(options.chunk_size, 1);
  for (std::size_t start = 0; start < records.size(); start += chunk) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(records.size(), start + chunk); ++i) idx.push_back(i);
    const OutfitBatch batch = make_batch(records, idx, model.config.dims);

    if (options.method == ReasonMethod::positive_contribution_difference) {
      ReasonTrace t = trace_reasons(model, batch);
      ev.predicted_judgments.insert(ev.predicted_judgments.end(), t.judgments.begin(), t.judgments.end());
      ev.predicted_reasons.insert(ev.predicted_reasons.end(), t.reasons.begin(), t.reasons.end());
    } else {
      ad::Graph g;
      const ForwardPass fp = forward(g, bind_model(g, model, false), batch);
      const std::vector<Judgment> js = predict_judgments(fp.y.value());
      const Formulation f = options.method == ReasonMethod::item_feature_influence ? Formulation::contribution
                                                                                  : options.formulation;
      const ad::Tensor scores = formulation_scores(fp.x, fp.y, js, f, model.partition);
      for (std::size_t b = 0; b < js.size(); ++b) {
        ev.predicted_judgments.push_back(js[b]);
        ev.predicted_reasons.push_back(js[b] == Judgment::normal ? std::nullopt
                                                                 : std::optional<Reason>(argmax_reason(row_of(scores, b))));
      }
    }
    truth_j.insert(truth_j.end(), batch.judgments.begin(), batch.judgments.end());
    truth_r.insert(truth_r.end(), batch.reasons.begin(), batch.reasons.end());
  }
  ev.judgment_acc = judgment_accuracy(ev.predicted_judgments, truth_j);
  ev.reason_acc = reason_accuracy(ev.predicted_judgments, ev.predicted_reasons, truth_j, truth_r);
  ev.confusion = confusion_matrix(ev.predicted_judgments, truth_j);
  return ev;
}

EvaluationOptions parse_evaluation_method(std::string_view name) {
  EvaluationOptions e;
  if (name == "ours") return e;
  if (name == "ifiv") {
    e.method = ReasonMethod::item_feature_influence;
    return e;
  }
  for (Formulation f : kAllFormulations) {
    const std::string_view full = to_string(f);
    if (name == full || name == full.substr(0, full.find('_'))) {
      e.method = ReasonMethod::formulation;
      e.formulation = f;
      return e;
    }
  }
  throw ParseError("unknown method '" + std::string(name) + "' (ours, ifiv, F1..F6)");
}

}  // namespace compat_reason
