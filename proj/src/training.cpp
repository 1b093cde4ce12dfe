#include "compat_reason/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace compat_reason {

TrainConfig TrainConfig::from_config(const KeyValueConfig& cfg, const std::string& section) {
  const std::string p = section.empty() ? "" : section + ".";
  cfg.reject_unknown({p + "lr0", p + "weight_decay", p + "epochs", p + "lr_drop_every", p + "lr_drop_factor",
                      p + "batch_size", p + "alpha", p + "reg", p + "seed"},
                     p);
  TrainConfig c;
  auto count = [&](const char* key, std::size_t& out) {
    if (auto v = cfg.get_int(p + key)) {
      if (*v < 0) throw ParseError("key '" + p + key + "' must be non-negative");
      out = static_cast<std::size_t>(*v);
    }
  };
  if (auto v = cfg.get_double(p + "lr0")) c.lr0 = *v;
  if (auto v = cfg.get_double(p + "weight_decay")) c.weight_decay = *v;
  count("epochs", c.epochs);
  count("lr_drop_every", c.lr_drop_every);
  if (auto v = cfg.get_double(p + "lr_drop_factor")) c.lr_drop_factor = *v;
  count("batch_size", c.batch_size);
  if (auto v = cfg.get_double(p + "alpha")) c.alpha = *v;
  if (auto v = cfg.get_string(p + "reg")) c.reg = parse_regularizer(*v);
  if (auto v = cfg.get_int(p + "seed")) c.seed = static_cast<std::uint64_t>(*v);
  validate_train_config(c);
  return c;
}

void validate_train_config(const TrainConfig& c) {
  if (!(c.lr0 > 0.0) || !std::isfinite(c.lr0)) throw Error("lr0 must be positive");
  if (!(c.weight_decay >= 0.0)) throw Error("weight_decay must be non-negative");
  if (!(c.alpha >= 0.0) || !std::isfinite(c.alpha)) throw Error("alpha must be a non-negative number");
  if (c.batch_size == 0) throw Error("batch_size must be positive");
  if (c.lr_drop_every == 0) throw Error("lr_drop_every must be positive");
  if (!(c.lr_drop_factor >= 1.0)) throw Error("lr_drop_factor must be at least 1");
}

double lr_at(const TrainConfig& c, std::size_t epoch) {
  const double drops = static_cast<double>(epoch / c.lr_drop_every);
  return c.lr0 / std::pow(c.lr_drop_factor, drops);
}

void sgd_step(std::span<ad::Tensor* const> params, std::span<const ad::Tensor> grads, double lr, double weight_decay) {
  if (params.size() != grads.size()) throw DimensionError("sgd_step: parameter and gradient counts differ");
  for (std::size_t k = 0; k < params.size(); ++k) {
    ad::Tensor& p = *params[k];
    const ad::Tensor& g = grads[k];
    if (p.shape() != g.shape()) throw DimensionError("sgd_step: gradient shape mismatch");
    std::span<double> pv = p.data();
    auto gv = g.data();
    for (std::size_t i = 0; i < pv.size(); ++i) pv[i] -= lr * (gv[i] + weight_decay * pv[i]);
  }
}

BalancedSampler::BalancedSampler(std::span<const Judgment> labels, std::uint64_t seed) : rng_(seed) {
  for (std::size_t i = 0; i < labels.size(); ++i) pools_[index_of(labels[i])].push_back(i);
  for (std::size_t k = 0; k < kNumJudgments; ++k) {
    if (!pools_[k].empty()) classes_.push_back(k);
  }
  if (classes_.empty()) throw Error("BalancedSampler: no samples");
}

std::size_t BalancedSampler::next() {
  const auto& pool = pools_[classes_[rng_.below(classes_.size())]];
  return pool[rng_.below(pool.size())];
}

std::vector<std::size_t> BalancedSampler::batch(std::size_t n) {
  std::vector<std::size_t> out(n);
  for (auto& i : out) i = next();
  return out;
}

TrainResult train(const std::vector<OutfitRecord>& train_set, const std::vector<OutfitRecord>* monitor,
                  const ModelConfig& model_config, const TrainConfig& config, const EpochCallback& on_epoch,
                  std::size_t monitor_every) {
  validate_train_config(config);
  if (train_set.empty()) throw Error("train: empty training set");
  Rng root(config.seed);
  TrainResult result;
  result.model = init_model(model_config, root.next());
  CompatModel& model = result.model;

  std::vector<Judgment> labels;
  for (const auto& r : train_set) labels.push_back(r.judgment);
  BalancedSampler sampler(labels, root.next());
  const std::vector<OutfitRecord>& monitor_set = monitor && !monitor->empty() ? *monitor : train_set;
  const std::size_t steps = (train_set.size() + config.batch_size - 1) / config.batch_size;
  const std::vector<ad::Tensor*> params = model.parameters();
  double best_acc = -1.0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    EpochMetrics m;
    m.epoch = epoch;
    m.lr = lr_at(config, epoch);
    for (std::size_t step = 0; step < steps; ++step) {
      const OutfitBatch batch = make_batch(train_set, sampler.batch(config.batch_size), model_config.dims);
      ad::Graph g;
      const ModelVars vars = bind_model(g, model, true);
      std::vector<ad::Tensor> grads;
      LossTerms terms;
      try {
        terms = total_loss(g, vars, model.partition, batch, config.alpha, config.reg);
        for (ad::Var v : g.grad(terms.total, vars.all(), false)) grads.push_back(v.value());
      } catch (const ad::NonFiniteError& e) {
        throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) + " step " +
                               std::to_string(step) + " (lr " + std::to_string(m.lr) + ", alpha " +
                               std::to_string(config.alpha) + "): " + e.what());
      }
      const double loss = terms.total.value().item();
      if (!std::isfinite(loss)) {
        throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) + ": non-finite loss");
      }
      m.loss += loss;
      m.judgment_loss += terms.judgment.value().item();
      m.reason_loss += terms.reason.value().item();
      sgd_step(params, grads, m.lr, config.weight_decay);
    }
    m.loss /= static_cast<double>(steps);
    m.judgment_loss /= static_cast<double>(steps);
    m.reason_loss /= static_cast<double>(steps);

    const bool last = epoch + 1 == config.epochs;
    if ((monitor_every > 0 && (epoch + 1) % monitor_every == 0) || last) {
      const Evaluation ev = evaluate(model, monitor_set);
      m.judgment_acc = ev.judgment_acc;
      m.reason_acc = ev.reason_acc;
      if (ev.judgment_acc > best_acc) {
        best_acc = ev.judgment_acc;
        result.best_epoch = epoch;
      }
    }
    result.log.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  return result;
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<EpochMetrics>& log) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "epoch,lr,loss,judgment_loss,reason_loss,judgment_acc,reason_acc\n";
  char buf[256];
  for (const auto& m : log) {
    std::snprintf(buf, sizeof buf, "%zu,%.6g,%.9g,%.9g,%.9g,%.4f,", m.epoch, m.lr, m.loss, m.judgment_loss,
                  m.reason_loss, m.judgment_acc);
    out << buf;
    if (m.reason_acc) {
      std::snprintf(buf, sizeof buf, "%.4f", *m.reason_acc);
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace compat_reason
