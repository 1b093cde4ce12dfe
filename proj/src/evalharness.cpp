#include "compat_reason/evalharness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include <json.hpp>

namespace compat_reason {

MeanStd mean_std(std::span<const double> values) {
  if (values.empty()) throw Error("mean_std of no values");
  MeanStd m;
  m.n = values.size();
  for (double v : values) m.mean += v;
  m.mean /= static_cast<double>(m.n);
  if (m.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - m.mean) * (v - m.mean);
    m.std = std::sqrt(ss / static_cast<double>(m.n - 1));
  }
  return m;
}

ExperimentConfig ExperimentConfig::from_config(const KeyValueConfig& cfg) {
  ExperimentConfig c;
  c.gen = GenerationConfig::from_config(cfg, "gen");
  c.train = TrainConfig::from_config(cfg, "train");
  cfg.reject_unknown({"model.intra_hidden1", "model.intra_hidden2", "model.intra_out", "model.inter_hidden1",
                      "model.inter_hidden2"},
                     "model.");
  auto layer = [&](const char* key, std::size_t& out) {
    if (auto v = cfg.get_int(std::string("model.") + key)) {
      if (*v < 1) throw ParseError(std::string("model.") + key + " must be at least 1");
      out = static_cast<std::size_t>(*v);
    }
  };
  layer("intra_hidden1", c.model.intra_hidden1);
  layer("intra_hidden2", c.model.intra_hidden2);
  layer("intra_out", c.model.intra_out);
  layer("inter_hidden1", c.model.inter_hidden1);
  layer("inter_hidden2", c.model.inter_hidden2);
  cfg.reject_unknown({"eval.seeds", "eval.threads"}, "eval.");
  if (auto v = cfg.get_string("eval.seeds")) {
    c.seeds.clear();
    std::size_t pos = 0;
    while (pos <= v->size()) {
      const auto comma = std::min(v->find(',', pos), v->size());
      std::string_view tok(v->data() + pos, comma - pos);
      while (!tok.empty() && tok.front() == ' ') tok.remove_prefix(1);
      while (!tok.empty() && tok.back() == ' ') tok.remove_suffix(1);
      std::uint64_t seed = 0;
      const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), seed);
      if (tok.empty() || ec != std::errc() || ptr != tok.data() + tok.size()) {
        throw ParseError("eval.seeds: bad seed '" + std::string(tok) + "'");
      }
      c.seeds.push_back(seed);
      pos = comma + 1;
    }
  }
  if (auto v = cfg.get_int("eval.threads")) {
    if (*v < 1) throw ParseError("eval.threads must be at least 1");
    c.threads = static_cast<std::size_t>(*v);
  }
  if (c.seeds.empty()) throw ParseError("eval.seeds is empty");
  return c;
}

std::size_t thread_count(std::size_t fallback) {
  if (const char* env = std::getenv("COMPAT_REASON_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return fallback;
}

namespace {

std::mutex progress_mutex;
ProgressCallback progress;

void report_progress(const RunResult& r) {
  std::lock_guard<std::mutex> lock(progress_mutex);
  if (progress) progress(r);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

RunResult score(const CompatModel& model, const std::vector<OutfitRecord>& test, const EvaluationOptions& eval) {
  const Evaluation ev = evaluate(model, test, eval);
  RunResult r;
  r.judgment_acc = ev.judgment_acc;
  r.reason_acc = ev.reason_acc;
  r.confusion = ev.confusion;
  return r;
}

TrainConfig seeded(const TrainConfig& base, std::uint64_t seed, double alpha, RegularizerKind reg) {
  TrainConfig t = base;
  t.seed = seed;
  t.alpha = alpha;
  t.reg = reg;
  return t;
}

CompatModel train_model(const ExperimentConfig& config, const Dataset& d, std::uint64_t seed, double alpha,
                        RegularizerKind reg) {
  return train(d.train, nullptr, config.model, seeded(config.train, seed, alpha, reg), {}, 0).model;
}

}  // namespace

void set_progress_callback(ProgressCallback callback) {
  std::lock_guard<std::mutex> lock(progress_mutex);
  progress = std::move(callback);
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& job) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::mutex m;
  std::size_t next = 0;
  std::exception_ptr failure;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        std::size_t i;
        {
          std::lock_guard<std::mutex> lock(m);
          if (next >= n || failure) return;
          i = next++;
        }
        try {
          job(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(m);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

Dataset dataset_for_seed(const ExperimentConfig& config, std::uint64_t seed) {
  return generate_dataset(config.gen, seed);
}

RunResult run_training(const ExperimentConfig& config, std::uint64_t seed, double alpha, RegularizerKind reg,
                       const EvaluationOptions& eval) {
  const auto t0 = std::chrono::steady_clock::now();
  const Dataset d = dataset_for_seed(config, seed);
  RunResult r = score(train_model(config, d, seed, alpha, reg), d.test, eval);
  r.method = alpha == 0.0 ? "noreg" : "ours";
  r.seed = seed;
  r.alpha = alpha;
  r.reg = reg;
  r.seconds = seconds_since(t0);
  report_progress(r);
  return r;
}

RunResult baseline_noreg(const ExperimentConfig& config, std::uint64_t seed) {
  return run_training(config, seed, 0.0, config.train.reg, {});
}

RunResult baseline_ifiv(const ExperimentConfig& config, std::uint64_t seed) {
  EvaluationOptions eval;
  eval.method = ReasonMethod::item_feature_influence;
  RunResult r = run_training(config, seed, 0.0, config.train.reg, eval);
  r.method = "ifiv";
  return r;
}

// ---- multitask baseline -----------------------------------------------------

namespace {

constexpr std::size_t kHeadHidden1 = 64;
constexpr std::size_t kHeadHidden2 = 32;

struct MultitaskVars {
  ModelVars base;
  MlpVars head;

  std::vector<ad::Var> all() const {
    std::vector<ad::Var> out = base.all();
    append_vars(head, out);
    return out;
  }
};

std::vector<ad::Tensor*> multitask_parameters(MultitaskModel& m) {
  std::vector<ad::Tensor*> out = m.base.parameters();
  for (auto& layer : m.reason_head.layers) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
  }
  return out;
}

}  // namespace

MultitaskModel train_multitask(const std::vector<OutfitRecord>& train_set, const ModelConfig& model_config,
                               const TrainConfig& config) {
  validate_train_config(config);
  if (train_set.empty()) throw Error("train_multitask: empty training set");
  Rng root(config.seed);
  MultitaskModel m;
  m.base = init_model(model_config, root.next());
  Rng head_rng(root.next());
  m.reason_head = init_mlp(model_config.x_dim(), kHeadHidden1, kHeadHidden2, kNumReasons, head_rng);

  std::vector<Judgment> labels;
  for (const auto& r : train_set) labels.push_back(r.judgment);
  BalancedSampler sampler(labels, root.next());
  const std::size_t steps = (train_set.size() + config.batch_size - 1) / config.batch_size;
  const std::vector<ad::Tensor*> params = multitask_parameters(m);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_at(config, epoch);
    for (std::size_t step = 0; step < steps; ++step) {
      const OutfitBatch batch = make_batch(train_set, sampler.batch(config.batch_size), model_config.dims);
      ad::Graph g;
      MultitaskVars vars{bind_model(g, m.base, true), bind_mlp(g, m.reason_head, true)};
      const ForwardPass fp = forward(g, vars.base, batch);
      const double inv_n = 1.0 / static_cast<double>(batch.size());

      std::vector<std::size_t> jt, rt;
      ad::Tensor mask(batch.size(), 1);
      for (std::size_t b = 0; b < batch.size(); ++b) {
        jt.push_back(index_of(batch.judgments[b]));
        const bool labelled = batch.judgments[b] != Judgment::normal && batch.reasons[b];
        rt.push_back(labelled ? index_of(*batch.reasons[b]) : 0);
        mask(b, 0) = labelled ? 1.0 : 0.0;
      }
      ad::Var loss = ad::scale(ad::sum(ad::softmax_cross_entropy_rows(fp.y, jt)), inv_n);
      ad::Var head = mlp_forward(vars.head, fp.x);
      ad::Var reason = ad::mul(ad::softmax_cross_entropy_rows(head, rt), g.constant(std::move(mask)));
      loss = ad::add(loss, ad::scale(ad::sum(reason), inv_n));
      if (!std::isfinite(loss.value().item())) {
        throw TrainingDiverged("multitask training diverged at epoch " + std::to_string(epoch));
      }
      std::vector<ad::Tensor> grads;
      for (ad::Var v : g.grad(loss, vars.all(), false)) grads.push_back(v.value());
      sgd_step(params, grads, lr, config.weight_decay);
    }
  }
  return m;
}

Evaluation evaluate_multitask(const MultitaskModel& model, const std::vector<OutfitRecord>& records) {
  if (records.empty()) throw Error("evaluate_multitask: no records");
  ad::Graph g;
  const OutfitBatch batch = make_batch(records, model.base.config.dims);
  const ForwardPass fp = forward(g, bind_model(g, model.base, false), batch);
  const ad::Var head = mlp_forward(bind_mlp(g, model.reason_head, false), fp.x);
  const std::vector<std::size_t> rmax = ad::argmax_rows(head.value());

  Evaluation ev;
  ev.count = records.size();
  ev.predicted_judgments = predict_judgments(fp.y.value());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    ev.predicted_reasons.push_back(ev.predicted_judgments[b] == Judgment::normal
                                       ? std::nullopt
                                       : std::optional<Reason>(static_cast<Reason>(rmax[b])));
  }
  ev.judgment_acc = judgment_accuracy(ev.predicted_judgments, batch.judgments);
  ev.reason_acc = reason_accuracy(ev.predicted_judgments, ev.predicted_reasons, batch.judgments, batch.reasons);
  ev.confusion = confusion_matrix(ev.predicted_judgments, batch.judgments);
  return ev;
}

RunResult baseline_multitask(const ExperimentConfig& config, std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  const Dataset d = dataset_for_seed(config, seed);
  const MultitaskModel m = train_multitask(d.train, config.model, seeded(config.train, seed, 0.0, config.train.reg));
  const Evaluation ev = evaluate_multitask(m, d.test);
  RunResult r;
  r.method = "multitask";
  r.seed = seed;
  r.judgment_acc = ev.judgment_acc;
  r.reason_acc = ev.reason_acc;
  r.confusion = ev.confusion;
  r.seconds = seconds_since(t0);
  report_progress(r);
  return r;
}

// ---- sweeps -----------------------------------------------------------------

RunReport compare_methods(const ExperimentConfig& config) {
  const std::size_t n = config.seeds.size();
  std::vector<RunResult> ours(n), noreg(n), ifiv(n), multi(n);
  parallel_for(3 * n, config.threads, [&](std::size_t job) {
    const std::size_t i = job % n;
    const std::uint64_t seed = config.seeds[i];
    switch (job / n) {
      case 0: ours[i] = run_training(config, seed, config.train.alpha, config.train.reg); break;
      case 1: {
        // noreg and ifiv score the same alpha = 0 model
        const auto t0 = std::chrono::steady_clock::now();
        const Dataset d = dataset_for_seed(config, seed);
        const CompatModel m = train_model(config, d, seed, 0.0, config.train.reg);
        noreg[i] = score(m, d.test, {});
        EvaluationOptions e;
        e.method = ReasonMethod::item_feature_influence;
        ifiv[i] = score(m, d.test, e);
        for (RunResult* r : {&noreg[i], &ifiv[i]}) {
          r->seed = seed;
          r->reg = config.train.reg;
          r->seconds = seconds_since(t0);
        }
        noreg[i].method = "noreg";
        ifiv[i].method = "ifiv";
        report_progress(noreg[i]);
        report_progress(ifiv[i]);
        break;
      }
      case 2: multi[i] = baseline_multitask(config, seed); break;
      default: break;
    }
  });
  RunReport report;
  report.name = "compare";
  for (auto* v : {&ours, &noreg, &ifiv, &multi}) report.runs.insert(report.runs.end(), v->begin(), v->end());
  return report;
}

RunReport sweep_alpha(const ExperimentConfig& config, const std::vector<double>& alphas,
                      const std::vector<RegularizerKind>& regs) {
  for (double a : alphas) {
    if (!(a >= 0.0) || !std::isfinite(a)) throw Error("sweep_alpha: alpha must be a non-negative number");
  }
  if (regs.empty()) throw Error("sweep_alpha: no regularizers");
  struct Job {
    std::uint64_t seed;
    double alpha;
    RegularizerKind reg;
  };
  std::vector<Job> jobs;
  const bool has_zero = std::find(alphas.begin(), alphas.end(), 0.0) != alphas.end();
  for (std::uint64_t seed : config.seeds) {
    if (has_zero) jobs.push_back({seed, 0.0, regs.front()});
    for (RegularizerKind reg : regs) {
      for (double a : alphas) {
        if (a != 0.0) jobs.push_back({seed, a, reg});
      }
    }
  }
  std::vector<RunResult> results(jobs.size());
  parallel_for(jobs.size(), config.threads, [&](std::size_t i) {
    results[i] = run_training(config, jobs[i].seed, jobs[i].alpha, jobs[i].reg);
  });

  RunReport report;
  report.name = "sweep_alpha";
  for (RegularizerKind reg : regs) {
    for (double a : alphas) {
      for (std::uint64_t seed : config.seeds) {
        for (std::size_t i = 0; i < jobs.size(); ++i) {
          const Job& j = jobs[i];
          if (j.seed != seed || j.alpha != a || (a != 0.0 && j.reg != reg)) continue;
          RunResult r = results[i];
          r.reg = reg;
          r.method = "ours";
          report.runs.push_back(r);
          break;
        }
      }
    }
  }
  return report;
}

RunReport sweep_formulations(const ExperimentConfig& config) {
  const std::size_t n = config.seeds.size();
  std::vector<std::vector<RunResult>> per_seed(n);
  parallel_for(n, config.threads, [&](std::size_t i) {
    const std::uint64_t seed = config.seeds[i];
    const auto t0 = std::chrono::steady_clock::now();
    const Dataset d = dataset_for_seed(config, seed);
    const CompatModel m = train_model(config, d, seed, 0.0, config.train.reg);
    for (Formulation f : kAllFormulations) {
      EvaluationOptions e;
      e.method = ReasonMethod::formulation;
      e.formulation = f;
      RunResult r = score(m, d.test, e);
      r.method = std::string(to_string(f));
      r.seed = seed;
      r.reg = config.train.reg;
      r.seconds = seconds_since(t0);
      report_progress(r);
      per_seed[i].push_back(r);
    }
  });
  RunReport report;
  report.name = "sweep_formulations";
  for (std::size_t k = 0; k < kAllFormulations.size(); ++k) {
    for (std::size_t i = 0; i < n; ++i) report.runs.push_back(per_seed[i][k]);
  }
  return report;
}

std::vector<SummaryRow> RunReport::summary() const {
  std::vector<SummaryRow> rows;
  std::vector<std::vector<double>> js, rs;
  for (const RunResult& r : runs) {
    std::size_t k = 0;
    while (k < rows.size() && !(rows[k].method == r.method && rows[k].alpha == r.alpha && rows[k].reg == r.reg)) ++k;
    if (k == rows.size()) {
      rows.push_back({r.method, r.alpha, r.reg, {}, {}, 0});
      js.emplace_back();
      rs.emplace_back();
    }
    js[k].push_back(r.judgment_acc);
    if (r.reason_acc) {
      rs[k].push_back(*r.reason_acc);
    } else {
      ++rows[k].undefined;
    }
  }
  for (std::size_t k = 0; k < rows.size(); ++k) {
    rows[k].judgment = mean_std(js[k]);
    if (!rs[k].empty()) rows[k].reason = mean_std(rs[k]);
  }
  return rows;
}

// ---- reports ------------------------------------------------------------------

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string fmt_alpha(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

void write_runs_csv(const std::filesystem::path& path, const RunReport& report) {
  std::ofstream out = open_out(path);
  out << "method,reg,alpha,seed,judgment_acc,reason_acc,seconds";
  for (Judgment t : kAllJudgments) {
    for (Judgment p : kAllJudgments) out << ",n_" << to_string(t) << "_as_" << to_string(p);
  }
  out << '\n';
  for (const RunResult& r : report.runs) {
    out << r.method << ',' << to_string(r.reg) << ',' << fmt_alpha(r.alpha) << ',' << r.seed << ','
        << fmt(r.judgment_acc) << ',' << (r.reason_acc ? fmt(*r.reason_acc) : "") << ',' << fmt(r.seconds);
    for (const auto& row : r.confusion) {
      for (std::size_t v : row) out << ',' << v;
    }
    out << '\n';
  }
  if (!out) throw Error("write failed for " + path.string());
}

void write_summary_csv(const std::filesystem::path& path, const RunReport& report) {
  std::ofstream out = open_out(path);
  out << "method,reg,alpha,runs,judgment_acc_mean,judgment_acc_std,reason_acc_mean,reason_acc_std,reason_undefined\n";
  for (const SummaryRow& s : report.summary()) {
    out << s.method << ',' << to_string(s.reg) << ',' << fmt_alpha(s.alpha) << ',' << s.judgment.n << ','
        << fmt(s.judgment.mean) << ',' << fmt(s.judgment.std) << ',' << (s.reason.n ? fmt(s.reason.mean) : "") << ','
        << (s.reason.n ? fmt(s.reason.std) : "") << ',' << s.undefined << '\n';
  }
  if (!out) throw Error("write failed for " + path.string());
}

void write_plot_json(const std::filesystem::path& path, const RunReport& report) {
  using nlohmann::json;
  json series = json::array();
  std::map<std::pair<std::string, std::string>, std::size_t> where;
  for (const SummaryRow& s : report.summary()) {
    const auto key = std::make_pair(s.method, std::string(to_string(s.reg)));
    if (!where.count(key)) {
      where[key] = series.size();
      series.push_back({{"method", s.method}, {"reg", key.second}, {"points", json::array()}});
    }
    json point = {{"alpha", s.alpha},
                  {"runs", s.judgment.n},
                  {"judgment_acc", s.judgment.mean},
                  {"judgment_std", s.judgment.std}};
    point["reason_acc"] = s.reason.n ? json(s.reason.mean) : json(nullptr);
    point["reason_std"] = s.reason.n ? json(s.reason.std) : json(nullptr);
    series[where[key]]["points"].push_back(point);
  }
  std::ofstream out = open_out(path);
  out << json{{"name", report.name}, {"series", series}}.dump(2) << '\n';
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace compat_reason
