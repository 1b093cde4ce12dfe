// compat-reason: command-line entry point.
//
// Errors print one line to stderr, "error: <kind>: <message>", and exit 1.
// Usage errors exit 2.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "compat_reason/colorfeat.hpp"
#include "compat_reason/evalharness.hpp"
#include "compat_reason/explain.hpp"
#include "compat_reason/selfcheck.hpp"

namespace fs = std::filesystem;
using namespace compat_reason;

namespace {

struct UsageError : Error {
  using Error::Error;
};

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> alpha;
  std::string reg;
  std::string out;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool with_training) {
  cmd->add_option("--config", o.config, "key-value config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "seed (data and training)");
  if (with_training) {
    cmd->add_option("--alpha", o.alpha, "reason regularizer weight");
    cmd->add_option("--reg", o.reg, "regularizer: ce, linear or square");
  }
}

// Reads --config, applies flag overrides and checks that every key is known.
ExperimentConfig load_experiment(const CommonOptions& o) {
  KeyValueConfig cfg = o.config.empty() ? KeyValueConfig{} : KeyValueConfig::load(o.config);
  if (o.alpha) cfg.set("train.alpha", std::to_string(*o.alpha));
  if (!o.reg.empty()) cfg.set("train.reg", o.reg);
  ExperimentConfig e = ExperimentConfig::from_config(cfg);
  if (o.seed) {
    e.seeds = {*o.seed};
    e.train.seed = *o.seed;
  } else if (auto s = cfg.get_int("train.seed")) {
    e.train.seed = static_cast<std::uint64_t>(*s);
  }
  const auto unused = cfg.unused_keys();
  if (!unused.empty()) throw ParseError("unknown config key '" + unused.front() + "'");
  e.threads = thread_count(e.threads);
  return e;
}

fs::path require_out(const std::string& out) {
  if (out.empty()) throw UsageError("--out is required");
  return out;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error("cannot create directory " + dir.string());
}

void ensure_parent(const fs::path& file) {
  if (file.has_parent_path()) ensure_dir(file.parent_path());
}

void log_epoch(const EpochMetrics& m) {
  std::fprintf(stderr, "epoch %zu lr %g loss %.5f judgment %.5f reason %.5f", m.epoch, m.lr, m.loss, m.judgment_loss,
               m.reason_loss);
  if (m.reason_acc || m.judgment_acc > 0.0) {
    std::fprintf(stderr, " monitor_j %.2f monitor_r %s", m.judgment_acc,
                 m.reason_acc ? std::to_string(*m.reason_acc).c_str() : "undefined");
  }
  std::fprintf(stderr, "\n");
}

std::string fmt4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

// ---- gen-data ------------------------------------------------------------------

void cmd_gen_data(const CommonOptions& o) {
  const ExperimentConfig e = load_experiment(o);
  const fs::path dir = require_out(o.out);
  ensure_dir(dir);
  const std::uint64_t seed = o.seed.value_or(e.train.seed);
  const Dataset d = generate_dataset(e.gen, seed);
  save_feature_records(dir / "train.ndjson", d.train);
  save_feature_records(dir / "val.ndjson", d.val);
  save_feature_records(dir / "test.ndjson", d.test);
  save_feature_records(dir / "test_random.ndjson", make_test_random(d.test, seed));
  std::printf("wrote %zu train, %zu val, %zu test outfits to %s\n", d.train.size(), d.val.size(), d.test.size(),
              dir.string().c_str());
}

// ---- featurize -----------------------------------------------------------------

void cmd_featurize(const std::string& image, const std::string& out) {
  const fs::path path(image);
  const std::vector<Rgb> pixels = path.extension() == ".ppm" ? read_ppm(path) : read_pixel_text(path);
  const ColorHistogram hist = color_histogram(pixels);
  const ColorFeature feature = build_color_feature(hist);
  nlohmann::json j;
  j["source"] = path.filename().string();
  j["pixels"] = pixels.size();
  nlohmann::json bins = nlohmann::json::array();
  for (const auto& [code, ratio] : hist) bins.push_back({{"h", code.h}, {"s", code.s}, {"b", code.b}, {"ratio", ratio}});
  j["histogram"] = bins;
  j["feature"] = feature.values;
  const std::string text = j.dump() + "\n";
  if (out.empty()) {
    std::cout << text;
  } else {
    ensure_parent(out);
    std::ofstream f(out);
    if (!(f << text)) throw Error("cannot write " + out);
  }
}

// ---- train ---------------------------------------------------------------------

void cmd_train(const CommonOptions& o, const std::string& data, const std::string& val, const std::string& log_csv,
               bool quiet) {
  const ExperimentConfig e = load_experiment(o);
  const fs::path out = require_out(o.out);
  const auto train_set = load_feature_records(data, e.model.dims);
  std::vector<OutfitRecord> val_set;
  if (!val.empty()) val_set = load_feature_records(val, e.model.dims);
  ensure_parent(out);
  if (!log_csv.empty()) ensure_parent(log_csv);
  const TrainResult r = train(train_set, val_set.empty() ? nullptr : &val_set, e.model, e.train,
                              quiet ? EpochCallback{} : EpochCallback(log_epoch), val_set.empty() ? 0 : 1);
  save_checkpoint(r.model, out);
  if (!log_csv.empty()) write_metrics_csv(log_csv, r.log);
  std::printf("checkpoint %s fnv1a64 %s\n", out.string().c_str(),
              hex64(fnv1a64(serialize_checkpoint(r.model))).c_str());
}

// ---- eval ----------------------------------------------------------------------

void cmd_eval(const std::string& model_path, const std::string& data, const std::string& method,
              const std::string& out, const std::string& predictions) {
  const CompatModel model = load_checkpoint(model_path);
  const auto records = load_feature_records(data, model.config.dims);
  const Evaluation ev = evaluate(model, records, parse_evaluation_method(method));
  std::ostringstream csv;
  csv << "data,method,count,judgment_acc,reason_acc";
  for (Judgment t : kAllJudgments)
    for (Judgment p : kAllJudgments) csv << ",n_" << to_string(t) << "_as_" << to_string(p);
  csv << "\n"
      << fs::path(data).filename().string() << ',' << method << ',' << ev.count << ',' << fmt4(ev.judgment_acc) << ','
      << (ev.reason_acc ? fmt4(*ev.reason_acc) : "");
  for (const auto& row : ev.confusion)
    for (auto v : row) csv << ',' << v;
  csv << '\n';
  if (out.empty()) {
    std::cout << csv.str();
  } else {
    ensure_parent(out);
    std::ofstream f(out);
    if (!(f << csv.str())) throw Error("cannot write " + out);
  }
  if (!predictions.empty()) {
    ensure_parent(predictions);
    std::ofstream f(predictions);
    f << "outfit_id,judgment,reason,predicted_judgment,predicted_reason\n";
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto& r = records[i];
      f << r.outfit_id << ',' << to_string(r.judgment) << ',' << (r.reason ? to_string(*r.reason) : "") << ','
        << to_string(ev.predicted_judgments[i]) << ','
        << (ev.predicted_reasons[i] ? to_string(*ev.predicted_reasons[i]) : "") << '\n';
    }
    if (!f) throw Error("cannot write " + predictions);
  }
}

// ---- explain -------------------------------------------------------------------

std::string contribution_table(const FactorTable& t) {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-14s %9s %9s %9s %9s %9s\n", "", "color", "print", "material", "silhouette",
                "detail");
  os << buf;
  auto row = [&](const std::string& label, const std::array<double, kNumFactors>& v) {
    std::snprintf(buf, sizeof buf, "%-14s %9.4f %9.4f %9.4f %9.4f %9.4f\n", label.c_str(), v[0], v[1], v[2], v[3],
                  v[4]);
    os << buf;
  };
  row("C " + std::string(to_string(t.judgment)), t.contribution);
  for (Judgment j : kAllJudgments) row("C+ " + std::string(to_string(j)), t.positive[index_of(j)]);
  if (t.judgment != Judgment::normal) {
    std::array<double, kNumFactors> diff{};
    for (std::size_t f = 0; f < kNumFactors; ++f) {
      diff[f] = t.positive[index_of(t.judgment)][f] - t.positive[index_of(Judgment::normal)][f];
    }
    row("C+ diff", diff);
  }
  return os.str();
}

void cmd_explain(const std::string& model_path, const std::string& data, const std::string& id, std::size_t index,
                 const std::string& templates, const std::string& out) {
  const CompatModel model = load_checkpoint(model_path);
  const auto records = load_feature_records(data, model.config.dims);
  if (records.empty()) throw Error(data + ": no records");
  std::size_t k = index;
  if (!id.empty()) {
    auto it = std::find_if(records.begin(), records.end(), [&](const OutfitRecord& r) { return r.outfit_id == id; });
    if (it == records.end()) throw Error("no outfit with id '" + id + "'");
    k = static_cast<std::size_t>(it - records.begin());
  }
  if (k >= records.size()) throw Error("index " + std::to_string(k) + " out of range");
  const OutfitRecord& rec = records[k];
  const FactorTable t = factor_table(model, rec);
  AttributeSet attrs = rec.attributes;
  if (auto f = t.design_factor()) attrs["design_factor"] = std::string(to_string(*f));
  const TemplateTable table = templates.empty() ? TemplateTable::standard() : TemplateTable::load(templates);
  const std::string sentence = generate_explanation(table, t.judgment, t.reason, attrs);

  std::ostringstream os;
  os << "outfit " << rec.outfit_id << "\n";
  os << "judgment " << to_string(t.judgment) << "\n";
  os << "reason " << (t.reason ? std::string(to_string(*t.reason)) : "none") << "\n";
  const auto p = softmax(t.logits);
  char buf[128];
  std::snprintf(buf, sizeof buf, "probabilities good %.4f normal %.4f bad %.4f\n", p[0], p[1], p[2]);
  os << buf;
  os << "sentence " << sentence << "\n";
  os << contribution_table(t);
  if (out.empty()) {
    std::cout << os.str();
  } else {
    ensure_parent(out);
    std::ofstream f(out);
    if (!(f << os.str())) throw Error("cannot write " + out);
  }
}

// ---- sweeps --------------------------------------------------------------------

std::vector<double> parse_doubles(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    const auto v = KeyValueConfig::parse("v = " + tok, "--alphas").get_double("v");
    if (!v) throw ParseError("--alphas: empty entry");
    out.push_back(*v);
  }
  if (out.empty()) throw ParseError("--alphas is empty");
  return out;
}

std::vector<RegularizerKind> parse_regs(const std::string& text) {
  std::vector<RegularizerKind> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(parse_regularizer(tok));
  if (out.empty()) throw ParseError("--regs is empty");
  return out;
}

void print_summary(const RunReport& report) {
  for (const SummaryRow& s : report.summary()) {
    std::printf("%-36s reg %-13s alpha %-8g judgment %6.2f +- %5.2f  reason %s\n", s.method.c_str(),
                std::string(to_string(s.reg)).c_str(), s.alpha, s.judgment.mean, s.judgment.std,
                s.reason.n ? (fmt4(s.reason.mean) + " +- " + fmt4(s.reason.std)).c_str() : "undefined");
  }
}

void write_report(const fs::path& dir, const RunReport& report) {
  ensure_dir(dir);
  write_runs_csv(dir / "runs.csv", report);
  write_summary_csv(dir / "summary.csv", report);
  write_plot_json(dir / "plot.json", report);
  print_summary(report);
}

void progress_to_stderr(const RunResult& r) {
  std::fprintf(stderr, "run %s seed %llu alpha %g reg %s: judgment %.2f reason %s (%.1fs)\n", r.method.c_str(),
               static_cast<unsigned long long>(r.seed), r.alpha, std::string(to_string(r.reg)).c_str(),
               r.judgment_acc, r.reason_acc ? fmt4(*r.reason_acc).c_str() : "undefined", r.seconds);
}

std::string error_kind(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e)) return "usage";
  if (dynamic_cast<const TrainingDiverged*>(&e)) return "diverged";
  if (dynamic_cast<const CheckpointError*>(&e)) return "checkpoint";
  if (dynamic_cast<const MissingAttributeError*>(&e)) return "missing_attribute";
  if (dynamic_cast<const ColorRangeError*>(&e)) return "color_range";
  if (dynamic_cast<const ParseError*>(&e)) return "parse";
  if (dynamic_cast<const DimensionError*>(&e)) return "dimension";
  if (dynamic_cast<const ad::NonFiniteError*>(&e)) return "non_finite";
  if (dynamic_cast<const Error*>(&e)) return "runtime";
  return "internal";
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Outfit evaluation with traced reasons"};
  app.name("compat-reason");
  app.require_subcommand(1);

  CommonOptions gen_o, train_o, sweep_o, form_o, cmp_o;
  std::string image, feat_out;
  std::string data, val, log_csv, model_path, method = "ours", eval_out, predictions;
  std::string explain_id, templates, explain_out;
  std::size_t explain_index = 0;
  std::string alphas = "0,0.1,1,10,100,1000", regs = "ce,linear,square";
  std::size_t check_seeds = 20;
  bool quiet = false;

  auto* gen = app.add_subcommand("gen-data", "generate synthetic train/val/test feature files");
  add_common(gen, gen_o, false);
  gen->add_option("--out", gen_o.out, "output directory")->required();

  auto* feat = app.add_subcommand("featurize", "colour feature of an image (PPM) or pixel text file");
  feat->add_option("--image", image, "input .ppm or pixel text file")->required()->check(CLI::ExistingFile);
  feat->add_option("--out", feat_out, "output JSON file (default stdout)");

  auto* tr = app.add_subcommand("train", "train a model and write a checkpoint");
  add_common(tr, train_o, true);
  tr->add_option("--data", data, "training NDJSON")->required()->check(CLI::ExistingFile);
  tr->add_option("--val", val, "validation NDJSON scored after each epoch")->check(CLI::ExistingFile);
  tr->add_option("--log", log_csv, "per-epoch metrics CSV");
  tr->add_option("--out", train_o.out, "checkpoint path")->required();
  tr->add_flag("--quiet", quiet, "no per-epoch log");

  auto* ev = app.add_subcommand("eval", "judgment and reason accuracy on a labelled file");
  ev->add_option("--model", model_path, "checkpoint")->required()->check(CLI::ExistingFile);
  ev->add_option("--data", data, "labelled NDJSON")->required()->check(CLI::ExistingFile);
  ev->add_option("--method", method, "ours, ifiv or F1..F6");
  ev->add_option("--out", eval_out, "report CSV (default stdout)");
  ev->add_option("--predictions", predictions, "per-outfit predictions CSV");

  auto* ex = app.add_subcommand("explain", "judgment, reason, sentence and contribution table for one outfit");
  ex->add_option("--model", model_path, "checkpoint")->required()->check(CLI::ExistingFile);
  ex->add_option("--data", data, "NDJSON file")->required()->check(CLI::ExistingFile);
  ex->add_option("--id", explain_id, "outfit id");
  ex->add_option("--index", explain_index, "record index (default 0)");
  ex->add_option("--templates", templates, "template file")->check(CLI::ExistingFile);
  ex->add_option("--out", explain_out, "output text file (default stdout)");

  auto* sa = app.add_subcommand("sweep-alpha", "alpha x regularizer sweep over seeds");
  add_common(sa, sweep_o, false);
  sa->add_option("--alphas", alphas, "comma-separated alpha grid");
  sa->add_option("--regs", regs, "comma-separated regularizers");
  sa->add_option("--out", sweep_o.out, "output directory")->required();

  auto* sf = app.add_subcommand("sweep-formulations", "reason accuracy of each formulation at alpha = 0");
  add_common(sf, form_o, false);
  sf->add_option("--out", form_o.out, "output directory")->required();

  auto* cmp = app.add_subcommand("compare", "ours vs noreg, ifiv and multitask over seeds");
  add_common(cmp, cmp_o, true);
  cmp->add_option("--out", cmp_o.out, "output directory")->required();

  auto* sc = app.add_subcommand("selfcheck", "finite-difference gradient checks");
  sc->add_option("--seeds", check_seeds, "number of random cases");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::fprintf(stderr, "error: usage: %s\n", one_line(e.what()).c_str());
    return 2;
  }

  try {
    if (*gen) {
      cmd_gen_data(gen_o);
    } else if (*feat) {
      cmd_featurize(image, feat_out);
    } else if (*tr) {
      cmd_train(train_o, data, val, log_csv, quiet);
    } else if (*ev) {
      cmd_eval(model_path, data, method, eval_out, predictions);
    } else if (*ex) {
      cmd_explain(model_path, data, explain_id, explain_index, templates, explain_out);
    } else if (*sa) {
      const auto a = parse_doubles(alphas);
      const auto r = parse_regs(regs);
      const ExperimentConfig e = load_experiment(sweep_o);
      set_progress_callback(progress_to_stderr);
      write_report(require_out(sweep_o.out), sweep_alpha(e, a, r));
    } else if (*sf) {
      const ExperimentConfig e = load_experiment(form_o);
      set_progress_callback(progress_to_stderr);
      write_report(require_out(form_o.out), sweep_formulations(e));
    } else if (*cmp) {
      const ExperimentConfig e = load_experiment(cmp_o);
      set_progress_callback(progress_to_stderr);
      write_report(require_out(cmp_o.out), compare_methods(e));
    } else if (*sc) {
      const SelfCheckReport r = run_selfcheck(check_seeds);
      for (const auto& line : r.lines) std::printf("%s\n", line.c_str());
      if (!r.passed) throw Error("selfcheck failed");
    }
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: usage: %s\n", one_line(e.what()).c_str());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s: %s\n", error_kind(e).c_str(), one_line(e.what()).c_str());
    return 1;
  }
  return 0;
}
