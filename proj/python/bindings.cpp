// Python module compat_reason._core.
//
// Configuration is passed as key-value text (the same format as the CLI
// --config files); judgments, reasons and factors are plain strings.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "compat_reason/colorfeat.hpp"
#include "compat_reason/evalharness.hpp"
#include "compat_reason/explain.hpp"
#include "compat_reason/selfcheck.hpp"

namespace py = pybind11;
using namespace compat_reason;

namespace {

std::optional<std::string> reason_name(const std::optional<Reason>& r) {
  if (!r) return std::nullopt;
  return std::string(to_string(*r));
}

ExperimentConfig experiment(const std::string& config_text) {
  const KeyValueConfig cfg = KeyValueConfig::parse(config_text, "<python>");
  ExperimentConfig e = ExperimentConfig::from_config(cfg);
  const auto unused = cfg.unused_keys();
  if (!unused.empty()) throw ParseError("unknown config key '" + unused.front() + "'");
  return e;
}

py::dict evaluation_dict(const Evaluation& ev) {
  py::dict d;
  d["count"] = ev.count;
  d["judgment_acc"] = ev.judgment_acc;
  d["reason_acc"] = ev.reason_acc;
  d["confusion"] = ev.confusion;
  std::vector<std::string> js;
  std::vector<std::optional<std::string>> rs;
  for (std::size_t i = 0; i < ev.predicted_judgments.size(); ++i) {
    js.emplace_back(to_string(ev.predicted_judgments[i]));
    rs.push_back(reason_name(ev.predicted_reasons[i]));
  }
  d["judgments"] = js;
  d["reasons"] = rs;
  return d;
}

py::dict explain_dict(const CompatModel& model, const OutfitRecord& record,
                      const std::optional<std::filesystem::path>& templates) {
  const FactorTable t = factor_table(model, record);
  AttributeSet attrs = record.attributes;
  if (auto f = t.design_factor()) attrs["design_factor"] = std::string(to_string(*f));
  const TemplateTable table = templates ? TemplateTable::load(*templates) : TemplateTable::standard();
  py::dict d;
  d["judgment"] = std::string(to_string(t.judgment));
  d["reason"] = reason_name(t.reason);
  d["sentence"] = generate_explanation(table, t.judgment, t.reason, attrs);
  d["logits"] = t.logits;
  py::dict contribution, positive;
  for (Factor f : kAllFactors) contribution[py::str(std::string(to_string(f)))] = t.contribution[index_of(f)];
  for (Judgment j : kAllJudgments) {
    py::dict row;
    for (Factor f : kAllFactors) row[py::str(std::string(to_string(f)))] = t.positive[index_of(j)][index_of(f)];
    positive[py::str(std::string(to_string(j)))] = row;
  }
  d["contribution"] = contribution;
  d["positive"] = positive;
  if (auto f = t.design_factor()) d["design_factor"] = std::string(to_string(*f));
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Outfit judgment with traced reasons";

  // Translators run newest first, so the base class goes first.
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_IOError);
  py::register_exception<TrainingDiverged>(m, "TrainingDiverged", PyExc_ArithmeticError);
  py::register_exception<MissingAttributeError>(m, "MissingAttributeError", PyExc_KeyError);

  m.def(
      "rgb_to_hsb", [](double r, double g, double b) {
        const Hsb h = rgb_to_hsb(r, g, b);
        return std::make_tuple(h.h, h.s, h.b);
      },
      py::arg("r"), py::arg("g"), py::arg("b"), "RGB in [0, 1] to (hue degrees, saturation, brightness).");
  m.def(
      "foco_quantize", [](double h, double s, double b) {
        const FocoCode c = foco_quantize(h, s, b);
        return std::make_tuple(c.h, c.s, c.b);
      },
      py::arg("h"), py::arg("s"), py::arg("b"), "HSB to 1-based FOCO levels (h, s, b).");
  m.def(
      "color_feature",
      [](const std::vector<std::tuple<double, double, double>>& pixels) {
        std::vector<Rgb> px;
        px.reserve(pixels.size());
        for (const auto& [r, g, b] : pixels) px.push_back({r, g, b});
        const ColorHistogram hist = color_histogram(px);
        std::map<std::tuple<int, int, int>, double> out;
        for (const auto& [code, ratio] : hist) out[{code.h, code.s, code.b}] = ratio;
        return std::make_pair(out, build_color_feature(hist).to_vector());
      },
      py::arg("pixels"), "(histogram {(h, s, b): ratio}, 25-element feature) of RGB pixels in [0, 1].");

  py::class_<OutfitRecord>(m, "Record")
      .def_readonly("outfit_id", &OutfitRecord::outfit_id)
      .def_property_readonly("judgment", [](const OutfitRecord& r) { return std::string(to_string(r.judgment)); })
      .def_property_readonly("reason", [](const OutfitRecord& r) { return reason_name(r.reason); })
      .def_readonly("attributes", &OutfitRecord::attributes)
      .def_property_readonly("top",
                             [](const OutfitRecord& r) {
                               std::map<std::string, std::vector<double>> out;
                               for (Factor f : kAllFactors) out[std::string(to_string(f))] = r.top[f];
                               return out;
                             })
      .def_property_readonly("bottom",
                             [](const OutfitRecord& r) {
                               std::map<std::string, std::vector<double>> out;
                               for (Factor f : kAllFactors) out[std::string(to_string(f))] = r.bottom[f];
                               return out;
                             })
      .def("to_json", &format_record)
      .def("__repr__", [](const OutfitRecord& r) {
        return "<Record " + r.outfit_id + " " + std::string(to_string(r.judgment)) +
               (r.reason ? "/" + std::string(to_string(*r.reason)) : "") + ">";
      });

  m.def(
      "parse_record", [](const std::string& line) { return parse_record(line, FeatureDims{}); }, py::arg("line"));
  m.def(
      "load_records", [](const std::filesystem::path& p) { return load_feature_records(p, FeatureDims{}); },
      py::arg("path"));
  m.def("save_records", &save_feature_records, py::arg("path"), py::arg("records"));

  m.def(
      "generate_dataset",
      [](std::uint64_t seed, const std::string& config) {
        const ExperimentConfig e = experiment(config);
        const Dataset d = generate_dataset(e.gen, seed);
        py::dict out;
        out["train"] = d.train;
        out["val"] = d.val;
        out["test"] = d.test;
        out["test_random"] = make_test_random(d.test, seed);
        return out;
      },
      py::arg("seed"), py::arg("config") = "",
      "Synthetic splits {'train', 'val', 'test', 'test_random'}; config is key-value text with a [gen] section.");

  py::class_<CompatModel>(m, "Model")
      .def_static("load", [](const std::filesystem::path& p) { return load_checkpoint(p); }, py::arg("path"))
      .def("save", [](const CompatModel& model, const std::filesystem::path& p) { save_checkpoint(model, p); },
           py::arg("path"))
      .def("fingerprint", [](const CompatModel& model) { return hex64(fnv1a64(serialize_checkpoint(model))); })
      .def_property_readonly("parameter_count", &CompatModel::parameter_count)
      .def_property_readonly("x_dim", [](const CompatModel& model) { return model.config.x_dim(); })
      .def(
          "evaluate",
          [](const CompatModel& model, const std::vector<OutfitRecord>& records, const std::string& method) {
            return evaluation_dict(evaluate(model, records, parse_evaluation_method(method)));
          },
          py::arg("records"), py::arg("method") = "ours")
      .def("explain", &explain_dict, py::arg("record"), py::arg("templates") = std::nullopt,
           "Judgment, reason, sentence and per-factor contribution table for one outfit.");

  m.def(
      "train",
      [](const std::vector<OutfitRecord>& records, std::uint64_t seed, const std::string& config,
         std::optional<double> alpha, std::optional<std::string> reg) {
        ExperimentConfig e = experiment(config);
        e.train.seed = seed;
        if (alpha) e.train.alpha = *alpha;
        if (reg) e.train.reg = parse_regularizer(*reg);
        py::gil_scoped_release release;
        return train(records, nullptr, e.model, e.train, {}, 0).model;
      },
      py::arg("records"), py::arg("seed") = 0, py::arg("config") = "", py::arg("alpha") = std::nullopt,
      py::arg("reg") = std::nullopt, "Train on records; config is key-value text with [train] and [model] sections.");

  m.def(
      "explain_sentence",
      [](const std::string& judgment, const std::optional<std::string>& reason, const AttributeSet& attributes,
         const std::optional<std::filesystem::path>& templates) {
        const TemplateTable table = templates ? TemplateTable::load(*templates) : TemplateTable::standard();
        std::optional<Reason> r;
        if (reason) r = parse_reason(*reason);
        return generate_explanation(table, parse_judgment(judgment), r, attributes);
      },
      py::arg("judgment"), py::arg("reason"), py::arg("attributes"), py::arg("templates") = std::nullopt);

  m.def(
      "selfcheck",
      [](std::size_t cases) {
        const SelfCheckReport r = run_selfcheck(cases);
        return std::make_pair(r.passed, r.lines);
      },
      py::arg("cases") = 10, "Finite-difference gradient checks: (passed, report lines).");
}
