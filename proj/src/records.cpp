#include "compat_reason/records.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

namespace compat_reason {

using json = nlohmann::ordered_json;

std::string_view to_string(Factor f) {
  switch (f) {
    case Factor::color: return "color";
    case Factor::print: return "print";
    case Factor::material: return "material";
    case Factor::silhouette: return "silhouette";
    case Factor::detail: return "detail";
  }
  return "?";
}

namespace {

void validate_garment(const GarmentFeatures& g, const FeatureDims& dims, const std::string& where) {
  for (Factor f : kAllFactors) {
    const auto& v = g[f];
    if (v.size() != dims[f]) {
      throw DimensionError(where + "." + std::string(to_string(f)) + ": expected " + std::to_string(dims[f]) +
                           " values, got " + std::to_string(v.size()));
    }
    for (double x : v) {
      if (!std::isfinite(x)) throw ParseError(where + "." + std::string(to_string(f)) + ": non-finite value");
    }
  }
}

GarmentFeatures garment_from_json(const json& j, const std::string& where) {
  if (!j.is_object()) throw ParseError(where + ": expected an object");
  GarmentFeatures g;
  for (Factor f : kAllFactors) {
    const std::string key(to_string(f));
    auto it = j.find(key);
    if (it == j.end() || !it->is_array()) throw ParseError(where + ": missing array '" + key + "'");
    for (const auto& v : *it) {
      if (!v.is_number()) throw ParseError(where + "." + key + ": non-numeric entry");
      g[f].push_back(v.get<double>());
    }
  }
  return g;
}

json garment_to_json(const GarmentFeatures& g) {
  json j = json::object();
  for (Factor f : kAllFactors) j[std::string(to_string(f))] = g[f];
  return j;
}

}  // namespace

void validate_record(const OutfitRecord& record, const FeatureDims& dims) {
  if (dims[Factor::color] != kColorFeatureDim) {
    throw DimensionError("color feature must have " + std::to_string(kColorFeatureDim) + " values");
  }
  validate_garment(record.top, dims, record.outfit_id + ".top");
  validate_garment(record.bottom, dims, record.outfit_id + ".bottom");
  if (reason_required(record.judgment) != record.reason.has_value()) {
    throw ParseError(record.outfit_id + ": reason must be null iff judgment is normal");
  }
}

OutfitRecord parse_record(std::string_view json_line, const FeatureDims& dims) {
  json j;
  try {
    j = json::parse(json_line);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ParseError("record is not a JSON object");
  OutfitRecord r;
  try {
    r.outfit_id = j.at("outfit_id").get<std::string>();
    r.top = garment_from_json(j.at("top"), r.outfit_id + ".top");
    r.bottom = garment_from_json(j.at("bottom"), r.outfit_id + ".bottom");
    r.judgment = parse_judgment(j.at("judgment").get<std::string>());
    const json& reason = j.at("reason");
    if (!reason.is_null()) r.reason = parse_reason(reason.get<std::string>());
    if (auto it = j.find("attributes"); it != j.end()) {
      for (const auto& [k, v] : it->items()) r.attributes[k] = v.get<std::string>();
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed record: ") + e.what());
  }
  validate_record(r, dims);
  return r;
}

std::string format_record(const OutfitRecord& record) {
  json j = json::object();
  j["outfit_id"] = record.outfit_id;
  j["top"] = garment_to_json(record.top);
  j["bottom"] = garment_to_json(record.bottom);
  j["judgment"] = std::string(to_string(record.judgment));
  j["reason"] = record.reason ? json(std::string(to_string(*record.reason))) : json(nullptr);
  json attrs = json::object();
  for (const auto& [k, v] : record.attributes) attrs[k] = v;
  j["attributes"] = attrs;
  return j.dump();
}

std::vector<OutfitRecord> load_feature_records(const std::filesystem::path& path, const FeatureDims& dims) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<OutfitRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse_record(line, dims));
    } catch (const DimensionError& e) {
      throw DimensionError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void save_feature_records(const std::filesystem::path& path, const std::vector<OutfitRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& r : records) out << format_record(r) << '\n';
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace compat_reason
