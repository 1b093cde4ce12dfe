#include "compat_reason/compatnet.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

namespace compat_reason {

void validate_config(const ModelConfig& c) {
  for (std::size_t d : c.dims.dims) {
    if (d == 0) throw DimensionError("feature dimensions must be positive");
  }
  if (c.intra_hidden1 == 0 || c.intra_hidden2 == 0 || c.intra_out == 0 || c.inter_hidden1 == 0 ||
      c.inter_hidden2 == 0) {
    throw DimensionError("layer sizes must be positive");
  }
}

MlpParams init_mlp(std::size_t in, std::size_t hidden1, std::size_t hidden2, std::size_t out, Rng& rng) {
  const std::size_t dims[] = {in, hidden1, hidden2, out};
  MlpParams p;
  for (std::size_t l = 0; l < 3; ++l) {
    const double bound = std::sqrt(6.0 / static_cast<double>(dims[l]));
    DenseLayer& layer = p.layers[l];
    layer.weight = ad::Tensor(dims[l + 1], dims[l]);
    layer.bias = ad::Tensor(1, dims[l + 1]);
    for (double& w : layer.weight.storage()) w = rng.uniform(-bound, bound);
  }
  return p;
}

FactorPartition FactorPartition::for_config(const ModelConfig& config) {
  FactorPartition p;
  std::size_t pos = 0;
  for (Factor f : kAllFactors) {
    p.offset[index_of(f)] = pos;
    p.width[index_of(f)] = config.intra_out;
    auto& set = p.indices[index_of(reason_of(f))];
    for (std::size_t i = 0; i < config.intra_out; ++i) set.push_back(pos + i);
    pos += config.intra_out;
  }
  return p;
}

std::size_t FactorPartition::x_dim() const {
  std::size_t n = 0;
  for (std::size_t w : width) n += w;
  return n;
}

ad::Tensor FactorPartition::pooling_matrix() const {
  ad::Tensor p(x_dim(), kNumReasons);
  for (std::size_t r = 0; r < kNumReasons; ++r) {
    const double w = 1.0 / static_cast<double>(indices[r].size());
    for (std::size_t i : indices[r]) p(i, r) = w;
  }
  return p;
}

std::vector<ad::Tensor*> CompatModel::parameters() {
  std::vector<ad::Tensor*> out;
  auto add = [&out](MlpParams& m) {
    for (DenseLayer& l : m.layers) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
  };
  for (MlpParams& m : intra) add(m);
  add(inter);
  return out;
}

std::vector<const ad::Tensor*> CompatModel::parameters() const {
  auto mutable_params = const_cast<CompatModel*>(this)->parameters();
  return {mutable_params.begin(), mutable_params.end()};
}

std::size_t CompatModel::parameter_count() const {
  std::size_t n = 0;
  for (const ad::Tensor* t : parameters()) n += t->size();
  return n;
}

CompatModel init_model(const ModelConfig& config, std::uint64_t seed) {
  validate_config(config);
  Rng rng(seed);
  CompatModel m;
  m.config = config;
  for (Factor f : kAllFactors) {
    m.intra[index_of(f)] =
        init_mlp(2 * config.dims[f], config.intra_hidden1, config.intra_hidden2, config.intra_out, rng);
  }
  m.inter = init_mlp(config.x_dim(), config.inter_hidden1, config.inter_hidden2, kNumJudgments, rng);
  m.partition = FactorPartition::for_config(config);
  return m;
}

// ---- graph evaluation -----------------------------------------------------

MlpVars bind_mlp(ad::Graph& g, const MlpParams& p, bool trainable) {
  MlpVars v;
  for (std::size_t l = 0; l < 3; ++l) {
    v.weight[l] = trainable ? g.variable(p.layers[l].weight) : g.constant(p.layers[l].weight);
    v.bias[l] = trainable ? g.variable(p.layers[l].bias) : g.constant(p.layers[l].bias);
  }
  return v;
}

ad::Var mlp_forward(const MlpVars& mlp, ad::Var input) {
  ad::Var h = input;
  for (std::size_t l = 0; l < 3; ++l) {
    h = ad::add_row_bias(ad::matmul(h, mlp.weight[l], false, true), mlp.bias[l]);
    if (l < 2) h = ad::relu(h);
  }
  return h;
}

void append_vars(const MlpVars& mlp, std::vector<ad::Var>& out) {
  for (std::size_t l = 0; l < 3; ++l) {
    out.push_back(mlp.weight[l]);
    out.push_back(mlp.bias[l]);
  }
}

std::vector<ad::Var> ModelVars::all() const {
  std::vector<ad::Var> out;
  for (const MlpVars& m : intra) append_vars(m, out);
  append_vars(inter, out);
  return out;
}

ModelVars bind_model(ad::Graph& g, const CompatModel& model, bool trainable) {
  ModelVars v;
  for (std::size_t f = 0; f < kNumFactors; ++f) v.intra[f] = bind_mlp(g, model.intra[f], trainable);
  v.inter = bind_mlp(g, model.inter, trainable);
  return v;
}

OutfitBatch make_batch(const std::vector<OutfitRecord>& records, std::span<const std::size_t> indices,
                       const FeatureDims& dims) {
  OutfitBatch batch;
  const std::size_t n = indices.size();
  for (Factor f : kAllFactors) {
    const std::size_t d = dims[f];
    ad::Tensor t(n, 2 * d);
    for (std::size_t row = 0; row < n; ++row) {
      const OutfitRecord& r = records.at(indices[row]);
      if (r.top[f].size() != d || r.bottom[f].size() != d) {
        throw DimensionError(r.outfit_id + ": " + std::string(to_string(f)) + " feature has wrong dimension");
      }
      std::copy(r.top[f].begin(), r.top[f].end(), t.data().begin() + static_cast<std::ptrdiff_t>(row * 2 * d));
      std::copy(r.bottom[f].begin(), r.bottom[f].end(),
                t.data().begin() + static_cast<std::ptrdiff_t>(row * 2 * d + d));
    }
    batch.inputs[index_of(f)] = std::move(t);
  }
  batch.judgments.reserve(n);
  batch.reasons.reserve(n);
  for (std::size_t i : indices) {
    batch.judgments.push_back(records[i].judgment);
    batch.reasons.push_back(records[i].reason);
  }
  return batch;
}

OutfitBatch make_batch(const std::vector<OutfitRecord>& records, const FeatureDims& dims) {
  std::vector<std::size_t> all(records.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return make_batch(records, all, dims);
}

ForwardPass forward(ad::Graph& g, const ModelVars& vars, const OutfitBatch& batch) {
  std::array<ad::Var, kNumFactors> parts;
  for (std::size_t f = 0; f < kNumFactors; ++f) {
    const ad::Tensor& input = batch.inputs[f];
    if (input.cols() != vars.intra[f].weight[0].shape().cols) {
      throw DimensionError("factor " + std::string(to_string(kAllFactors[f])) + " input has " +
                           std::to_string(input.cols()) + " columns, model expects " +
                           std::to_string(vars.intra[f].weight[0].shape().cols));
    }
    parts[f] = mlp_forward(vars.intra[f], g.constant(input));
  }
  ad::Var x = ad::concat_cols(parts);
  if (!x.requires_grad()) x = g.variable(x.value());
  return ForwardPass{x, mlp_forward(vars.inter, x)};
}

Judgment predict_judgment(std::span<const double> logits) {
  if (logits.size() != kNumJudgments) throw DimensionError("expected 3 judgment logits");
  std::size_t best = 0;
  for (std::size_t i = 1; i < kNumJudgments; ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  return static_cast<Judgment>(best);
}

std::vector<Judgment> predict_judgments(const ad::Tensor& logits) {
  std::vector<Judgment> out;
  out.reserve(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    out.push_back(predict_judgment(logits.data().subspan(r * logits.cols(), logits.cols())));
  }
  return out;
}

std::array<double, kNumJudgments> softmax(std::span<const double> logits) {
  if (logits.size() != kNumJudgments) throw DimensionError("expected 3 judgment logits");
  const double m = std::max({logits[0], logits[1], logits[2]});
  std::array<double, kNumJudgments> p{};
  double z = 0.0;
  for (std::size_t i = 0; i < kNumJudgments; ++i) z += p[i] = std::exp(logits[i] - m);
  for (double& v : p) v /= z;
  return p;
}

// ---- checkpoints ------------------------------------------------------------

namespace {

constexpr std::string_view kMagic = "COMPAT-REASON-CHECKPOINT";
constexpr std::string_view kEndHeader = "end_header\n";

std::string join(std::initializer_list<std::size_t> values) {
  std::string s;
  for (std::size_t v : values) {
    if (!s.empty()) s += ',';
    s += std::to_string(v);
  }
  return s;
}

std::vector<std::size_t> split_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoul(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw CheckpointError("bad integer list '" + s + "'");
    }
  }
  return out;
}

}  // namespace

std::string serialize_checkpoint(const CompatModel& model) {
  const ModelConfig& c = model.config;
  std::ostringstream os;
  os << kMagic << '\n'
     << "format_version=" << kCheckpointVersion << '\n'
     << "dims=" << join({c.dims.dims[0], c.dims.dims[1], c.dims.dims[2], c.dims.dims[3], c.dims.dims[4]}) << '\n'
     << "intra_hidden=" << join({c.intra_hidden1, c.intra_hidden2}) << '\n'
     << "intra_out=" << c.intra_out << '\n'
     << "inter_hidden=" << join({c.inter_hidden1, c.inter_hidden2}) << '\n'
     << "parameter_count=" << model.parameter_count() << '\n'
     << kEndHeader;
  std::string out = os.str();
  out.reserve(out.size() + 8 * model.parameter_count());
  for (const ad::Tensor* t : model.parameters()) {
    for (double v : t->data()) {
      std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
      for (int k = 0; k < 8; ++k) out.push_back(static_cast<char>((bits >> (8 * k)) & 0xFF));
    }
  }
  return out;
}

CompatModel deserialize_checkpoint(const std::string& bytes) {
  const std::size_t end = bytes.find(kEndHeader);
  if (bytes.compare(0, kMagic.size() + 1, std::string(kMagic) + "\n") != 0) {
    throw CheckpointError("not a checkpoint file (bad magic)");
  }
  if (end == std::string::npos) throw CheckpointError("truncated checkpoint header");
  std::map<std::string, std::string> kv;
  std::istringstream header(bytes.substr(kMagic.size() + 1, end - kMagic.size() - 1));
  std::string line;
  while (std::getline(header, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw CheckpointError("malformed header line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto field = [&kv](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw CheckpointError("checkpoint header lacks '" + key + "'");
    return it->second;
  };
  if (field("format_version") != std::to_string(kCheckpointVersion)) {
    throw CheckpointError("unsupported checkpoint format version " + field("format_version") + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  ModelConfig c;
  const auto dims = split_sizes(field("dims"));
  const auto intra_hidden = split_sizes(field("intra_hidden"));
  const auto intra_out = split_sizes(field("intra_out"));
  const auto inter_hidden = split_sizes(field("inter_hidden"));
  const auto count = split_sizes(field("parameter_count"));
  if (dims.size() != kNumFactors || intra_hidden.size() != 2 || intra_out.size() != 1 ||
      inter_hidden.size() != 2 || count.size() != 1) {
    throw CheckpointError("checkpoint header has wrong arity");
  }
  for (std::size_t i = 0; i < kNumFactors; ++i) c.dims.dims[i] = dims[i];
  c.intra_hidden1 = intra_hidden[0];
  c.intra_hidden2 = intra_hidden[1];
  c.intra_out = intra_out[0];
  c.inter_hidden1 = inter_hidden[0];
  c.inter_hidden2 = inter_hidden[1];
  validate_config(c);

  CompatModel m = init_model(c, 0);
  if (m.parameter_count() != count[0]) {
    throw DimensionError("checkpoint declares " + std::to_string(count[0]) + " parameters but its config needs " +
                         std::to_string(m.parameter_count()));
  }
  std::size_t pos = end + kEndHeader.size();
  if (bytes.size() - pos != 8 * count[0]) {
    throw CheckpointError("checkpoint payload is " + std::to_string(bytes.size() - pos) + " bytes, expected " +
                          std::to_string(8 * count[0]) + (bytes.size() - pos < 8 * count[0] ? " (truncated)" : ""));
  }
  for (ad::Tensor* t : m.parameters()) {
    for (double& v : t->storage()) {
      std::uint64_t bits = 0;
      for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + k])) << (8 * k);
      pos += 8;
      v = std::bit_cast<double>(bits);
    }
  }
  return m;
}

void save_checkpoint(const CompatModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  const std::string bytes = serialize_checkpoint(model);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

CompatModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

CompatModel load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected) {
  CompatModel m = load_checkpoint(path);
  if (!(m.config == expected)) throw DimensionError("checkpoint config does not match the expected model config");
  return m;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xF];
  return s;
}

}  // namespace compat_reason
