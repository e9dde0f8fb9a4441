#include "pmat/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "pmat/binary_io.hpp"
#include "pmat/errors.hpp"
#include "pmat/file_util.hpp"
#include "pmat/matrix.hpp"
#include "pmat/rng.hpp"

namespace pmat {

bool Matrix::all_finite() const {
  return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

namespace {

constexpr char kModelMagic[8] = {'P', 'M', 'A', 'T', 'M', 'L', 'P', '1'};

}  // namespace

ModelParams::ModelParams(std::vector<std::size_t> dims, Activation hidden_activation)
    : dims_(std::move(dims)), activation_(hidden_activation) {
  if (dims_.size() < 2) throw ConfigError("model needs an input and an output width");
  for (std::size_t d : dims_) {
    if (d == 0) throw ConfigError("layer widths must be positive");
  }
  if (dims_.back() < 2) throw ConfigError("classifier needs at least two classes");
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    offsets_.push_back(offset);
    offset += dims_[l + 1] * dims_[l] + dims_[l + 1];
  }
  values_.assign(offset, 0.0);
}

ModelParams ModelParams::random_init(std::vector<std::size_t> dims, std::uint64_t seed) {
  ModelParams params(std::move(dims));
  Engine engine(seed);
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(params.dims_[l]));
    for (double& w : params.weights(l)) w = uniform(engine, -bound, bound);
    for (double& b : params.bias(l)) b = uniform(engine, -bound, bound);
  }
  return params;
}

std::span<double> ModelParams::weights(std::size_t layer) {
  return {values_.data() + offsets_[layer], dims_[layer + 1] * dims_[layer]};
}
std::span<const double> ModelParams::weights(std::size_t layer) const {
  return {values_.data() + offsets_[layer], dims_[layer + 1] * dims_[layer]};
}
std::span<double> ModelParams::bias(std::size_t layer) {
  return {values_.data() + offsets_[layer] + dims_[layer + 1] * dims_[layer], dims_[layer + 1]};
}
std::span<const double> ModelParams::bias(std::size_t layer) const {
  return {values_.data() + offsets_[layer] + dims_[layer + 1] * dims_[layer], dims_[layer + 1]};
}

int ForwardResult::prediction() const { return argmax(probs); }

int argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < values.size(); ++k) {
    if (values[k] > values[best]) best = k;
  }
  return static_cast<int>(best);
}

std::vector<double> softmax(std::span<const double> logits) {
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> probs(logits.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    probs[k] = std::exp(logits[k] - top);
    sum += probs[k];
  }
  for (double& p : probs) p /= sum;
  return probs;
}

ForwardTape forward_recorded(const ModelParams& params, std::span<const double> x) {
  if (x.size() != params.input_dim()) {
    throw ConfigError("input has dimension " + std::to_string(x.size()) + ", model expects " +
                      std::to_string(params.input_dim()));
  }
  ForwardTape tape;
  const std::size_t layers = params.num_layers();
  tape.inputs.reserve(layers);
  tape.pre.reserve(layers);
  std::vector<double> act(x.begin(), x.end());
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = params.dims()[l];
    const std::size_t out = params.dims()[l + 1];
    const auto w = params.weights(l);
    const auto b = params.bias(l);
    std::vector<double> z(out);
    for (std::size_t r = 0; r < out; ++r) {
      double s = b[r];
      const double* row = w.data() + r * in;
      for (std::size_t c = 0; c < in; ++c) s += row[c] * act[c];
      if (!std::isfinite(s)) {
        throw NumericError("non-finite activation in layer " + std::to_string(l));
      }
      z[r] = s;
    }
    tape.inputs.push_back(std::move(act));
    act = z;
    if (l + 1 < layers) {
      for (double& a : act) a = a > 0.0 ? a : 0.0;
    }
    tape.pre.push_back(std::move(z));
  }
  tape.out.logits = std::move(act);
  tape.out.probs = softmax(tape.out.logits);
  return tape;
}

ForwardResult forward(const ModelParams& params, std::span<const double> x) {
  return std::move(forward_recorded(params, x).out);
}

void backprop(const ModelParams& params, const ForwardTape& tape,
              std::span<const double> dlogits, ModelParams* param_grads,
              std::vector<double>* input_grad) {
  std::vector<double> upstream(dlogits.begin(), dlogits.end());
  for (std::size_t l = params.num_layers(); l-- > 0;) {
    const std::size_t in = params.dims()[l];
    const std::size_t out = params.dims()[l + 1];
    if (l + 1 < params.num_layers()) {
      const auto& z = tape.pre[l];
      for (std::size_t r = 0; r < out; ++r) {
        if (!(z[r] > 0.0)) upstream[r] = 0.0;
      }
    }
    const auto& a = tape.inputs[l];
    if (param_grads != nullptr) {
      auto gw = param_grads->weights(l);
      auto gb = param_grads->bias(l);
      for (std::size_t r = 0; r < out; ++r) {
        const double g = upstream[r];
        gb[r] += g;
        double* row = gw.data() + r * in;
        for (std::size_t c = 0; c < in; ++c) row[c] += g * a[c];
      }
    }
    if (l == 0 && input_grad == nullptr) break;
    const auto w = params.weights(l);
    std::vector<double> down(in, 0.0);
    for (std::size_t r = 0; r < out; ++r) {
      const double g = upstream[r];
      const double* row = w.data() + r * in;
      for (std::size_t c = 0; c < in; ++c) down[c] += g * row[c];
    }
    upstream = std::move(down);
  }
  if (input_grad != nullptr) {
    if (input_grad->empty()) input_grad->assign(upstream.size(), 0.0);
    for (std::size_t c = 0; c < upstream.size(); ++c) (*input_grad)[c] += upstream[c];
  }
}

void write_model(std::ostream& out, const ModelParams& params) {
  out.write(kModelMagic, sizeof kModelMagic);
  binary::put_u32(out, static_cast<std::uint32_t>(params.num_layers()));
  for (std::size_t d : params.dims()) binary::put_u32(out, static_cast<std::uint32_t>(d));
  binary::put_u32(out, static_cast<std::uint32_t>(params.hidden_activation()));
  binary::put_u32(out, static_cast<std::uint32_t>(params.num_classes()));
  for (double v : params.values()) binary::put_f64(out, v);
}

ModelParams read_model(std::istream& in, std::size_t base_offset) {
  binary::Reader reader(in, base_offset);
  char magic[8];
  const std::size_t magic_at = reader.offset();
  reader.bytes(magic, sizeof magic, "model magic");
  if (!std::equal(magic, magic + 8, kModelMagic)) throw LoadError("bad model magic", magic_at);
  const std::size_t layers_at = reader.offset();
  const std::uint32_t layers = reader.u32("layer count");
  if (layers == 0 || layers > 1024) throw LoadError("implausible layer count", layers_at);
  std::vector<std::size_t> dims;
  for (std::uint32_t i = 0; i <= layers; ++i) {
    const std::size_t at = reader.offset();
    const std::uint32_t d = reader.u32("layer width");
    if (d == 0) throw LoadError("zero layer width", at);
    dims.push_back(d);
  }
  const std::size_t act_at = reader.offset();
  const std::uint32_t act = reader.u32("activation kind");
  if (act != static_cast<std::uint32_t>(Activation::kRelu)) {
    throw LoadError("unknown activation kind " + std::to_string(act), act_at);
  }
  const std::size_t k_at = reader.offset();
  const std::uint32_t k = reader.u32("class count");
  if (k != dims.back()) throw LoadError("class count disagrees with output width", k_at);
  if (k < 2) throw LoadError("class count below two", k_at);
  ModelParams params(std::move(dims), Activation::kRelu);
  for (double& v : params.values()) {
    const std::size_t at = reader.offset();
    v = reader.f64("parameter");
    if (!std::isfinite(v)) throw LoadError("non-finite parameter", at);
  }
  return params;
}

std::string model_header_json(const ModelParams& params) {
  nlohmann::json j;
  j["format"] = "PMATMLP1";
  j["dims"] = params.dims();
  j["activation"] = "relu";
  j["num_classes"] = params.num_classes();
  j["num_params"] = params.num_params();
  j["byte_order"] = "little";
  return j.dump(2);
}

void save_model(const std::filesystem::path& path, const ModelParams& params) {
  write_atomic(path, true, [&](std::ostream& out) { write_model(out, params); });
  auto sidecar = path;
  sidecar += ".json";
  write_atomic(sidecar, false, [&](std::ostream& out) { out << model_header_json(params) << '\n'; });
}

ModelParams load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string(), 0);
  ModelParams params = read_model(in);
  if (in.peek() != std::ifstream::traits_type::eof()) {
    throw LoadError("trailing bytes after model", static_cast<std::size_t>(in.tellg()));
  }
  return params;
}

}  // namespace pmat
