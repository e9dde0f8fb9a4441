#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace pmat {

enum class Activation : std::uint32_t { kRelu = 0 };

// Parameters of a dense feed-forward classifier, stored contiguously so that
// optimizers and gradient checks can treat them as one flat vector.
//
// Layer l maps dims()[l] inputs to dims()[l + 1] outputs. Its weight block is
// row-major (out x in) and is followed by its bias block. Every layer but the
// last is followed by the hidden activation; the last layer yields logits.
class ModelParams {
 public:
  ModelParams() = default;
  // Zero-initialised parameters. Throws ConfigError on fewer than two dims,
  // a zero dim, or fewer than two classes.
  explicit ModelParams(std::vector<std::size_t> dims,
                       Activation hidden_activation = Activation::kRelu);

  // Weights and biases drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  static ModelParams random_init(std::vector<std::size_t> dims, std::uint64_t seed);

  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t num_layers() const { return dims_.empty() ? 0 : dims_.size() - 1; }
  std::size_t input_dim() const { return dims_.front(); }
  std::size_t num_classes() const { return dims_.back(); }
  std::size_t num_params() const { return values_.size(); }
  Activation hidden_activation() const { return activation_; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  std::span<double> weights(std::size_t layer);
  std::span<const double> weights(std::size_t layer) const;
  std::span<double> bias(std::size_t layer);
  std::span<const double> bias(std::size_t layer) const;

  bool same_shape(const ModelParams& other) const {
    return dims_ == other.dims_ && activation_ == other.activation_;
  }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;

 private:
  std::vector<std::size_t> dims_;
  Activation activation_ = Activation::kRelu;
  std::vector<std::size_t> offsets_;  // start of each layer's weight block
  std::vector<double> values_;
};

struct ForwardResult {
  std::vector<double> logits;
  std::vector<double> probs;

  // argmax of probs, ties resolved toward the lower class index.
  int prediction() const;
};

// Intermediate values kept for reverse-mode differentiation.
struct ForwardTape {
  std::vector<std::vector<double>> inputs;  // input to each layer
  std::vector<std::vector<double>> pre;     // pre-activation of each layer
  ForwardResult out;
};

std::vector<double> softmax(std::span<const double> logits);
int argmax(std::span<const double> values);

// Throws ConfigError when x does not match the first layer, NumericError
// (naming the layer) on a non-finite activation.
ForwardResult forward(const ModelParams& params, std::span<const double> x);
ForwardTape forward_recorded(const ModelParams& params, std::span<const double> x);

// Reverse pass for a given d(loss)/d(logits). Parameter gradients are
// accumulated into *param_grads and the input gradient into *input_grad;
// either may be null. ReLU'(0) is taken to be 0.
void backprop(const ModelParams& params, const ForwardTape& tape,
              std::span<const double> dlogits, ModelParams* param_grads,
              std::vector<double>* input_grad);

// Binary checkpoint: 8-byte magic "PMATMLP1", then little-endian u32 fields
// (layer count L, input dim, L output dims, activation kind, class count),
// then every layer's weights and biases as little-endian f64 in layer order.
void write_model(std::ostream& out, const ModelParams& params);
// `base_offset` is only used to report absolute offsets in LoadError.
ModelParams read_model(std::istream& in, std::size_t base_offset = 0);

// Writes `path` atomically and a `<path>.json` sidecar with the header.
void save_model(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_model(const std::filesystem::path& path);
std::string model_header_json(const ModelParams& params);

}  // namespace pmat
