#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "isphar/error.hpp"
#include "isphar/features.hpp"
#include "isphar/rng.hpp"
#include "isphar/table.hpp"

namespace isphar {

// Lowest index wins ties.
template <typename T>
std::size_t argmax(std::span<const T> scores) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

template <typename T>
struct DenseLayer {
  std::size_t in = 0, out = 0;
  std::vector<T> weights;  // out x in, row-major
  std::vector<T> biases;   // out

  bool operator==(const DenseLayer&) const = default;
};

// Feedforward network with a rectifier after every layer, including the
// output. T = float is the deployable model; T = double is used for training.
template <typename T>
struct BasicMlp {
  std::vector<std::size_t> dims;
  std::vector<DenseLayer<T>> layers;
  FeatureMask mask;
  std::uint16_t manifest_version = kFeatureManifestVersion;
  std::size_t ma_width = kDefaultMaWidth;

  std::size_t n_inputs() const { return dims.front(); }
  std::size_t n_classes() const { return dims.back(); }
  std::size_t max_width() const { return *std::max_element(dims.begin(), dims.end()); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) n += (dims[i] + 1) * dims[i + 1];
    return n;
  }

  template <typename U>
  BasicMlp<U> cast() const {
    BasicMlp<U> out;
    out.dims = dims;
    out.mask = mask;
    out.manifest_version = manifest_version;
    out.ma_width = ma_width;
    for (const auto& l : layers) {
      DenseLayer<U> c;
      c.in = l.in;
      c.out = l.out;
      c.weights.assign(l.weights.begin(), l.weights.end());
      c.biases.assign(l.biases.begin(), l.biases.end());
      out.layers.push_back(std::move(c));
    }
    return out;
  }

  bool operator==(const BasicMlp&) const = default;
};

using MlpModel = BasicMlp<float>;
using MlpNetwork = BasicMlp<double>;

void validate_dims(std::span<const std::size_t> dims);
void validate_mlp(const MlpModel& m);

// Glorot-uniform weights, zero biases. The mask defaults to the first dims[0]
// canonical features.
MlpModel mlp_init(std::span<const std::size_t> dims, std::uint64_t seed);
MlpModel mlp_init(std::span<const std::size_t> dims, std::uint64_t seed, const FeatureMask& mask);

// Allocation-free forward pass. `ping` and `pong` need max_width() slots each.
// Returns the span holding the output-layer activations. When `dropout_rng`
// is non-null, hidden activations are dropped with probability `dropout`.
template <typename T, typename In>
std::span<T> mlp_forward_into(const BasicMlp<T>& m, std::span<const In> input, std::span<T> ping, std::span<T> pong,
                              Rng* dropout_rng = nullptr, double dropout = 0.0) {
  if (input.size() != m.n_inputs())
    throw Error(ErrorCode::DimMismatch, "input has " + std::to_string(input.size()) + " values, model expects " +
                                            std::to_string(m.n_inputs()));
  std::span<T> dst = ping;
  std::span<T> src;
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const DenseLayer<T>& layer = m.layers[l];
    const bool hidden = l + 1 < m.layers.size();
    for (std::size_t o = 0; o < layer.out; ++o) {
      double acc = static_cast<double>(layer.biases[o]);
      const T* w = layer.weights.data() + o * layer.in;
      if (l == 0) {
        for (std::size_t i = 0; i < layer.in; ++i) acc += static_cast<double>(w[i]) * static_cast<double>(input[i]);
      } else {
        for (std::size_t i = 0; i < layer.in; ++i) acc += static_cast<double>(w[i]) * static_cast<double>(src[i]);
      }
      T a = static_cast<T>(acc > 0.0 ? acc : 0.0);
      if (hidden && dropout_rng != nullptr && dropout > 0.0)
        a = dropout_rng->uniform() < dropout ? T(0) : static_cast<T>(static_cast<double>(a) / (1.0 - dropout));
      dst[o] = a;
    }
    src = dst.first(layer.out);
    dst = (dst.data() == ping.data()) ? pong : ping;
  }
  return src;
}

template <typename T, typename In>
std::vector<T> mlp_forward(const BasicMlp<T>& m, std::span<const In> input, bool training = false,
                           Rng* dropout_rng = nullptr, double dropout = 0.2) {
  std::vector<T> ping(m.max_width()), pong(m.max_width());
  auto out = mlp_forward_into<T, In>(m, input, ping, pong, training ? dropout_rng : nullptr, training ? dropout : 0.0);
  return {out.begin(), out.end()};
}

// ---- training -------------------------------------------------------------

struct AdaBeliefConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First moment m tracks the gradient, second moment s tracks (g - m)^2;
// both bias-corrected.
class AdaBelief {
public:
  AdaBelief(std::size_t n_params, AdaBeliefConfig cfg = {}) : cfg_(cfg), m_(n_params, 0.0), s_(n_params, 0.0) {}

  void step(std::span<double> params, std::span<const double> grad, double lr);
  std::size_t steps() const { return t_; }

private:
  AdaBeliefConfig cfg_;
  std::vector<double> m_, s_;
  std::size_t t_ = 0;
};

struct TrainConfig {
  std::vector<std::size_t> hidden{64, 32};
  double initial_lr = 3e-4;
  double lr_decay_factor = 0.5;
  std::size_t lr_decay_every = 50;  // epochs
  std::size_t batch_size = 1024;
  std::size_t patience = 30;
  std::size_t max_epochs = 3000;
  double dropout = 0.2;
  AdaBeliefConfig optimizer{};
  bool standardize_inputs = true;  // folded into the first layer on export
  std::uint64_t seed = 0;

  void validate() const;
  double lr_at(std::size_t epoch) const;  // epoch counted from 0
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_accuracy = 0.0;

  std::string to_lines() const;  // `epoch,train_loss,val_accuracy` records
};

struct MlpTrainResult {
  MlpModel model;
  TrainHistory history;
};

// Mean softmax cross-entropy of the pre-rectifier output over `rows`, and its
// gradient (same shape as `net`) when `grad` is non-null.
double mlp_loss_and_gradient(const MlpNetwork& net, const LabeledFeatures& data, std::span<const std::size_t> rows,
                             MlpNetwork* grad, Rng* dropout_rng = nullptr, double dropout = 0.0);

// Pre-rectifier output of the last layer.
std::vector<double> mlp_logits(const MlpNetwork& net, std::span<const double> input);

// `train` and `val` carry the model's input columns (already masked). The
// returned model keeps `mask` as its feature mask.
MlpTrainResult mlp_train(const LabeledFeatures& train, const LabeledFeatures& val, const TrainConfig& cfg,
                         const FeatureMask& mask);

}  // namespace isphar
