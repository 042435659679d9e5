#include "isphar/mlp.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

namespace isphar {

namespace {

std::vector<double> flatten(const MlpNetwork& net) {
  std::vector<double> flat;
  flat.reserve(net.parameter_count());
  for (const auto& l : net.layers) {
    flat.insert(flat.end(), l.weights.begin(), l.weights.end());
    flat.insert(flat.end(), l.biases.begin(), l.biases.end());
  }
  return flat;
}

void unflatten(std::span<const double> flat, MlpNetwork& net) {
  std::size_t k = 0;
  for (auto& l : net.layers) {
    for (double& w : l.weights) w = flat[k++];
    for (double& b : l.biases) b = flat[k++];
  }
}

MlpNetwork zeros_like(const MlpNetwork& net) {
  MlpNetwork z = net;
  for (auto& l : z.layers) {
    std::fill(l.weights.begin(), l.weights.end(), 0.0);
    std::fill(l.biases.begin(), l.biases.end(), 0.0);
  }
  return z;
}

struct ColumnScaling {
  std::vector<double> mean, scale;  // standardized = (x - mean) * scale
};

ColumnScaling column_scaling(const LabeledFeatures& t, bool enabled) {
  ColumnScaling s;
  s.mean.assign(t.dims, 0.0);
  s.scale.assign(t.dims, 1.0);
  if (!enabled || t.empty()) return s;
  const auto n = static_cast<double>(t.size());
  for (std::size_t d = 0; d < t.dims; ++d) {
    double sum = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) sum += t.x[i * t.dims + d];
    const double mean = sum / n;
    double ss = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) ss += (t.x[i * t.dims + d] - mean) * (t.x[i * t.dims + d] - mean);
    const double sd = std::sqrt(ss / n);
    s.mean[d] = mean;
    s.scale[d] = sd > 1e-12 ? 1.0 / sd : 0.0;
  }
  return s;
}

LabeledFeatures apply_scaling(const LabeledFeatures& t, const ColumnScaling& s) {
  LabeledFeatures out = t;
  for (std::size_t i = 0; i < t.size(); ++i)
    for (std::size_t d = 0; d < t.dims; ++d)
      out.x[i * t.dims + d] = (t.x[i * t.dims + d] - s.mean[d]) * s.scale[d];
  return out;
}

// Rewrites the first layer so the network consumes raw inputs.
void fold_scaling(MlpNetwork& net, const ColumnScaling& s) {
  auto& l = net.layers.front();
  for (std::size_t o = 0; o < l.out; ++o) {
    double shift = 0.0;
    for (std::size_t i = 0; i < l.in; ++i) {
      double& w = l.weights[o * l.in + i];
      w *= s.scale[i];
      shift += w * s.mean[i];
    }
    l.biases[o] -= shift;
  }
}

double accuracy_on(const MlpNetwork& net, const LabeledFeatures& data) {
  if (data.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto logits = mlp_logits(net, data.row(i));
    if (static_cast<int>(argmax<double>(logits)) == data.y[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

}  // namespace

void validate_dims(std::span<const std::size_t> dims) {
  if (dims.size() < 2) throw Error(ErrorCode::InvalidDims, "an MLP needs at least two layer widths");
  for (std::size_t d : dims)
    if (d == 0) throw Error(ErrorCode::InvalidDims, "layer widths must be >= 1");
}

void validate_mlp(const MlpModel& m) {
  validate_dims(m.dims);
  if (m.layers.size() + 1 != m.dims.size()) throw Error(ErrorCode::InvalidDims, "layer count disagrees with dims");
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const auto& layer = m.layers[l];
    if (layer.in != m.dims[l] || layer.out != m.dims[l + 1] || layer.weights.size() != layer.in * layer.out ||
        layer.biases.size() != layer.out)
      throw Error(ErrorCode::InvalidDims, "layer " + std::to_string(l) + " shape disagrees with dims");
    for (float w : layer.weights)
      if (!std::isfinite(w)) throw Error(ErrorCode::InvalidDims, "non-finite weight");
    for (float b : layer.biases)
      if (!std::isfinite(b)) throw Error(ErrorCode::InvalidDims, "non-finite bias");
  }
  if (m.mask.size() != m.n_inputs()) throw Error(ErrorCode::DimMismatch, "feature mask size differs from input width");
}

MlpModel mlp_init(std::span<const std::size_t> dims, std::uint64_t seed) {
  validate_dims(dims);
  std::vector<std::size_t> idx(std::min(dims.front(), kNumFeatures));
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  MlpModel m = mlp_init(dims, seed, FeatureMask());
  if (dims.front() <= kNumFeatures) m.mask = FeatureMask::from_indices(std::move(idx));
  return m;
}

MlpModel mlp_init(std::span<const std::size_t> dims, std::uint64_t seed, const FeatureMask& mask) {
  validate_dims(dims);
  if (!mask.empty() && mask.size() != dims.front())
    throw Error(ErrorCode::DimMismatch, "feature mask size differs from input width");
  Rng rng(seed);
  MlpModel m;
  m.dims.assign(dims.begin(), dims.end());
  m.mask = mask;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    DenseLayer<float> layer;
    layer.in = dims[l];
    layer.out = dims[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(layer.in + layer.out));
    layer.weights.resize(layer.in * layer.out);
    for (float& w : layer.weights) w = static_cast<float>(rng.uniform(-limit, limit));
    layer.biases.assign(layer.out, 0.0f);
    m.layers.push_back(std::move(layer));
  }
  return m;
}

void AdaBelief::step(std::span<double> params, std::span<const double> grad, double lr) {
  if (params.size() != m_.size() || grad.size() != m_.size())
    throw Error(ErrorCode::DimMismatch, "optimizer state size differs from parameter count");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i];
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    const double belief = g - m_[i];
    s_[i] = cfg_.beta2 * s_[i] + (1.0 - cfg_.beta2) * belief * belief;
    const double m_hat = m_[i] / bc1;
    const double s_hat = s_[i] / bc2;
    params[i] -= lr * m_hat / (std::sqrt(s_hat) + cfg_.eps);
  }
}

void TrainConfig::validate() const {
  if (!(initial_lr >= 0.0)) throw Error(ErrorCode::InvalidArgument, "learning rate must be non-negative");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw Error(ErrorCode::InvalidArgument, "dropout must lie in [0, 1)");
  if (patience < 1) throw Error(ErrorCode::InvalidArgument, "patience must be >= 1");
  if (batch_size < 1) throw Error(ErrorCode::InvalidArgument, "batch_size must be >= 1");
  if (lr_decay_every < 1) throw Error(ErrorCode::InvalidArgument, "lr_decay_every must be >= 1");
  for (std::size_t h : hidden)
    if (h == 0) throw Error(ErrorCode::InvalidDims, "hidden widths must be >= 1");
}

double TrainConfig::lr_at(std::size_t epoch) const {
  return initial_lr * std::pow(lr_decay_factor, static_cast<double>(epoch / lr_decay_every));
}

std::string TrainHistory::to_lines() const {
  std::string out = "epoch,train_loss,val_accuracy\n";
  char buf[96];
  for (const auto& e : epochs) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g\n", e.epoch, e.train_loss, e.val_accuracy);
    out += buf;
  }
  return out;
}

std::vector<double> mlp_logits(const MlpNetwork& net, std::span<const double> input) {
  if (input.size() != net.n_inputs()) throw Error(ErrorCode::DimMismatch, "input width differs from network");
  std::vector<double> a(input.begin(), input.end()), z;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& layer = net.layers[l];
    z.assign(layer.out, 0.0);
    for (std::size_t o = 0; o < layer.out; ++o) {
      double acc = layer.biases[o];
      const double* w = layer.weights.data() + o * layer.in;
      for (std::size_t i = 0; i < layer.in; ++i) acc += w[i] * a[i];
      z[o] = acc;
    }
    if (l + 1 < net.layers.size())
      for (double& v : z) v = v > 0.0 ? v : 0.0;
    a.swap(z);
  }
  return a;
}

double mlp_loss_and_gradient(const MlpNetwork& net, const LabeledFeatures& data, std::span<const std::size_t> rows,
                             MlpNetwork* grad, Rng* dropout_rng, double dropout) {
  if (data.dims != net.n_inputs()) throw Error(ErrorCode::DimMismatch, "data width differs from network input");
  if (rows.empty()) return 0.0;
  const std::size_t n_layers = net.layers.size();
  if (grad != nullptr) *grad = zeros_like(net);

  // acts[0] = input, acts[l+1] = output of layer l (post-rectifier and dropout
  // for hidden layers, raw logits for the last layer).
  std::vector<std::vector<double>> acts(n_layers + 1), pre(n_layers), keep(n_layers);
  for (std::size_t l = 0; l < n_layers; ++l) {
    acts[l + 1].resize(net.layers[l].out);
    pre[l].resize(net.layers[l].out);
    keep[l].assign(net.layers[l].out, 1.0);
  }
  std::vector<double> delta, prev_delta;
  const bool use_dropout = dropout_rng != nullptr && dropout > 0.0;
  const double keep_scale = use_dropout ? 1.0 / (1.0 - dropout) : 1.0;

  double total = 0.0;
  for (std::size_t r : rows) {
    const auto x = data.row(r);
    acts[0].assign(x.begin(), x.end());
    for (std::size_t l = 0; l < n_layers; ++l) {
      const auto& layer = net.layers[l];
      const bool hidden = l + 1 < n_layers;
      for (std::size_t o = 0; o < layer.out; ++o) {
        double acc = layer.biases[o];
        const double* w = layer.weights.data() + o * layer.in;
        for (std::size_t i = 0; i < layer.in; ++i) acc += w[i] * acts[l][i];
        pre[l][o] = acc;
        if (hidden) {
          double a = acc > 0.0 ? acc : 0.0;
          if (use_dropout) {
            keep[l][o] = dropout_rng->uniform() < dropout ? 0.0 : keep_scale;
            a *= keep[l][o];
          }
          acts[l + 1][o] = a;
        } else {
          acts[l + 1][o] = acc;
        }
      }
    }

    const auto& logits = acts[n_layers];
    const double mx = *std::max_element(logits.begin(), logits.end());
    double norm = 0.0;
    for (double v : logits) norm += std::exp(v - mx);
    const auto label = static_cast<std::size_t>(data.y[r]);
    total += -(logits[label] - mx - std::log(norm));
    if (grad == nullptr) continue;

    delta.resize(logits.size());
    for (std::size_t k = 0; k < logits.size(); ++k)
      delta[k] = std::exp(logits[k] - mx) / norm - (k == label ? 1.0 : 0.0);
    for (std::size_t l = n_layers; l-- > 0;) {
      const auto& layer = net.layers[l];
      auto& g = grad->layers[l];
      for (std::size_t o = 0; o < layer.out; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        g.biases[o] += d;
        double* gw = g.weights.data() + o * layer.in;
        for (std::size_t i = 0; i < layer.in; ++i) gw[i] += d * acts[l][i];
      }
      if (l == 0) break;
      prev_delta.assign(layer.in, 0.0);
      for (std::size_t o = 0; o < layer.out; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        const double* w = layer.weights.data() + o * layer.in;
        for (std::size_t i = 0; i < layer.in; ++i) prev_delta[i] += w[i] * d;
      }
      for (std::size_t i = 0; i < layer.in; ++i)
        prev_delta[i] *= (pre[l - 1][i] > 0.0 ? 1.0 : 0.0) * keep[l - 1][i];
      delta.swap(prev_delta);
    }
  }

  const double inv = 1.0 / static_cast<double>(rows.size());
  if (grad != nullptr) {
    for (auto& l : grad->layers) {
      for (double& v : l.weights) v *= inv;
      for (double& v : l.biases) v *= inv;
    }
  }
  return total * inv;
}

MlpTrainResult mlp_train(const LabeledFeatures& train, const LabeledFeatures& val, const TrainConfig& cfg,
                         const FeatureMask& mask) {
  cfg.validate();
  if (train.distinct_labels() < 2) throw Error(ErrorCode::SingleClass, "training data holds fewer than two classes");
  if (!mask.empty() && mask.size() != train.dims)
    throw Error(ErrorCode::DimMismatch, "feature mask size differs from training columns");

  std::vector<std::size_t> dims{train.dims};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(train.class_count());

  const ColumnScaling scaling = column_scaling(train, cfg.standardize_inputs);
  const LabeledFeatures train_s = apply_scaling(train, scaling);
  const LabeledFeatures val_s = apply_scaling(val.empty() ? train : val, scaling);

  MlpNetwork net = (mask.empty() ? mlp_init(dims, cfg.seed) : mlp_init(dims, cfg.seed, mask)).cast<double>();
  MlpNetwork best = net;
  AdaBelief opt(net.parameter_count(), cfg.optimizer);
  Rng rng(cfg.seed ^ 0x5EEDF00DULL);
  Rng drop_rng(cfg.seed ^ 0xD20F0CA7ULL);

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  MlpTrainResult result;
  double best_acc = -1.0;
  std::size_t stale = 0;
  MlpNetwork grad;
  std::vector<double> flat;

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    const double lr = cfg.lr_at(epoch);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::span<const std::size_t> batch(order.data() + start, end - start);
      const double loss = mlp_loss_and_gradient(net, train_s, batch, &grad, cfg.dropout > 0.0 ? &drop_rng : nullptr,
                                                cfg.dropout);
      if (!std::isfinite(loss))
        throw Error(ErrorCode::NonFiniteLoss, "loss diverged at epoch " + std::to_string(epoch + 1));
      loss_sum += loss * static_cast<double>(batch.size());
      flat = flatten(net);
      opt.step(flat, flatten(grad), lr);
      unflatten(flat, net);
    }
    const double train_loss = loss_sum / static_cast<double>(order.size());
    const double acc = accuracy_on(net, val_s);
    result.history.epochs.push_back({epoch + 1, train_loss, acc});
    if (acc > best_acc) {
      best_acc = acc;
      best = net;
      result.history.best_epoch = epoch + 1;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      break;
    }
  }
  result.history.best_val_accuracy = best_acc;

  if (cfg.standardize_inputs) fold_scaling(best, scaling);
  // Softmax is shift-invariant, so lifting every output bias by the same
  // amount leaves the loss unchanged; it keeps the winning output positive on
  // the training rows so the rectified output keeps the same argmax.
  double min_top = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto logits = mlp_logits(best, train.row(i));
    min_top = std::min(min_top, *std::max_element(logits.begin(), logits.end()));
  }
  constexpr double kMargin = 1.0;
  if (min_top < kMargin)
    for (double& b : best.layers.back().biases) b += kMargin - min_top;

  result.model = best.cast<float>();
  return result;
}

}  // namespace isphar
