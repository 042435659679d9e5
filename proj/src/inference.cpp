#include "isphar/inference.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>

#include "isphar/error.hpp"

namespace isphar {

Engine::Engine(std::span<const std::uint8_t> pack, std::size_t window_len, std::size_t ma_width, std::size_t stride,
               const AccountingModel& accounting)
    : model_(decode(pack)), window_len_(window_len), stride_(stride == 0 ? window_len : stride), ma_width_(ma_width) {
  if (manifest_version_of(model_) != kFeatureManifestVersion)
    throw Error(ErrorCode::ManifestMismatch, "pack feature manifest v" + std::to_string(manifest_version_of(model_)) +
                                                 " differs from library v" + std::to_string(kFeatureManifestVersion));
  if (ma_width % 2 == 0) throw Error(ErrorCode::MaWidthMismatch, "ma_width must be odd, got " + std::to_string(ma_width));
  if (ma_width != ma_width_of(model_))
    throw Error(ErrorCode::MaWidthMismatch, "engine ma_width " + std::to_string(ma_width) + " differs from pack's " +
                                               std::to_string(ma_width_of(model_)));
  if (window_len < 2 || window_len < ma_width)
    throw Error(ErrorCode::InvalidArgument, "window_len must be >= 2 and >= ma_width");

  AccountingModel acct = accounting;
  acct.window_len = window_len;
  footprint_ = isphar::footprint(pack, acct);

  slot_.fill(-1);
  for (std::size_t i : mask_of(model_).indices()) {
    const std::size_t c = i / kFeaturesPerChannel;
    if (slot_[c] < 0) slot_[c] = static_cast<int>(n_slots_++);
    wanted_[c] = static_cast<std::uint16_t>(wanted_[c] | (1u << (i % kFeaturesPerChannel)));
  }

  window_.assign(window_len * n_slots_, 0.0f);
  features_.assign(n_inputs(model_), 0.0f);
  if (const auto* mlp = std::get_if<MlpModel>(&model_)) {
    ping_.assign(mlp->max_width(), 0.0f);
    pong_.assign(mlp->max_width(), 0.0f);
  } else {
    scores_.assign(n_classes(model_), 0.0f);
  }
  scratch_.assign(acct.scratch_bytes, std::byte{0});
}

std::size_t Engine::buffer_bytes() const {
  return (window_.size() + features_.size() + ping_.size() + pong_.size() + scores_.size()) * sizeof(float) +
         scratch_.size();
}

void Engine::reset() {
  fill_ = 0;
  skip_ = 0;
  next_index_ = 0;
  last_ = {};
  scores_view_ = {};
}

bool Engine::push_sample(const Sample& raw) {
  if (skip_ > 0) {
    --skip_;
    return false;
  }
  const Sample s = clip_to_full_scale(raw);
  for (std::size_t c = 0; c < kNumChannels; ++c)
    if (slot_[c] >= 0) window_[static_cast<std::size_t>(slot_[c]) * window_len_ + fill_] = static_cast<float>(s[c]);
  if (++fill_ < window_len_) return false;

  classify();
  if (stride_ >= window_len_) {
    fill_ = 0;
    skip_ = stride_ - window_len_;
  } else {
    const std::size_t keep = window_len_ - stride_;
    for (std::size_t k = 0; k < n_slots_; ++k) {
      float* base = window_.data() + k * window_len_;
      std::memmove(base, base + stride_, keep * sizeof(float));
    }
    fill_ = keep;
  }
  return true;
}

std::size_t Engine::push_samples(std::span<const Sample> samples, std::vector<ClassificationEvent>& events) {
  std::size_t n = 0;
  for (const Sample& s : samples) {
    if (push_sample(s)) {
      events.push_back(last_);
      ++n;
    }
  }
  return n;
}

void Engine::classify() {
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t pos = 0;
  for (std::size_t c = 0; c < kNumChannels; ++c) {
    if (slot_[c] < 0) continue;
    const std::uint16_t want = wanted_[c];
    const std::span<const float> x(window_.data() + static_cast<std::size_t>(slot_[c]) * window_len_, window_len_);
    visit_channel_features(x, ma_width_, [&](Feature f, double v) {
      if (want & (1u << static_cast<unsigned>(f))) features_[pos++] = static_cast<float>(v);
    });
  }

  if (const auto* mlp = std::get_if<MlpModel>(&model_)) {
    scores_view_ = mlp_forward_into<float, float>(*mlp, features_, ping_, pong_);
  } else {
    gbdt_predict_into(std::get<Forest>(model_), features_, scores_);
    scores_view_ = scores_;
  }
  last_.window_index = next_index_++;
  last_.label = argmax<float>(scores_view_);
  last_.top_score = scores_view_[last_.label];
  classify_seconds_ += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

DutyCycleReport duty_cycle(double t_inference_ms, double t_window_ms) {
  if (!(t_inference_ms > 0.0) || !(t_window_ms > 0.0))
    throw Error(ErrorCode::InvalidArgument, "inference and window times must be positive");
  if (t_inference_ms >= t_window_ms)
    throw Error(ErrorCode::InferenceSlowerThanWindow, "inference takes " + std::to_string(t_inference_ms) +
                                                          " ms per " + std::to_string(t_window_ms) + " ms window");
  return {t_inference_ms, t_window_ms, 1.0 - t_inference_ms / t_window_ms};
}

}  // namespace isphar
