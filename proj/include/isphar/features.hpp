#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "isphar/error.hpp"
#include "isphar/signal.hpp"

namespace isphar {

inline constexpr std::size_t kFeaturesPerChannel = 13;
inline constexpr std::size_t kNumFeatures = kFeaturesPerChannel * kNumChannels;  // 78
inline constexpr std::uint16_t kFeatureManifestVersion = 1;
inline constexpr std::size_t kDefaultMaWidth = 5;

// Position of each statistic inside a channel's 13-feature block.
enum class Feature : std::size_t {
  Max = 0, Min, Mean, StdDev, Range, Absm, Rms, P2pLf, P2pHf, Amdf, Zcr, Mcr, Mad
};

using FeatureVector = std::array<double, kNumFeatures>;

// Canonical names, `{ACC|GYRO}_{X|Y|Z}_{FEATURE}`, in extraction order.
std::span<const std::string> feature_names();
std::size_t feature_index(std::string_view name);  // throws MaskOutOfRange when unknown

std::string feature_manifest_text();
std::uint64_t feature_manifest_hash();
// Parses a manifest document and returns its version; throws ParseError when
// the names disagree with the compiled-in order.
std::uint16_t parse_feature_manifest(std::string_view text);

struct BasicStats {
  double max = 0, min = 0, mean = 0, std = 0, range = 0, absm = 0;
};

BasicStats basic_stats(std::span<const double> series);
double rms(std::span<const double> series);
std::pair<double, double> p2p_split(std::span<const double> series, std::size_t ma_width);
double amdf(std::span<const double> series);
std::pair<double, double> crossing_rates(std::span<const double> series);  // (zcr, mcr)
double mad(std::span<const double> series);

void validate_ma_width(std::size_t ma_width);

// All 13 statistics of one channel, handed to `sink(feature, value)` in
// canonical order. Works on float or double input; arithmetic is always
// carried out in double, in a fixed order, so a float buffer and a double
// buffer holding the same values give bit-identical results.
template <typename T, typename Sink>
void visit_channel_features(std::span<const T> x, std::size_t ma_width, Sink&& sink) {
  validate_ma_width(ma_width);
  const std::size_t n = x.size();
  if (n < 2 || n < ma_width) throw Error(ErrorCode::SeriesTooShort, "series shorter than 2 samples or ma_width");
  const double inv_n = 1.0 / static_cast<double>(n);
  const double inv_n1 = 1.0 / static_cast<double>(n - 1);

  double mx = -std::numeric_limits<double>::infinity();
  double mn = std::numeric_limits<double>::infinity();
  double sum = 0.0, abs_sum = 0.0, sq_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = static_cast<double>(x[i]);
    mx = std::max(mx, v);
    mn = std::min(mn, v);
    sum += v;
    abs_sum += std::abs(v);
    sq_sum += v * v;
  }
  const double mean = sum * inv_n;

  double dev_sq = 0.0, dev_abs = 0.0, diff_abs = 0.0;
  std::size_t zero_cross = 0, mean_cross = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = static_cast<double>(x[i]);
    dev_sq += (v - mean) * (v - mean);
    dev_abs += std::abs(v - mean);
    if (i + 1 < n) {
      const double next = static_cast<double>(x[i + 1]);
      diff_abs += std::abs(next - v);
      if (v * next < 0.0) ++zero_cross;
      if ((v - mean) * (next - mean) < 0.0) ++mean_cross;
    }
  }

  // Centered moving average with shrinking edge windows; x_h = x - x_l.
  const std::size_t half = (ma_width - 1) / 2;
  double lf_max = -std::numeric_limits<double>::infinity(), lf_min = std::numeric_limits<double>::infinity();
  double hf_max = lf_max, hf_min = lf_min;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(n - 1, i + half);
    double s = 0.0;
    for (std::size_t k = lo; k <= hi; ++k) s += static_cast<double>(x[k]);
    const double low = s / static_cast<double>(hi - lo + 1);
    const double high = static_cast<double>(x[i]) - low;
    lf_max = std::max(lf_max, low);
    lf_min = std::min(lf_min, low);
    hf_max = std::max(hf_max, high);
    hf_min = std::min(hf_min, high);
  }

  sink(Feature::Max, mx);
  sink(Feature::Min, mn);
  sink(Feature::Mean, mean);
  sink(Feature::StdDev, std::sqrt(dev_sq * inv_n));
  sink(Feature::Range, mx - mn);
  sink(Feature::Absm, abs_sum * inv_n);
  sink(Feature::Rms, std::sqrt(sq_sum * inv_n));
  sink(Feature::P2pLf, lf_max - lf_min);
  sink(Feature::P2pHf, hf_max - hf_min);
  sink(Feature::Amdf, diff_abs * inv_n1);
  sink(Feature::Zcr, static_cast<double>(zero_cross) * inv_n1);
  sink(Feature::Mcr, static_cast<double>(mean_cross) * inv_n1);
  sink(Feature::Mad, dev_abs * inv_n);
}

template <typename T>
void channel_features(std::span<const T> x, std::size_t ma_width, std::span<double, kFeaturesPerChannel> out) {
  visit_channel_features(x, ma_width, [&](Feature f, double v) { out[static_cast<std::size_t>(f)] = v; });
}

FeatureVector extract_features(const Window& w, std::size_t ma_width = kDefaultMaWidth);

// Retained subset of the canonical features, kept sorted by canonical index.
class FeatureMask {
public:
  static inline constexpr std::size_t kBitsetBytes = (kNumFeatures + 7) / 8;  // 10
  using Bitset = std::array<std::uint8_t, kBitsetBytes>;

  FeatureMask() = default;  // empty; only valid as a placeholder
  static FeatureMask all();
  static FeatureMask from_indices(std::vector<std::size_t> indices);
  static FeatureMask from_names(std::span<const std::string> names);
  static FeatureMask from_bitset(const Bitset& bits);

  std::span<const std::size_t> indices() const { return kept_; }
  std::size_t size() const { return kept_.size(); }
  bool empty() const { return kept_.empty(); }
  bool contains(std::size_t index) const;
  std::vector<std::string> names() const;
  Bitset bitset() const;
  // Sensor channels referenced by at least one kept feature, ascending.
  std::vector<std::size_t> channels_used() const;

  bool operator==(const FeatureMask&) const = default;

private:
  std::vector<std::size_t> kept_;
};

// The 16-feature subset used by the reduced tree model in the reference
// deployment.
FeatureMask reference_mask_16();

FeatureMask select_top_features(std::span<const double> importance, double fraction);

std::vector<double> apply_mask(std::span<const double> fv, const FeatureMask& mask);

}  // namespace isphar
