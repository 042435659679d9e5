#pragma once

// Straight-from-the-formula reference implementations. They share no code
// with the library and favour clarity over speed.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "isphar/forest.hpp"

namespace isphar::oracle {

inline double mean(const std::vector<double>& x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

// Centered moving average; each output averages the samples that exist within
// half a window on either side.
inline std::vector<double> moving_average(const std::vector<double>& x, std::size_t width) {
  const long half = static_cast<long>(width / 2);
  const long n = static_cast<long>(x.size());
  std::vector<double> out;
  for (long i = 0; i < n; ++i) {
    std::vector<double> hood;
    for (long k = i - half; k <= i + half; ++k)
      if (k >= 0 && k < n) hood.push_back(x[static_cast<std::size_t>(k)]);
    out.push_back(mean(hood));
  }
  return out;
}

inline double peak_to_peak(const std::vector<double>& x) {
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  return *hi - *lo;
}

// Order: max, min, mean, std, range, absm, rms, p2p_lf, p2p_hf, amdf, zcr, mcr, mad.
inline std::array<double, 13> channel_features(const std::vector<double>& x, std::size_t ma_width) {
  const double n = static_cast<double>(x.size());
  const double mu = mean(x);
  const double mx = *std::max_element(x.begin(), x.end());
  const double mn = *std::min_element(x.begin(), x.end());
  double var = 0, absm = 0, sq = 0, mad = 0, amdf = 0, zc = 0, mc = 0;
  for (double v : x) {
    var += std::pow(v - mu, 2);
    absm += std::fabs(v);
    sq += v * v;
    mad += std::fabs(v - mu);
  }
  for (std::size_t i = 0; i + 1 < x.size(); ++i) {
    amdf += std::fabs(x[i + 1] - x[i]);
    zc += (x[i] * x[i + 1] < 0) ? 1 : 0;
    mc += ((x[i] - mu) * (x[i + 1] - mu) < 0) ? 1 : 0;
  }
  const std::vector<double> low = moving_average(x, ma_width);
  std::vector<double> high(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) high[i] = x[i] - low[i];
  return {mx,
          mn,
          mu,
          std::sqrt(var / n),
          mx - mn,
          absm / n,
          std::sqrt(sq / n),
          peak_to_peak(low),
          peak_to_peak(high),
          amdf / (n - 1),
          zc / (n - 1),
          mc / (n - 1),
          mad / n};
}

inline bool close(double a, double b, double rel, double abs_floor = 1e-12) {
  return std::fabs(a - b) <= std::max(abs_floor, rel * std::max(std::fabs(a), std::fabs(b)));
}

// Bitwise reflected CRC-32 (polynomial 0xEDB88320).
inline std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  std::uint32_t crc = 0xFFFFFFFFu;
  for (std::uint8_t b : bytes) {
    crc ^= b;
    for (int k = 0; k < 8; ++k) crc = (crc & 1u) ? (crc >> 1) ^ 0xEDB88320u : crc >> 1;
  }
  return ~crc;
}

// Recursive evaluation of one tree from its definition.
inline float tree_value(const Tree& t, std::span<const float> fv, std::size_t node = 0) {
  const TreeNode& n = t.nodes[node];
  if (n.is_leaf) return n.value;
  return fv[n.feature] < n.threshold ? tree_value(t, fv, n.left) : tree_value(t, fv, n.right);
}

inline std::vector<float> forest_scores(const Forest& f, std::span<const float> fv) {
  std::vector<float> s(f.n_classes);
  for (std::size_t c = 0; c < f.n_classes; ++c) {
    // Round by round, so r rounds = (r - 1) rounds + one more contribution.
    float acc = f.base_score;
    for (std::size_t r = 0; r < f.n_rounds; ++r) acc += f.shrinkage * tree_value(f.tree(r, c), fv);
    s[c] = acc;
  }
  return s;
}

// Every strict local maximum (neighbours on both sides lower) of a series.
inline std::vector<std::size_t> strict_local_maxima(const std::vector<double>& x) {
  std::vector<std::size_t> out;
  for (std::size_t i = 1; i + 1 < x.size(); ++i)
    if (x[i] > x[i - 1] && x[i] > x[i + 1]) out.push_back(i);
  return out;
}

}  // namespace isphar::oracle
