#include "isphar/features.hpp"

#include <numeric>
#include <sstream>

namespace isphar {

namespace {

constexpr std::array<std::string_view, kNumChannels> kChannelPrefix{"ACC_X", "ACC_Y", "ACC_Z",
                                                                    "GYRO_X", "GYRO_Y", "GYRO_Z"};
constexpr std::array<std::string_view, kFeaturesPerChannel> kFeatureSuffix{
    "MAX", "MIN", "MEAN", "STD_DEV", "RANGE", "ABSM", "RMS", "P2P_LF", "P2P_HF", "AMDF", "ZCR", "MCR", "MAD"};

const std::vector<std::string>& names_table() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    out.reserve(kNumFeatures);
    for (auto prefix : kChannelPrefix)
      for (auto suffix : kFeatureSuffix) out.push_back(std::string(prefix) + "_" + std::string(suffix));
    return out;
  }();
  return names;
}

void require_non_empty(std::span<const double> x) {
  if (x.empty()) throw Error(ErrorCode::EmptySeries, "series is empty");
}

void require_at_least(std::span<const double> x, std::size_t n) {
  if (x.size() < n) throw Error(ErrorCode::SeriesTooShort, "series needs at least " + std::to_string(n) + " samples");
}

double mean_of(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

}  // namespace

std::span<const std::string> feature_names() { return names_table(); }

std::size_t feature_index(std::string_view name) {
  const auto& names = names_table();
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return i;
  throw Error(ErrorCode::MaskOutOfRange, "unknown feature name '" + std::string(name) + "'");
}

std::string feature_manifest_text() {
  std::ostringstream os;
  os << "# isphar canonical feature order\n";
  os << "version=" << kFeatureManifestVersion << "\n";
  for (const auto& n : names_table()) os << n << "\n";
  return os.str();
}

std::uint64_t feature_manifest_hash() {
  // FNV-1a over the names joined by '\n'.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& n : names_table()) {
    for (unsigned char ch : n) {
      h ^= ch;
      h *= 0x100000001b3ULL;
    }
    h ^= static_cast<unsigned char>('\n');
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint16_t parse_feature_manifest(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::optional<int> version;
  std::vector<std::string> names;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (line.rfind("version=", 0) == 0) {
      version = std::stoi(line.substr(8));
      continue;
    }
    names.push_back(line);
  }
  if (!version) throw Error(ErrorCode::ParseError, "feature manifest lacks a version line");
  if (names != names_table()) throw Error(ErrorCode::ParseError, "feature manifest order differs from the library's");
  return static_cast<std::uint16_t>(*version);
}

BasicStats basic_stats(std::span<const double> x) {
  require_non_empty(x);
  BasicStats s;
  s.max = *std::max_element(x.begin(), x.end());
  s.min = *std::min_element(x.begin(), x.end());
  s.mean = mean_of(x);
  double ss = 0.0, sa = 0.0;
  for (double v : x) {
    ss += (v - s.mean) * (v - s.mean);
    sa += std::abs(v);
  }
  const auto n = static_cast<double>(x.size());
  s.std = std::sqrt(ss / n);
  s.range = s.max - s.min;
  s.absm = sa / n;
  return s;
}

double rms(std::span<const double> x) {
  require_non_empty(x);
  double ss = 0.0;
  for (double v : x) ss += v * v;
  return std::sqrt(ss / static_cast<double>(x.size()));
}

void validate_ma_width(std::size_t ma_width) {
  if (ma_width == 0 || ma_width % 2 == 0)
    throw Error(ErrorCode::InvalidArgument, "ma_width must be a positive odd number, got " + std::to_string(ma_width));
}

std::pair<double, double> p2p_split(std::span<const double> x, std::size_t ma_width) {
  validate_ma_width(ma_width);
  if (x.empty() || x.size() < ma_width)
    throw Error(ErrorCode::SeriesTooShort, "series shorter than ma_width");
  const std::size_t n = x.size();
  const std::size_t half = (ma_width - 1) / 2;
  double lf_max = -std::numeric_limits<double>::infinity(), lf_min = std::numeric_limits<double>::infinity();
  double hf_max = lf_max, hf_min = lf_min;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(n - 1, i + half);
    double s = 0.0;
    for (std::size_t k = lo; k <= hi; ++k) s += x[k];
    const double low = s / static_cast<double>(hi - lo + 1);
    lf_max = std::max(lf_max, low);
    lf_min = std::min(lf_min, low);
    hf_max = std::max(hf_max, x[i] - low);
    hf_min = std::min(hf_min, x[i] - low);
  }
  return {lf_max - lf_min, hf_max - hf_min};
}

double amdf(std::span<const double> x) {
  require_at_least(x, 2);
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < x.size(); ++i) s += std::abs(x[i + 1] - x[i]);
  return s / static_cast<double>(x.size() - 1);
}

std::pair<double, double> crossing_rates(std::span<const double> x) {
  require_at_least(x, 2);
  const double mu = mean_of(x);
  std::size_t zc = 0, mc = 0;
  for (std::size_t i = 0; i + 1 < x.size(); ++i) {
    if (x[i] * x[i + 1] < 0.0) ++zc;
    if ((x[i] - mu) * (x[i + 1] - mu) < 0.0) ++mc;
  }
  const auto d = static_cast<double>(x.size() - 1);
  return {static_cast<double>(zc) / d, static_cast<double>(mc) / d};
}

double mad(std::span<const double> x) {
  require_non_empty(x);
  const double mu = mean_of(x);
  double s = 0.0;
  for (double v : x) s += std::abs(v - mu);
  return s / static_cast<double>(x.size());
}

FeatureVector extract_features(const Window& w, std::size_t ma_width) {
  FeatureVector fv{};
  for (std::size_t c = 0; c < kNumChannels; ++c) {
    std::span<double, kFeaturesPerChannel> block(fv.data() + c * kFeaturesPerChannel, kFeaturesPerChannel);
    channel_features<double>(w.channel(c), ma_width, block);
  }
  return fv;
}

FeatureMask FeatureMask::all() {
  std::vector<std::size_t> idx(kNumFeatures);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return from_indices(std::move(idx));
}

FeatureMask FeatureMask::from_indices(std::vector<std::size_t> indices) {
  if (indices.empty()) throw Error(ErrorCode::MaskOutOfRange, "feature mask must not be empty");
  std::sort(indices.begin(), indices.end());
  if (std::adjacent_find(indices.begin(), indices.end()) != indices.end())
    throw Error(ErrorCode::MaskOutOfRange, "feature mask has duplicate entries");
  if (indices.back() >= kNumFeatures)
    throw Error(ErrorCode::MaskOutOfRange, "feature index " + std::to_string(indices.back()) + " out of range");
  FeatureMask m;
  m.kept_ = std::move(indices);
  return m;
}

FeatureMask FeatureMask::from_names(std::span<const std::string> names) {
  std::vector<std::size_t> idx;
  idx.reserve(names.size());
  for (const auto& n : names) idx.push_back(feature_index(n));
  return from_indices(std::move(idx));
}

FeatureMask FeatureMask::from_bitset(const Bitset& bits) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < kBitsetBytes * 8; ++i) {
    if (!(bits[i / 8] & (1u << (i % 8)))) continue;
    if (i >= kNumFeatures) throw Error(ErrorCode::MaskOutOfRange, "mask bit set beyond feature count");
    idx.push_back(i);
  }
  return from_indices(std::move(idx));
}

bool FeatureMask::contains(std::size_t index) const {
  return std::binary_search(kept_.begin(), kept_.end(), index);
}

std::vector<std::string> FeatureMask::names() const {
  std::vector<std::string> out;
  for (std::size_t i : kept_) out.push_back(names_table()[i]);
  return out;
}

FeatureMask::Bitset FeatureMask::bitset() const {
  Bitset bits{};
  for (std::size_t i : kept_) bits[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  return bits;
}

std::vector<std::size_t> FeatureMask::channels_used() const {
  std::vector<std::size_t> out;
  for (std::size_t i : kept_) {
    const std::size_t c = i / kFeaturesPerChannel;
    if (out.empty() || out.back() != c) out.push_back(c);
  }
  return out;
}

FeatureMask reference_mask_16() {
  static const std::vector<std::string> names{
      "ACC_Y_STD_DEV", "ACC_X_MAX",  "ACC_X_MEAN",    "ACC_X_MIN",     "ACC_Z_MEAN",    "ACC_Z_MIN",
      "ACC_Y_MAD",     "ACC_X_RMS",  "ACC_Z_P2P_HF",  "ACC_Y_P2P_LF",  "ACC_Z_RMS",     "ACC_Y_MIN",
      "GYRO_Y_MAD",    "ACC_Y_ZCR",  "ACC_Y_P2P_HF",  "GYRO_Y_AMDF"};
  return FeatureMask::from_names(names);
}

FeatureMask select_top_features(std::span<const double> importance, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw Error(ErrorCode::InvalidFraction, "fraction must lie in (0, 1], got " + std::to_string(fraction));
  if (importance.size() != kNumFeatures)
    throw Error(ErrorCode::InvalidArgument, "importance must have " + std::to_string(kNumFeatures) + " entries");
  for (double v : importance)
    if (!(v >= 0.0)) throw Error(ErrorCode::InvalidArgument, "importance scores must be non-negative");
  // ceil with a guard against representation error (0.2 * 78 = 15.600000000000001).
  const double raw = fraction * static_cast<double>(kNumFeatures);
  auto keep = static_cast<std::size_t>(std::ceil(raw - 1e-9));
  keep = std::clamp<std::size_t>(keep, 1, kNumFeatures);
  std::vector<std::size_t> order(kNumFeatures);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return importance[a] > importance[b]; });
  order.resize(keep);
  return FeatureMask::from_indices(std::move(order));
}

std::vector<double> apply_mask(std::span<const double> fv, const FeatureMask& mask) {
  if (mask.empty()) throw Error(ErrorCode::MaskOutOfRange, "empty feature mask");
  std::vector<double> out;
  out.reserve(mask.size());
  for (std::size_t i : mask.indices()) {
    if (i >= fv.size()) throw Error(ErrorCode::MaskOutOfRange, "mask index " + std::to_string(i) + " beyond vector");
    out.push_back(fv[i]);
  }
  return out;
}

}  // namespace isphar
