#include "isphar/signal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "isphar/error.hpp"

namespace isphar {

namespace {

struct Moments {
  double mean = 0.0;
  double std = 0.0;
};

Moments moments(std::span<const double> x) {
  Moments m;
  if (x.empty()) return m;
  double sum = 0.0;
  for (double v : x) sum += v;
  m.mean = sum / static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - m.mean) * (v - m.mean);
  m.std = std::sqrt(ss / static_cast<double>(x.size()));
  return m;
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  double hi = values[mid];
  if (values.size() % 2 == 1) return hi;
  double lo = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

// Winsorizes `x` in place until every value lies within mean +/- sigma * std of
// the clipped data itself. Returns true when any value changed; marks clipped
// positions in `clipped`.
bool winsorize_to_fixed_point(std::vector<double>& x, double sigma, std::vector<char>& clipped) {
  constexpr int kMaxIterations = 1000;
  constexpr double kSlack = 1e-9;
  bool any = false;
  for (int iter = 0; iter < kMaxIterations; ++iter) {
    const Moments m = moments(x);
    const double bound = sigma * m.std;
    const double limit = bound * (1.0 + kSlack);
    bool changed = false;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = x[i] - m.mean;
      if (std::abs(d) > limit) {
        x[i] = d > 0 ? m.mean + bound : m.mean - bound;
        clipped[i] = 1;
        changed = true;
      }
    }
    if (!changed) break;
    any = true;
  }
  return any;
}

Recording slice(const Recording& rec, std::size_t begin, std::size_t end) {
  Recording out;
  out.rate_hz = rec.rate_hz;
  out.label = rec.label;
  out.source_id = rec.source_id;
  out.samples.assign(rec.samples.begin() + static_cast<std::ptrdiff_t>(begin),
                     rec.samples.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

}  // namespace

std::string_view channel_name(std::size_t c) {
  static constexpr std::array<std::string_view, kNumChannels> names{"ax", "ay", "az", "gx", "gy", "gz"};
  return c < kNumChannels ? names[c] : std::string_view{"?"};
}

std::vector<double> Recording::channel(std::size_t c) const {
  std::vector<double> out(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) out[i] = samples[i][c];
  return out;
}

Window::Window(std::size_t n_samples, double rate_hz, std::optional<std::string> label)
    : n_(n_samples), rate_hz_(rate_hz), label_(std::move(label)), data_(n_samples * kNumChannels, 0.0) {}

void CleansePolicy::validate() const {
  if (!(outlier_sigma > 0.0)) throw Error(ErrorCode::InvalidArgument, "outlier_sigma must be > 0");
  if (!(trim_rms_ratio > 0.0 && trim_rms_ratio < 1.0))
    throw Error(ErrorCode::InvalidArgument, "trim_rms_ratio must lie in (0, 1)");
  if (!(trim_rms_window_s > 0.0)) throw Error(ErrorCode::InvalidArgument, "trim_rms_window_s must be > 0");
}

Recording decimate(const Recording& rec, std::size_t factor, DecimationMode mode) {
  if (factor == 0) throw Error(ErrorCode::InvalidArgument, "decimation factor must be >= 1");
  if (rec.empty()) throw Error(ErrorCode::EmptyRecording, "cannot decimate an empty recording");
  Recording out;
  out.rate_hz = rec.rate_hz / static_cast<double>(factor);
  out.label = rec.label;
  out.source_id = rec.source_id;
  const std::size_t n_out = rec.size() / factor;
  out.samples.resize(n_out);
  for (std::size_t b = 0; b < n_out; ++b) {
    const Sample* block = rec.samples.data() + b * factor;
    Sample s;
    s.t = block[0].t;
    if (mode == DecimationMode::PickEveryNth) {
      s.v = block[0].v;
    } else {
      for (std::size_t c = 0; c < kNumChannels; ++c) {
        double sum = 0.0;
        for (std::size_t k = 0; k < factor; ++k) sum += block[k][c];
        s[c] = sum / static_cast<double>(factor);
      }
    }
    out.samples[b] = s;
  }
  return out;
}

std::vector<double> peak_prominences(std::span<const double> x, std::span<const std::size_t> peaks) {
  std::vector<double> out;
  out.reserve(peaks.size());
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.size());
  for (std::size_t p : peaks) {
    const double height = x[p];
    double left_min = height;
    for (std::ptrdiff_t j = static_cast<std::ptrdiff_t>(p); j >= 0 && x[j] <= height; --j)
      left_min = std::min(left_min, x[j]);
    double right_min = height;
    for (std::ptrdiff_t j = static_cast<std::ptrdiff_t>(p); j < n && x[j] <= height; ++j)
      right_min = std::min(right_min, x[j]);
    out.push_back(height - std::max(left_min, right_min));
  }
  return out;
}

std::vector<std::size_t> detect_major_peaks(std::span<const double> x, double min_prominence,
                                            std::size_t min_distance) {
  if (min_distance == 0) throw Error(ErrorCode::InvalidArgument, "min_distance must be >= 1");
  const std::size_t n = x.size();
  std::vector<std::size_t> candidates;
  // Local maxima; a flat top counts once, at its middle sample.
  std::size_t i = 1;
  while (n >= 3 && i + 1 < n) {
    if (x[i - 1] < x[i]) {
      std::size_t ahead = i + 1;
      while (ahead + 1 < n && x[ahead] == x[i]) ++ahead;
      if (x[ahead] < x[i]) {
        candidates.push_back((i + ahead - 1) / 2);
        i = ahead;
        continue;
      }
    }
    ++i;
  }

  const std::vector<double> prom = peak_prominences(x, candidates);
  std::vector<std::size_t> prominent;
  for (std::size_t k = 0; k < candidates.size(); ++k)
    if (prom[k] >= min_prominence) prominent.push_back(candidates[k]);

  // Greedy distance filter: visit higher peaks first, lower index on ties.
  std::vector<std::size_t> order(prominent.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return x[prominent[a]] > x[prominent[b]]; });
  std::vector<char> keep(prominent.size(), 1);
  for (std::size_t oi : order) {
    if (!keep[oi]) continue;
    for (std::size_t k = 0; k < prominent.size(); ++k) {
      if (k == oi || !keep[k]) continue;
      const std::size_t a = prominent[k], b = prominent[oi];
      const std::size_t gap = a > b ? a - b : b - a;
      if (gap < min_distance) keep[k] = 0;
    }
  }
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < prominent.size(); ++k)
    if (keep[k]) out.push_back(prominent[k]);
  return out;
}

PeakOptions default_peak_options(std::span<const double> series, double rate_hz) {
  PeakOptions opt;
  opt.min_prominence = 0.5 * moments(series).std;
  const double scaled = 6.0 * rate_hz / 26.0;
  opt.min_distance = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(scaled)));
  return opt;
}

std::optional<double> mean_peak_interval(std::span<const double> series, const PeakOptions& options) {
  const auto peaks = detect_major_peaks(series, options.min_prominence, options.min_distance);
  if (peaks.size() < 2) return std::nullopt;
  return static_cast<double>(peaks.back() - peaks.front()) / static_cast<double>(peaks.size() - 1);
}

std::size_t estimate_window_len(std::span<const Recording> recs, std::size_t channel) {
  if (channel >= kNumChannels) throw Error(ErrorCode::InvalidArgument, "channel index out of range");
  double sum = 0.0;
  std::size_t count = 0;
  for (const Recording& r : recs) {
    if (r.rate_hz != recs.front().rate_hz)
      throw Error(ErrorCode::InvalidArgument, "recordings must share rate_hz");
    const std::vector<double> series = r.channel(channel);
    if (auto interval = mean_peak_interval(series, default_peak_options(series, r.rate_hz))) {
      sum += *interval;
      ++count;
    }
  }
  if (count == 0) throw Error(ErrorCode::NoPeaksFound, "no recording has two major peaks");
  return static_cast<std::size_t>(std::lround(sum / static_cast<double>(count)));
}

std::vector<double> rolling_rms(std::span<const double> x, std::size_t width) {
  const std::size_t n = x.size();
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + x[i] * x[i];
  width = std::max<std::size_t>(width, 1);
  const std::size_t back = (width - 1) / 2;
  const std::size_t fwd = width - 1 - back;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= back ? i - back : 0;
    const std::size_t hi = std::min(n - 1, i + fwd);
    const double ss = std::max(0.0, prefix[hi + 1] - prefix[lo]);
    out[i] = std::sqrt(ss / static_cast<double>(hi - lo + 1));
  }
  return out;
}

namespace {

// Returns [first, last] of the active span, or nullopt when nothing is active.
std::optional<std::pair<std::size_t, std::size_t>> active_span(const Recording& rec, const CleansePolicy& policy) {
  const std::size_t n = rec.size();
  const auto width =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(policy.trim_rms_window_s * rec.rate_hz)));
  std::vector<char> active(n, 0);
  bool any_channel = false;
  for (std::size_t c = 0; c < kNumChannels; ++c) {
    std::vector<double> x = rec.channel(c);
    const double mean = moments(x).mean;
    for (double& v : x) v -= mean;
    const std::vector<double> rms = rolling_rms(x, width);
    const double med = median(rms);
    if (!(med > 0.0)) continue;
    any_channel = true;
    const double threshold = policy.trim_rms_ratio * med;
    for (std::size_t i = 0; i < n; ++i)
      if (rms[i] >= threshold) active[i] = 1;
  }
  if (!any_channel) return std::nullopt;
  std::size_t first = 0;
  while (first < n && !active[first]) ++first;
  if (first == n) return std::nullopt;
  std::size_t last = n - 1;
  while (last > first && !active[last]) --last;
  return std::make_pair(first, last);
}

}  // namespace

CleanseResult cleanse(const Recording& rec, const CleansePolicy& policy) {
  policy.validate();
  if (rec.empty()) throw Error(ErrorCode::EmptyRecording, "cannot cleanse an empty recording");

  Recording work = rec;
  for (Sample& s : work.samples) s = clip_to_full_scale(s);
  // origin[i] = index into `rec` of work.samples[i]
  std::vector<std::size_t> origin(rec.size());
  std::iota(origin.begin(), origin.end(), std::size_t{0});
  std::vector<char> clipped_any(rec.size(), 0);

  constexpr int kMaxPasses = 64;
  for (int pass = 0; pass < kMaxPasses; ++pass) {
    bool changed = false;
    for (std::size_t c = 0; c < kNumChannels; ++c) {
      std::vector<double> x = work.channel(c);
      std::vector<char> clipped(x.size(), 0);
      if (winsorize_to_fixed_point(x, policy.outlier_sigma, clipped)) {
        changed = true;
        for (std::size_t i = 0; i < x.size(); ++i) {
          work.samples[i][c] = x[i];
          if (clipped[i]) clipped_any[origin[i]] = 1;
        }
      }
    }
    const auto span = active_span(work, policy);
    if (!span) throw Error(ErrorCode::FullyTrimmed, "no active signal survives cleansing");
    const auto [first, last] = *span;
    if (first > 0 || last + 1 < work.size()) {
      changed = true;
      work.samples = std::vector<Sample>(work.samples.begin() + static_cast<std::ptrdiff_t>(first),
                                         work.samples.begin() + static_cast<std::ptrdiff_t>(last + 1));
      origin = std::vector<std::size_t>(origin.begin() + static_cast<std::ptrdiff_t>(first),
                                        origin.begin() + static_cast<std::ptrdiff_t>(last + 1));
    }
    if (!changed) break;
  }

  CleanseResult result;
  const std::size_t kept_begin = origin.front();
  const std::size_t kept_end = origin.back() + 1;
  const std::string origin_label = rec.label.value_or("");
  if (kept_begin > 0) result.trimmings.push_back({slice(rec, 0, kept_begin), origin_label, Trimming::Kind::Edge});
  if (kept_end < rec.size())
    result.trimmings.push_back({slice(rec, kept_end, rec.size()), origin_label, Trimming::Kind::Edge});
  for (std::size_t i = kept_begin; i < kept_end;) {
    if (!clipped_any[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < kept_end && clipped_any[j]) ++j;
    result.trimmings.push_back({slice(rec, i, j), origin_label, Trimming::Kind::Outlier});
    i = j;
  }

  const double t0 = rec.samples[kept_begin].t;
  for (Sample& s : work.samples) s.t -= t0;
  result.recording = std::move(work);
  return result;
}

std::vector<Window> segment(const Recording& rec, std::size_t window_len, std::size_t stride) {
  if (window_len == 0 || stride == 0) throw Error(ErrorCode::InvalidArgument, "window_len and stride must be >= 1");
  std::vector<Window> out;
  for (std::size_t start = 0; start + window_len <= rec.size(); start += stride) {
    Window w(window_len, rec.rate_hz, rec.label);
    for (std::size_t i = 0; i < window_len; ++i)
      for (std::size_t c = 0; c < kNumChannels; ++c) w.at(i, c) = rec.samples[start + i][c];
    out.push_back(std::move(w));
  }
  return out;
}

Sample clip_to_full_scale(Sample s) {
  for (std::size_t c = 0; c < kNumChannels; ++c) {
    const double fs = full_scale(c);
    if (!std::isfinite(s[c])) s[c] = 0.0;
    s[c] = std::clamp(s[c], -fs, fs);
  }
  return s;
}

Recording to_sensor_precision(Recording rec) {
  for (Sample& s : rec.samples)
    for (double& v : s.v) v = static_cast<double>(static_cast<float>(v));
  return rec;
}

void validate_recording(const Recording& rec, double spacing_tolerance) {
  if (!(rec.rate_hz > 0.0)) throw Error(ErrorCode::InvalidArgument, "rate_hz must be positive");
  const double dt = 1.0 / rec.rate_hz;
  for (std::size_t i = 0; i < rec.size(); ++i) {
    for (double v : rec.samples[i].v)
      if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "non-finite value at sample " + std::to_string(i));
    if (i == 0) continue;
    const double gap = rec.samples[i].t - rec.samples[i - 1].t;
    if (!(gap > 0.0) || std::abs(gap - dt) > spacing_tolerance * dt)
      throw Error(ErrorCode::RateMismatch, "timestamp spacing at sample " + std::to_string(i) +
                                               " contradicts rate " + std::to_string(rec.rate_hz) + " Hz");
  }
}

}  // namespace isphar
