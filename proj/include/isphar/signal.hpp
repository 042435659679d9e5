#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace isphar {

inline constexpr std::size_t kNumChannels = 6;

// Channel order is fixed: AccX, AccY, AccZ, GyrX, GyrY, GyrZ.
enum class Channel : std::size_t { AccX = 0, AccY, AccZ, GyrX, GyrY, GyrZ };

inline constexpr double kAccFullScaleG = 8.0;
inline constexpr double kGyroFullScaleDps = 2000.0;

inline constexpr double full_scale(std::size_t channel) {
  return channel < 3 ? kAccFullScaleG : kGyroFullScaleDps;
}

struct Sample {
  double t = 0.0;  // seconds since recording start
  std::array<double, kNumChannels> v{};  // ax, ay, az [g], gx, gy, gz [dps]

  double& operator[](std::size_t c) { return v[c]; }
  double operator[](std::size_t c) const { return v[c]; }
  bool operator==(const Sample&) const = default;
};

struct Recording {
  std::vector<Sample> samples;
  double rate_hz = 0.0;
  std::optional<std::string> label;
  std::string source_id;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double duration_s() const { return rate_hz > 0 ? static_cast<double>(samples.size()) / rate_hz : 0.0; }
  std::vector<double> channel(std::size_t c) const;
  bool operator==(const Recording&) const = default;
};

// Fixed-length block of samples stored channel-major so each channel is a
// contiguous series.
class Window {
public:
  Window() = default;
  Window(std::size_t n_samples, double rate_hz, std::optional<std::string> label = std::nullopt);

  std::size_t n_samples() const { return n_; }
  double rate_hz() const { return rate_hz_; }
  const std::optional<std::string>& label() const { return label_; }
  void set_label(std::optional<std::string> label) { label_ = std::move(label); }

  double& at(std::size_t sample, std::size_t channel) { return data_[channel * n_ + sample]; }
  double at(std::size_t sample, std::size_t channel) const { return data_[channel * n_ + sample]; }

  std::span<const double> channel(std::size_t c) const { return {data_.data() + c * n_, n_}; }
  std::span<double> channel(std::size_t c) { return {data_.data() + c * n_, n_}; }

  bool operator==(const Window&) const = default;

private:
  std::size_t n_ = 0;
  double rate_hz_ = 0.0;
  std::optional<std::string> label_;
  std::vector<double> data_;
};

struct CleansePolicy {
  double outlier_sigma = 4.0;
  double trim_rms_window_s = 0.5;
  double trim_rms_ratio = 0.1;

  void validate() const;
};

struct Trimming {
  enum class Kind { Edge, Outlier };
  Recording samples;  // removed (or clipped) segment, original values
  std::string origin_label;
  Kind kind = Kind::Edge;
};

struct CleanseResult {
  Recording recording;
  std::vector<Trimming> trimmings;
};

enum class DecimationMode { BlockMean, PickEveryNth };

Recording decimate(const Recording& rec, std::size_t factor, DecimationMode mode = DecimationMode::BlockMean);

struct PeakOptions {
  double min_prominence = 0.0;
  std::size_t min_distance = 1;
};

std::vector<std::size_t> detect_major_peaks(std::span<const double> series, double min_prominence,
                                            std::size_t min_distance);

// Topographic prominence of each index in `peaks` (standard left/right base rule).
std::vector<double> peak_prominences(std::span<const double> series, std::span<const std::size_t> peaks);

// Default peak settings for a series: prominence 0.5 x std, distance 6 samples at 26 Hz
// scaled to `rate_hz`.
PeakOptions default_peak_options(std::span<const double> series, double rate_hz);

// Mean consecutive-peak interval of one series, if at least two peaks exist.
std::optional<double> mean_peak_interval(std::span<const double> series, const PeakOptions& options);

std::size_t estimate_window_len(std::span<const Recording> recs, std::size_t channel);

CleanseResult cleanse(const Recording& rec, const CleansePolicy& policy = {});

// Rolling RMS with a centered window of `width` samples; edges use the
// samples that exist.
std::vector<double> rolling_rms(std::span<const double> series, std::size_t width);

std::vector<Window> segment(const Recording& rec, std::size_t window_len, std::size_t stride);

// Clamps each channel to its sensor full-scale and replaces non-finite values with 0.
Sample clip_to_full_scale(Sample s);

// Rounds every channel value to the nearest float, the precision a sensor FIFO delivers.
Recording to_sensor_precision(Recording rec);

void validate_recording(const Recording& rec, double spacing_tolerance = 0.1);

std::string_view channel_name(std::size_t c);

}  // namespace isphar
