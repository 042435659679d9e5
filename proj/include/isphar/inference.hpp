#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "isphar/modelpack.hpp"
#include "isphar/signal.hpp"

namespace isphar {

struct ClassificationEvent {
  std::uint64_t window_index = 0;
  std::size_t label = 0;
  float top_score = 0.0f;
};

// Streaming classifier over a decoded pack. Every buffer is allocated in the
// constructor; push_sample never allocates. Only the channels the feature
// mask reads are buffered.
class Engine {
public:
  Engine(std::span<const std::uint8_t> pack, std::size_t window_len = 39, std::size_t ma_width = kDefaultMaWidth,
         std::size_t stride = 0, const AccountingModel& accounting = {});

  // Returns true when this sample completed a window; the result is then in last_event().
  bool push_sample(const Sample& s);
  // Convenience wrapper; appends to `events` (which may allocate).
  std::size_t push_samples(std::span<const Sample> samples, std::vector<ClassificationEvent>& events);

  const ClassificationEvent& last_event() const { return last_; }
  std::span<const float> last_scores() const { return scores_view_; }
  const Model& model() const { return model_; }
  const FootprintReport& footprint() const { return footprint_; }
  std::size_t window_len() const { return window_len_; }
  std::size_t stride() const { return stride_; }
  std::uint64_t windows_classified() const { return next_index_; }
  double total_classify_seconds() const { return classify_seconds_; }
  std::size_t buffer_bytes() const;
  void reset();

private:
  void classify();

  Model model_;
  FootprintReport footprint_;
  std::size_t window_len_, stride_, ma_width_;
  std::array<int, kNumChannels> slot_{};           // channel -> buffer slot, -1 when unused
  std::array<std::uint16_t, kNumChannels> wanted_{};  // bit f set when feature f of the channel is masked in
  std::size_t n_slots_ = 0;

  std::vector<float> window_;   // slot-major, window_len_ per slot
  std::vector<float> features_;
  std::vector<float> ping_, pong_;  // MLP activations
  std::vector<float> scores_;      // forest accumulator
  std::vector<std::byte> scratch_;

  std::size_t fill_ = 0;
  std::size_t skip_ = 0;  // samples to drop when stride exceeds the window
  std::uint64_t next_index_ = 0;
  ClassificationEvent last_;
  std::span<const float> scores_view_;
  double classify_seconds_ = 0.0;
};

struct DutyCycleReport {
  double t_inference_ms = 0.0;
  double t_window_ms = 0.0;
  double idle_fraction = 0.0;
};

DutyCycleReport duty_cycle(double t_inference_ms, double t_window_ms);

}  // namespace isphar
