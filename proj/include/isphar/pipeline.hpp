#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "isphar/dataset.hpp"
#include "isphar/forest.hpp"
#include "isphar/mlp.hpp"
#include "isphar/modelpack.hpp"
#include "isphar/signal.hpp"
#include "isphar/table.hpp"

namespace isphar {

struct PipelineConfig {
  double raw_rate_hz = 104.0;
  double target_rate_hz = 26.0;
  std::size_t decimation = 4;
  std::string decimation_mode = "mean";        // "mean" or "pick" (every Nth sample)
  std::string stage_order = "cleanse_first";  // or "decimate_first"
  std::size_t window_len = 39;
  std::size_t stride = 39;
  std::size_t ma_width = kDefaultMaWidth;
  CleansePolicy cleanse{};
  SplitRatios split{};
  std::size_t folds = 5;
  std::string model_kind = "forest";  // "forest" or "mlp"
  TrainConfig mlp{};
  GbdtHyper gbdt{};
  double top_fraction = 0.2;
  std::string mask = "all";  // "all", "reference16", or "top"
  Budget budget{};
  AccountingModel accounting{};
  double tau = 0.15;
  double inject_validation = 0.3;  // validation share of each injection retrain
  std::string merge_policy_path;
  double minutes_per_class = 2.0;
  BurstOptions bursts{};
  std::uint64_t seed = 0;

  void validate() const;
  DecimationMode decimation_kind() const;
};

// Flat `key = value` lines; `#` starts a comment. Unknown keys are ConfigError.
PipelineConfig parse_config(std::string_view text, PipelineConfig base = {});
PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base = {});
std::string format_config(const PipelineConfig& cfg);

struct Preprocessed {
  Recording recording;  // cleansed, decimated, sensor precision
  std::vector<Trimming> trimmings;
};

// Raw rate to target rate at sensor precision, using the configured mode.
Recording downsample(const Recording& raw, const PipelineConfig& cfg);

Preprocessed preprocess(const Recording& raw, const PipelineConfig& cfg);
std::vector<Window> make_windows(const Recording& decimated, const PipelineConfig& cfg);

// Trimmings plus random bursts, decimated and labeled Unclassified.
std::vector<Recording> unclassified_recordings(std::span<const Trimming> trimmings, const PipelineConfig& cfg);

struct Corpus {
  std::vector<Window> windows;
  std::vector<std::string> classes;  // label order used for the feature table
  LabeledFeatures features;          // full 78-wide
};

// Preprocesses labeled raw recordings, adds the Unclassified class built from
// the trimmings plus random bursts, and featurizes every window. `classes`
// fixes label order; empty means first appearance, with Unclassified last.
Corpus build_corpus(std::span<const Recording> raw, const PipelineConfig& cfg, std::span<const std::string> classes = {});

// Synthesizes the default corpus for `taxonomy` and builds it.
Corpus synth_corpus(const PipelineConfig& cfg, const LabelTaxonomy& taxonomy = default_taxonomy());

}  // namespace isphar
