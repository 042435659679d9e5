#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "isphar/signal.hpp"

namespace isphar {

inline constexpr std::string_view kUnclassifiedLabel = "Unclassified";

// ---- CSV ingestion --------------------------------------------------------
//
// Line 1: #rate_hz=<int>,label=<string>,source=<string>
// Line 2: t,ax,ay,az,gx,gy,gz
// Then one decimal row per sample. UTF-8, LF line endings.

Recording parse_csv(std::string_view text, std::string_view origin = "<memory>");
Recording load_csv(const std::filesystem::path& path);
std::string format_csv(const Recording& rec);
void save_csv(const Recording& rec, const std::filesystem::path& path);

// ---- Label taxonomy -------------------------------------------------------

struct LabelTaxonomy {
  std::vector<std::string> classes;
  std::vector<std::pair<std::string, std::vector<std::string>>> groups;

  void validate() const;
  const std::string& group_of(std::string_view cls) const;
  std::size_t index_of(std::string_view cls) const;
};

// 24 classes in seven groups; the last class is Unclassified.
LabelTaxonomy default_taxonomy();

// ---- Synthetic corpus -----------------------------------------------------

struct ClassSynth {
  std::string name;
  double base_hz = 1.0;
  std::array<double, kNumChannels> amplitude{};  // per-channel sinusoid amplitude
  std::array<double, kNumChannels> offset{};     // per-channel DC level (gravity for acc)
  double harmonic_ratio = 0.3;                   // 2nd-harmonic amplitude relative to the base
  double noise_std = 0.05;                       // additive noise, fraction of channel amplitude
  double duration_s = 120.0;                     // active signal per class, split over participants
  std::size_t participants = 3;
  double amp_jitter = 0.1;   // per-participant amplitude spread (fraction)
  double freq_jitter = 0.02;  // per-participant frequency spread (fraction)
  // When non-empty, participant p replays participant p / mimic.size() of
  // class mimic[p % mimic.size()] (same motion, fresh noise); used to build
  // classes that duplicate or straddle existing ones.
  std::vector<std::string> mimic;
};

struct SynthSpec {
  double rate_hz = 104.0;
  double edge_idle_s = 0.75;  // quiet lead-in/lead-out around each recording
  double idle_noise = 0.004;  // absolute noise during idle edges (g; x100 for dps)
  std::vector<ClassSynth> classes;

  void validate() const;
  const ClassSynth& find(std::string_view name) const;
};

// Periodic classes for every taxonomy class except Unclassified. Base
// frequencies are spaced 0.4 Hz apart; amplitude and gravity profiles are
// drawn from `seed`.
SynthSpec default_synth_spec(const LabelTaxonomy& taxonomy, double minutes_per_class = 2.0,
                             std::uint64_t seed = 7);

std::vector<Recording> synth_dataset(const SynthSpec& spec, std::uint64_t seed);

struct BurstOptions {
  std::size_t count = 4;
  double duration_s = 30.0;
  double rate_hz = 104.0;
};

// Synthetic random high-velocity movements: a mean-reverting uniform random
// walk per channel squashed toward full scale.
Recording synth_burst(double duration_s, double rate_hz, std::uint64_t seed);

std::vector<Recording> build_unclassified(std::span<const Trimming> trimmings,
                                          std::span<const Recording> outlier_segments, std::uint64_t rng_seed,
                                          const BurstOptions& bursts = {});

// ---- Splitting ------------------------------------------------------------

struct SplitRatios {
  double train = 0.8, validation = 0.1, test = 0.1;
};

struct IndexSplit {
  std::vector<std::size_t> train, validation, test;
};

struct DatasetSplit {
  std::vector<Window> train, validation, test;
  std::uint64_t seed = 0;
};

struct Fold {
  std::vector<std::size_t> train, validation;
};

IndexSplit split_stratified_indices(std::span<const std::string> labels, const SplitRatios& ratios,
                                    std::uint64_t seed);
DatasetSplit split_stratified(std::span<const Window> windows, const SplitRatios& ratios, std::uint64_t seed);
std::vector<Fold> kfold_stratified(std::span<const std::string> labels, std::size_t k, std::uint64_t seed);

// ---- Separability ---------------------------------------------------------

// Z-scores each column in place (zero-variance columns become 0).
void standardize_columns(std::vector<double>& rows, std::size_t dims);

// Mean silhouette coefficient under Euclidean distance.
double silhouette_score(std::span<const double> rows, std::size_t dims, std::span<const int> labels);

}  // namespace isphar
