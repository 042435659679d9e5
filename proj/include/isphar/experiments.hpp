#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "isphar/injection.hpp"
#include "isphar/pipeline.hpp"

namespace isphar {

// Model family plus the mask that feeds it.
struct ModelRecipe {
  std::string kind = "forest";  // "forest" or "mlp"
  FeatureMask mask = FeatureMask::all();
};

// Trains one model on `train` (full 78-wide rows); `val` drives early stopping.
Model train_model(const LabeledFeatures& train, const LabeledFeatures& val, const ModelRecipe& recipe,
                  const PipelineConfig& cfg, TrainHistory* history = nullptr);

struct CvResult {
  std::vector<double> fold_accuracy;
  double mean = 0.0;
  double stddev = 0.0;  // population
};

CvResult cross_validate(const LabeledFeatures& data, const ModelRecipe& recipe, const PipelineConfig& cfg);

// Forest importance averaged over a k-fold run, then the top fraction of features kept.
FeatureMask importance_mask(const LabeledFeatures& data, const PipelineConfig& cfg);

// Synthetic 31-label curriculum: the 24 default classes plus near-copies of a
// few of them (duplicates) and blends of two (straddlers).
struct InjectionScenario {
  SynthSpec spec;
  std::vector<std::string> seeds;
  std::vector<std::string> candidates;  // injection order
  MergePolicy policy;
  std::vector<std::string> all_labels;  // corpus label order, Unclassified last
};

InjectionScenario default_injection_scenario(const PipelineConfig& cfg);

// Train function over a prebuilt corpus: keeps rows whose label belongs to
// the requested classes, relabels members to class names, trains on a fixed
// stratified split, and reports the validation confusion.
TrainFn make_corpus_train_fn(const Corpus& corpus, const PipelineConfig& cfg, ModelRecipe recipe = {});

}  // namespace isphar
