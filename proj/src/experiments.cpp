#include "isphar/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "isphar/error.hpp"

namespace isphar {

Model train_model(const LabeledFeatures& train, const LabeledFeatures& val, const ModelRecipe& recipe,
                  const PipelineConfig& cfg, TrainHistory* history) {
  if (recipe.kind == "forest") {
    GbdtHyper h = cfg.gbdt;
    h.seed = cfg.seed;
    Forest f = gbdt_train(train.masked(recipe.mask), val.empty() ? val : val.masked(recipe.mask), h, recipe.mask);
    f.ma_width = cfg.ma_width;
    return f;
  }
  if (recipe.kind == "mlp") {
    TrainConfig t = cfg.mlp;
    t.seed = cfg.seed;
    MlpTrainResult r = mlp_train(train.masked(recipe.mask), val.masked(recipe.mask), t, recipe.mask);
    r.model.ma_width = cfg.ma_width;
    if (history != nullptr) *history = std::move(r.history);
    return std::move(r.model);
  }
  throw Error(ErrorCode::ConfigError, "unknown model kind '" + recipe.kind + "'");
}

CvResult cross_validate(const LabeledFeatures& data, const ModelRecipe& recipe, const PipelineConfig& cfg) {
  const auto labels = data.label_names();
  const auto folds = kfold_stratified(labels, cfg.folds, cfg.seed);
  CvResult r;
  for (const Fold& f : folds) {
    const auto tr = data.subset(f.train);
    const auto va = data.subset(f.validation);
    const Model m = train_model(tr, va, recipe, cfg);
    r.fold_accuracy.push_back(evaluate(m, va).accuracy);
  }
  double sum = 0.0;
  for (double a : r.fold_accuracy) sum += a;
  r.mean = sum / static_cast<double>(r.fold_accuracy.size());
  double ss = 0.0;
  for (double a : r.fold_accuracy) ss += (a - r.mean) * (a - r.mean);
  r.stddev = std::sqrt(ss / static_cast<double>(r.fold_accuracy.size()));
  return r;
}

FeatureMask importance_mask(const LabeledFeatures& data, const PipelineConfig& cfg) {
  const auto folds = kfold_stratified(data.label_names(), cfg.folds, cfg.seed);
  std::vector<double> total(kNumFeatures, 0.0);
  const ModelRecipe full{"forest", FeatureMask::all()};
  for (const Fold& f : folds) {
    const Model m = train_model(data.subset(f.train), data.subset(f.validation), full, cfg);
    const auto imp = feature_importance(std::get<Forest>(m));
    for (std::size_t i = 0; i < kNumFeatures; ++i) total[i] += imp[i];
  }
  return select_top_features(total, cfg.top_fraction);
}

namespace {

ClassSynth copy_of(const SynthSpec& spec, const std::string& name, std::vector<std::string> mimic,
                   std::size_t participants, double minutes) {
  ClassSynth c = spec.find(mimic.front());
  c.name = name;
  c.mimic = std::move(mimic);
  c.participants = participants;
  c.duration_s = minutes * 60.0;
  return c;
}

}  // namespace

InjectionScenario default_injection_scenario(const PipelineConfig& cfg) {
  const LabelTaxonomy tax = default_taxonomy();
  InjectionScenario s;
  s.spec = default_synth_spec(tax, cfg.minutes_per_class, cfg.seed);
  const double minutes = cfg.minutes_per_class;

  struct Extra {
    std::string name;
    std::vector<std::string> mimic;
    std::string after;  // injected right after this class
  };
  const std::vector<Extra> extras{
      {"WritingOnBoard", {"Writing"}, "UsingComputer"},
      {"ClickingMouse", {"UsingComputer"}, "UsingComputer"},
      {"BrushingTeeth", {"BrushingHair", "WashingFace"}, "WashingFace"},
      {"Mopping", {"Sweeping"}, "Sweeping"},
      {"Jogging", {"Walking", "Running"}, "Running"},
      {"Skipping", {"Jumping"}, "Jumping"},
      {"Kneading", {"MakingDough"}, "MakingDough"},
  };
  for (const Extra& e : extras)
    s.spec.classes.push_back(copy_of(s.spec, e.name, e.mimic, e.mimic.size() > 1 ? 4 : 2, minutes));

  s.seeds = {"Writing", "BrushingHair", std::string(kUnclassifiedLabel)};
  for (const auto& c : tax.classes) {
    if (std::find(s.seeds.begin(), s.seeds.end(), c) == s.seeds.end()) s.candidates.push_back(c);
    for (const Extra& e : extras)
      if (e.after == c) s.candidates.push_back(e.name);
  }
  s.policy = parse_merge_policy(
      "merge Writing, WritingOnBoard -> Writing\n"
      "merge UsingComputer, ClickingMouse -> UsingComputer\n"
      "merge Sweeping, Mopping -> Sweeping\n"
      "merge BrushingHair, BrushingTeeth -> BrushingHair\n");

  for (const auto& c : s.spec.classes) s.all_labels.push_back(c.name);
  s.all_labels.emplace_back(kUnclassifiedLabel);
  return s;
}

TrainFn make_corpus_train_fn(const Corpus& corpus, const PipelineConfig& cfg, ModelRecipe recipe) {
  return [&corpus, cfg, recipe](std::span<const ActiveClass> classes) {
    std::map<std::string, int> target;
    std::vector<std::string> names;
    for (std::size_t i = 0; i < classes.size(); ++i) {
      names.push_back(classes[i].name);
      for (const auto& m : classes[i].members) target[m] = static_cast<int>(i);
    }
    LabeledFeatures data;
    data.dims = corpus.features.dims;
    data.columns = corpus.features.columns;
    data.classes = names;
    for (std::size_t r = 0; r < corpus.features.size(); ++r) {
      const auto it = target.find(corpus.features.classes[static_cast<std::size_t>(corpus.features.y[r])]);
      if (it != target.end()) data.add(corpus.features.row(r), it->second);
    }
    for (std::size_t i = 0; i < classes.size(); ++i)
      if (std::find(data.y.begin(), data.y.end(), static_cast<int>(i)) == data.y.end())
        throw Error(ErrorCode::UnknownLabel, "no windows for class '" + names[i] + "'");

    const SplitRatios ratios{1.0 - cfg.inject_validation, cfg.inject_validation, 0.0};
    const auto split = split_stratified_indices(data.label_names(), ratios, cfg.seed);
    const auto tr = data.subset(split.train);
    const auto va = data.subset(split.validation);
    const Model m = train_model(tr, va, recipe, cfg);
    Evaluation ev = evaluate(m, va);
    return TrainOutcome{std::move(ev.confusion), ev.accuracy};
  };
}

}  // namespace isphar
