// One PASS/FAIL line per acceptance criterion; exits non-zero when any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <sstream>
#include <string>

#include "alloc_counter.hpp"
#include "isphar/experiments.hpp"
#include "isphar/inference.hpp"
#include "oracles.hpp"
#include "random_models.hpp"
#include "test_util.hpp"

using namespace isphar;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---- shared fixtures ------------------------------------------------------

const PipelineConfig& config() {
  static const PipelineConfig cfg;
  return cfg;
}

const Corpus& corpus() {
  static const Corpus c = synth_corpus(config());
  return c;
}

const FeatureMask& reduced_mask() {
  static const FeatureMask m = importance_mask(corpus().features, config());
  return m;
}

const std::vector<std::uint8_t>& reduced_forest_pack() {
  static const std::vector<std::uint8_t> pack = [] {
    const LabeledFeatures& data = corpus().features;
    const IndexSplit split = split_stratified_indices(data.label_names(), config().split, config().seed);
    const Model m = train_model(data.subset(split.train), data.subset(split.validation),
                                ModelRecipe{"forest", reduced_mask()}, config());
    return encode(m);
  }();
  return pack;
}

// ---- criteria -------------------------------------------------------------

Outcome parameter_count() {
  const std::vector<std::size_t> dims{78, 64, 32, 24};
  const std::size_t n = mlp_init(dims, 0).parameter_count();
  return {n == 7928, fmt("parameters=%zu", n)};
}

Outcome feature_cardinality() {
  Rng rng(1);
  bool ok = true;
  for (int i = 0; i < 100; ++i) ok &= extract_features(testing::random_window(rng)).size() == 78;
  std::size_t kept_min = 99, kept_max = 0;
  for (int i = 0; i < 100; ++i) {
    std::vector<double> imp(78);
    for (double& v : imp) v = rng.uniform();
    const std::size_t k = select_top_features(imp, 0.2).size();
    kept_min = std::min(kept_min, k);
    kept_max = std::max(kept_max, k);
  }
  ok &= kept_min == 16 && kept_max == 16;
  return {ok, fmt("features=78 kept=%zu..%zu", kept_min, kept_max)};
}

Outcome formula_oracle() {
  Rng rng(2025);
  std::size_t mismatches = 0, property_failures = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Window w = testing::random_window(rng);
    const FeatureVector fv = extract_features(w);
    for (std::size_t c = 0; c < kNumChannels; ++c) {
      const auto ch = w.channel(c);
      const auto expect = oracle::channel_features(std::vector<double>(ch.begin(), ch.end()), kDefaultMaWidth);
      for (std::size_t k = 0; k < kFeaturesPerChannel; ++k) {
        const double a = fv[c * 13 + k], b = expect[k];
        const double rel = std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12});
        worst = std::max(worst, rel);
        mismatches += !oracle::close(a, b, 1e-9);
      }
    }
    // scale and shift equivariance
    const double s = rng.uniform(0.1, 5.0), t = rng.uniform(-3.0, 3.0);
    Window ws(39, 26.0), wt(39, 26.0);
    for (std::size_t c = 0; c < kNumChannels; ++c)
      for (std::size_t i = 0; i < 39; ++i) {
        ws.at(i, c) = s * w.at(i, c);
        wt.at(i, c) = w.at(i, c) + t;
      }
    const FeatureVector fs = extract_features(ws), ft = extract_features(wt);
    using F = Feature;
    auto at = [](const FeatureVector& v, std::size_t c, F f) { return v[c * 13 + static_cast<std::size_t>(f)]; };
    for (std::size_t c = 0; c < kNumChannels; ++c) {
      for (F f : {F::Max, F::Min, F::Mean, F::StdDev, F::Range, F::Absm, F::Rms, F::P2pLf, F::P2pHf, F::Amdf, F::Mad})
        property_failures += !oracle::close(at(fs, c, f), s * at(fv, c, f), 1e-9, 1e-9);
      property_failures += at(fs, c, F::Zcr) != at(fv, c, F::Zcr);
      property_failures += at(fs, c, F::Mcr) != at(fv, c, F::Mcr);
      for (F f : {F::StdDev, F::Range, F::P2pHf, F::Amdf, F::Mad})
        property_failures += !oracle::close(at(ft, c, f), at(fv, c, f), 1e-9, 1e-9);
      property_failures += at(ft, c, F::Mcr) != at(fv, c, F::Mcr);
      property_failures += !oracle::close(at(ft, c, F::Mean), at(fv, c, F::Mean) + t, 1e-9, 1e-9);
    }
  }
  return {mismatches == 0 && property_failures == 0,
          fmt("windows=1000 mismatches=%zu worst_rel=%.3g property_failures=%zu", mismatches, worst, property_failures)};
}

Outcome budget() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& pack = reduced_forest_pack();
  const FootprintReport f = footprint(pack);
  const AuditResult a = audit(f);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {reduced_mask().size() == 16 && f.stack_bytes <= 850 && a.pass && secs < 300,
          fmt("mask=%zu stack=%zu program=%zu data=%zu audit=%s seconds=%.1f", reduced_mask().size(), f.stack_bytes,
              f.program_bytes, f.data_bytes, a.pass ? "PASS" : "FAIL", secs)};
}

Outcome duty() {
  const double idle = duty_cycle(150, 1500).idle_fraction;
  return {std::abs(idle - 0.90) <= 1e-12, fmt("idle_fraction=%.15f", idle)};
}

Outcome accuracy() {
  const auto t0 = std::chrono::steady_clock::now();
  const LabeledFeatures& data = corpus().features;
  const CvResult mlp = cross_validate(data, ModelRecipe{"mlp", FeatureMask::all()}, config());
  const CvResult forest = cross_validate(data, ModelRecipe{"forest", FeatureMask::all()}, config());
  const CvResult reduced = cross_validate(data, ModelRecipe{"forest", reduced_mask()}, config());
  const double drop = forest.mean - reduced.mean;
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {mlp.mean >= 0.90 && forest.mean >= 0.85 && drop <= 0.05 && secs < 900,
          fmt("mlp=%.4f+-%.4f forest=%.4f+-%.4f reduced=%.4f+-%.4f drop=%.4f windows=%zu seconds=%.1f", mlp.mean,
              mlp.stddev, forest.mean, forest.stddev, reduced.mean, reduced.stddev, drop, data.size(), secs)};
}

// Rule table restated from the overlap definition, independent of decide().
std::optional<std::string> rule_check(const StepRecord& s, const std::vector<ActiveClass>& before, const MergePolicy& p,
                                      double tau) {
  const ConfusionMatrix& cm = s.confusion;
  const std::string& cand = s.decision.candidate;
  std::size_t k = cm.n;
  for (std::size_t i = 0; i < cm.n; ++i)
    if (cm.classes[i] == cand) k = i;
  if (k == cm.n) return "candidate missing from its confusion matrix";
  auto rate = [&](std::size_t r, std::size_t c) {
    std::uint64_t row = 0;
    for (std::size_t j = 0; j < cm.n; ++j) row += cm.at(r, j);
    return row == 0 ? 0.0 : static_cast<double>(cm.at(r, c)) / static_cast<double>(row);
  };
  std::vector<std::string> overlap;
  for (std::size_t c = 0; c < cm.n; ++c)
    if (c != k && cm.classes[c] != kUnclassifiedLabel && (rate(k, c) >= tau || rate(c, k) >= tau))
      overlap.push_back(cm.classes[c]);
  if (overlap != s.decision.overlap) return "overlap set differs";
  DecisionKind want = DecisionKind::Discarded;
  if (overlap.empty()) {
    want = DecisionKind::Accepted;
  } else if (overlap.size() == 1) {
    const ActiveClass* partner = nullptr;
    for (const auto& a : before)
      if (a.name == overlap[0]) partner = &a;
    const MergeRule* rule = p.find(cand, overlap[0]);
    if (!rule && partner)
      for (const auto& m : partner->members)
        if (!rule) rule = p.find(cand, m);
    bool collides = false;
    if (rule)
      for (const auto& a : before) collides |= a.name == rule->merged && a.name != overlap[0];
    if (rule && !collides) want = DecisionKind::Merged;
  }
  if (want != s.decision.kind) return "decision " + std::string(decision_name(s.decision.kind)) + " breaks the rule table";
  return std::nullopt;
}

Outcome injection() {
  const auto t0 = std::chrono::steady_clock::now();
  const PipelineConfig& cfg = config();
  const InjectionScenario sc = default_injection_scenario(cfg);
  const Corpus c = build_corpus(synth_dataset(sc.spec, cfg.seed), cfg, sc.all_labels);
  const TrainFn fn = make_corpus_train_fn(c, cfg, ModelRecipe{cfg.model_kind, FeatureMask::all()});
  const InjectOptions opts{cfg.tau, false};
  const InjectionReport r1 = run_injection(sc.seeds, sc.candidates, sc.policy, fn, opts);
  const InjectionReport r2 = run_injection(sc.seeds, sc.candidates, sc.policy, fn, opts);

  std::size_t violations = 0, acc = 0, mer = 0, dis = 0;
  std::string first;
  std::vector<ActiveClass> live;
  for (const auto& s : sc.seeds) live.push_back({s, {s}});
  for (const StepRecord& s : r1.steps) {
    if (auto why = rule_check(s, live, sc.policy, cfg.tau)) {
      ++violations;
      if (first.empty()) first = s.decision.candidate + ": " + *why;
    }
    switch (s.decision.kind) {
      case DecisionKind::Accepted: ++acc; live.push_back({s.decision.candidate, {s.decision.candidate}}); break;
      case DecisionKind::Merged:
        ++mer;
        for (auto& a : live)
          if (a.name == s.decision.partner) {
            a.name = s.decision.merged_name;
            a.members.push_back(s.decision.candidate);
          }
        break;
      case DecisionKind::Discarded: ++dis; break;
    }
  }
  const auto replay = replay_decisions(parse_injection_report(r1.to_text()), sc.policy);
  bool replay_ok = replay.size() == r1.steps.size();
  for (std::size_t i = 0; replay_ok && i < replay.size(); ++i) replay_ok = replay[i] == r1.steps[i].decision;
  const bool same = r1.to_text() == r2.to_text();
  const std::size_t offered = sc.seeds.size() + sc.candidates.size();
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {offered == 31 && r1.final_classes.size() == 24 && live == r1.final_classes && violations == 0 && replay_ok &&
              same && secs < 1800,
          fmt("offered=%zu final=%zu accepted=%zu merged=%zu discarded=%zu rule_violations=%zu%s%s replay=%s "
              "deterministic=%s seconds=%.1f",
              offered, r1.final_classes.size(), acc, mer, dis, violations, first.empty() ? "" : " first=",
              first.c_str(), replay_ok ? "ok" : "differs", same ? "yes" : "no", secs)};
}

Outcome serialization() {
  Rng rng(8);
  std::size_t models = 0, roundtrip_fail = 0, predict_fail = 0, undetected = 0, corruptions = 0;
  for (int kind = 0; kind < 2; ++kind)
    for (int i = 0; i < 100; ++i, ++models) {
      const Model m = kind == 0 ? Model(testing::random_mlp(rng)) : Model(testing::random_forest(rng));
      const auto pack = encode(m);
      const Model back = decode(pack);
      roundtrip_fail += !(back == m) || encode(back) != pack;
      std::vector<float> x(n_inputs(m));
      for (int k = 0; k < 1000; ++k) {
        for (float& v : x) v = static_cast<float>(rng.normal(0.0, 2.0));
        predict_fail += predict_scores(back, x) != predict_scores(m, x);
      }
      auto damaged = pack;
      for (std::size_t pos = 0; pos < pack.size(); ++pos) {
        const auto delta = static_cast<std::uint8_t>(1 + rng.below(255));
        damaged[pos] ^= delta;
        ++corruptions;
        try {
          decode(damaged);
          ++undetected;
        } catch (const Error&) {
        }
        damaged[pos] = pack[pos];
      }
    }
  return {roundtrip_fail == 0 && predict_fail == 0 && undetected == 0,
          fmt("models=%zu roundtrip_failures=%zu prediction_mismatches=%zu corruptions=%zu undetected=%zu", models,
              roundtrip_fail, predict_fail, corruptions, undetected)};
}

Outcome gradient_check() {
  const std::vector<std::size_t> dims{5, 4, 3};
  Rng rng(17);
  double worst = 0.0;
  std::size_t checked = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    LabeledFeatures data;
    data.dims = 5;
    data.classes = {"a", "b", "c"};
    for (int i = 0; i < 12; ++i) {
      std::vector<double> row(5);
      for (double& v : row) v = rng.normal();
      data.add(row, i % 3);
    }
    std::vector<std::size_t> rows(data.size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    MlpNetwork net = mlp_init(dims, seed).cast<double>();
    for (auto& l : net.layers)
      for (double& b : l.biases) b = rng.uniform(-0.5, 0.5);
    MlpNetwork grad;
    mlp_loss_and_gradient(net, data, rows, &grad);
    std::vector<double*> p, g;
    for (auto& l : net.layers) {
      for (double& v : l.weights) p.push_back(&v);
      for (double& v : l.biases) p.push_back(&v);
    }
    for (auto& l : grad.layers) {
      for (double& v : l.weights) g.push_back(&v);
      for (double& v : l.biases) g.push_back(&v);
    }
    const double h = 1e-5;
    for (std::size_t k = 0; k < p.size(); ++k, ++checked) {
      const double keep = *p[k];
      *p[k] = keep + h;
      const double up = mlp_loss_and_gradient(net, data, rows, nullptr);
      *p[k] = keep - h;
      const double down = mlp_loss_and_gradient(net, data, rows, nullptr);
      *p[k] = keep;
      const double numeric = (up - down) / (2 * h);
      worst = std::max(worst, std::abs(numeric - *g[k]) / std::max({std::abs(numeric), std::abs(*g[k]), 1e-6}));
    }
  }
  return {worst < 1e-4, fmt("nets=10 parameters=%zu worst_rel=%.3g", checked, worst)};
}

Outcome streaming() {
  const auto t0 = std::chrono::steady_clock::now();
  // Ten minutes at 26 Hz stitched from synthetic recordings of several classes.
  PipelineConfig cfg = config();
  cfg.seed = 404;
  const SynthSpec spec = default_synth_spec(default_taxonomy(), 0.5, cfg.seed);
  Recording stream;
  stream.rate_hz = cfg.target_rate_hz;
  stream.label = "mixed";
  const std::size_t want = 10 * 60 * 26;
  for (const Recording& raw : synth_dataset(spec, cfg.seed)) {
    for (const Sample& s : preprocess(raw, cfg).recording.samples) {
      if (stream.size() == want) break;
      Sample c = s;
      c.t = static_cast<double>(stream.size()) / stream.rate_hz;
      stream.samples.push_back(c);
    }
    if (stream.size() == want) break;
  }

  Rng rng(5);
  std::vector<std::vector<std::uint8_t>> packs{reduced_forest_pack()};
  MlpModel mlp = testing::random_mlp(rng);
  mlp.ma_width = kDefaultMaWidth;
  packs.push_back(encode(Model(mlp)));

  std::size_t windows = 0, mismatches = 0;
  std::uint64_t allocations = 0;
  for (const auto& pack : packs) {
    const Model m = decode(pack);
    std::vector<std::size_t> batch;
    for (const Window& w : segment(stream, cfg.window_len, cfg.stride))
      batch.push_back(predict_class(m, apply_mask(extract_features(w, cfg.ma_width), mask_of(m))));
    Engine e(pack, cfg.window_len, cfg.ma_width, cfg.stride);
    std::vector<std::size_t> live(batch.size() + 1, 0);
    std::size_t n = 0;
    {
      testing::AllocationScope scope;
      for (const Sample& s : stream.samples)
        if (e.push_sample(s) && n < live.size()) live[n++] = e.last_event().label;
      allocations += scope.count();
    }
    live.resize(n);
    windows += batch.size();
    if (live.size() != batch.size()) mismatches += std::max(live.size(), batch.size());
    else
      for (std::size_t i = 0; i < batch.size(); ++i) mismatches += live[i] != batch[i];
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {stream.size() == want && mismatches == 0 && allocations == 0 && secs < 60,
          fmt("samples=%zu windows=%zu mismatches=%zu allocations=%llu seconds=%.1f", stream.size(), windows,
              mismatches, static_cast<unsigned long long>(allocations), secs)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"parameter_count", parameter_count}, {"feature_cardinality", feature_cardinality},
      {"formula_oracle", formula_oracle},   {"stack_budget", budget},
      {"duty_cycle", duty},                 {"cv_accuracy", accuracy},
      {"injection_rules", injection},       {"serialization", serialization},
      {"gradient_check", gradient_check},   {"stream_batch_equivalence", streaming},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
