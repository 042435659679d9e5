#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "doctest.h"
#include "isphar/dataset.hpp"
#include "isphar/features.hpp"
#include "isphar/pipeline.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace isphar;

namespace {

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::InvalidArgument;
}

std::string csv_rows(std::size_t n, double rate) {
  std::string s = "#rate_hz=" + std::to_string(static_cast<int>(rate)) + ",label=Walking,source=unit\n";
  s += "t,ax,ay,az,gx,gy,gz\n";
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / rate;
    s += std::to_string(t) + ",0.1,0.2,0.3,1,2,3\n";
  }
  return s;
}

std::vector<std::string> labels_of(std::size_t classes, std::size_t per_class) {
  std::vector<std::string> out;
  for (std::size_t c = 0; c < classes; ++c)
    for (std::size_t i = 0; i < per_class; ++i) out.push_back("c" + std::to_string(c));
  return out;
}

}  // namespace

TEST_CASE("parse_csv: well-formed file") {
  const Recording r = parse_csv(csv_rows(1040, 104));
  CHECK(r.size() == 1040);
  CHECK(r.rate_hz == 104.0);
  CHECK(r.duration_s() == doctest::Approx(10.0));
  CHECK(r.label == std::optional<std::string>("Walking"));
  CHECK(r.source_id == "unit");
  CHECK(r.samples[5][3] == 1.0);
}

TEST_CASE("parse_csv: error paths name the problem") {
  std::string missing = csv_rows(5, 104);
  missing.replace(missing.find("t,ax,ay,az,gx,gy,gz"), 19, "t,ax,ay,az,gx,gy");
  try {
    parse_csv(missing);
    FAIL("expected ParseError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ParseError);
    CHECK(std::string(e.what()).find("gz") != std::string::npos);
  }

  std::string nan_cell = csv_rows(5, 104);
  const auto pos = nan_cell.find(",0.2,", nan_cell.find("0.028"));
  nan_cell.replace(pos, 5, ",nan,");
  try {
    parse_csv(nan_cell);
    FAIL("expected ParseError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ParseError);
    CHECK(std::string(e.what()).find(":6:") != std::string::npos);  // fourth data row
  }

  std::string too_slow = csv_rows(20, 104);
  too_slow.replace(0, too_slow.find(','), "#rate_hz=26");
  CHECK(code_of([&] { parse_csv(too_slow); }) == ErrorCode::RateMismatch);
  CHECK(code_of([] { parse_csv("t,ax\n"); }) == ErrorCode::ParseError);
}

TEST_CASE("csv roundtrip at six decimals") {
  Rng rng(3);
  Recording r = isphar::testing::sine_recording(2.0, 104.0, 1.3);
  for (Sample& s : r.samples)
    for (double& v : s.v) v = std::round((v + 0.01 * rng.normal()) * 1e6) / 1e6;
  const Recording back = parse_csv(format_csv(r));
  REQUIRE(back.size() == r.size());
  CHECK(back.label == r.label);
  CHECK(back.source_id == r.source_id);
  for (std::size_t i = 0; i < r.size(); ++i) {
    CHECK(back.samples[i].t == doctest::Approx(r.samples[i].t).epsilon(1e-6));
    for (std::size_t c = 0; c < kNumChannels; ++c) CHECK(std::abs(back.samples[i][c] - r.samples[i][c]) < 5e-7);
  }
  const auto dir = isphar::testing::temp_dir("csv");
  save_csv(r, dir / "r.csv");
  CHECK(format_csv(load_csv(dir / "r.csv")) == format_csv(r));
  CHECK(code_of([&] { load_csv(dir / "absent.csv"); }) == ErrorCode::IoError);
}

TEST_CASE("default taxonomy") {
  const LabelTaxonomy tax = default_taxonomy();
  tax.validate();
  CHECK(tax.classes.size() == 24);
  CHECK(tax.classes.back() == kUnclassifiedLabel);
  CHECK(tax.groups.size() == 7);
  CHECK(tax.group_of("Unclassified") == "Unclassified");
  CHECK(code_of([&] { tax.index_of("Flying"); }) == ErrorCode::UnknownClass);
}

TEST_CASE("synth_dataset: determinism and spec validation") {
  const SynthSpec spec = default_synth_spec(default_taxonomy(), 0.5);
  CHECK(spec.classes.size() == 23);
  for (std::size_t i = 1; i < spec.classes.size(); ++i)
    CHECK(spec.classes[i].base_hz - spec.classes[i - 1].base_hz >= 0.4 - 1e-12);
  const auto a = synth_dataset(spec, 5);
  const auto b = synth_dataset(spec, 5);
  CHECK(a == b);
  std::string fa, fb;
  for (const auto& r : a) fa += format_csv(r);
  for (const auto& r : b) fb += format_csv(r);
  CHECK(fa == fb);
  CHECK_FALSE(synth_dataset(spec, 6) == a);

  SynthSpec bad = spec;
  bad.classes[0].base_hz = 60.0;
  CHECK(code_of([&] { synth_dataset(bad, 0); }) == ErrorCode::InvalidSpec);
  bad = spec;
  bad.classes[1].duration_s = 0.0;
  CHECK(code_of([&] { synth_dataset(bad, 0); }) == ErrorCode::InvalidSpec);
}

TEST_CASE("synth_dataset: noiseless single participant gives peaks at rate/f") {
  SynthSpec spec;
  spec.rate_hz = 26.0;
  spec.edge_idle_s = 0.0;
  ClassSynth c;
  c.name = "Pure";
  c.base_hz = 2.0;
  c.amplitude = {1, 1, 1, 50, 50, 50};
  c.harmonic_ratio = 0.0;
  c.noise_std = 0.0;
  c.duration_s = 10.0;
  c.participants = 1;
  c.freq_jitter = 0.0;
  spec.classes.push_back(c);
  const Recording r = synth_dataset(spec, 1).front();
  const std::vector<double> x = r.channel(0);
  const auto peaks = detect_major_peaks(x, 0.5, 6);
  REQUIRE(peaks.size() >= 15);
  const double mean_gap = static_cast<double>(peaks.back() - peaks.front()) / static_cast<double>(peaks.size() - 1);
  CHECK(mean_gap == doctest::Approx(26.0 / 2.0).epsilon(0.02));
}

TEST_CASE("build_unclassified") {
  const Recording piece = isphar::testing::sine_recording(1.0, 104.0, 3.0, 0.2, "Writing");
  const std::vector<Trimming> trims{{piece, "Writing", Trimming::Kind::Edge}};
  BurstOptions none;
  none.count = 0;
  const auto only = build_unclassified(trims, {}, 1, none);
  REQUIRE(only.size() == 1);
  CHECK(only[0].label == std::optional<std::string>("Unclassified"));
  CHECK(only[0].samples == piece.samples);

  const auto p1 = build_unclassified(trims, {}, 42);
  const auto p2 = build_unclassified(trims, {}, 42);
  CHECK(p1 == p2);
  for (const auto& r : p1) CHECK(r.label == std::optional<std::string>("Unclassified"));

  CHECK(code_of([&] { build_unclassified({}, {}, 1, none); }) == ErrorCode::EmptyPool);
}

TEST_CASE("synthetic bursts are more violent than ordinary classes") {
  const SynthSpec spec = default_synth_spec(default_taxonomy(), 0.5);
  std::vector<double> normal_std;
  for (const Recording& r : synth_dataset(spec, 0))
    for (const Window& w : segment(decimate(r, 4), 39, 39))
      for (std::size_t c = 0; c < kNumChannels; ++c) normal_std.push_back(basic_stats(w.channel(c)).std / full_scale(c));
  std::sort(normal_std.begin(), normal_std.end());
  const double p90 = normal_std[normal_std.size() * 9 / 10];

  BurstOptions bursts;
  bursts.count = 3;
  bursts.duration_s = 20.0;
  std::vector<double> burst_std;
  for (const Recording& r : build_unclassified({}, {}, 9, bursts))
    for (const Window& w : segment(decimate(r, 4), 39, 39))
      for (std::size_t c = 0; c < kNumChannels; ++c) burst_std.push_back(basic_stats(w.channel(c)).std / full_scale(c));
  REQUIRE_FALSE(burst_std.empty());
  const double mean_burst = oracle::mean(burst_std);
  CHECK(mean_burst > p90);
}

TEST_CASE("split_stratified_indices: proportions, determinism, partition") {
  const auto labels = labels_of(4, 100);
  const IndexSplit s = split_stratified_indices(labels, {0.8, 0.1, 0.1}, 7);
  std::map<std::string, std::array<int, 3>> per;
  for (std::size_t i : s.train) per[labels[i]][0]++;
  for (std::size_t i : s.validation) per[labels[i]][1]++;
  for (std::size_t i : s.test) per[labels[i]][2]++;
  for (const auto& [name, n] : per) {
    CHECK(n[0] == 80);
    CHECK(n[1] == 10);
    CHECK(n[2] == 10);
  }
  std::vector<std::size_t> all;
  for (const auto* part : {&s.train, &s.validation, &s.test}) all.insert(all.end(), part->begin(), part->end());
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> expect(400);
  for (std::size_t i = 0; i < 400; ++i) expect[i] = i;
  CHECK(all == expect);

  const IndexSplit again = split_stratified_indices(labels, {0.8, 0.1, 0.1}, 7);
  CHECK(again.train == s.train);
  CHECK(again.test == s.test);
  CHECK_FALSE(split_stratified_indices(labels, {0.8, 0.1, 0.1}, 8).train == s.train);

  // Uneven class sizes stay within one window of the requested share.
  const auto odd = labels_of(3, 37);
  const IndexSplit o = split_stratified_indices(odd, {0.7, 0.2, 0.1}, 1);
  std::map<std::string, int> val_count;
  for (std::size_t i : o.validation) val_count[odd[i]]++;
  for (const auto& [name, n] : val_count) CHECK(std::abs(n - 0.2 * 37) <= 1.0);

  std::vector<std::string> tiny = labels_of(2, 5);
  tiny.push_back("lonely");
  tiny.push_back("lonely");
  try {
    split_stratified_indices(tiny, {0.8, 0.1, 0.1}, 0);
    FAIL("expected ClassTooSmall");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ClassTooSmall);
    CHECK(std::string(e.what()).find("lonely") != std::string::npos);
  }
  CHECK(code_of([&] { split_stratified_indices(labels, {0.8, 0.3, 0.1}, 0); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("split_stratified on windows keeps labels") {
  std::vector<Window> ws;
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 10; ++i) {
      Window w(39, 26.0, "k" + std::to_string(c));
      w.at(0, 0) = c * 100 + i;
      ws.push_back(w);
    }
  const DatasetSplit s = split_stratified(ws, {0.6, 0.2, 0.2}, 3);
  CHECK(s.train.size() == 18);
  CHECK(s.validation.size() == 6);
  CHECK(s.test.size() == 6);
  std::set<double> seen;
  for (const auto* part : {&s.train, &s.validation, &s.test})
    for (const Window& w : *part) {
      CHECK(seen.insert(w.at(0, 0)).second);
      CHECK(w.label() == std::optional<std::string>("k" + std::to_string(static_cast<int>(w.at(0, 0)) / 100)));
    }
}

TEST_CASE("kfold_stratified: five disjoint 20-window folds per class") {
  const auto labels = labels_of(3, 100);
  const auto folds = kfold_stratified(labels, 5, 11);
  REQUIRE(folds.size() == 5);
  std::set<std::size_t> union_val;
  for (const Fold& f : folds) {
    std::map<std::string, int> n;
    for (std::size_t i : f.validation) n[labels[i]]++;
    for (const auto& [name, count] : n) CHECK(count == 20);
    CHECK(f.train.size() + f.validation.size() == labels.size());
    for (std::size_t i : f.validation) CHECK(union_val.insert(i).second);
    std::vector<std::size_t> both;
    std::set_intersection(f.train.begin(), f.train.end(), f.validation.begin(), f.validation.end(),
                          std::back_inserter(both));
    CHECK(both.empty());
  }
  CHECK(union_val.size() == labels.size());
  CHECK(code_of([&] { kfold_stratified(labels, 1, 0); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("silhouette_score agrees with a direct computation") {
  Rng rng(77);
  std::vector<double> rows;
  std::vector<int> labels;
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 12; ++i) {
      rows.push_back(c * 2.0 + rng.normal());
      rows.push_back(-c + rng.normal());
      labels.push_back(c);
    }
  double total = 0;
  const std::size_t n = labels.size();
  for (std::size_t i = 0; i < n; ++i) {
    std::map<int, std::pair<double, int>> acc;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double d = std::hypot(rows[2 * i] - rows[2 * j], rows[2 * i + 1] - rows[2 * j + 1]);
      acc[labels[j]].first += d;
      acc[labels[j]].second += 1;
    }
    const double a = acc[labels[i]].first / acc[labels[i]].second;
    double b = 1e300;
    for (const auto& [lab, s] : acc)
      if (lab != labels[i]) b = std::min(b, s.first / s.second);
    total += (b - a) / std::max(a, b);
  }
  CHECK(silhouette_score(rows, 2, labels) == doctest::Approx(total / static_cast<double>(n)).epsilon(1e-12));
}

TEST_CASE("synthetic corpus features form well separated clusters") {
  PipelineConfig cfg;
  const Corpus corpus = synth_corpus(cfg);
  std::vector<double> rows = corpus.features.x;
  standardize_columns(rows, corpus.features.dims);
  const double s = silhouette_score(rows, corpus.features.dims, corpus.features.y);
  MESSAGE("silhouette = " << s);
  CHECK(s > 0.5);
}
