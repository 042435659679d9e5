#include "isphar/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "isphar/error.hpp"
#include "isphar/rng.hpp"

namespace isphar {

namespace {

constexpr std::array<std::string_view, 7> kCsvColumns{"t", "ax", "ay", "az", "gx", "gy", "gz"};

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t z = seed ^ (0x9E3779B97F4A7C15ULL * (a + 1)) ^ (0xD1B54A32D192ED03ULL * (b + 1));
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

[[noreturn]] void parse_fail(std::string_view origin, std::size_t line, const std::string& what) {
  throw Error(ErrorCode::ParseError, std::string(origin) + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

Recording parse_csv(std::string_view text, std::string_view origin) {
  std::vector<std::string_view> lines = split(text, '\n');
  if (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  if (lines.size() < 2) parse_fail(origin, lines.size() + 1, "missing header lines");

  Recording rec;
  std::string_view meta = trim(lines[0]);
  if (meta.empty() || meta.front() != '#') parse_fail(origin, 1, "first line must start with '#rate_hz='");
  meta.remove_prefix(1);
  bool have_rate = false;
  for (std::string_view field : split(meta, ',')) {
    const auto eq = field.find('=');
    if (eq == std::string_view::npos) parse_fail(origin, 1, "malformed header field '" + std::string(field) + "'");
    const std::string_view key = trim(field.substr(0, eq));
    const std::string_view value = trim(field.substr(eq + 1));
    if (key == "rate_hz") {
      int rate = 0;
      auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), rate);
      if (ec != std::errc{} || p != value.data() + value.size() || rate <= 0)
        parse_fail(origin, 1, "rate_hz must be a positive integer");
      rec.rate_hz = rate;
      have_rate = true;
    } else if (key == "label") {
      if (!value.empty()) rec.label = std::string(value);
    } else if (key == "source") {
      rec.source_id = std::string(value);
    }
  }
  if (!have_rate) parse_fail(origin, 1, "header lacks rate_hz");

  const std::vector<std::string_view> header = split(trim(lines[1]), ',');
  std::array<std::size_t, kCsvColumns.size()> column{};
  for (std::size_t k = 0; k < kCsvColumns.size(); ++k) {
    auto it = std::find_if(header.begin(), header.end(),
                           [&](std::string_view h) { return trim(h) == kCsvColumns[k]; });
    if (it == header.end()) parse_fail(origin, 2, "missing column '" + std::string(kCsvColumns[k]) + "'");
    column[k] = static_cast<std::size_t>(it - header.begin());
  }

  rec.samples.reserve(lines.size() - 2);
  for (std::size_t li = 2; li < lines.size(); ++li) {
    const std::size_t line_no = li + 1;
    const std::string_view line = trim(lines[li]);
    if (line.empty()) parse_fail(origin, line_no, "empty data row");
    const std::vector<std::string_view> cells = split(line, ',');
    if (cells.size() != header.size())
      parse_fail(origin, line_no, "expected " + std::to_string(header.size()) + " cells, got " +
                                      std::to_string(cells.size()));
    double values[kCsvColumns.size()];
    for (std::size_t k = 0; k < kCsvColumns.size(); ++k) {
      const std::string_view cell = trim(cells[column[k]]);
      double v = 0.0;
      auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc{} || p != cell.data() + cell.size() || !std::isfinite(v))
        parse_fail(origin, line_no, "bad value '" + std::string(cell) + "' in column '" +
                                        std::string(kCsvColumns[k]) + "'");
      values[k] = v;
    }
    Sample s;
    s.t = values[0];
    for (std::size_t c = 0; c < kNumChannels; ++c) s[c] = values[c + 1];
    rec.samples.push_back(s);
  }

  const double dt = 1.0 / rec.rate_hz;
  for (std::size_t i = 1; i < rec.samples.size(); ++i) {
    const double gap = rec.samples[i].t - rec.samples[i - 1].t;
    if (!(gap > 0.0) || std::abs(gap - dt) > 0.1 * dt)
      throw Error(ErrorCode::RateMismatch, std::string(origin) + ":" + std::to_string(i + 3) +
                                               ": timestamp step " + std::to_string(gap) +
                                               " s contradicts declared rate " + std::to_string(rec.rate_hz) + " Hz");
  }
  return rec;
}

Recording load_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str(), path.string());
}

std::string format_csv(const Recording& rec) {
  std::string out;
  out.reserve(64 + rec.size() * 80);
  out += "#rate_hz=" + std::to_string(std::lround(rec.rate_hz)) + ",label=" + rec.label.value_or("") +
         ",source=" + rec.source_id + "\n";
  out += "t,ax,ay,az,gx,gy,gz\n";
  char buf[64];
  for (const Sample& s : rec.samples) {
    std::snprintf(buf, sizeof buf, "%.6f", s.t);
    out += buf;
    for (double v : s.v) {
      std::snprintf(buf, sizeof buf, ",%.6f", v);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

void save_csv(const Recording& rec, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << format_csv(rec);
}

// ---- taxonomy ---------------------------------------------------------------

void LabelTaxonomy::validate() const {
  std::vector<std::string> sorted = classes;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw Error(ErrorCode::InvalidSpec, "duplicate class names in taxonomy");
  for (const auto& cls : classes) {
    std::size_t hits = 0;
    for (const auto& [g, members] : groups) hits += static_cast<std::size_t>(std::count(members.begin(), members.end(), cls));
    if (hits != 1) throw Error(ErrorCode::InvalidSpec, "class '" + cls + "' must belong to exactly one group");
  }
}

const std::string& LabelTaxonomy::group_of(std::string_view cls) const {
  for (const auto& [g, members] : groups)
    if (std::find(members.begin(), members.end(), cls) != members.end()) return g;
  throw Error(ErrorCode::UnknownClass, "class '" + std::string(cls) + "' not in taxonomy");
}

std::size_t LabelTaxonomy::index_of(std::string_view cls) const {
  auto it = std::find(classes.begin(), classes.end(), cls);
  if (it == classes.end()) throw Error(ErrorCode::UnknownClass, "class '" + std::string(cls) + "' not in taxonomy");
  return static_cast<std::size_t>(it - classes.begin());
}

LabelTaxonomy default_taxonomy() {
  LabelTaxonomy t;
  t.groups = {
      {"Writing", {"Writing", "UsingComputer"}},
      {"Cleaning", {"BrushingHair", "WashingFace", "Shaving", "Sweeping", "WipingTable"}},
      {"Sports", {"Walking", "Running", "Jumping", "Cycling", "Boxing"}},
      {"Workshop", {"Hammering", "Sawing", "Screwdriving", "Drilling"}},
      {"Kitchen", {"MakingDough", "StirringPot", "Chopping", "WashingDishes"}},
      {"Other", {"HandStill", "Clapping", "Waving"}},
      {"Unclassified", {std::string(kUnclassifiedLabel)}},
  };
  for (const auto& [g, members] : t.groups)
    for (const auto& m : members) t.classes.push_back(m);
  return t;
}

// ---- synthetic corpus -------------------------------------------------------

void SynthSpec::validate() const {
  if (!(rate_hz > 0.0)) throw Error(ErrorCode::InvalidSpec, "rate_hz must be positive");
  if (classes.empty()) throw Error(ErrorCode::InvalidSpec, "no classes");
  if (edge_idle_s < 0.0 || idle_noise < 0.0) throw Error(ErrorCode::InvalidSpec, "negative idle settings");
  std::vector<std::string> names;
  for (const auto& c : classes) {
    if (c.name.empty()) throw Error(ErrorCode::InvalidSpec, "class with empty name");
    if (!(c.base_hz > 0.0 && c.base_hz < rate_hz / 2.0))
      throw Error(ErrorCode::InvalidSpec, "class '" + c.name + "' frequency outside (0, rate/2)");
    if (!(c.duration_s > 0.0)) throw Error(ErrorCode::InvalidSpec, "class '" + c.name + "' duration must be > 0");
    if (c.participants == 0) throw Error(ErrorCode::InvalidSpec, "class '" + c.name + "' needs participants");
    if (c.noise_std < 0.0 || c.amp_jitter < 0.0 || c.freq_jitter < 0.0 || c.freq_jitter >= 1.0)
      throw Error(ErrorCode::InvalidSpec, "class '" + c.name + "' has invalid noise or jitter");
    names.push_back(c.name);
  }
  std::sort(names.begin(), names.end());
  if (std::adjacent_find(names.begin(), names.end()) != names.end())
    throw Error(ErrorCode::InvalidSpec, "duplicate class names in synth spec");
  for (const auto& c : classes)
    for (const auto& m : c.mimic) {
      const ClassSynth& target = find(m);
      if (!target.mimic.empty())
        throw Error(ErrorCode::InvalidSpec, "class '" + c.name + "' mimics '" + m + "', which itself mimics");
    }
}

const ClassSynth& SynthSpec::find(std::string_view name) const {
  for (const auto& c : classes)
    if (c.name == name) return c;
  throw Error(ErrorCode::InvalidSpec, "unknown synth class '" + std::string(name) + "'");
}

SynthSpec default_synth_spec(const LabelTaxonomy& taxonomy, double minutes_per_class, std::uint64_t seed) {
  SynthSpec spec;
  Rng rng(seed);
  std::size_t k = 0;
  for (const auto& name : taxonomy.classes) {
    if (name == kUnclassifiedLabel) continue;
    ClassSynth c;
    c.name = name;
    c.base_hz = 0.8 + 0.4 * static_cast<double>(k);
    for (std::size_t ch = 0; ch < 3; ++ch) c.amplitude[ch] = rng.uniform(0.1, 1.0);
    for (std::size_t ch = 3; ch < 6; ++ch) c.amplitude[ch] = rng.uniform(20.0, 200.0);
    double g[3], norm = 0.0;
    for (double& v : g) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (std::size_t ch = 0; ch < 3; ++ch) c.offset[ch] = g[ch] / norm;
    c.harmonic_ratio = rng.uniform(0.1, 0.5);
    c.duration_s = minutes_per_class * 60.0;
    c.participants = 2 + k % 4;
    spec.classes.push_back(std::move(c));
    ++k;
  }
  return spec;
}

std::vector<Recording> synth_dataset(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  constexpr double two_pi = 2.0 * std::numbers::pi;
  std::vector<Recording> out;
  for (std::size_t ci = 0; ci < spec.classes.size(); ++ci) {
    const ClassSynth& cls = spec.classes[ci];
    const auto n_active = static_cast<std::size_t>(
        std::lround(cls.duration_s / static_cast<double>(cls.participants) * spec.rate_hz));
    const auto n_edge = static_cast<std::size_t>(std::lround(spec.edge_idle_s * spec.rate_hz));
    for (std::size_t p = 0; p < cls.participants; ++p) {
      // A mimic borrows a participant of its source class: same motion
      // parameters, its own noise.
      const bool copy = !cls.mimic.empty();
      const ClassSynth& src = copy ? spec.find(cls.mimic[p % cls.mimic.size()]) : cls;
      std::size_t src_ci = ci, src_p = p;
      if (copy) {
        src_ci = static_cast<std::size_t>(&src - spec.classes.data());
        src_p = (p / cls.mimic.size()) % src.participants;
      }
      Rng rng(derive_seed(seed, src_ci, src_p));
      const double f = src.base_hz * (1.0 + src.freq_jitter * rng.uniform(-1.0, 1.0));
      std::array<double, kNumChannels> amp{}, offset{}, phase{}, phase2{};
      for (std::size_t c = 0; c < kNumChannels; ++c) {
        amp[c] = src.amplitude[c] * (1.0 + src.amp_jitter * rng.uniform(-1.0, 1.0));
        offset[c] = src.offset[c] + (c < 3 ? 0.3 * src.amp_jitter * rng.uniform(-1.0, 1.0) : 0.0);
        phase[c] = rng.uniform(0.0, two_pi);
        phase2[c] = rng.uniform(0.0, two_pi);
      }
      if (copy) rng = Rng(derive_seed(seed, ci, p + 0x10000));

      Recording rec;
      rec.rate_hz = spec.rate_hz;
      rec.label = cls.name;
      rec.source_id = cls.name + "/p" + std::to_string(p);
      const std::size_t total = n_active + 2 * n_edge;
      rec.samples.resize(total);
      for (std::size_t i = 0; i < total; ++i) {
        Sample& s = rec.samples[i];
        s.t = static_cast<double>(i) / spec.rate_hz;
        const bool idle = i < n_edge || i >= n_edge + n_active;
        const double ta = (static_cast<double>(i) - static_cast<double>(n_edge)) / spec.rate_hz;
        for (std::size_t c = 0; c < kNumChannels; ++c) {
          if (idle) {
            const double scale = c < 3 ? 1.0 : 100.0;
            s[c] = offset[c] + spec.idle_noise * scale * rng.normal();
          } else {
            const double wave = std::sin(two_pi * f * ta + phase[c]) +
                                src.harmonic_ratio * std::sin(2.0 * two_pi * f * ta + phase2[c]);
            s[c] = offset[c] + amp[c] * wave;
            if (cls.noise_std > 0.0) s[c] += cls.noise_std * amp[c] * rng.normal();
          }
        }
        s = clip_to_full_scale(s);
      }
      out.push_back(std::move(rec));
    }
  }
  return out;
}

Recording synth_burst(double duration_s, double rate_hz, std::uint64_t seed) {
  Rng rng(seed);
  Recording rec;
  rec.rate_hz = rate_hz;
  rec.label = std::string(kUnclassifiedLabel);
  rec.source_id = "burst/" + std::to_string(seed);
  const auto n = static_cast<std::size_t>(std::lround(duration_s * rate_hz));
  // Step size and reversion are per sample at 104 Hz; scale so other rates
  // produce comparable motion per second.
  const double rate_scale = 104.0 / rate_hz;
  const double reversion = std::pow(0.97, rate_scale);
  const double step = 0.35 * std::sqrt(rate_scale);
  std::array<double, kNumChannels> z{};
  for (double& v : z) v = rng.uniform(-1.0, 1.0);
  rec.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    Sample& s = rec.samples[i];
    s.t = static_cast<double>(i) / rate_hz;
    for (std::size_t c = 0; c < kNumChannels; ++c) {
      z[c] = reversion * z[c] + rng.uniform(-step, step);
      s[c] = full_scale(c) * std::tanh(z[c]);
    }
  }
  return rec;
}

std::vector<Recording> build_unclassified(std::span<const Trimming> trimmings,
                                          std::span<const Recording> outlier_segments, std::uint64_t rng_seed,
                                          const BurstOptions& bursts) {
  std::vector<Recording> pool;
  for (const Trimming& t : trimmings) {
    if (t.samples.empty()) continue;
    Recording r = t.samples;
    r.label = std::string(kUnclassifiedLabel);
    r.source_id = "trim:" + (t.samples.source_id.empty() ? t.origin_label : t.samples.source_id);
    pool.push_back(std::move(r));
  }
  for (const Recording& seg : outlier_segments) {
    if (seg.empty()) continue;
    Recording r = seg;
    r.label = std::string(kUnclassifiedLabel);
    r.source_id = "outlier:" + seg.source_id;
    pool.push_back(std::move(r));
  }
  for (std::size_t b = 0; b < bursts.count; ++b)
    pool.push_back(synth_burst(bursts.duration_s, bursts.rate_hz, derive_seed(rng_seed, 0xB0B5, b)));
  if (pool.empty()) throw Error(ErrorCode::EmptyPool, "no trimmings, outliers, or bursts for the Unclassified class");
  return pool;
}

// ---- splitting --------------------------------------------------------------

namespace {

std::map<std::string, std::vector<std::size_t>> group_by_label(std::span<const std::string> labels) {
  std::map<std::string, std::vector<std::size_t>> by;
  for (std::size_t i = 0; i < labels.size(); ++i) by[labels[i]].push_back(i);
  return by;
}

}  // namespace

IndexSplit split_stratified_indices(std::span<const std::string> labels, const SplitRatios& r, std::uint64_t seed) {
  const double sum = r.train + r.validation + r.test;
  if (!(r.train > 0.0) || r.validation < 0.0 || r.test < 0.0 || std::abs(sum - 1.0) > 1e-9)
    throw Error(ErrorCode::InvalidArgument, "split ratios must be non-negative, train > 0, and sum to 1");
  IndexSplit out;
  Rng rng(seed);
  for (auto& [label, idx] : group_by_label(labels)) {
    if (idx.size() < 3) throw Error(ErrorCode::ClassTooSmall, "class '" + label + "' has fewer than 3 windows");
    rng.shuffle(std::span<std::size_t>(idx));
    const auto n = static_cast<double>(idx.size());
    auto n_train = static_cast<std::size_t>(std::lround(n * r.train));
    auto n_val = static_cast<std::size_t>(std::lround(n * r.validation));
    n_train = std::min(n_train, idx.size());
    n_val = std::min(n_val, idx.size() - n_train);
    out.train.insert(out.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.validation.insert(out.validation.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train),
                          idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    out.test.insert(out.test.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), idx.end());
  }
  for (auto* part : {&out.train, &out.validation, &out.test}) std::sort(part->begin(), part->end());
  return out;
}

DatasetSplit split_stratified(std::span<const Window> windows, const SplitRatios& ratios, std::uint64_t seed) {
  std::vector<std::string> labels;
  labels.reserve(windows.size());
  for (const Window& w : windows) labels.push_back(w.label().value_or(""));
  const IndexSplit idx = split_stratified_indices(labels, ratios, seed);
  DatasetSplit out;
  out.seed = seed;
  for (std::size_t i : idx.train) out.train.push_back(windows[i]);
  for (std::size_t i : idx.validation) out.validation.push_back(windows[i]);
  for (std::size_t i : idx.test) out.test.push_back(windows[i]);
  return out;
}

std::vector<Fold> kfold_stratified(std::span<const std::string> labels, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw Error(ErrorCode::InvalidArgument, "k-fold needs k >= 2");
  std::vector<Fold> folds(k);
  Rng rng(seed);
  for (auto& [label, idx] : group_by_label(labels)) {
    if (idx.size() < k)
      throw Error(ErrorCode::ClassTooSmall, "class '" + label + "' has fewer windows than folds");
    rng.shuffle(std::span<std::size_t>(idx));
    for (std::size_t f = 0; f < k; ++f) {
      const std::size_t lo = f * idx.size() / k, hi = (f + 1) * idx.size() / k;
      for (std::size_t j = 0; j < idx.size(); ++j) (j >= lo && j < hi ? folds[f].validation : folds[f].train).push_back(idx[j]);
    }
  }
  for (Fold& f : folds) {
    std::sort(f.train.begin(), f.train.end());
    std::sort(f.validation.begin(), f.validation.end());
  }
  return folds;
}

// ---- separability -----------------------------------------------------------

void standardize_columns(std::vector<double>& rows, std::size_t dims) {
  if (dims == 0) return;
  const std::size_t n = rows.size() / dims;
  if (n == 0) return;
  for (std::size_t d = 0; d < dims; ++d) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += rows[i * dims + d];
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) ss += (rows[i * dims + d] - mean) * (rows[i * dims + d] - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) rows[i * dims + d] = sd > 0.0 ? (rows[i * dims + d] - mean) / sd : 0.0;
  }
}

double silhouette_score(std::span<const double> rows, std::size_t dims, std::span<const int> labels) {
  const std::size_t n = labels.size();
  if (dims == 0 || rows.size() != n * dims) throw Error(ErrorCode::InvalidArgument, "rows/labels size mismatch");
  int max_label = 0;
  for (int l : labels) {
    if (l < 0) throw Error(ErrorCode::InvalidArgument, "negative label");
    max_label = std::max(max_label, l);
  }
  const auto n_classes = static_cast<std::size_t>(max_label) + 1;
  std::vector<std::size_t> class_size(n_classes, 0);
  for (int l : labels) ++class_size[static_cast<std::size_t>(l)];
  if (std::count_if(class_size.begin(), class_size.end(), [](std::size_t s) { return s > 0; }) < 2)
    throw Error(ErrorCode::InvalidArgument, "silhouette needs at least two classes");

  // dist_sum[i * n_classes + c] = sum of distances from i to members of c
  std::vector<double> dist_sum(n * n_classes, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* a = rows.data() + i * dims;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double* b = rows.data() + j * dims;
      double ss = 0.0;
      for (std::size_t d = 0; d < dims; ++d) ss += (a[d] - b[d]) * (a[d] - b[d]);
      const double dist = std::sqrt(ss);
      dist_sum[i * n_classes + static_cast<std::size_t>(labels[j])] += dist;
      dist_sum[j * n_classes + static_cast<std::size_t>(labels[i])] += dist;
    }
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto own = static_cast<std::size_t>(labels[i]);
    if (class_size[own] <= 1) continue;  // singleton clusters score 0
    const double a = dist_sum[i * n_classes + own] / static_cast<double>(class_size[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < n_classes; ++c)
      if (c != own && class_size[c] > 0) b = std::min(b, dist_sum[i * n_classes + c] / static_cast<double>(class_size[c]));
    const double denom = std::max(a, b);
    total += denom > 0.0 ? (b - a) / denom : 0.0;
  }
  return total / static_cast<double>(n);
}

}  // namespace isphar
