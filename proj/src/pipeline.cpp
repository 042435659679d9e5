#include "isphar/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "isphar/error.hpp"

namespace isphar {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw Error(ErrorCode::ConfigError, "key '" + key + "' expects a number, got '" + v + "'");
  }
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw Error(ErrorCode::ConfigError, "key '" + key + "' expects a non-negative integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw Error(ErrorCode::ConfigError, "key '" + key + "' expects true/false, got '" + v + "'");
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Key {
  const char* name;
  std::function<void(PipelineConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

#define ISPHAR_DOUBLE(key, field)                                                                           \
  Key{key, [](PipelineConfig& c, const std::string& k, const std::string& v) { c.field = to_double(k, v); }, \
      [](const PipelineConfig& c) { return fmt(static_cast<double>(c.field)); }}
#define ISPHAR_UINT(key, field)                                                                        \
  Key{key,                                                                                             \
      [](PipelineConfig& c, const std::string& k, const std::string& v) {                              \
        c.field = static_cast<decltype(c.field)>(to_uint(k, v));                                       \
      },                                                                                               \
      [](const PipelineConfig& c) { return std::to_string(c.field); }}
#define ISPHAR_STRING(key, field)                                                                                 \
  Key{key, [](PipelineConfig& c, const std::string&, const std::string& v) { c.field = v; },                     \
      [](const PipelineConfig& c) { return c.field; }}

const std::vector<Key>& keys() {
  static const std::vector<Key> k{
      ISPHAR_DOUBLE("raw_rate_hz", raw_rate_hz),
      ISPHAR_DOUBLE("target_rate_hz", target_rate_hz),
      ISPHAR_UINT("decimation", decimation),
      ISPHAR_STRING("decimation_mode", decimation_mode),
      ISPHAR_STRING("stage_order", stage_order),
      ISPHAR_UINT("window_len", window_len),
      ISPHAR_UINT("stride", stride),
      ISPHAR_UINT("ma_width", ma_width),
      ISPHAR_DOUBLE("cleanse.outlier_sigma", cleanse.outlier_sigma),
      ISPHAR_DOUBLE("cleanse.trim_rms_window_s", cleanse.trim_rms_window_s),
      ISPHAR_DOUBLE("cleanse.trim_rms_ratio", cleanse.trim_rms_ratio),
      ISPHAR_DOUBLE("split.train", split.train),
      ISPHAR_DOUBLE("split.validation", split.validation),
      ISPHAR_DOUBLE("split.test", split.test),
      ISPHAR_UINT("folds", folds),
      ISPHAR_STRING("model", model_kind),
      Key{"mlp.hidden",
          [](PipelineConfig& c, const std::string& k, const std::string& v) {
            c.mlp.hidden.clear();
            std::stringstream ss(v);
            std::string item;
            while (std::getline(ss, item, ',')) c.mlp.hidden.push_back(to_uint(k, trim(item)));
          },
          [](const PipelineConfig& c) {
            std::string s;
            for (std::size_t i = 0; i < c.mlp.hidden.size(); ++i) s += (i ? "," : "") + std::to_string(c.mlp.hidden[i]);
            return s;
          }},
      ISPHAR_DOUBLE("mlp.lr", mlp.initial_lr),
      ISPHAR_DOUBLE("mlp.lr_decay_factor", mlp.lr_decay_factor),
      ISPHAR_UINT("mlp.lr_decay_every", mlp.lr_decay_every),
      ISPHAR_UINT("mlp.batch_size", mlp.batch_size),
      ISPHAR_UINT("mlp.patience", mlp.patience),
      ISPHAR_UINT("mlp.max_epochs", mlp.max_epochs),
      ISPHAR_DOUBLE("mlp.dropout", mlp.dropout),
      ISPHAR_DOUBLE("mlp.beta1", mlp.optimizer.beta1),
      ISPHAR_DOUBLE("mlp.beta2", mlp.optimizer.beta2),
      ISPHAR_DOUBLE("mlp.eps", mlp.optimizer.eps),
      Key{"mlp.standardize",
          [](PipelineConfig& c, const std::string& k, const std::string& v) { c.mlp.standardize_inputs = to_bool(k, v); },
          [](const PipelineConfig& c) { return std::string(c.mlp.standardize_inputs ? "true" : "false"); }},
      ISPHAR_UINT("gbdt.rounds", gbdt.n_rounds),
      ISPHAR_UINT("gbdt.max_depth", gbdt.max_depth),
      ISPHAR_UINT("gbdt.min_leaf", gbdt.min_leaf),
      ISPHAR_DOUBLE("gbdt.shrinkage", gbdt.shrinkage),
      ISPHAR_DOUBLE("gbdt.subsample", gbdt.subsample),
      ISPHAR_DOUBLE("top_fraction", top_fraction),
      ISPHAR_STRING("mask", mask),
      ISPHAR_UINT("budget.max_stack", budget.max_stack),
      ISPHAR_UINT("budget.max_program", budget.max_program),
      ISPHAR_UINT("budget.max_data", budget.max_data),
      ISPHAR_UINT("accounting.scratch_bytes", accounting.scratch_bytes),
      ISPHAR_UINT("accounting.mlp_code_bytes", accounting.mlp_code_bytes),
      ISPHAR_UINT("accounting.forest_code_bytes", accounting.forest_code_bytes),
      ISPHAR_DOUBLE("tau", tau),
      ISPHAR_DOUBLE("inject.validation", inject_validation),
      ISPHAR_STRING("merge_policy", merge_policy_path),
      ISPHAR_DOUBLE("minutes_per_class", minutes_per_class),
      ISPHAR_UINT("bursts.count", bursts.count),
      ISPHAR_DOUBLE("bursts.duration_s", bursts.duration_s),
      ISPHAR_UINT("seed", seed),
  };
  return k;
}

#undef ISPHAR_DOUBLE
#undef ISPHAR_UINT
#undef ISPHAR_STRING

Recording concatenate(std::span<const Recording> parts, double rate_hz) {
  Recording out;
  out.rate_hz = rate_hz;
  out.label = std::string(kUnclassifiedLabel);
  out.source_id = "unclassified";
  for (const Recording& r : parts)
    for (const Sample& s : r.samples) {
      Sample c = s;
      c.t = static_cast<double>(out.samples.size()) / rate_hz;
      out.samples.push_back(c);
    }
  return out;
}

}  // namespace

void PipelineConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::ConfigError, m); };
  if (!(raw_rate_hz > 0.0) || !(target_rate_hz > 0.0)) fail("rates must be positive");
  if (decimation == 0) fail("decimation must be >= 1");
  if (std::abs(raw_rate_hz / static_cast<double>(decimation) - target_rate_hz) > 1e-9)
    fail("raw_rate_hz / decimation must equal target_rate_hz");
  if (decimation_mode != "mean" && decimation_mode != "pick") fail("decimation_mode must be mean or pick");
  if (stage_order != "cleanse_first" && stage_order != "decimate_first")
    fail("stage_order must be cleanse_first or decimate_first");
  if (ma_width % 2 == 0) fail("ma_width must be odd");
  if (window_len < 2 || window_len < ma_width) fail("window_len must be >= 2 and >= ma_width");
  if (stride == 0) fail("stride must be >= 1");
  if (folds < 2) fail("folds must be >= 2");
  if (model_kind != "forest" && model_kind != "mlp") fail("model must be 'forest' or 'mlp'");
  if (mask != "all" && mask != "reference16" && mask != "top") fail("mask must be all, reference16, or top");
  if (!(top_fraction > 0.0 && top_fraction <= 1.0)) fail("top_fraction must lie in (0, 1]");
  if (!(tau > 0.0 && tau < 1.0)) fail("tau must lie in (0, 1)");
  if (!(inject_validation > 0.0 && inject_validation < 1.0)) fail("inject.validation must lie in (0, 1)");
  if (!(minutes_per_class > 0.0)) fail("minutes_per_class must be positive");
  try {
    cleanse.validate();
    mlp.validate();
    gbdt.validate();
    budget.validate();
  } catch (const Error& e) {
    fail(e.what());
  }
}

PipelineConfig parse_config(std::string_view text, PipelineConfig cfg) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::ConfigError, "line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(std::string_view(t).substr(0, eq));
    const std::string value = trim(std::string_view(t).substr(eq + 1));
    const auto& ks = keys();
    auto it = std::find_if(ks.begin(), ks.end(), [&](const Key& k) { return key == k.name; });
    if (it == ks.end()) throw Error(ErrorCode::ConfigError, "line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    it->set(cfg, key, value);
  }
  cfg.validate();
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::string format_config(const PipelineConfig& cfg) {
  std::string out;
  for (const Key& k : keys()) out += std::string(k.name) + " = " + k.get(cfg) + "\n";
  return out;
}

DecimationMode PipelineConfig::decimation_kind() const {
  return decimation_mode == "pick" ? DecimationMode::PickEveryNth : DecimationMode::BlockMean;
}

Recording downsample(const Recording& raw, const PipelineConfig& cfg) {
  return to_sensor_precision(decimate(raw, cfg.decimation, cfg.decimation_kind()));
}

Preprocessed preprocess(const Recording& raw, const PipelineConfig& cfg) {
  if (std::abs(raw.rate_hz - cfg.raw_rate_hz) > 0.1 * cfg.raw_rate_hz)
    throw Error(ErrorCode::RateMismatch, "recording '" + raw.source_id + "' is at " + std::to_string(raw.rate_hz) +
                                             " Hz, pipeline expects " + std::to_string(cfg.raw_rate_hz));
  Preprocessed out;
  if (cfg.stage_order == "decimate_first") {
    // Cleansing at the target rate; trimmings come out at that rate too.
    CleanseResult c = cleanse(downsample(raw, cfg), cfg.cleanse);
    out.recording = std::move(c.recording);
    out.trimmings = std::move(c.trimmings);
    return out;
  }
  CleanseResult c = cleanse(raw, cfg.cleanse);
  out.recording = downsample(c.recording, cfg);
  out.trimmings = std::move(c.trimmings);
  return out;
}

std::vector<Window> make_windows(const Recording& rec, const PipelineConfig& cfg) {
  if (rec.size() < cfg.window_len) return {};
  return segment(rec, cfg.window_len, cfg.stride);
}

std::vector<Recording> unclassified_recordings(std::span<const Trimming> trimmings, const PipelineConfig& cfg) {
  const auto pool = build_unclassified(trimmings, {}, cfg.seed, cfg.bursts);
  const auto is_raw = [&](const Recording& r) { return std::abs(r.rate_hz - cfg.raw_rate_hz) <= 0.1 * cfg.raw_rate_hz; };
  // Short pieces are joined into one stream per rate so they yield whole windows.
  std::vector<Recording> out, short_raw, short_target;
  for (const Recording& r : pool) {
    const std::size_t factor = is_raw(r) ? cfg.decimation : 1;
    if (r.size() >= cfg.window_len * factor) out.push_back(is_raw(r) ? downsample(r, cfg) : to_sensor_precision(r));
    else (is_raw(r) ? short_raw : short_target).push_back(r);
  }
  if (!short_raw.empty()) {
    const Recording joined = concatenate(short_raw, cfg.raw_rate_hz);
    if (joined.size() >= cfg.decimation) out.push_back(downsample(joined, cfg));
  }
  if (!short_target.empty()) out.push_back(to_sensor_precision(concatenate(short_target, cfg.target_rate_hz)));
  for (Recording& r : out) r.label = std::string(kUnclassifiedLabel);
  return out;
}

Corpus build_corpus(std::span<const Recording> raw, const PipelineConfig& cfg, std::span<const std::string> classes) {
  cfg.validate();
  Corpus corpus;
  std::vector<Trimming> trimmings;
  std::vector<Window> unclassified;
  std::vector<std::string> order;
  for (const Recording& r : raw) {
    if (!r.label) throw Error(ErrorCode::InvalidArgument, "recording '" + r.source_id + "' has no label");
    std::vector<Window> ws;
    if (*r.label == kUnclassifiedLabel) {
      ws = make_windows(downsample(r, cfg), cfg);
      unclassified.insert(unclassified.end(), ws.begin(), ws.end());
      continue;
    }
    if (std::find(order.begin(), order.end(), *r.label) == order.end()) order.push_back(*r.label);
    Preprocessed p = preprocess(r, cfg);
    ws = make_windows(p.recording, cfg);
    corpus.windows.insert(corpus.windows.end(), ws.begin(), ws.end());
    for (auto& t : p.trimmings) trimmings.push_back(std::move(t));
  }

  for (const Recording& r : unclassified_recordings(trimmings, cfg)) {
    auto ws = make_windows(r, cfg);
    unclassified.insert(unclassified.end(), ws.begin(), ws.end());
  }
  corpus.windows.insert(corpus.windows.end(), unclassified.begin(), unclassified.end());

  if (!classes.empty()) {
    corpus.classes.assign(classes.begin(), classes.end());
  } else {
    corpus.classes = order;
    corpus.classes.emplace_back(kUnclassifiedLabel);
  }
  corpus.features = featurize(corpus.windows, corpus.classes, cfg.ma_width);
  return corpus;
}

Corpus synth_corpus(const PipelineConfig& cfg, const LabelTaxonomy& taxonomy) {
  const SynthSpec spec = default_synth_spec(taxonomy, cfg.minutes_per_class, cfg.seed);
  const auto raw = synth_dataset(spec, cfg.seed);
  return build_corpus(raw, cfg, taxonomy.classes);
}

}  // namespace isphar
