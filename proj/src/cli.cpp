#include "isphar/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "isphar/error.hpp"
#include "isphar/experiments.hpp"
#include "isphar/inference.hpp"
#include "isphar/model_io.hpp"
#include "isphar/modelpack.hpp"

namespace isphar {

namespace fs = std::filesystem;

namespace {

struct Common {
  std::optional<std::uint64_t> seed;
  std::string config;
};

PipelineConfig resolve(const Common& c) {
  PipelineConfig cfg = c.config.empty() ? PipelineConfig{} : load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  return cfg;
}

std::vector<fs::path> list_csvs(const fs::path& p) {
  if (fs::is_regular_file(p)) return {p};
  if (!fs::is_directory(p)) throw Error(ErrorCode::IoError, "no such file or directory: " + p.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(p))
    if (e.is_regular_file() && e.path().extension() == ".csv") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  if (out.empty()) throw Error(ErrorCode::IoError, "no .csv files in " + p.string());
  return out;
}

std::vector<std::string> labels_beside(const fs::path& p) {
  const fs::path dir = fs::is_directory(p) ? p : p.parent_path();
  const fs::path f = dir / "labels.txt";
  return fs::exists(f) ? load_labels(f) : std::vector<std::string>{};
}

std::string safe_name(std::string s) {
  for (char& c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_')) c = '_';
  return s;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

bool near_rate(double rate, double want) { return std::abs(rate - want) <= 0.1 * want; }

FeatureMask choose_mask(const std::string& which, const LabeledFeatures& train, const PipelineConfig& cfg) {
  if (which == "all") return FeatureMask::all();
  if (which == "reference16") return reference_mask_16();
  if (which == "top") return importance_mask(train, cfg);
  throw Error(ErrorCode::ConfigError, "unknown mask '" + which + "'");
}

std::string confusion_csv(const ConfusionMatrix& cm) {
  std::string s = "truth\\predicted";
  for (const auto& c : cm.classes) s += "," + c;
  s += "\n";
  for (std::size_t r = 0; r < cm.n; ++r) {
    s += cm.classes[r];
    for (std::size_t c = 0; c < cm.n; ++c) s += "," + std::to_string(cm.at(r, c));
    s += "\n";
  }
  return s;
}

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// ---- subcommands ----------------------------------------------------------

struct SynthArgs {
  std::string out, scenario = "default";
  std::optional<double> minutes;
};

int cmd_synth(const Common& c, const SynthArgs& a, std::ostream& out) {
  PipelineConfig cfg = resolve(c);
  if (a.minutes) cfg.minutes_per_class = *a.minutes;
  cfg.validate();
  SynthSpec spec;
  std::vector<std::string> labels;
  fs::create_directories(a.out);
  if (a.scenario == "injection") {
    const InjectionScenario sc = default_injection_scenario(cfg);
    spec = sc.spec;
    labels = sc.all_labels;
    write_text(fs::path(a.out) / "seeds.txt", [&] {
      std::string s;
      for (const auto& x : sc.seeds) s += x + "\n";
      return s;
    }());
    write_text(fs::path(a.out) / "order.txt", [&] {
      std::string s;
      for (const auto& x : sc.candidates) s += x + "\n";
      return s;
    }());
    write_text(fs::path(a.out) / "policy.txt", format_merge_policy(sc.policy));
  } else if (a.scenario == "default") {
    const LabelTaxonomy tax = default_taxonomy();
    spec = default_synth_spec(tax, cfg.minutes_per_class, cfg.seed);
    labels = tax.classes;
  } else {
    throw Error(ErrorCode::ConfigError, "unknown scenario '" + a.scenario + "'");
  }
  const auto recs = synth_dataset(spec, cfg.seed);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    char prefix[16];
    std::snprintf(prefix, sizeof prefix, "%03zu_", i);
    save_csv(recs[i], fs::path(a.out) / (prefix + safe_name(recs[i].source_id) + ".csv"));
  }
  save_labels(labels, fs::path(a.out) / "labels.txt");
  out << "synth: " << recs.size() << " recordings, " << labels.size() << " labels -> " << a.out << "\n";
  return kExitOk;
}

struct IoArgs {
  std::string in, out;
};

int cmd_preprocess(const Common& c, const IoArgs& a, std::ostream& out) {
  const PipelineConfig cfg = resolve(c);
  fs::create_directories(a.out);
  std::vector<Trimming> trimmings;
  std::size_t n = 0;
  for (const fs::path& f : list_csvs(a.in)) {
    const Recording rec = load_csv(f);
    if (rec.label && *rec.label == kUnclassifiedLabel) {
      save_csv(downsample(rec, cfg), fs::path(a.out) / f.filename());
    } else {
      Preprocessed p = preprocess(rec, cfg);
      save_csv(p.recording, fs::path(a.out) / f.filename());
      for (auto& t : p.trimmings) trimmings.push_back(std::move(t));
    }
    ++n;
  }
  const auto extra = unclassified_recordings(trimmings, cfg);
  for (std::size_t i = 0; i < extra.size(); ++i) {
    char name[40];
    std::snprintf(name, sizeof name, "unclassified_%02zu.csv", i);
    save_csv(extra[i], fs::path(a.out) / name);
  }
  const auto labels = labels_beside(a.in);
  if (!labels.empty()) save_labels(labels, fs::path(a.out) / "labels.txt");
  out << "preprocess: " << n << " recordings, " << trimmings.size() << " trimmings, " << extra.size()
      << " unclassified streams -> " << a.out << "\n";
  return kExitOk;
}

int cmd_featurize(const Common& c, const IoArgs& a, std::ostream& out) {
  const PipelineConfig cfg = resolve(c);
  std::vector<Recording> recs;
  for (const fs::path& f : list_csvs(a.in)) recs.push_back(load_csv(f));
  std::vector<std::string> classes = labels_beside(a.in);
  const bool raw = std::all_of(recs.begin(), recs.end(), [&](const Recording& r) { return near_rate(r.rate_hz, cfg.raw_rate_hz); });
  const bool dec = std::all_of(recs.begin(), recs.end(), [&](const Recording& r) { return near_rate(r.rate_hz, cfg.target_rate_hz); });
  LabeledFeatures table;
  if (raw) {
    table = build_corpus(recs, cfg, classes).features;
  } else if (dec) {
    const bool fixed_order = !classes.empty();
    std::vector<Window> windows;
    for (const Recording& r : recs) {
      if (!r.label) throw Error(ErrorCode::InvalidArgument, "recording '" + r.source_id + "' has no label");
      if (!fixed_order && *r.label != kUnclassifiedLabel &&
          std::find(classes.begin(), classes.end(), *r.label) == classes.end())
        classes.push_back(*r.label);
      auto ws = make_windows(r, cfg);
      windows.insert(windows.end(), ws.begin(), ws.end());
    }
    if (!fixed_order) classes.emplace_back(kUnclassifiedLabel);
    table = featurize(windows, classes, cfg.ma_width);
  } else {
    throw Error(ErrorCode::RateMismatch, "recordings must all be at the raw or the target rate");
  }
  save_feature_table(table, a.out);
  out << "featurize: " << table.size() << " windows, " << table.class_count() << " classes -> " << a.out << "\n";
  return kExitOk;
}

struct TrainArgs {
  std::string data, out, model, mask, history;
};

int cmd_train(const Common& c, const TrainArgs& a, std::ostream& out) {
  PipelineConfig cfg = resolve(c);
  if (!a.model.empty()) cfg.model_kind = a.model;
  if (!a.mask.empty()) cfg.mask = a.mask;
  cfg.validate();
  const LabeledFeatures data = load_feature_table(a.data);
  const IndexSplit split = split_stratified_indices(data.label_names(), cfg.split, cfg.seed);
  const auto tr = data.subset(split.train);
  const auto va = data.subset(split.validation);
  const ModelRecipe recipe{cfg.model_kind, choose_mask(cfg.mask, tr, cfg)};
  TrainHistory hist;
  const Model m = train_model(tr, va, recipe, cfg, &hist);
  save_model({m, data.classes}, a.out);
  if (!a.history.empty()) write_text(a.history, hist.to_lines());
  out << "train: " << cfg.model_kind << " on " << tr.size() << " windows, " << recipe.mask.size() << " features\n";
  if (!va.empty()) out << "validation_accuracy " << fixed(evaluate(m, va).accuracy) << "\n";
  if (!split.test.empty()) out << "test_accuracy " << fixed(evaluate(m, data.subset(split.test)).accuracy) << "\n";
  return kExitOk;
}

struct PackArgs {
  std::string model, out;
};

int cmd_pack(const Common& c, const PackArgs& a, std::ostream& out) {
  const PipelineConfig cfg = resolve(c);
  const StoredModel s = load_model(a.model);
  const auto bytes = encode(s.model);
  save_pack(bytes, a.out);
  save_labels(s.classes, a.out + ".labels");
  out << describe(bytes, cfg.accounting);
  return kExitOk;
}

struct AuditArgs {
  std::string pack;
  std::optional<std::size_t> max_stack, max_program, max_data;
};

int cmd_audit(const Common& c, const AuditArgs& a, std::ostream& out) {
  PipelineConfig cfg = resolve(c);
  if (a.max_stack) cfg.budget.max_stack = *a.max_stack;
  if (a.max_program) cfg.budget.max_program = *a.max_program;
  if (a.max_data) cfg.budget.max_data = *a.max_data;
  cfg.budget.validate();
  AccountingModel acct = cfg.accounting;
  acct.window_len = cfg.window_len;
  const auto bytes = load_pack(a.pack);
  const AuditResult r = audit(footprint(bytes, acct), cfg.budget);
  out << describe(bytes, acct) << "budget.max_stack: " << cfg.budget.max_stack
      << "\nbudget.max_program: " << cfg.budget.max_program << "\nbudget.max_data: " << cfg.budget.max_data << "\n"
      << r.to_text();
  return r.pass ? kExitOk : kExitBudget;
}

struct InferArgs {
  std::string pack, in, labels, events, report;
  std::optional<double> t_inference;
};

int cmd_infer(const Common& c, const InferArgs& a, std::ostream& out) {
  const PipelineConfig cfg = resolve(c);
  const auto bytes = load_pack(a.pack);
  std::vector<std::string> labels;
  if (!a.labels.empty()) labels = load_labels(a.labels);
  else if (fs::exists(a.pack + ".labels")) labels = load_labels(a.pack + ".labels");
  Engine engine(bytes, cfg.window_len, cfg.ma_width, cfg.stride, cfg.accounting);

  Recording rec = load_csv(a.in);
  if (near_rate(rec.rate_hz, cfg.raw_rate_hz)) rec = downsample(rec, cfg);
  else if (near_rate(rec.rate_hz, cfg.target_rate_hz)) rec = to_sensor_precision(std::move(rec));
  else throw Error(ErrorCode::RateMismatch, "stream rate " + std::to_string(rec.rate_hz) + " Hz matches neither pipeline rate");

  std::string log = "window_index,label,top_score\n";
  for (const Sample& s : rec.samples) {
    if (!engine.push_sample(s)) continue;
    const auto& e = engine.last_event();
    char score[32];
    std::snprintf(score, sizeof score, "%.9g", static_cast<double>(e.top_score));
    log += std::to_string(e.window_index) + "," + (e.label < labels.size() ? labels[e.label] : std::to_string(e.label)) +
           "," + score + "\n";
  }
  if (a.events.empty()) out << log;
  else write_text(a.events, log);

  const std::uint64_t n = engine.windows_classified();
  if (n == 0) throw Error(ErrorCode::SeriesTooShort, "stream shorter than one window");
  const double t_window = static_cast<double>(engine.stride()) / cfg.target_rate_hz * 1000.0;
  const double t_inf = a.t_inference ? *a.t_inference : engine.total_classify_seconds() * 1000.0 / static_cast<double>(n);
  const DutyCycleReport d = duty_cycle(t_inf, t_window);
  std::ostringstream rep;
  rep << "events " << n << "\n"
      << "t_inference_ms " << d.t_inference_ms << (a.t_inference ? " (supplied)" : " (measured)") << "\n"
      << "t_window_ms " << d.t_window_ms << "\n"
      << "idle_fraction " << fixed(d.idle_fraction) << "\n";
  if (a.report.empty()) out << rep.str();
  else write_text(a.report, rep.str());
  return kExitOk;
}

struct InjectArgs {
  std::string data, seeds, order, policy, out;
  bool verify = false;
};

int cmd_inject(const Common& c, const InjectArgs& a, std::ostream& out) {
  const PipelineConfig cfg = resolve(c);
  Corpus corpus;
  std::vector<std::string> seeds, order;
  MergePolicy policy;
  if (a.data.empty()) {
    const InjectionScenario sc = default_injection_scenario(cfg);
    corpus = build_corpus(synth_dataset(sc.spec, cfg.seed), cfg, sc.all_labels);
    seeds = sc.seeds;
    order = sc.candidates;
    policy = sc.policy;
  } else {
    corpus.features = load_feature_table(a.data);
    corpus.classes = corpus.features.classes;
    if (a.seeds.empty() || a.order.empty()) throw Error(ErrorCode::ConfigError, "--data needs --seeds and --order");
  }
  if (!a.seeds.empty()) seeds = split_list(a.seeds);
  if (!a.order.empty()) order = load_labels(a.order);
  const std::string policy_path = !a.policy.empty() ? a.policy : cfg.merge_policy_path;
  if (!policy_path.empty()) policy = load_merge_policy(policy_path);

  const TrainFn fn = make_corpus_train_fn(corpus, cfg, ModelRecipe{cfg.model_kind, FeatureMask::all()});
  const InjectionReport r = run_injection(seeds, order, policy, fn, InjectOptions{cfg.tau, a.verify});
  if (a.out.empty()) out << r.to_text();
  else write_text(a.out, r.to_text());
  std::size_t acc = 0, mer = 0, dis = 0;
  for (const auto& s : r.steps) {
    acc += s.decision.kind == DecisionKind::Accepted;
    mer += s.decision.kind == DecisionKind::Merged;
    dis += s.decision.kind == DecisionKind::Discarded;
  }
  out << "inject: " << seeds.size() + order.size() << " classes offered, " << r.final_classes.size() << " kept ("
      << acc << " accepted, " << mer << " merged, " << dis << " discarded), final accuracy "
      << fixed(r.final_accuracy) << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string model, pack, labels, data, confusion;
};

int cmd_eval(const Common& c, const EvalArgs& a, std::ostream& out) {
  resolve(c);
  StoredModel s;
  if (!a.model.empty()) {
    s = load_model(a.model);
  } else if (!a.pack.empty()) {
    s.model = decode(load_pack(a.pack));
    s.classes = load_labels(a.labels.empty() ? a.pack + ".labels" : a.labels);
  } else {
    throw Error(ErrorCode::ConfigError, "eval needs --model or --pack");
  }
  const LabeledFeatures data = load_feature_table(a.data, s.classes);
  const Evaluation ev = evaluate(s.model, data);
  out << "windows " << data.size() << "\naccuracy " << fixed(ev.accuracy) << "\n";
  if (a.confusion.empty()) out << confusion_csv(ev.confusion);
  else write_text(a.confusion, confusion_csv(ev.confusion));
  return kExitOk;
}

}  // namespace

int run_command(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"In-sensor activity recognition pipeline", "isphar"};
  app.require_subcommand(1);

  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", common.seed, "RNG seed (overrides the config file)");
    sub->add_option("--config", common.config, "flat key = value config file")->check(CLI::ExistingFile);
  };

  SynthArgs synth;
  auto* s_synth = app.add_subcommand("synth", "write a synthetic CSV corpus");
  s_synth->add_option("--out", synth.out, "output directory")->required();
  s_synth->add_option("--scenario", synth.scenario, "default or injection");
  s_synth->add_option("--minutes", synth.minutes, "minutes of signal per class");
  add_common(s_synth);

  IoArgs pre;
  auto* s_pre = app.add_subcommand("preprocess", "cleanse and decimate CSV recordings");
  s_pre->add_option("--in", pre.in, "CSV file or directory")->required();
  s_pre->add_option("--out", pre.out, "output directory")->required();
  add_common(s_pre);

  IoArgs feat;
  auto* s_feat = app.add_subcommand("featurize", "window recordings into a feature table");
  s_feat->add_option("--in", feat.in, "CSV file or directory")->required();
  s_feat->add_option("--out", feat.out, "feature table CSV")->required();
  add_common(s_feat);

  TrainArgs train;
  auto* s_train = app.add_subcommand("train", "train a model on a feature table");
  s_train->add_option("--data", train.data, "feature table CSV")->required();
  s_train->add_option("--out", train.out, "model JSON")->required();
  s_train->add_option("--model", train.model, "forest or mlp");
  s_train->add_option("--mask", train.mask, "all, reference16, or top");
  s_train->add_option("--history", train.history, "per-epoch history CSV (mlp)");
  add_common(s_train);

  PackArgs pack;
  auto* s_pack = app.add_subcommand("pack", "serialize a model to .ispm");
  s_pack->add_option("--model", pack.model, "model JSON")->required();
  s_pack->add_option("--out", pack.out, ".ispm output")->required();
  add_common(s_pack);

  AuditArgs aud;
  auto* s_audit = app.add_subcommand("audit", "check a pack's footprint against the budget");
  s_audit->add_option("--pack", aud.pack, ".ispm file")->required();
  s_audit->add_option("--max-stack", aud.max_stack, "stack budget in bytes");
  s_audit->add_option("--max-program", aud.max_program, "program budget in bytes");
  s_audit->add_option("--max-data", aud.max_data, "data budget in bytes");
  add_common(s_audit);

  InferArgs inf;
  auto* s_infer = app.add_subcommand("infer", "stream a CSV recording through the engine");
  s_infer->add_option("--pack", inf.pack, ".ispm file")->required();
  s_infer->add_option("--in", inf.in, "CSV recording")->required();
  s_infer->add_option("--labels", inf.labels, "class names, one per line (default: <pack>.labels)");
  s_infer->add_option("--events", inf.events, "event log output (default: stdout)");
  s_infer->add_option("--report", inf.report, "duty-cycle report output (default: stdout)");
  s_infer->add_option("--t-inference", inf.t_inference, "inference time per window in ms (default: measured)");
  add_common(s_infer);

  InjectArgs inj;
  auto* s_inject = app.add_subcommand("inject", "run incremental class injection");
  s_inject->add_option("--data", inj.data, "feature table (default: synthetic curriculum)");
  s_inject->add_option("--seeds", inj.seeds, "comma-separated seed classes");
  s_inject->add_option("--order", inj.order, "candidate order, one per line");
  s_inject->add_option("--policy", inj.policy, "merge policy file");
  s_inject->add_option("--out", inj.out, "report output (default: stdout)");
  s_inject->add_flag("--verify", inj.verify, "train each step twice and require identical results");
  add_common(s_inject);

  EvalArgs ev;
  auto* s_eval = app.add_subcommand("eval", "accuracy and confusion of a model on a feature table");
  s_eval->add_option("--model", ev.model, "model JSON");
  s_eval->add_option("--pack", ev.pack, ".ispm file");
  s_eval->add_option("--labels", ev.labels, "class names for --pack");
  s_eval->add_option("--data", ev.data, "feature table CSV")->required();
  s_eval->add_option("--confusion", ev.confusion, "confusion CSV output (default: stdout)");
  add_common(s_eval);

  std::vector<std::string> rev(argv.rbegin(), argv.rend() - (argv.empty() ? 0 : 1));
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  try {
    if (s_synth->parsed()) return cmd_synth(common, synth, out);
    if (s_pre->parsed()) return cmd_preprocess(common, pre, out);
    if (s_feat->parsed()) return cmd_featurize(common, feat, out);
    if (s_train->parsed()) return cmd_train(common, train, out);
    if (s_pack->parsed()) return cmd_pack(common, pack, out);
    if (s_audit->parsed()) return cmd_audit(common, aud, out);
    if (s_infer->parsed()) return cmd_infer(common, inf, out);
    if (s_inject->parsed()) return cmd_inject(common, inj, out);
    if (s_eval->parsed()) return cmd_eval(common, ev, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::ConfigError ? kExitUsage : kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace isphar
