#include "isphar/injection.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "isphar/dataset.hpp"
#include "isphar/error.hpp"

namespace isphar {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string join(std::span<const std::string> items, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> names_of(std::span<const ActiveClass> classes) {
  std::vector<std::string> out;
  for (const auto& c : classes) out.push_back(c.name);
  return out;
}

const ActiveClass* find_active(std::span<const ActiveClass> active, std::string_view name) {
  for (const auto& c : active)
    if (c.name == name) return &c;
  return nullptr;
}

TrainOutcome train_checked(const TrainFn& fn, std::span<const ActiveClass> classes, bool verify) {
  TrainOutcome out = fn(classes);
  if (out.confusion.classes.empty()) out.confusion.classes = names_of(classes);
  if (out.confusion.n != classes.size() || out.confusion.classes != names_of(classes))
    throw Error(ErrorCode::InvalidArgument, "train_fn returned a confusion matrix over different classes");
  if (verify) {
    TrainOutcome again = fn(classes);
    if (again.confusion.classes.empty()) again.confusion.classes = out.confusion.classes;
    if (!(again == out))
      throw Error(ErrorCode::TrainFnNondeterministic, "train_fn gave different results for identical input");
  }
  return out;
}

void apply(InjectionState& state, const Decision& d) {
  switch (d.kind) {
    case DecisionKind::Accepted:
      state.active.push_back({d.candidate, {d.candidate}});
      break;
    case DecisionKind::Merged:
      for (auto& c : state.active)
        if (c.name == d.partner) {
          c.name = d.merged_name;
          c.members.push_back(d.candidate);
        }
      break;
    case DecisionKind::Discarded:
      state.discarded.emplace_back(d.candidate, d.reason);
      break;
  }
}

}  // namespace

const MergeRule* MergePolicy::find(std::string_view x, std::string_view y) const {
  for (const auto& r : rules)
    if ((r.a == x && r.b == y) || (r.a == y && r.b == x)) return &r;
  return nullptr;
}

MergePolicy parse_merge_policy(std::string_view text) {
  MergePolicy p;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    const std::string t = trim(line);
    if (t.empty()) continue;
    auto bad = [&](const std::string& why) {
      return Error(ErrorCode::ParseError, "merge policy line " + std::to_string(lineno) + ": " + why);
    };
    if (t.rfind("merge ", 0) != 0) throw bad("expected 'merge a, b -> Name'");
    const auto arrow = t.find("->");
    if (arrow == std::string::npos) throw bad("missing '->'");
    const auto pair = split(std::string_view(t).substr(6, arrow - 6), ',');
    const std::string merged = trim(std::string_view(t).substr(arrow + 2));
    if (pair.size() != 2 || pair[0].empty() || pair[1].empty() || merged.empty())
      throw bad("need exactly two class names and a merged name");
    if (pair[0] == pair[1]) throw bad("cannot merge a class with itself");
    if (p.find(pair[0], pair[1]) != nullptr) throw bad("duplicate rule for " + pair[0] + ", " + pair[1]);
    p.rules.push_back({pair[0], pair[1], merged});
  }
  return p;
}

MergePolicy load_merge_policy(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read merge policy " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_merge_policy(ss.str());
}

std::string format_merge_policy(const MergePolicy& p) {
  std::string out;
  for (const auto& r : p.rules) out += "merge " + r.a + ", " + r.b + " -> " + r.merged + "\n";
  return out;
}

std::vector<std::string> assess_overlap(const ConfusionMatrix& cm, std::string_view new_class, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw Error(ErrorCode::InvalidArgument, "tau must lie in (0, 1)");
  const std::size_t k = cm.index_of(new_class);
  std::vector<std::string> out;
  for (std::size_t c = 0; c < cm.n; ++c) {
    if (c == k || cm.classes[c] == kUnclassifiedLabel) continue;
    if (cm.rate(k, c) >= tau || cm.rate(c, k) >= tau) out.push_back(cm.classes[c]);
  }
  return out;
}

std::string_view decision_name(DecisionKind k) {
  switch (k) {
    case DecisionKind::Accepted: return "accepted";
    case DecisionKind::Merged: return "merged";
    case DecisionKind::Discarded: return "discarded";
  }
  return "?";
}

Decision decide(std::string_view candidate, std::span<const std::string> overlap, std::span<const ActiveClass> active,
                const MergePolicy& policy) {
  Decision d;
  d.candidate = std::string(candidate);
  d.overlap.assign(overlap.begin(), overlap.end());
  if (overlap.empty()) {
    d.kind = DecisionKind::Accepted;
    return d;
  }
  d.kind = DecisionKind::Discarded;
  if (overlap.size() > 1) {
    d.reason = "overlaps " + std::to_string(overlap.size()) + " classes";
    return d;
  }
  d.partner = overlap.front();
  const ActiveClass* partner = find_active(active, d.partner);
  const MergeRule* rule = policy.find(candidate, d.partner);
  if (partner != nullptr && rule == nullptr)
    for (const auto& m : partner->members)
      if ((rule = policy.find(candidate, m)) != nullptr) break;
  if (rule == nullptr) {
    d.reason = "overlaps " + d.partner + " and the pair is not mergeable";
    return d;
  }
  for (const auto& c : active)
    if (c.name == rule->merged && c.name != d.partner) {
      d.reason = "merged name " + rule->merged + " collides with a live class";
      return d;
    }
  d.kind = DecisionKind::Merged;
  d.merged_name = rule->merged;
  return d;
}

bool InjectionState::knows(std::string_view cls) const {
  for (const auto& c : active) {
    if (c.name == cls) return true;
    for (const auto& m : c.members)
      if (m == cls) return true;
  }
  for (const auto& [name, reason] : discarded)
    if (name == cls) return true;
  return false;
}

StepRecord inject_step(InjectionState& state, const std::string& candidate, const MergePolicy& policy,
                       const TrainFn& train_fn, const InjectOptions& opts) {
  if (state.knows(candidate))
    throw Error(ErrorCode::InvalidArgument, "candidate '" + candidate + "' is already active or discarded");
  StepRecord rec;
  rec.active_before = names_of(state.active);
  std::vector<ActiveClass> trial = state.active;
  trial.push_back({candidate, {candidate}});
  TrainOutcome out = train_checked(train_fn, trial, opts.verify_determinism);
  rec.confusion = std::move(out.confusion);
  rec.val_accuracy = out.accuracy;
  const auto overlap = assess_overlap(rec.confusion, candidate, state.tau);
  rec.decision = decide(candidate, overlap, state.active, policy);
  apply(state, rec.decision);
  if (rec.decision.kind == DecisionKind::Merged)
    rec.merged_accuracy = train_checked(train_fn, state.active, opts.verify_determinism).accuracy;
  state.steps.push_back(rec);
  return rec;
}

std::vector<std::string> InjectionReport::final_class_names() const { return names_of(final_classes); }

InjectionReport run_injection(std::span<const std::string> seed_classes, std::span<const std::string> candidates,
                              const MergePolicy& policy, const TrainFn& train_fn, const InjectOptions& opts) {
  if (seed_classes.size() < 2) throw Error(ErrorCode::InvalidArgument, "injection needs at least two seed classes");
  std::vector<std::string> seen(seed_classes.begin(), seed_classes.end());
  seen.insert(seen.end(), candidates.begin(), candidates.end());
  std::sort(seen.begin(), seen.end());
  if (std::adjacent_find(seen.begin(), seen.end()) != seen.end())
    throw Error(ErrorCode::InvalidArgument, "seed and candidate classes must be distinct");

  InjectionState state;
  state.tau = opts.tau;
  for (const auto& s : seed_classes) state.active.push_back({s, {s}});

  InjectionReport report;
  report.tau = opts.tau;
  report.seed_classes.assign(seed_classes.begin(), seed_classes.end());
  TrainOutcome seed = train_checked(train_fn, state.active, opts.verify_determinism);
  report.seed_accuracy = seed.accuracy;
  for (const auto& c : candidates) inject_step(state, c, policy, train_fn, opts);

  TrainOutcome final_out = candidates.empty() ? seed : train_checked(train_fn, state.active, opts.verify_determinism);
  report.steps = state.steps;
  report.final_classes = state.active;
  report.final_accuracy = final_out.accuracy;
  report.final_confusion = final_out.confusion;
  return report;
}

// ---- text form ----------------------------------------------------------------

namespace {

void write_matrix(std::ostringstream& os, const std::string& prefix, const ConfusionMatrix& cm) {
  os << prefix << "confusion_classes " << join(cm.classes, "|") << '\n';
  for (std::size_t r = 0; r < cm.n; ++r) {
    os << prefix << "confusion_row";
    for (std::size_t c = 0; c < cm.n; ++c) os << ' ' << cm.at(r, c);
    os << '\n';
  }
}

}  // namespace

std::string InjectionReport::to_text() const {
  std::ostringstream os;
  os << "injection_report 1\n"
     << "tau " << num(tau) << '\n'
     << "seed_classes " << join(seed_classes, "|") << '\n'
     << "seed_accuracy " << num(seed_accuracy) << '\n';
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const StepRecord& s = steps[i];
    const Decision& d = s.decision;
    os << "step " << i + 1 << '\n'
       << "  candidate " << d.candidate << '\n'
       << "  active_before " << join(s.active_before, "|") << '\n'
       << "  decision " << decision_name(d.kind) << '\n';
    if (!d.partner.empty()) os << "  partner " << d.partner << '\n';
    if (!d.merged_name.empty()) os << "  merged_name " << d.merged_name << '\n';
    if (!d.reason.empty()) os << "  reason " << d.reason << '\n';
    os << "  overlap " << join(d.overlap, "|") << '\n' << "  val_accuracy " << num(s.val_accuracy) << '\n';
    if (s.merged_accuracy) os << "  merged_accuracy " << num(*s.merged_accuracy) << '\n';
    write_matrix(os, "  ", s.confusion);
  }
  os << "final_classes";
  for (std::size_t i = 0; i < final_classes.size(); ++i)
    os << (i ? "|" : " ") << final_classes[i].name << '=' << join(final_classes[i].members, "+");
  os << '\n' << "final_accuracy " << num(final_accuracy) << '\n';
  write_matrix(os, "final_", final_confusion);
  return os.str();
}

InjectionReport parse_injection_report(std::string_view text) {
  InjectionReport r;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  StepRecord* step = nullptr;
  ConfusionMatrix* cm = nullptr;
  std::vector<std::vector<std::uint64_t>> rows;
  std::vector<std::string> cm_classes;
  auto bad = [&](const std::string& why) {
    return Error(ErrorCode::ParseError, "injection report line " + std::to_string(lineno) + ": " + why);
  };
  auto flush = [&]() {
    if (cm == nullptr) return;
    if (rows.size() != cm_classes.size()) throw bad("confusion matrix row count differs from its classes");
    *cm = ConfusionMatrix(cm_classes.size(), cm_classes);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != cm_classes.size()) throw bad("confusion row width differs from its classes");
      for (std::size_t j = 0; j < rows[i].size(); ++j) cm->at(i, j) = rows[i][j];
    }
    cm = nullptr;
    rows.clear();
  };
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto sp = t.find(' ');
    const std::string key = t.substr(0, sp);
    const std::string val = sp == std::string::npos ? std::string() : trim(std::string_view(t).substr(sp + 1));
    try {
      if (key == "injection_report") {
        if (val != "1") throw bad("unsupported report version " + val);
        header = true;
      } else if (!header) {
        throw bad("missing injection_report header");
      } else if (key == "tau") {
        r.tau = std::stod(val);
      } else if (key == "seed_classes") {
        r.seed_classes = split(val, '|');
      } else if (key == "seed_accuracy") {
        r.seed_accuracy = std::stod(val);
      } else if (key == "step") {
        flush();
        r.steps.emplace_back();
        step = &r.steps.back();
      } else if (key == "final_classes") {
        flush();
        step = nullptr;
        for (const auto& item : split(val, '|')) {
          const auto eq = item.find('=');
          if (eq == std::string::npos) throw bad("final class without '='");
          r.final_classes.push_back({item.substr(0, eq), split(std::string_view(item).substr(eq + 1), '+')});
        }
      } else if (key == "final_accuracy") {
        r.final_accuracy = std::stod(val);
      } else if (key == "final_confusion_classes" || key == "confusion_classes") {
        flush();
        if (key == "confusion_classes" && step == nullptr) throw bad("confusion outside a step");
        cm = key == "final_confusion_classes" ? &r.final_confusion : &step->confusion;
        cm_classes = split(val, '|');
      } else if (key == "final_confusion_row" || key == "confusion_row") {
        if (cm == nullptr) throw bad("confusion row without classes");
        std::istringstream ns(val);
        std::vector<std::uint64_t> row;
        std::uint64_t v = 0;
        while (ns >> v) row.push_back(v);
        rows.push_back(std::move(row));
      } else if (step != nullptr) {
        Decision& d = step->decision;
        if (key == "candidate") d.candidate = val;
        else if (key == "active_before") step->active_before = split(val, '|');
        else if (key == "decision") {
          if (val == "accepted") d.kind = DecisionKind::Accepted;
          else if (val == "merged") d.kind = DecisionKind::Merged;
          else if (val == "discarded") d.kind = DecisionKind::Discarded;
          else throw bad("unknown decision '" + val + "'");
        } else if (key == "partner") d.partner = val;
        else if (key == "merged_name") d.merged_name = val;
        else if (key == "reason") d.reason = val;
        else if (key == "overlap") d.overlap = split(val, '|');
        else if (key == "val_accuracy") step->val_accuracy = std::stod(val);
        else if (key == "merged_accuracy") step->merged_accuracy = std::stod(val);
        else throw bad("unknown step key '" + key + "'");
      } else {
        throw bad("unknown key '" + key + "'");
      }
    } catch (const std::invalid_argument&) {
      throw bad("bad number '" + val + "'");
    } catch (const std::out_of_range&) {
      throw bad("number out of range '" + val + "'");
    }
  }
  flush();
  if (!header) throw Error(ErrorCode::ParseError, "empty injection report");
  return r;
}

std::vector<Decision> replay_decisions(const InjectionReport& report, const MergePolicy& policy) {
  InjectionState state;
  state.tau = report.tau;
  for (const auto& s : report.seed_classes) state.active.push_back({s, {s}});
  std::vector<Decision> out;
  for (const StepRecord& s : report.steps) {
    const auto overlap = assess_overlap(s.confusion, s.decision.candidate, report.tau);
    Decision d = decide(s.decision.candidate, overlap, state.active, policy);
    apply(state, d);
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace isphar
