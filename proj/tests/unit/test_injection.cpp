#include <map>

#include "doctest.h"
#include "isphar/dataset.hpp"
#include "isphar/injection.hpp"
#include "isphar/rng.hpp"

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

ConfusionMatrix matrix(std::vector<std::string> names, std::vector<std::vector<std::uint64_t>> rows) {
  ConfusionMatrix cm(names.size(), names);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) cm.at(i, j) = rows[i][j];
  return cm;
}

// Simulated trainer: each original label has 100 validation windows and
// confuses[a][b] percent of a's windows land on b when both are live and
// in different classes.
struct FakeWorld {
  std::map<std::pair<std::string, std::string>, std::uint64_t> confuses;
  int calls = 0;

  TrainOutcome operator()(std::span<const ActiveClass> classes) {
    ++calls;
    std::vector<std::string> names;
    for (const auto& c : classes) names.push_back(c.name);
    ConfusionMatrix cm(classes.size(), names);
    for (std::size_t i = 0; i < classes.size(); ++i)
      for (const auto& a : classes[i].members) {
        std::uint64_t left = 100;
        for (std::size_t j = 0; j < classes.size(); ++j) {
          if (j == i) continue;
          for (const auto& b : classes[j].members) {
            const auto it = confuses.find({a, b});
            if (it == confuses.end()) continue;
            cm.at(i, j) += it->second;
            left -= it->second;
          }
        }
        cm.at(i, i) += left;
      }
    return {cm, cm.accuracy()};
  }
};

std::vector<ActiveClass> live(std::initializer_list<const char*> names) {
  std::vector<ActiveClass> out;
  for (const char* n : names) out.push_back({n, {n}});
  return out;
}

}  // namespace

TEST_CASE("assess_overlap: worked examples") {
  const auto one = matrix({"A", "B", "N"}, {{90, 0, 10}, {0, 100, 0}, {20, 0, 80}});
  CHECK(assess_overlap(one, "N", 0.15) == std::vector<std::string>{"A"});
  const auto clean = matrix({"A", "B", "N"}, {{100, 0, 0}, {0, 100, 0}, {5, 5, 90}});
  CHECK(assess_overlap(clean, "N", 0.15).empty());
  const auto two = matrix({"A", "B", "N"}, {{100, 0, 0}, {0, 100, 0}, {20, 20, 60}});
  CHECK(assess_overlap(two, "N", 0.15) == std::vector<std::string>{"A", "B"});
  // reverse direction: A's windows drift into N
  const auto rev = matrix({"A", "B", "N"}, {{80, 0, 20}, {0, 100, 0}, {0, 0, 100}});
  CHECK(assess_overlap(rev, "N", 0.15) == std::vector<std::string>{"A"});
  // exactly tau counts
  const auto edge = matrix({"A", "N"}, {{100, 0}, {15, 85}});
  CHECK(assess_overlap(edge, "N", 0.15) == std::vector<std::string>{"A"});
  const auto unc = matrix({"A", std::string(kUnclassifiedLabel), "N"}, {{100, 0, 0}, {0, 50, 50}, {0, 40, 60}});
  CHECK(assess_overlap(unc, "N", 0.15).empty());
  CHECK(code_of([&] { assess_overlap(one, "Z", 0.15); }) == ErrorCode::UnknownClass);
  CHECK(code_of([&] { assess_overlap(one, "N", 0.0); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("decide: rule table") {
  const MergePolicy policy = parse_merge_policy("merge Jog, Run -> Running\nmerge Hop, Skip -> Skip\n");
  const auto active = live({"Run", "Walk", "Skip"});

  Rng rng(2);
  const std::vector<std::string> pool{"Run", "Walk", "Skip"};
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::string> overlap;
    for (const auto& p : pool)
      if (rng.uniform() < 0.4) overlap.push_back(p);
    const Decision d = decide("Jog", overlap, active, policy);
    CHECK(d.overlap == overlap);
    if (overlap.empty()) {
      CHECK(d.kind == DecisionKind::Accepted);
    } else if (overlap.size() > 1) {
      CHECK(d.kind == DecisionKind::Discarded);
      CHECK(d.reason.find(std::to_string(overlap.size())) != std::string::npos);
    } else if (overlap[0] == "Run") {
      CHECK(d.kind == DecisionKind::Merged);
      CHECK(d.merged_name == "Running");
      CHECK(d.partner == "Run");
    } else {
      CHECK(d.kind == DecisionKind::Discarded);
      CHECK(d.partner == overlap[0]);
    }
    CHECK(decide("Jog", overlap, active, policy) == d);
  }

  // The rule may name an original member of a merged class.
  std::vector<ActiveClass> merged{{"Running", {"Run", "Jog"}}, {"Walk", {"Walk"}}};
  const MergePolicy p2 = parse_merge_policy("merge Sprint, Jog -> Running");
  const std::vector<std::string> ov{"Running"};
  const Decision d = decide("Sprint", ov, merged, p2);
  CHECK(d.kind == DecisionKind::Merged);
  CHECK(d.merged_name == "Running");

  // Merged name that is another live class.
  const std::vector<std::string> hop{"Walk"};
  const MergePolicy p3 = parse_merge_policy("merge Hop, Walk -> Skip");
  CHECK(decide("Hop", hop, active, p3).kind == DecisionKind::Discarded);
  CHECK(decision_name(DecisionKind::Merged) == "merged");
}

TEST_CASE("inject_step: accept, merge, discard") {
  FakeWorld world;
  world.confuses[{"Jog", "Run"}] = 30;
  world.confuses[{"Run", "Jog"}] = 25;
  world.confuses[{"Blend", "Run"}] = 20;
  world.confuses[{"Blend", "Walk"}] = 20;
  world.confuses[{"Stray", "Walk"}] = 40;
  const MergePolicy policy = parse_merge_policy("merge Jog, Run -> Running");
  auto fn = [&](std::span<const ActiveClass> c) { return world(c); };

  InjectionState st;
  st.active = live({"Run", "Walk"});
  StepRecord a = inject_step(st, "Sit", policy, fn);
  CHECK(a.decision.kind == DecisionKind::Accepted);
  CHECK(st.active.size() == 3);
  CHECK(world.calls == 1);
  CHECK_FALSE(a.merged_accuracy.has_value());

  StepRecord m = inject_step(st, "Jog", policy, fn);
  CHECK(m.decision.kind == DecisionKind::Merged);
  CHECK(st.active[0] == ActiveClass{"Running", {"Run", "Jog"}});
  REQUIRE(m.merged_accuracy.has_value());
  CHECK(*m.merged_accuracy == 1.0);
  CHECK(m.val_accuracy < 1.0);
  CHECK(world.calls == 3);

  StepRecord two = inject_step(st, "Blend", policy, fn);
  CHECK(two.decision.kind == DecisionKind::Discarded);
  CHECK(two.decision.overlap.size() == 2);
  StepRecord one = inject_step(st, "Stray", policy, fn);
  CHECK(one.decision.kind == DecisionKind::Discarded);
  CHECK(one.decision.partner == "Walk");
  CHECK(st.active.size() == 3);
  CHECK(st.discarded.size() == 2);
  CHECK(st.steps.size() == 4);
  CHECK(code_of([&] { inject_step(st, "Jog", policy, fn); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("nondeterministic and malformed train functions are caught") {
  int n = 0;
  TrainFn flaky = [&](std::span<const ActiveClass> c) {
    ConfusionMatrix cm(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) cm.at(i, i) = 10 + static_cast<std::uint64_t>(n++);
    return TrainOutcome{cm, 1.0};
  };
  InjectionState st;
  st.active = live({"A", "B"});
  InjectOptions opts;
  opts.verify_determinism = true;
  CHECK(code_of([&] { inject_step(st, "C", {}, flaky, opts); }) == ErrorCode::TrainFnNondeterministic);
  TrainFn wrong = [](std::span<const ActiveClass>) { return TrainOutcome{ConfusionMatrix(1, {"A"}), 1.0}; };
  CHECK(code_of([&] { inject_step(st, "C", {}, wrong); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("run_injection: report, replay, determinism") {
  FakeWorld world;
  world.confuses[{"Jog", "Run"}] = 30;
  world.confuses[{"Blend", "Run"}] = 20;
  world.confuses[{"Blend", "Walk"}] = 20;
  const MergePolicy policy = parse_merge_policy("# pairs\nmerge Jog, Run -> Running\n");
  auto fn = [&](std::span<const ActiveClass> c) { return world(c); };
  const std::vector<std::string> seeds{"Run", "Walk"};
  const std::vector<std::string> cands{"Sit", "Jog", "Blend", "Lie"};
  InjectOptions opts;
  opts.verify_determinism = true;
  const InjectionReport r = run_injection(seeds, cands, policy, fn, opts);
  CHECK(r.final_class_names() == std::vector<std::string>{"Running", "Walk", "Sit", "Lie"});
  CHECK(r.steps.size() == 4);
  CHECK(r.seed_accuracy == 1.0);
  CHECK(r.final_accuracy == 1.0);

  const auto replay = replay_decisions(r, policy);
  REQUIRE(replay.size() == r.steps.size());
  for (std::size_t i = 0; i < replay.size(); ++i) CHECK(replay[i] == r.steps[i].decision);

  const std::string text = r.to_text();
  const InjectionReport back = parse_injection_report(text);
  CHECK(back.to_text() == text);
  CHECK(back.final_classes == r.final_classes);
  CHECK(back.steps.size() == r.steps.size());
  for (std::size_t i = 0; i < back.steps.size(); ++i) {
    CHECK(back.steps[i].decision == r.steps[i].decision);
    CHECK(back.steps[i].confusion == r.steps[i].confusion);
  }
  CHECK(replay_decisions(back, policy) == replay);
  CHECK(run_injection(seeds, cands, policy, fn, opts).to_text() == text);

  const InjectionReport none = run_injection(seeds, std::vector<std::string>{}, policy, fn);
  CHECK(none.final_class_names() == seeds);
  CHECK(none.steps.empty());
  CHECK(code_of([&] { run_injection(std::vector<std::string>{"A"}, cands, policy, fn); }) == ErrorCode::InvalidArgument);
  const std::vector<std::string> dup{"Run", "Sit"};
  CHECK(code_of([&] { run_injection(seeds, dup, policy, fn); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("merge policy text") {
  const MergePolicy p = parse_merge_policy("  merge  a , b -> AB  # note\n\nmerge c, d -> CD\n");
  REQUIRE(p.rules.size() == 2);
  CHECK(p.rules[0] == MergeRule{"a", "b", "AB"});
  CHECK(p.find("b", "a") == &p.rules[0]);
  CHECK(p.find("a", "c") == nullptr);
  CHECK(parse_merge_policy(format_merge_policy(p)).rules == p.rules);
  CHECK(code_of([] { parse_merge_policy("join a, b -> c"); }) == ErrorCode::ParseError);
  CHECK(code_of([] { parse_merge_policy("merge a, b"); }) == ErrorCode::ParseError);
  CHECK(code_of([] { parse_merge_policy("merge a -> c"); }) == ErrorCode::ParseError);
  CHECK(code_of([] { parse_merge_policy("merge a, a -> c"); }) == ErrorCode::ParseError);
  CHECK(code_of([] { parse_merge_policy("merge a, b -> c\nmerge b, a -> d"); }) == ErrorCode::ParseError);
  CHECK(code_of([] { load_merge_policy("/nonexistent/policy.txt"); }) == ErrorCode::IoError);
}
