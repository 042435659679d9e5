#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "isphar/models.hpp"

namespace isphar {

inline constexpr double kDefaultOverlapTau = 0.15;

// `merge a, b -> Name` lines; `#` comments.
struct MergeRule {
  std::string a, b, merged;
  bool operator==(const MergeRule&) const = default;
};

struct MergePolicy {
  std::vector<MergeRule> rules;

  // Rule covering the unordered pair, or nullptr.
  const MergeRule* find(std::string_view x, std::string_view y) const;
};

MergePolicy parse_merge_policy(std::string_view text);
MergePolicy load_merge_policy(const std::filesystem::path& path);
std::string format_merge_policy(const MergePolicy& p);

// Classes of `cm` (other than `new_class` and Unclassified) whose
// row-normalized confusion with `new_class` reaches tau in either direction.
std::vector<std::string> assess_overlap(const ConfusionMatrix& cm, std::string_view new_class, double tau);

// A live class: its name and the original labels folded into it.
struct ActiveClass {
  std::string name;
  std::vector<std::string> members;
  bool operator==(const ActiveClass&) const = default;
};

enum class DecisionKind { Accepted, Merged, Discarded };
std::string_view decision_name(DecisionKind k);

struct Decision {
  std::string candidate;
  DecisionKind kind = DecisionKind::Accepted;
  std::string partner;      // overlapping live class (merge or single-overlap discard)
  std::string merged_name;  // merge only
  std::string reason;       // discard only
  std::vector<std::string> overlap;
  bool operator==(const Decision&) const = default;
};

// The rule table: depends only on the overlap set and the policy.
Decision decide(std::string_view candidate, std::span<const std::string> overlap, std::span<const ActiveClass> active,
                const MergePolicy& policy);

struct TrainOutcome {
  ConfusionMatrix confusion;  // validation confusion, classes in the order given to train_fn
  double accuracy = 0.0;
  bool operator==(const TrainOutcome&) const = default;
};

// Trains a fresh model on exactly these classes (members relabeled to the class name).
using TrainFn = std::function<TrainOutcome(std::span<const ActiveClass> classes)>;

struct StepRecord {
  Decision decision;
  ConfusionMatrix confusion;            // with the candidate as its own class
  double val_accuracy = 0.0;            // of that model
  std::optional<double> merged_accuracy;  // after relabeling, when merged
  std::vector<std::string> active_before;
};

struct InjectionState {
  std::vector<ActiveClass> active;
  std::vector<std::pair<std::string, std::string>> discarded;  // candidate, reason
  std::vector<StepRecord> steps;
  double tau = kDefaultOverlapTau;

  bool knows(std::string_view cls) const;
};

struct InjectOptions {
  double tau = kDefaultOverlapTau;
  bool verify_determinism = false;  // train twice per step and compare
};

StepRecord inject_step(InjectionState& state, const std::string& candidate, const MergePolicy& policy,
                       const TrainFn& train_fn, const InjectOptions& opts = {});

struct InjectionReport {
  double tau = kDefaultOverlapTau;
  std::vector<std::string> seed_classes;
  double seed_accuracy = 0.0;
  std::vector<StepRecord> steps;
  std::vector<ActiveClass> final_classes;
  double final_accuracy = 0.0;
  ConfusionMatrix final_confusion;

  std::vector<std::string> final_class_names() const;
  std::string to_text() const;
};

InjectionReport run_injection(std::span<const std::string> seed_classes, std::span<const std::string> candidates,
                              const MergePolicy& policy, const TrainFn& train_fn, const InjectOptions& opts = {});

InjectionReport parse_injection_report(std::string_view text);

// Re-derives every decision from the stored confusion matrices.
std::vector<Decision> replay_decisions(const InjectionReport& report, const MergePolicy& policy);

}  // namespace isphar
