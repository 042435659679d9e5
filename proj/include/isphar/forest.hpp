#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "isphar/features.hpp"
#include "isphar/table.hpp"

namespace isphar {

struct TreeNode {
  bool is_leaf = true;
  std::uint8_t feature = 0;  // position in the masked feature vector
  float threshold = 0.0f;    // go left when x[feature] < threshold
  std::uint16_t left = 0, right = 0;
  float value = 0.0f;        // leaf output

  static TreeNode leaf(float v) { return TreeNode{true, 0, 0.0f, 0, 0, v}; }
  static TreeNode split(std::uint8_t f, float t, std::uint16_t l, std::uint16_t r) {
    return TreeNode{false, f, t, l, r, 0.0f};
  }
  bool operator==(const TreeNode&) const = default;
};

// Nodes are stored so that children always follow their parent; node 0 is the root.
struct Tree {
  std::vector<TreeNode> nodes;
  std::vector<float> split_gain;  // training statistic per node (0 for leaves); not serialized

  bool operator==(const Tree& o) const { return nodes == o.nodes; }
};

// Multiclass boosted forest. trees[r * n_classes + c] is the class-c tree of
// round r; score_c = base + shrinkage * (sum of class-c leaf outputs).
struct Forest {
  std::size_t n_classes = 0;
  std::size_t n_rounds = 0;
  float shrinkage = 0.1f;
  float base_score = 0.0f;
  std::vector<Tree> trees;
  FeatureMask mask;
  std::uint16_t manifest_version = kFeatureManifestVersion;
  std::size_t ma_width = kDefaultMaWidth;

  std::size_t n_inputs() const { return mask.size(); }
  const Tree& tree(std::size_t round, std::size_t cls) const { return trees[round * n_classes + cls]; }
  std::size_t node_count() const;
  // Copy keeping only the first `rounds` boosting rounds.
  Forest truncated(std::size_t rounds) const;

  bool operator==(const Forest&) const = default;
};

void validate_forest(const Forest& f);

struct GbdtHyper {
  std::size_t n_rounds = 10;
  std::size_t max_depth = 3;
  std::size_t min_leaf = 5;
  double shrinkage = 0.5;
  double subsample = 1.0;  // row fraction drawn per round
  float base_score = 0.0f;
  std::uint64_t seed = 0;

  void validate() const;
};

// `train` holds masked rows (one column per mask entry); `val` is accepted for
// interface symmetry with the MLP trainer and may be empty.
Forest gbdt_train(const LabeledFeatures& train, const LabeledFeatures& val, const GbdtHyper& hyper,
                  const FeatureMask& mask);

// Iterative traversal into a caller-owned score buffer (n_classes entries).
void gbdt_predict_into(const Forest& f, std::span<const float> fv, std::span<float> scores);
std::vector<float> gbdt_predict(const Forest& f, std::span<const float> fv);

float tree_output(const Tree& t, std::span<const float> fv);

// Gain-weighted importance over the 78 canonical features, normalized to sum 1.
std::vector<double> feature_importance(const Forest& f);

}  // namespace isphar
