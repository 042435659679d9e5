#pragma once

#include <algorithm>
#include <numeric>

#include "isphar/models.hpp"
#include "isphar/rng.hpp"

namespace isphar::testing {

inline FeatureMask random_mask(Rng& rng, std::size_t size) {
  std::vector<std::size_t> all(kNumFeatures);
  std::iota(all.begin(), all.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(all));
  all.resize(size);
  return FeatureMask::from_indices(all);
}

inline MlpModel random_mlp(Rng& rng) {
  std::vector<std::size_t> dims{1 + rng.below(kNumFeatures)};
  const std::size_t hidden = rng.below(3);
  for (std::size_t h = 0; h < hidden; ++h) dims.push_back(1 + rng.below(40));
  dims.push_back(2 + rng.below(29));
  MlpModel m = mlp_init(dims, rng.next_u64(), random_mask(rng, dims.front()));
  for (auto& l : m.layers) {
    for (float& w : l.weights) w = static_cast<float>(rng.normal());
    for (float& b : l.biases) b = static_cast<float>(rng.normal(0.0, 0.5));
  }
  m.ma_width = 1 + 2 * rng.below(4);
  return m;
}

// Preorder construction keeps every child after its parent.
inline void grow(Tree& t, Rng& rng, std::size_t inputs, std::size_t depth) {
  const std::size_t self = t.nodes.size();
  if (depth == 0 || rng.uniform() < 0.3) {
    t.nodes.push_back(TreeNode::leaf(static_cast<float>(rng.normal())));
    t.split_gain.push_back(0.0f);
    return;
  }
  t.nodes.push_back(TreeNode::split(static_cast<std::uint8_t>(rng.below(inputs)), static_cast<float>(rng.normal()), 0, 0));
  t.split_gain.push_back(static_cast<float>(rng.uniform()));
  t.nodes[self].left = static_cast<std::uint16_t>(t.nodes.size());
  grow(t, rng, inputs, depth - 1);
  t.nodes[self].right = static_cast<std::uint16_t>(t.nodes.size());
  grow(t, rng, inputs, depth - 1);
}

inline Forest random_forest(Rng& rng) {
  Forest f;
  f.mask = random_mask(rng, 1 + rng.below(kNumFeatures));
  f.n_classes = 1 + rng.below(8);
  f.n_rounds = 1 + rng.below(5);
  f.shrinkage = static_cast<float>(rng.uniform(0.01, 1.0));
  f.base_score = static_cast<float>(rng.normal());
  f.ma_width = 1 + 2 * rng.below(4);
  for (std::size_t k = 0; k < f.n_rounds * f.n_classes; ++k) {
    Tree t;
    grow(t, rng, f.mask.size(), 1 + rng.below(6));
    f.trees.push_back(std::move(t));
  }
  return f;
}

}  // namespace isphar::testing
