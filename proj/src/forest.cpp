#include "isphar/forest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "isphar/error.hpp"
#include "isphar/rng.hpp"

namespace isphar {

std::size_t Forest::node_count() const {
  std::size_t n = 0;
  for (const Tree& t : trees) n += t.nodes.size();
  return n;
}

Forest Forest::truncated(std::size_t rounds) const {
  Forest f = *this;
  rounds = std::min(rounds, n_rounds);
  f.n_rounds = rounds;
  f.trees.resize(rounds * n_classes);
  return f;
}

void validate_forest(const Forest& f) {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::StructuralInvariantViolated, what); };
  if (f.n_classes == 0) fail("forest has no classes");
  if (f.mask.empty()) fail("forest has an empty feature mask");
  if (f.trees.size() != f.n_rounds * f.n_classes) fail("tree count differs from rounds x classes");
  if (!std::isfinite(f.shrinkage) || !std::isfinite(f.base_score)) fail("non-finite shrinkage or base score");
  for (std::size_t t = 0; t < f.trees.size(); ++t) {
    const auto& nodes = f.trees[t].nodes;
    if (nodes.empty()) fail("tree " + std::to_string(t) + " has no nodes");
    if (nodes.size() > 0xFFFF) fail("tree " + std::to_string(t) + " exceeds 65535 nodes");
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const TreeNode& n = nodes[i];
      if (n.is_leaf) {
        if (!std::isfinite(n.value)) fail("non-finite leaf value");
        continue;
      }
      if (n.feature >= f.mask.size()) fail("split feature beyond mask width");
      if (!std::isfinite(n.threshold)) fail("non-finite threshold");
      if (n.left <= i || n.right <= i || n.left >= nodes.size() || n.right >= nodes.size())
        fail("tree " + std::to_string(t) + " node " + std::to_string(i) + " has a child that is not forward");
    }
  }
}

void GbdtHyper::validate() const {
  if (max_depth < 1) throw Error(ErrorCode::InvalidArgument, "max_depth must be >= 1");
  if (min_leaf < 1) throw Error(ErrorCode::InvalidArgument, "min_leaf must be >= 1");
  if (!(shrinkage >= 0.0)) throw Error(ErrorCode::InvalidArgument, "shrinkage must be >= 0");
  if (!(subsample > 0.0 && subsample <= 1.0)) throw Error(ErrorCode::InvalidArgument, "subsample must lie in (0, 1]");
}

namespace {

struct SplitChoice {
  double gain = 1e-12;  // minimum useful gain
  std::size_t feature = 0;
  float threshold = 0.0f;
  bool found = false;
};

class TreeBuilder {
public:
  TreeBuilder(const std::vector<double>& x, std::size_t dims, const std::vector<std::vector<std::size_t>>& sorted,
              const GbdtHyper& hyper, double leaf_scale)
      : x_(x), dims_(dims), sorted_(sorted), hyper_(hyper), leaf_scale_(leaf_scale) {}

  Tree build(const std::vector<double>& g, const std::vector<double>& h, const std::vector<char>& in_sample) {
    const std::size_t n = g.size();
    Tree tree;
    tree.nodes.push_back(TreeNode::leaf(0.0f));
    tree.split_gain.push_back(0.0f);

    std::vector<long> slot_of(n, -1);
    std::vector<std::size_t> frontier{0};  // node indices of open nodes
    for (std::size_t i = 0; i < n; ++i)
      if (in_sample[i]) slot_of[i] = 0;

    for (std::size_t depth = 0; depth <= hyper_.max_depth && !frontier.empty(); ++depth) {
      const std::size_t slots = frontier.size();
      std::vector<double> sum_g(slots, 0.0), sum_h(slots, 0.0);
      std::vector<std::size_t> count(slots, 0);
      for (std::size_t i = 0; i < n; ++i) {
        if (slot_of[i] < 0) continue;
        const auto s = static_cast<std::size_t>(slot_of[i]);
        sum_g[s] += g[i];
        sum_h[s] += h[i];
        ++count[s];
      }

      std::vector<SplitChoice> best(slots);
      if (depth < hyper_.max_depth) {
        std::vector<double> run_sum(slots);
        std::vector<std::size_t> run_count(slots);
        std::vector<double> last(slots);
        for (std::size_t f = 0; f < dims_; ++f) {
          std::fill(run_sum.begin(), run_sum.end(), 0.0);
          std::fill(run_count.begin(), run_count.end(), 0);
          for (std::size_t i : sorted_[f]) {
            if (slot_of[i] < 0) continue;
            const auto s = static_cast<std::size_t>(slot_of[i]);
            const double v = x_[i * dims_ + f];
            if (run_count[s] > 0 && v > last[s]) {
              const std::size_t nl = run_count[s], nr = count[s] - nl;
              if (nl >= hyper_.min_leaf && nr >= hyper_.min_leaf) {
                const double sl = run_sum[s], sr = sum_g[s] - sl;
                const double gain = sl * sl / static_cast<double>(nl) + sr * sr / static_cast<double>(nr) -
                                    sum_g[s] * sum_g[s] / static_cast<double>(count[s]);
                if (gain > best[s].gain) {
                  float t = static_cast<float>(0.5 * (last[s] + v));
                  if (!(static_cast<double>(t) > last[s])) t = static_cast<float>(v);
                  best[s] = {gain, f, t, true};
                }
              }
            }
            run_sum[s] += g[i];
            ++run_count[s];
            last[s] = v;
          }
        }
      }

      std::vector<std::size_t> next;
      std::vector<long> remap(slots * 2, -1);  // (slot, side) -> next slot
      for (std::size_t s = 0; s < slots; ++s) {
        const std::size_t node = frontier[s];
        if (!best[s].found || tree.nodes.size() + 2 > 0xFFFF) {
          tree.nodes[node] = TreeNode::leaf(leaf_value(sum_g[s], sum_h[s]));
          continue;
        }
        const auto left = static_cast<std::uint16_t>(tree.nodes.size());
        const auto right = static_cast<std::uint16_t>(left + 1);
        tree.nodes[node] = TreeNode::split(static_cast<std::uint8_t>(best[s].feature), best[s].threshold, left, right);
        tree.split_gain[node] = static_cast<float>(best[s].gain);
        tree.nodes.push_back(TreeNode::leaf(0.0f));
        tree.nodes.push_back(TreeNode::leaf(0.0f));
        tree.split_gain.push_back(0.0f);
        tree.split_gain.push_back(0.0f);
        remap[2 * s] = static_cast<long>(next.size());
        next.push_back(left);
        remap[2 * s + 1] = static_cast<long>(next.size());
        next.push_back(right);
      }
      for (std::size_t i = 0; i < n; ++i) {
        if (slot_of[i] < 0) continue;
        const auto s = static_cast<std::size_t>(slot_of[i]);
        if (!best[s].found || remap[2 * s] < 0) {
          slot_of[i] = -1;
          continue;
        }
        const bool go_left = x_[i * dims_ + best[s].feature] < static_cast<double>(best[s].threshold);
        slot_of[i] = remap[2 * s + (go_left ? 0 : 1)];
      }
      frontier = std::move(next);
    }
    return tree;
  }

private:
  float leaf_value(double sum_g, double sum_h) const {
    if (sum_h <= 0.0) return 0.0f;
    const double v = leaf_scale_ * sum_g / std::max(sum_h, 1e-12);
    return static_cast<float>(std::clamp(v, -10.0, 10.0));
  }

  const std::vector<double>& x_;
  std::size_t dims_;
  const std::vector<std::vector<std::size_t>>& sorted_;
  const GbdtHyper& hyper_;
  double leaf_scale_;
};

}  // namespace

Forest gbdt_train(const LabeledFeatures& train, const LabeledFeatures& /*val*/, const GbdtHyper& hyper,
                  const FeatureMask& mask_in) {
  hyper.validate();
  if (train.distinct_labels() < 2) throw Error(ErrorCode::SingleClass, "training data holds fewer than two classes");
  if (train.dims == 0 || train.dims > 256) throw Error(ErrorCode::DimMismatch, "forest inputs must number 1..256");
  FeatureMask mask = mask_in;
  if (mask.empty()) {
    std::vector<std::size_t> idx(train.dims);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    mask = FeatureMask::from_indices(std::move(idx));
  }
  if (mask.size() != train.dims) throw Error(ErrorCode::DimMismatch, "feature mask size differs from training columns");

  const std::size_t n = train.size(), dims = train.dims, k = train.class_count();
  // Split search sees the same float precision the deployed traversal compares.
  std::vector<double> x(train.x.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(static_cast<float>(train.x[i]));
  std::vector<std::vector<std::size_t>> sorted(dims, std::vector<std::size_t>(n));
  for (std::size_t f = 0; f < dims; ++f) {
    std::iota(sorted[f].begin(), sorted[f].end(), std::size_t{0});
    std::stable_sort(sorted[f].begin(), sorted[f].end(),
                     [&](std::size_t a, std::size_t b) { return x[a * dims + f] < x[b * dims + f]; });
  }

  Forest forest;
  forest.n_classes = k;
  forest.shrinkage = static_cast<float>(hyper.shrinkage);
  forest.base_score = hyper.base_score;
  forest.mask = mask;

  const double leaf_scale = static_cast<double>(k - 1) / static_cast<double>(k);
  TreeBuilder builder(x, dims, sorted, hyper, leaf_scale);
  std::vector<double> score(n * k, static_cast<double>(hyper.base_score));
  std::vector<double> prob(n * k), g(n), h(n);
  std::vector<char> in_sample(n, 1);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(hyper.seed);
  const auto sample_size = static_cast<std::size_t>(std::lround(hyper.subsample * static_cast<double>(n)));

  for (std::size_t r = 0; r < hyper.n_rounds; ++r) {
    for (std::size_t i = 0; i < n; ++i) {
      const double* s = score.data() + i * k;
      const double mx = *std::max_element(s, s + k);
      double norm = 0.0;
      for (std::size_t c = 0; c < k; ++c) norm += std::exp(s[c] - mx);
      for (std::size_t c = 0; c < k; ++c) prob[i * k + c] = std::exp(s[c] - mx) / norm;
    }
    if (sample_size < n) {
      rng.shuffle(std::span<std::size_t>(perm));
      std::fill(in_sample.begin(), in_sample.end(), 0);
      for (std::size_t j = 0; j < std::max<std::size_t>(sample_size, 1); ++j) in_sample[perm[j]] = 1;
    }
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t i = 0; i < n; ++i) {
        const double p = prob[i * k + c];
        g[i] = (train.y[i] == static_cast<int>(c) ? 1.0 : 0.0) - p;
        h[i] = p * (1.0 - p);
      }
      Tree tree = builder.build(g, h, in_sample);
      std::vector<float> row(dims);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t d = 0; d < dims; ++d) row[d] = static_cast<float>(x[i * dims + d]);
        const float step = forest.shrinkage * tree_output(tree, row);
        score[i * k + c] += static_cast<double>(step);
      }
      forest.trees.push_back(std::move(tree));
    }
    ++forest.n_rounds;
  }
  return forest;
}

float tree_output(const Tree& t, std::span<const float> fv) {
  std::size_t node = 0;
  for (std::size_t hops = 0; hops < t.nodes.size(); ++hops) {
    const TreeNode& n = t.nodes[node];
    if (n.is_leaf) return n.value;
    node = fv[n.feature] < n.threshold ? n.left : n.right;
  }
  throw Error(ErrorCode::StructuralInvariantViolated, "tree traversal did not reach a leaf");
}

void gbdt_predict_into(const Forest& f, std::span<const float> fv, std::span<float> scores) {
  if (fv.size() != f.n_inputs())
    throw Error(ErrorCode::DimMismatch, "input has " + std::to_string(fv.size()) + " values, forest expects " +
                                            std::to_string(f.n_inputs()));
  if (scores.size() < f.n_classes) throw Error(ErrorCode::DimMismatch, "score buffer too small");
  for (std::size_t c = 0; c < f.n_classes; ++c) scores[c] = f.base_score;
  for (std::size_t r = 0; r < f.n_rounds; ++r)
    for (std::size_t c = 0; c < f.n_classes; ++c) scores[c] += f.shrinkage * tree_output(f.tree(r, c), fv);
}

std::vector<float> gbdt_predict(const Forest& f, std::span<const float> fv) {
  std::vector<float> scores(f.n_classes);
  gbdt_predict_into(f, fv, scores);
  return scores;
}

std::vector<double> feature_importance(const Forest& f) {
  std::vector<double> imp(kNumFeatures, 0.0);
  const auto idx = f.mask.indices();
  for (const Tree& t : f.trees) {
    for (std::size_t j = 0; j < t.nodes.size(); ++j) {
      const TreeNode& n = t.nodes[j];
      if (n.is_leaf || n.feature >= idx.size()) continue;
      const double w = t.split_gain.size() == t.nodes.size() ? static_cast<double>(t.split_gain[j]) : 1.0;
      imp[idx[n.feature]] += w;
    }
  }
  const double total = std::accumulate(imp.begin(), imp.end(), 0.0);
  if (total > 0.0)
    for (double& v : imp) v /= total;
  return imp;
}

}  // namespace isphar
