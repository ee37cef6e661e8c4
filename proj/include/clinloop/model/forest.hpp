#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "json.hpp"

namespace clinloop::model {

// Binary decision forest over integer count features. A sample routes right
// at a node iff count(feature) > threshold; an absent feature counts 0.
struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  int threshold = 0;
  int left = -1;
  int right = -1;
  double leaf_value = 0.0;  // positive fraction at the leaf
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict(const std::map<int, int>& counts) const;
};

struct ForestHyperparams {
  int n_trees = 100;
  int max_depth = 12;
  int min_leaf = 5;
  int mtry = 0;  // 0 => floor(sqrt(n_features))

  bool operator==(const ForestHyperparams&) const = default;
};

class Forest {
 public:
  Forest() = default;
  Forest(std::vector<Tree> trees, int n_features, std::uint64_t seed)
      : trees_(std::move(trees)), n_features_(n_features), seed_(seed) {}

  // Mean of per-tree leaf fractions; always in [0, 1].
  double predict(const std::map<int, int>& counts) const;

  const std::vector<Tree>& trees() const { return trees_; }
  int n_features() const { return n_features_; }
  std::uint64_t seed() const { return seed_; }

  nlohmann::json to_json() const;
  static Forest from_json(const nlohmann::json& j);

 private:
  std::vector<Tree> trees_;
  int n_features_ = 0;
  std::uint64_t seed_ = 0;
};

// Fits n_trees CART trees on bootstrap resamples: at each node the best
// Gini-impurity-decrease split over mtry sampled candidate features and
// integer count thresholds, stopping at max_depth, min_leaf or purity.
// Fully deterministic given the seed (per-tree streams derive from
// (seed, tree_index)).
Forest train_forest(const std::vector<std::map<int, int>>& rows,
                    const std::vector<bool>& labels, int n_features,
                    const ForestHyperparams& hp, std::uint64_t seed);

// Weighted Gini impurity decrease for a (parent -> left/right) split, the
// quantity the trainer maximizes. Exposed for direct verification.
double gini_decrease(int parent_pos, int parent_n, int left_pos, int left_n);

}  // namespace clinloop::model
