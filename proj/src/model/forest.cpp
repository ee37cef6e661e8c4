#include "clinloop/model/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "clinloop/errors.hpp"
#include "clinloop/rng.hpp"

namespace clinloop::model {

double Tree::predict(const std::map<int, int>& counts) const {
  int node = 0;
  while (nodes[node].feature >= 0) {
    const auto it = counts.find(nodes[node].feature);
    const int c = it == counts.end() ? 0 : it->second;
    node = c > nodes[node].threshold ? nodes[node].right : nodes[node].left;
  }
  return nodes[node].leaf_value;
}

double Forest::predict(const std::map<int, int>& counts) const {
  if (trees_.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& t : trees_) sum += t.predict(counts);
  return sum / static_cast<double>(trees_.size());
}

double gini_decrease(int parent_pos, int parent_n, int left_pos, int left_n) {
  auto gini = [](int pos, int n) {
    if (n == 0) return 0.0;
    const double p = static_cast<double>(pos) / n;
    return 1.0 - p * p - (1.0 - p) * (1.0 - p);
  };
  const int right_n = parent_n - left_n;
  const int right_pos = parent_pos - left_pos;
  const double child =
      (left_n * gini(left_pos, left_n) + right_n * gini(right_pos, right_n)) /
      parent_n;
  return gini(parent_pos, parent_n) - child;
}

namespace {

// Counts are clamped into a fixed bucket range for threshold search; a
// higher raw count than this never changes routing in realistic windows.
constexpr int kMaxBucket = 63;

struct TreeBuilder {
  const std::vector<std::vector<std::uint8_t>>& dense;  // row-major counts
  const std::vector<bool>& labels;
  const ForestHyperparams& hp;
  int n_features;
  int mtry;
  Rng rng;
  Tree tree;
  std::vector<int> feature_pool;

  int build(std::vector<int>& sample, int depth) {
    const int n = static_cast<int>(sample.size());
    int pos = 0;
    for (int i : sample) pos += labels[i] ? 1 : 0;

    const bool pure = pos == 0 || pos == n;
    if (depth >= hp.max_depth || n < 2 * hp.min_leaf || pure) {
      return make_leaf(pos, n);
    }

    // mtry distinct candidate features via partial Fisher-Yates.
    for (int j = 0; j < mtry; ++j) {
      const int k = j + static_cast<int>(rng.index(n_features - j));
      std::swap(feature_pool[j], feature_pool[k]);
    }

    double best_gain = 0.0;
    int best_feature = -1;
    int best_threshold = 0;
    int bucket_n[kMaxBucket + 1];
    int bucket_pos[kMaxBucket + 1];

    for (int j = 0; j < mtry; ++j) {
      const int f = feature_pool[j];
      std::fill(bucket_n, bucket_n + kMaxBucket + 1, 0);
      std::fill(bucket_pos, bucket_pos + kMaxBucket + 1, 0);
      int max_c = 0;
      for (int i : sample) {
        const int c = dense[i][f];
        ++bucket_n[c];
        bucket_pos[c] += labels[i] ? 1 : 0;
        if (c > max_c) max_c = c;
      }
      if (bucket_n[max_c] == n) continue;  // constant feature in this node

      int left_n = 0;
      int left_pos = 0;
      for (int t = 0; t < max_c; ++t) {
        left_n += bucket_n[t];
        left_pos += bucket_pos[t];
        if (left_n < hp.min_leaf || n - left_n < hp.min_leaf) continue;
        const double gain = gini_decrease(pos, n, left_pos, left_n);
        if (gain > best_gain + 1e-12) {
          best_gain = gain;
          best_feature = f;
          best_threshold = t;
        }
      }
    }

    if (best_feature < 0) return make_leaf(pos, n);

    std::vector<int> left_sample;
    std::vector<int> right_sample;
    for (int i : sample) {
      (dense[i][best_feature] > best_threshold ? right_sample : left_sample)
          .push_back(i);
    }
    sample.clear();
    sample.shrink_to_fit();

    const int node = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({best_feature, best_threshold, -1, -1, 0.0});
    const int left = build(left_sample, depth + 1);
    const int right = build(right_sample, depth + 1);
    tree.nodes[node].left = left;
    tree.nodes[node].right = right;
    return node;
  }

  int make_leaf(int pos, int n) {
    const int node = static_cast<int>(tree.nodes.size());
    TreeNode leaf;
    leaf.leaf_value = n == 0 ? 0.0 : static_cast<double>(pos) / n;
    tree.nodes.push_back(leaf);
    return node;
  }
};

}  // namespace

Forest train_forest(const std::vector<std::map<int, int>>& rows,
                    const std::vector<bool>& labels, int n_features,
                    const ForestHyperparams& hp, std::uint64_t seed) {
  const int n = static_cast<int>(rows.size());
  if (n != static_cast<int>(labels.size()) || n < 2) {
    throw ValidationError("need at least 2 labeled rows");
  }
  const int total_pos = static_cast<int>(
      std::count(labels.begin(), labels.end(), true));
  if (total_pos == 0 || total_pos == n) {
    throw ValidationError("degenerate labels: single class");
  }
  if (n_features < 1) throw ValidationError("n_features must be >= 1");

  std::vector<std::vector<std::uint8_t>> dense(
      n, std::vector<std::uint8_t>(n_features, 0));
  for (int i = 0; i < n; ++i) {
    for (const auto& [idx, c] : rows[i]) {
      if (idx < 0 || idx >= n_features) {
        throw ValidationError("feature index out of range");
      }
      dense[i][idx] = static_cast<std::uint8_t>(std::min(c, kMaxBucket));
    }
  }

  const int mtry = hp.mtry > 0
                       ? std::min(hp.mtry, n_features)
                       : std::max(1, static_cast<int>(std::floor(
                                      std::sqrt(static_cast<double>(n_features)))));

  std::vector<Tree> trees;
  trees.reserve(hp.n_trees);
  for (int t = 0; t < hp.n_trees; ++t) {
    TreeBuilder builder{dense,
                        labels,
                        hp,
                        n_features,
                        mtry,
                        Rng::keyed(seed, "tree", t),
                        {},
                        {}};
    builder.feature_pool.resize(n_features);
    std::iota(builder.feature_pool.begin(), builder.feature_pool.end(), 0);

    std::vector<int> bootstrap(n);
    for (int i = 0; i < n; ++i) {
      bootstrap[i] = static_cast<int>(builder.rng.index(n));
    }
    builder.build(bootstrap, 0);
    trees.push_back(std::move(builder.tree));
  }
  return Forest(std::move(trees), n_features, seed);
}

nlohmann::json Forest::to_json() const {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : trees_) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& nd : t.nodes) {
      nodes.push_back({nd.feature, nd.threshold, nd.left, nd.right,
                       nd.leaf_value});
    }
    trees.push_back(std::move(nodes));
  }
  return {{"n_features", n_features_}, {"seed", seed_}, {"trees", trees}};
}

Forest Forest::from_json(const nlohmann::json& j) {
  std::vector<Tree> trees;
  for (const auto& tj : j.at("trees")) {
    Tree t;
    for (const auto& nj : tj) {
      TreeNode nd;
      nd.feature = nj.at(0).get<int>();
      nd.threshold = nj.at(1).get<int>();
      nd.left = nj.at(2).get<int>();
      nd.right = nj.at(3).get<int>();
      nd.leaf_value = nj.at(4).get<double>();
      t.nodes.push_back(nd);
    }
    if (t.nodes.empty()) throw IntegrityError("forest tree with no nodes");
    trees.push_back(std::move(t));
  }
  return Forest(std::move(trees), j.at("n_features").get<int>(),
                j.at("seed").get<std::uint64_t>());
}

}  // namespace clinloop::model
