#include "elearn/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "elearn/rng.hpp"
#include "elearn/threading.hpp"

namespace elearn {
namespace {

struct Split {
  int feature = -1;
  double threshold = 0;
  double gain = 0;
};

// Best variance-reduction split of the rows in `idx` among `features`.
// Returns feature -1 when no split leaves min_leaf rows on both sides.
Split best_split(const Eigen::MatrixXd& z, const Eigen::VectorXd& t,
                 const std::vector<int>& idx, const std::vector<int>& features,
                 int min_leaf, std::vector<std::pair<double, double>>& scratch) {
  const int m = static_cast<int>(idx.size());
  Split best;
  for (int f : features) {
    scratch.clear();
    for (int i : idx) scratch.emplace_back(z(i, f), t[i]);
    std::sort(scratch.begin(), scratch.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    double right_sum = 0;
    for (const auto& s : scratch) right_sum += s.second;
    double left_sum = 0;
    const double total = right_sum;
    for (int cut = 1; cut <= m - min_leaf; ++cut) {
      left_sum += scratch[cut - 1].second;
      if (cut < min_leaf) continue;
      if (scratch[cut].first <= scratch[cut - 1].first) continue;  // tied values
      // SSE reduction = sum_left^2/n_left + sum_right^2/n_right - total^2/n
      const double rs = total - left_sum;
      const double gain = left_sum * left_sum / cut + rs * rs / (m - cut) -
                          total * total / m;
      if (gain > best.gain) {
        best.feature = f;
        best.threshold = 0.5 * (scratch[cut - 1].first + scratch[cut].first);
        best.gain = gain;
      }
    }
  }
  return best;
}

}  // namespace

RegressionForest fit_forest(const Eigen::MatrixXd& z, const Eigen::VectorXd& target,
                            const ForestParams& params) {
  const int n = static_cast<int>(z.rows());
  const int d = static_cast<int>(z.cols());
  if (target.size() != n)
    throw std::invalid_argument("fit_forest: rows(z) != size(target)");
  if (n < 1 || d < 1) throw std::invalid_argument("fit_forest: empty input");
  if (params.num_trees < 1 || params.min_leaf < 1)
    throw std::invalid_argument("fit_forest: num_trees and min_leaf must be positive");
  if (!(params.subsample > 0.0 && params.subsample <= 1.0))
    throw std::invalid_argument("fit_forest: subsample must be in (0, 1]");
  const int mtry = params.mtry > 0
                       ? std::min(params.mtry, d)
                       : static_cast<int>(std::ceil(std::sqrt(static_cast<double>(d))));
  const int draw = std::max(1, static_cast<int>(params.subsample * n));

  RegressionForest forest;
  forest.dim_ = d;
  forest.trees_.resize(params.num_trees);

  parallel_for(0, params.num_trees, params.threads, [&](int tree_idx) {
    auto rng = make_rng(derive_seed(params.seed, static_cast<std::uint64_t>(tree_idx)));
    // subsample without replacement (partial Fisher-Yates)
    std::vector<int> pool(n);
    std::iota(pool.begin(), pool.end(), 0);
    for (int i = 0; i < draw; ++i) {
      std::uniform_int_distribution<int> pick(i, n - 1);
      std::swap(pool[i], pool[pick(rng)]);
    }
    std::vector<int> all_features(d);
    std::iota(all_features.begin(), all_features.end(), 0);
    std::vector<std::pair<double, double>> scratch;

    auto& nodes = forest.trees_[tree_idx];
    struct Pending {
      std::vector<int> idx;
      int node;
      int depth;
    };
    std::vector<Pending> stack;
    nodes.emplace_back();
    stack.push_back({std::vector<int>(pool.begin(), pool.begin() + draw), 0, 0});
    while (!stack.empty()) {
      Pending cur = std::move(stack.back());
      stack.pop_back();
      auto& node = nodes[cur.node];
      double mean = 0;
      for (int i : cur.idx) mean += target[i];
      mean /= static_cast<double>(cur.idx.size());
      node.value = mean;
      const bool depth_ok = params.max_depth < 0 || cur.depth < params.max_depth;
      if (!depth_ok || static_cast<int>(cur.idx.size()) < 2 * params.min_leaf) continue;

      // feature subsample at this node
      for (int i = 0; i < mtry; ++i) {
        std::uniform_int_distribution<int> pick(i, d - 1);
        std::swap(all_features[i], all_features[pick(rng)]);
      }
      std::vector<int> features(all_features.begin(), all_features.begin() + mtry);
      const Split split =
          best_split(z, target, cur.idx, features, params.min_leaf, scratch);
      if (split.feature < 0 || split.gain <= 0) continue;

      std::vector<int> left, right;
      for (int i : cur.idx)
        (z(i, split.feature) <= split.threshold ? left : right).push_back(i);
      const int l = static_cast<int>(nodes.size());
      nodes.emplace_back();
      nodes.emplace_back();
      nodes[cur.node].feature = split.feature;
      nodes[cur.node].threshold = split.threshold;
      nodes[cur.node].left = l;
      nodes[cur.node].right = l + 1;
      stack.push_back({std::move(right), l + 1, cur.depth + 1});
      stack.push_back({std::move(left), l, cur.depth + 1});
    }
  });
  return forest;
}

double RegressionForest::predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& z) const {
  if (z.size() != dim_)
    throw std::invalid_argument("forest predict: expected " + std::to_string(dim_) +
                                " features, got " + std::to_string(z.size()));
  double sum = 0;
  for (const auto& nodes : trees_) {
    int at = 0;
    while (nodes[at].feature >= 0)
      at = z[nodes[at].feature] <= nodes[at].threshold ? nodes[at].left : nodes[at].right;
    sum += nodes[at].value;
  }
  return sum / static_cast<double>(trees_.size());
}

Eigen::VectorXd RegressionForest::predict(const Eigen::Ref<const Eigen::MatrixXd>& z) const {
  Eigen::VectorXd out(z.rows());
  for (int i = 0; i < z.rows(); ++i) out[i] = predict_row(z.row(i));
  return out;
}

}  // namespace elearn
