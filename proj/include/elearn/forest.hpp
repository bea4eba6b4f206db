#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace elearn {

struct ForestParams {
  int num_trees = 200;
  int min_leaf = 5;
  int mtry = 0;            // 0: ceil(sqrt(#features))
  double subsample = 0.5;  // fraction drawn without replacement per tree
  int max_depth = -1;      // -1: unlimited
  std::uint64_t seed = 0;
  int threads = 1;
};

// Plain CART regression forest: variance-reduction splits, per-tree
// subsampling without replacement, feature subsampling at every node.
// Predictions average leaf means, so they never leave the range of the
// training targets.  Same seed, same forest.
class RegressionForest {
 public:
  double predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& z) const;
  Eigen::VectorXd predict(const Eigen::Ref<const Eigen::MatrixXd>& z) const;
  int dimension() const { return dim_; }
  int num_trees() const { return static_cast<int>(trees_.size()); }

 private:
  struct Node {
    int feature = -1;  // -1: leaf
    double threshold = 0;
    int left = -1;
    int right = -1;
    double value = 0;
  };
  std::vector<std::vector<Node>> trees_;
  int dim_ = 0;

  friend RegressionForest fit_forest(const Eigen::MatrixXd&, const Eigen::VectorXd&,
                                     const ForestParams&);
};

RegressionForest fit_forest(const Eigen::MatrixXd& z, const Eigen::VectorXd& target,
                            const ForestParams& params = {});

}  // namespace elearn
