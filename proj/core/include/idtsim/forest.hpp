#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "idtsim/types.hpp"

namespace idtsim {

struct Dataset {
    std::vector<std::vector<double>> features;  // rows
    std::vector<int> labels;                    // 0..n_classes-1
    int n_classes = 0;
};

struct ForestParams {
    unsigned n_trees = 100;
    unsigned max_depth = 16;
    unsigned min_samples_split = 2;
    unsigned feature_subset = 0;  // 0 = floor(sqrt(n_features))
    bool bootstrap = true;
};

struct TreeNode {
    bool leaf = false;
    unsigned feature = 0;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    std::vector<double> dist;  // leaf class distribution, normalized
};

struct DecisionTree {
    std::vector<TreeNode> nodes;  // node 0 is the root
    const std::vector<double>& predict(const std::vector<double>& x) const;
};

/// Bagged Gini-split decision trees. Per-tree RNG streams derive from the
/// master seed, so training is deterministic for a given (dataset, params,
/// seed) regardless of evaluation order.
struct RandomForestModel {
    ForestParams params;
    int n_classes = 0;
    unsigned n_features = 0;
    std::vector<DecisionTree> trees;

    /// Averaged leaf distributions; ties resolve to the lowest label.
    std::pair<int, std::vector<double>> predict(const std::vector<double>& x) const;

    void save(const std::string& path) const;
    static RandomForestModel load(const std::string& path);
};

RandomForestModel train_forest(const Dataset& train, const ForestParams& params,
                               std::uint64_t seed);

}  // namespace idtsim
