#include "idtsim/forest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace idtsim {

namespace {

std::uint64_t tree_seed(std::uint64_t master, unsigned tree) {
    std::uint64_t x = master ^ (0x9e3779b97f4a7c15ULL * (tree + 1));
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

double gini(const std::vector<std::size_t>& counts, std::size_t total) {
    if (total == 0) return 0.0;
    double g = 1.0;
    for (std::size_t c : counts) {
        const double p = static_cast<double>(c) / static_cast<double>(total);
        g -= p * p;
    }
    return g;
}

struct Builder {
    const Dataset& data;
    const ForestParams& params;
    unsigned subset_size;
    std::mt19937_64 rng;
    std::vector<TreeNode> nodes;

    int grow(std::vector<std::size_t>& idx, unsigned depth) {
        std::vector<std::size_t> counts(data.n_classes, 0);
        for (std::size_t i : idx) ++counts[data.labels[i]];
        const std::size_t total = idx.size();

        const bool pure =
            std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }) <= 1;
        if (pure || depth >= params.max_depth || total < params.min_samples_split) {
            return make_leaf(counts, total);
        }

        // Candidate features: a fresh random subset per node.
        std::vector<unsigned> features(data.features[0].size());
        std::iota(features.begin(), features.end(), 0u);
        for (unsigned k = 0; k < subset_size; ++k) {
            std::uniform_int_distribution<std::size_t> pick(k, features.size() - 1);
            std::swap(features[k], features[pick(rng)]);
        }

        const double parent = gini(counts, total);
        double best_gain = 0.0;
        unsigned best_feature = 0;
        double best_threshold = 0.0;

        std::vector<std::pair<double, int>> column(total);
        for (unsigned k = 0; k < subset_size; ++k) {
            const unsigned f = features[k];
            for (std::size_t r = 0; r < total; ++r) {
                column[r] = {data.features[idx[r]][f], data.labels[idx[r]]};
            }
            std::sort(column.begin(), column.end());

            std::vector<std::size_t> left(data.n_classes, 0);
            std::vector<std::size_t> right = counts;
            for (std::size_t r = 0; r + 1 < total; ++r) {
                ++left[column[r].second];
                --right[column[r].second];
                if (column[r].first == column[r + 1].first) continue;
                const std::size_t nl = r + 1;
                const std::size_t nr = total - nl;
                const double child =
                    (static_cast<double>(nl) * gini(left, nl) +
                     static_cast<double>(nr) * gini(right, nr)) /
                    static_cast<double>(total);
                const double gain = parent - child;
                if (gain > best_gain + 1e-12) {
                    best_gain = gain;
                    best_feature = f;
                    best_threshold = 0.5 * (column[r].first + column[r + 1].first);
                }
            }
        }

        if (best_gain <= 0.0) return make_leaf(counts, total);

        std::vector<std::size_t> left_idx;
        std::vector<std::size_t> right_idx;
        for (std::size_t i : idx) {
            if (data.features[i][best_feature] <= best_threshold)
                left_idx.push_back(i);
            else
                right_idx.push_back(i);
        }
        if (left_idx.empty() || right_idx.empty()) return make_leaf(counts, total);

        const int node_id = static_cast<int>(nodes.size());
        nodes.emplace_back();
        nodes[node_id].feature = best_feature;
        nodes[node_id].threshold = best_threshold;
        const int l = grow(left_idx, depth + 1);
        const int r = grow(right_idx, depth + 1);
        nodes[node_id].left = l;
        nodes[node_id].right = r;
        return node_id;
    }

    int make_leaf(const std::vector<std::size_t>& counts, std::size_t total) {
        const int node_id = static_cast<int>(nodes.size());
        nodes.emplace_back();
        nodes[node_id].leaf = true;
        nodes[node_id].dist.resize(data.n_classes, 0.0);
        if (total > 0) {
            for (int c = 0; c < data.n_classes; ++c) {
                nodes[node_id].dist[c] =
                    static_cast<double>(counts[c]) / static_cast<double>(total);
            }
        }
        return node_id;
    }
};

}  // namespace

const std::vector<double>& DecisionTree::predict(const std::vector<double>& x) const {
    int node = 0;
    while (!nodes[node].leaf) {
        node = x[nodes[node].feature] <= nodes[node].threshold ? nodes[node].left
                                                               : nodes[node].right;
    }
    return nodes[node].dist;
}

RandomForestModel train_forest(const Dataset& train, const ForestParams& params,
                               std::uint64_t seed) {
    if (train.features.empty()) throw DegenerateDataset("empty training set");
    if (train.features.size() != train.labels.size())
        throw LengthMismatch("features/labels size mismatch");
    std::vector<bool> seen(train.n_classes, false);
    int distinct = 0;
    for (int y : train.labels) {
        if (y < 0 || y >= train.n_classes) throw DegenerateDataset("label out of range");
        if (!seen[y]) {
            seen[y] = true;
            ++distinct;
        }
    }
    if (distinct < 2)
        throw DegenerateDataset("training set has fewer than two classes");

    RandomForestModel model;
    model.params = params;
    model.n_classes = train.n_classes;
    model.n_features = static_cast<unsigned>(train.features[0].size());

    const unsigned subset =
        params.feature_subset > 0
            ? params.feature_subset
            : static_cast<unsigned>(std::floor(std::sqrt(static_cast<double>(model.n_features))));

    const std::size_t n = train.features.size();
    for (unsigned t = 0; t < params.n_trees; ++t) {
        Builder b{train, params, std::min(subset, model.n_features),
                  std::mt19937_64(tree_seed(seed, t)), {}};
        std::vector<std::size_t> idx(n);
        if (params.bootstrap) {
            std::uniform_int_distribution<std::size_t> pick(0, n - 1);
            for (std::size_t i = 0; i < n; ++i) idx[i] = pick(b.rng);
        } else {
            std::iota(idx.begin(), idx.end(), std::size_t{0});
        }
        b.nodes.reserve(2 * n);
        b.grow(idx, 0);
        DecisionTree tree;
        tree.nodes = std::move(b.nodes);
        model.trees.push_back(std::move(tree));
    }
    return model;
}

std::pair<int, std::vector<double>> RandomForestModel::predict(
    const std::vector<double>& x) const {
    std::vector<double> mean(n_classes, 0.0);
    for (const auto& tree : trees) {
        const auto& d = tree.predict(x);
        for (int c = 0; c < n_classes; ++c) mean[c] += d[c];
    }
    for (int c = 0; c < n_classes; ++c) mean[c] /= static_cast<double>(trees.size());
    int best = 0;
    for (int c = 1; c < n_classes; ++c) {
        if (mean[c] > mean[best]) best = c;  // strict: ties keep the lower label
    }
    return {best, std::move(mean)};
}

void RandomForestModel::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw SimError("cannot write model file: " + path);
    f.precision(17);
    f << "RFMODEL v1\n";
    f << "trees " << trees.size() << " classes " << n_classes << " features "
      << n_features << '\n';
    for (const auto& tree : trees) {
        f << "tree " << tree.nodes.size() << '\n';
        for (const auto& n : tree.nodes) {
            if (n.leaf) {
                f << "leaf";
                for (double d : n.dist) f << ' ' << d;
                f << '\n';
            } else {
                f << "split " << n.feature << ' ' << n.threshold << ' ' << n.left << ' '
                  << n.right << '\n';
            }
        }
    }
}

RandomForestModel RandomForestModel::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw SimError("cannot open model file: " + path);
    std::string line;
    if (!std::getline(f, line) || line != "RFMODEL v1")
        throw SimError("bad model header in " + path);
    RandomForestModel model;
    std::size_t n_trees = 0;
    {
        std::string tok;
        std::getline(f, line);
        std::istringstream in(line);
        in >> tok >> n_trees >> tok >> model.n_classes >> tok >> model.n_features;
        if (!in) throw SimError("bad model metadata in " + path);
    }
    for (std::size_t t = 0; t < n_trees; ++t) {
        std::getline(f, line);
        std::istringstream head(line);
        std::string tok;
        std::size_t n_nodes = 0;
        head >> tok >> n_nodes;
        if (tok != "tree") throw SimError("bad tree record in " + path);
        DecisionTree tree;
        tree.nodes.resize(n_nodes);
        for (std::size_t i = 0; i < n_nodes; ++i) {
            std::getline(f, line);
            std::istringstream in(line);
            in >> tok;
            if (tok == "leaf") {
                tree.nodes[i].leaf = true;
                double d;
                while (in >> d) tree.nodes[i].dist.push_back(d);
            } else if (tok == "split") {
                in >> tree.nodes[i].feature >> tree.nodes[i].threshold >>
                    tree.nodes[i].left >> tree.nodes[i].right;
            } else {
                throw SimError("bad node record in " + path);
            }
        }
        model.trees.push_back(std::move(tree));
    }
    return model;
}

}  // namespace idtsim
