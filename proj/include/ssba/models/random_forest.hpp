#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "ssba/models/classifier.hpp"

namespace ssba {

/// CART tree over axis-aligned thresholds. A split sends x[feature] <= threshold to the left.
struct DecisionTree {
    struct Node {
        int feature = -1;  // -1 marks a leaf
        double threshold = 0.0;
        std::uint32_t left = 0;
        std::uint32_t right = 0;
        Label label = 1;

        friend bool operator==(const Node&, const Node&) = default;
    };

    std::vector<Node> nodes;

    [[nodiscard]] Label predict(std::span<const double> x) const {
        std::size_t i = 0;
        while (nodes[i].feature >= 0)
            i = x[static_cast<std::size_t>(nodes[i].feature)] <= nodes[i].threshold ? nodes[i].left : nodes[i].right;
        return nodes[i].label;
    }

    friend bool operator==(const DecisionTree&, const DecisionTree&) = default;
};

/// Majority vote over trees; a tied vote goes to label 1.
class RandomForest final : public Classifier {
public:
    RandomForest(std::size_t width, std::vector<DecisionTree> trees, std::map<std::string, std::string> hyper = {})
        : width_(width), trees_(std::move(trees)), hyper_(std::move(hyper)) {
        if (trees_.empty()) throw argument_error("RandomForest: at least one tree is required");
    }

    [[nodiscard]] std::string_view family() const override { return "random_forest"; }
    [[nodiscard]] std::size_t width() const override { return width_; }
    [[nodiscard]] const std::vector<DecisionTree>& trees() const noexcept { return trees_; }

    [[nodiscard]] Label predict(std::span<const double> x) const override {
        std::size_t ones = 0;
        for (const auto& t : trees_) ones += t.predict(x) == 1;
        return 2 * ones >= trees_.size() ? 1 : 0;
    }

    void write_parameters(std::ostream& out) const override {
        out << "trees " << trees_.size() << '\n';
        for (const auto& t : trees_) {
            out << "nodes " << t.nodes.size() << '\n';
            for (const auto& n : t.nodes) {
                out << n.feature << ' ';
                detail::put(out, n.threshold);
                out << ' ' << n.left << ' ' << n.right << ' ' << n.label << '\n';
            }
        }
    }

    static std::shared_ptr<RandomForest> read(std::size_t width, detail::TokenReader& in) {
        in.expect("trees");
        std::vector<DecisionTree> trees(in.count());
        for (auto& t : trees) {
            in.expect("nodes");
            t.nodes.resize(in.count());
            for (auto& n : t.nodes) {
                n.feature = static_cast<int>(in.integer());
                n.threshold = in.real();
                n.left = static_cast<std::uint32_t>(in.count());
                n.right = static_cast<std::uint32_t>(in.count());
                n.label = static_cast<Label>(in.integer());
                if (n.feature >= static_cast<int>(width) || n.left >= t.nodes.size() || n.right >= t.nodes.size())
                    throw format_error("model file: malformed tree node");
            }
            if (t.nodes.empty()) throw format_error("model file: empty tree");
        }
        return std::make_shared<RandomForest>(width, std::move(trees));
    }

    [[nodiscard]] std::map<std::string, std::string> hyperparameters() const override { return hyper_; }

private:
    std::size_t width_;
    std::vector<DecisionTree> trees_;
    std::map<std::string, std::string> hyper_;
};

namespace detail {

class TreeBuilder {
public:
    TreeBuilder(const Dataset& data, std::size_t max_depth, std::size_t max_features, Rng& rng)
        : data_(data), max_depth_(max_depth), max_features_(max_features), rng_(rng) {}

    DecisionTree build(std::vector<std::size_t> sample) {
        tree_.nodes.clear();
        grow(sample, 0);
        return std::move(tree_);
    }

private:
    static double gini(std::size_t ones, std::size_t total) {
        if (total == 0) return 0.0;
        const double p = static_cast<double>(ones) / static_cast<double>(total);
        return 2.0 * p * (1.0 - p);
    }

    std::uint32_t grow(std::vector<std::size_t>& sample, std::size_t depth) {
        const auto id = static_cast<std::uint32_t>(tree_.nodes.size());
        tree_.nodes.emplace_back();
        std::size_t ones = 0;
        for (auto i : sample) ones += data_.labels()[i] == 1;
        const std::size_t total = sample.size();
        tree_.nodes[id].label = 2 * ones >= total ? 1 : 0;
        if (depth >= max_depth_ || ones == 0 || ones == total || total < 2) return id;

        // Candidate features: a seeded random subset of size max_features.
        std::vector<std::size_t> features(data_.width());
        std::iota(features.begin(), features.end(), std::size_t{0});
        rng_.shuffle(std::span(features));
        features.resize(std::min(max_features_, features.size()));

        const double parent = gini(ones, total);
        double best_impurity = parent;
        int best_feature = -1;
        double best_threshold = 0.0;
        std::vector<std::pair<double, Label>> column(total);
        for (auto f : features) {
            for (std::size_t k = 0; k < total; ++k) column[k] = {data_.row(sample[k])[f], data_.labels()[sample[k]]};
            std::sort(column.begin(), column.end());
            std::size_t left_ones = 0;
            for (std::size_t k = 0; k + 1 < total; ++k) {
                left_ones += column[k].second == 1;
                if (column[k].first == column[k + 1].first) continue;
                const std::size_t nl = k + 1, nr = total - nl;
                const double impurity = (static_cast<double>(nl) * gini(left_ones, nl) +
                                         static_cast<double>(nr) * gini(ones - left_ones, nr)) /
                                        static_cast<double>(total);
                if (impurity < best_impurity) {
                    best_impurity = impurity;
                    best_feature = static_cast<int>(f);
                    best_threshold = 0.5 * (column[k].first + column[k + 1].first);
                    // Midpoint can round up to the right value for adjacent doubles.
                    if (best_threshold >= column[k + 1].first) best_threshold = column[k].first;
                }
            }
        }
        if (best_feature < 0) return id;

        std::vector<std::size_t> left, right;
        for (auto i : sample)
            (data_.row(i)[static_cast<std::size_t>(best_feature)] <= best_threshold ? left : right).push_back(i);
        sample.clear();
        sample.shrink_to_fit();
        tree_.nodes[id].feature = best_feature;
        tree_.nodes[id].threshold = best_threshold;
        const auto l = grow(left, depth + 1);
        const auto r = grow(right, depth + 1);
        tree_.nodes[id].left = l;
        tree_.nodes[id].right = r;
        return id;
    }

    const Dataset& data_;
    std::size_t max_depth_;
    std::size_t max_features_;
    Rng& rng_;
    DecisionTree tree_;
};

}  // namespace detail

/// Bootstrap-sampled CART trees with Gini splits. max_features 0 means floor(sqrt(width)), at least 1.
inline std::pair<std::shared_ptr<RandomForest>, TrainReport> train_random_forest(const Dataset& data, std::size_t n_trees,
                                                                                 std::size_t max_depth, std::uint64_t seed,
                                                                                 std::size_t max_features = 0) {
    if (n_trees < 1) throw argument_error("train_random_forest: n_trees must be at least 1");
    if (max_depth == 0) throw argument_error("train_random_forest: max_depth must be at least 1");
    detail::require_both_classes(data, "train_random_forest");
    if (max_features == 0)
        max_features = std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(data.width()))));

    Rng rng(seed);
    std::vector<DecisionTree> trees;
    trees.reserve(n_trees);
    detail::TreeBuilder builder(data, max_depth, max_features, rng);
    for (std::size_t t = 0; t < n_trees; ++t) {
        std::vector<std::size_t> sample(data.size());
        for (auto& s : sample) s = static_cast<std::size_t>(rng.index(data.size()));
        trees.push_back(builder.build(std::move(sample)));
    }
    auto model = std::make_shared<RandomForest>(
        data.width(), std::move(trees),
        std::map<std::string, std::string>{{"n_trees", std::to_string(n_trees)},
                                           {"max_depth", std::to_string(max_depth)},
                                           {"max_features", std::to_string(max_features)},
                                           {"seed", std::to_string(seed)}});
    TrainReport report{accuracy(*model, data), n_trees, std::numeric_limits<double>::quiet_NaN()};
    return {std::move(model), report};
}

}  // namespace ssba
