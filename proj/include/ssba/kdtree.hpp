#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "ssba/error.hpp"
#include "ssba/matrix.hpp"

namespace ssba {

/// Exact Euclidean nearest-neighbour search over a fixed point matrix.
///
/// Median splits on the widest dimension. Ties in distance resolve to the lowest point index, so
/// answers match a linear scan exactly. Pruning compares the squared offset to the splitting plane
/// against the best squared distance with <=, which is safe in floating point because a squared
/// distance always dominates any one of its terms.
class KdTree {
public:
    struct Hit {
        std::size_t index = 0;
        double squared = std::numeric_limits<double>::infinity();

        [[nodiscard]] double distance() const { return std::sqrt(squared); }
    };

    KdTree() = default;

    explicit KdTree(Matrix points, std::size_t leaf_size = 16) : points_(std::move(points)), leaf_size_(leaf_size) {
        if (points_.rows() == 0) throw argument_error("KdTree: cannot index an empty point set");
        if (leaf_size_ == 0) leaf_size_ = 1;
        order_.resize(points_.rows());
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        nodes_.reserve(2 * points_.rows() / leaf_size_ + 1);
        build(0, order_.size());
    }

    [[nodiscard]] std::size_t size() const noexcept { return points_.rows(); }
    [[nodiscard]] std::size_t width() const noexcept { return points_.cols(); }
    [[nodiscard]] const Matrix& points() const noexcept { return points_; }

    [[nodiscard]] Hit nearest(std::span<const double> query) const {
        if (query.size() != width()) throw argument_error("KdTree::nearest: query width mismatch");
        Hit best;
        search(0, query, best);
        return best;
    }

    /// Indices of points with distance < radius, ascending.
    [[nodiscard]] std::vector<std::size_t> within(std::span<const double> query, double radius) const {
        if (query.size() != width()) throw argument_error("KdTree::within: query width mismatch");
        std::vector<std::size_t> out;
        collect(0, query, radius * radius, out);
        std::sort(out.begin(), out.end());
        return out;
    }

private:
    struct Node {
        std::size_t begin = 0, end = 0;
        std::size_t dim = 0;
        double split = 0.0;
        std::uint32_t left = 0, right = 0;  // 0 marks a leaf (the root is never a child)
    };

    std::uint32_t build(std::size_t begin, std::size_t end) {
        const auto id = static_cast<std::uint32_t>(nodes_.size());
        nodes_.push_back({begin, end});
        if (end - begin <= leaf_size_) return id;

        std::size_t dim = 0;
        double widest = -1.0;
        for (std::size_t d = 0; d < width(); ++d) {
            double lo = std::numeric_limits<double>::infinity(), hi = -lo;
            for (std::size_t k = begin; k < end; ++k) {
                const double v = points_(order_[k], d);
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            if (hi - lo > widest) {
                widest = hi - lo;
                dim = d;
            }
        }
        if (widest <= 0.0) return id;  // all points coincide

        const std::size_t mid = begin + (end - begin) / 2;
        const auto first = order_.begin();
        std::nth_element(first + static_cast<std::ptrdiff_t>(begin), first + static_cast<std::ptrdiff_t>(mid),
                         first + static_cast<std::ptrdiff_t>(end),
                         [&](std::size_t a, std::size_t b) { return points_(a, dim) < points_(b, dim); });
        const double split = points_(order_[mid], dim);
        const auto left = build(begin, mid);
        const auto right = build(mid, end);
        nodes_[id].dim = dim;
        nodes_[id].split = split;
        nodes_[id].left = left;
        nodes_[id].right = right;
        return id;
    }

    void search(std::uint32_t id, std::span<const double> q, Hit& best) const {
        const Node& node = nodes_[id];
        if (node.left == 0) {
            for (std::size_t k = node.begin; k < node.end; ++k) {
                const std::size_t i = order_[k];
                const double d2 = squared_distance(q, points_.row(i));
                if (d2 < best.squared || (d2 == best.squared && i < best.index)) best = {i, d2};
            }
            return;
        }
        const double diff = q[node.dim] - node.split;
        const auto near = diff < 0.0 ? node.left : node.right;
        const auto far = diff < 0.0 ? node.right : node.left;
        search(near, q, best);
        if (diff * diff <= best.squared) search(far, q, best);
    }

    void collect(std::uint32_t id, std::span<const double> q, double r2, std::vector<std::size_t>& out) const {
        const Node& node = nodes_[id];
        if (node.left == 0) {
            for (std::size_t k = node.begin; k < node.end; ++k)
                if (squared_distance(q, points_.row(order_[k])) < r2) out.push_back(order_[k]);
            return;
        }
        const double diff = q[node.dim] - node.split;
        if (diff < 0.0 || diff * diff < r2) collect(node.left, q, r2, out);
        if (diff >= 0.0 || diff * diff < r2) collect(node.right, q, r2, out);
    }

    Matrix points_;
    std::size_t leaf_size_ = 16;
    std::vector<std::size_t> order_;
    std::vector<Node> nodes_;
};

}  // namespace ssba
