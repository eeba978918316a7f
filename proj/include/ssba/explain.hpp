#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <utility>
#include <vector>

#include "ssba/boundary.hpp"
#include "ssba/constraints.hpp"
#include "ssba/kdtree.hpp"
#include "ssba/models/classifier.hpp"

namespace ssba {

/// Exact nearest boundary point lookup. Keeps the map from indexed rows back to the rows of the
/// originating BoundaryPointSet, so filtered indexes still report set indices.
class NearestIndex {
public:
    struct Hit {
        std::size_t index = 0;  // row of the originating BoundaryPointSet
        double distance = 0.0;
    };

    NearestIndex() = default;

    NearestIndex(Matrix points, std::vector<std::size_t> source) : tree_(std::move(points)), source_(std::move(source)) {}

    [[nodiscard]] std::size_t size() const noexcept { return source_.size(); }
    [[nodiscard]] const Matrix& points() const noexcept { return tree_.points(); }
    [[nodiscard]] std::span<const std::size_t> source() const noexcept { return source_; }

    [[nodiscard]] Hit nearest(std::span<const double> query) const {
        const auto hit = tree_.nearest(query);
        return {source_[hit.index], hit.distance()};
    }

private:
    KdTree tree_;
    std::vector<std::size_t> source_;
};

/// Index over every point of the set.
[[nodiscard]] inline NearestIndex build_index(const BoundaryPointSet& set) {
    if (set.size() == 0) throw argument_error("build_index: boundary set is empty");
    std::vector<std::size_t> source(set.size());
    std::iota(source.begin(), source.end(), std::size_t{0});
    return NearestIndex(set.points, std::move(source));
}

/// Rows of the set satisfying the constraints around `query` (see satisfies), in set order.
[[nodiscard]] inline std::vector<std::size_t> feasible_rows(const BoundaryPointSet& set, const ConstraintSet& constraints,
                                                            std::span<const double> query, double categorical_tolerance) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < set.size(); ++i)
        if (satisfies(set.points.row(i), query, constraints, categorical_tolerance)) rows.push_back(i);
    return rows;
}

/// Subset of the set that satisfies the constraints; may be empty.
[[nodiscard]] inline BoundaryPointSet filter_feasible(const BoundaryPointSet& set, const ConstraintSet& constraints,
                                                      std::span<const double> query, double categorical_tolerance = 0.5) {
    BoundaryPointSet out = set;
    out.points = Matrix(0, set.width());
    out.pair_indices.clear();
    out.truncated.clear();
    for (auto i : feasible_rows(set, constraints, query, categorical_tolerance)) {
        out.points.append_row(set.points.row(i));
        out.pair_indices.push_back(set.pair_indices[i]);
        out.truncated.push_back(set.truncated[i]);
    }
    return out;
}

namespace detail {

inline double radical_inverse(std::uint64_t i, std::uint64_t base) {
    double inv = 1.0 / static_cast<double>(base), f = inv, r = 0.0;
    while (i > 0) {
        r += f * static_cast<double>(i % base);
        i /= base;
        f *= inv;
    }
    return r;
}

inline constexpr std::uint64_t primes[] = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59,
                                           61, 67, 71, 73, 79, 83, 89, 97, 101, 103, 107, 109, 113, 127, 131};

}  // namespace detail

struct BoundedCounterfactual {
    Instance point;   // x' inside the box
    double distance;  // distance from x' to its nearest indexed boundary point
};

/// Point of the fallback box (see fallback_box) closest to the indexed boundary points.
///
/// Candidates are, in order: the query clamped to the box, samples_per_dim * m points of a
/// randomly shifted Halton sequence over the m free coordinates, and the projection onto the box of
/// the indexed point closest to it. The last candidate makes the answer exact, since the minimum
/// over the box of the distance to a finite set is attained at the projection of one of its
/// points. Ties go to the earliest candidate.
[[nodiscard]] inline BoundedCounterfactual bounded_counterfactual(std::span<const double> query,
                                                                  const ConstraintSet& constraints,
                                                                  const NearestIndex& index, std::size_t samples_per_dim = 64,
                                                                  std::uint64_t seed = 0) {
    if (index.size() == 0) throw argument_error("bounded_counterfactual: empty index");
    if (query.size() != index.points().cols()) throw argument_error("bounded_counterfactual: query width mismatch");
    if (mutable_continuous_count(query.size(), constraints) == 0)
        throw no_mutable_features("no mutable features: every feature is immutable, categorical or fixed by equality");

    const Bounds box = fallback_box(query, constraints);
    std::vector<std::size_t> free;
    for (std::size_t i = 0; i < box.size(); ++i)
        if (box[i].first < box[i].second) free.push_back(i);

    BoundedCounterfactual best{Instance(query.size()), std::numeric_limits<double>::infinity()};
    Instance candidate(query.size());
    const auto consider = [&] {
        const double d = index.nearest(candidate).distance;
        if (d < best.distance) best = {candidate, d};
    };
    const auto clamp_into_box = [&](std::span<const double> p) {
        for (std::size_t i = 0; i < box.size(); ++i) candidate[i] = std::clamp(p[i], box[i].first, box[i].second);
    };

    clamp_into_box(query);
    consider();

    if (!free.empty()) {
        Rng rng(seed);
        std::vector<double> shift(free.size());
        for (auto& s : shift) s = rng.uniform();
        const std::size_t count = samples_per_dim * free.size();
        for (std::size_t k = 1; k <= count; ++k) {
            clamp_into_box(query);
            for (std::size_t f = 0; f < free.size(); ++f) {
                const auto base = detail::primes[f % std::size(detail::primes)];
                double u = detail::radical_inverse(k, base) + shift[f];
                if (u >= 1.0) u -= 1.0;
                const auto [lo, hi] = box[free[f]];
                candidate[free[f]] = lo + (hi - lo) * u;
            }
            consider();
        }
    }

    // The projection family only needs its best member: for any box point x and indexed d,
    // |x - d| >= |clamp(d) - d|.
    std::size_t best_row = 0;
    double best_gap = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < index.size(); ++r) {
        clamp_into_box(index.points().row(r));
        const double gap = squared_distance(candidate, index.points().row(r));
        if (gap < best_gap) {
            best_gap = gap;
            best_row = r;
        }
    }
    clamp_into_box(index.points().row(best_row));
    consider();
    return best;
}

enum class ResultMode { feasible, bounded_fallback };

[[nodiscard]] inline std::string_view to_string(ResultMode m) {
    return m == ResultMode::feasible ? "feasible" : "bounded_fallback";
}

struct CounterfactualResult {
    Instance query;
    Label query_label = 0;
    Instance boundary_point;         // d*, or the box point x' in fallback mode
    std::optional<Instance> crossed; // x' past the boundary (feasible mode)
    ResultMode mode = ResultMode::feasible;
    double distance = 0.0;           // l2(query, boundary_point)
    double boundary_distance = 0.0;  // fallback: l2(x', nearest boundary point); feasible: 0
    std::optional<std::size_t> boundary_index;
    bool crossing_failed = false;
    std::vector<std::string> satisfied_constraints;
};

struct ExplainOptions {
    double eps0 = 1e-3;
    std::size_t max_doublings = 20;
    double categorical_tolerance = 0.5;
    std::size_t samples_per_dim = 64;
    std::uint64_t seed = 0;
};

/// Nearest feasible counterfactuals against one boundary set.
///
/// Filtering happens before the nearest-neighbour search: each distinct feasible region gets its
/// own index, built on first use and cached. The cache is guarded by a shared mutex, so one
/// Explainer can serve concurrent explain calls.
class Explainer {
public:
    Explainer(ClassifierPtr model, std::shared_ptr<const BoundaryPointSet> set, std::optional<FeatureSchema> schema = {})
        : model_(std::move(model)), set_(std::move(set)), schema_(std::move(schema)) {
        if (!model_ || !set_) throw argument_error("Explainer: model and boundary set are required");
        if (set_->size() == 0) throw argument_error("Explainer: boundary set is empty");
        if (set_->width() != model_->width()) throw argument_error("Explainer: boundary set/model width mismatch");
    }

    [[nodiscard]] const BoundaryPointSet& boundary() const noexcept { return *set_; }
    [[nodiscard]] const Classifier& model() const noexcept { return *model_; }

    [[nodiscard]] CounterfactualResult explain(std::span<const double> query, const ConstraintSet& constraints,
                                               const ExplainOptions& opt = {}) const {
        if (query.size() != model_->width()) throw argument_error("explain: query width mismatch");
        constraints.validate(query.size());
        if (mutable_continuous_count(query.size(), constraints) == 0)
            throw no_mutable_features("no mutable features: every feature is immutable, categorical or fixed by equality");

        CounterfactualResult r;
        r.query.assign(query.begin(), query.end());
        r.query_label = model_->predict(query);
        r.satisfied_constraints = describe_constraints(constraints, schema_ ? &*schema_ : nullptr);

        const auto feasible = filtered_index(query, constraints, opt.categorical_tolerance);
        if (feasible) {
            const auto hit = feasible->nearest(query);
            const std::size_t j = hit.index;
            r.mode = ResultMode::feasible;
            r.boundary_index = j;
            const auto d = set_->points.row(j);
            r.boundary_point.assign(d.begin(), d.end());
            r.distance = l2_distance(query, d);
            const auto toward = r.query_label == 0 ? set_->class1_endpoint(j) : set_->class0_endpoint(j);
            try {
                auto crossed = crossing_point(*model_, d, toward, r.query_label, opt.eps0, opt.max_doublings);
                if (satisfies(crossed, query, constraints, opt.categorical_tolerance))
                    r.crossed = std::move(crossed);
                else
                    r.crossing_failed = true;
            } catch (const crossing_error&) {
                r.crossing_failed = true;
            }
            return r;
        }

        const auto bounded = bounded_counterfactual(query, constraints, full_index(), opt.samples_per_dim, opt.seed);
        r.mode = ResultMode::bounded_fallback;
        r.boundary_point = bounded.point;
        r.distance = l2_distance(query, bounded.point);
        r.boundary_distance = bounded.distance;
        return r;
    }

    /// Index over the whole set (used by the fallback and the bounded-distance metric).
    [[nodiscard]] const NearestIndex& full_index() const {
        std::call_once(full_once_, [&] { full_ = std::make_unique<NearestIndex>(build_index(*set_)); });
        return *full_;
    }

private:
    /// nullptr when nothing is feasible.
    std::shared_ptr<const NearestIndex> filtered_index(std::span<const double> query, const ConstraintSet& c,
                                                       double tolerance) const {
        // The feasible set depends on the query only through the features that constraints
        // compare against it.
        std::string key = c.signature() + "|t=" + std::to_string(tolerance) + "|q";
        const auto add = [&](std::size_t i) {
            char buf[32];
            const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, query[i]);
            key += ' ' + std::to_string(i) + ':' + std::string(buf, end);
        };
        for (auto i : c.immutable()) add(i);
        for (auto i : c.categorical()) add(i);
        for (const auto& [i, f] : c.delta_fractions()) add(i);
        {
            std::shared_lock lock(mutex_);
            if (const auto it = cache_.find(key); it != cache_.end()) return it->second;
        }
        auto rows = feasible_rows(*set_, c, query, tolerance);
        std::shared_ptr<const NearestIndex> index;
        if (!rows.empty()) {
            Matrix points(0, set_->width());
            points.reserve_rows(rows.size());
            for (auto i : rows) points.append_row(set_->points.row(i));
            index = std::make_shared<NearestIndex>(std::move(points), std::move(rows));
        }
        std::unique_lock lock(mutex_);
        if (cache_.size() >= max_cached_) cache_.clear();
        return cache_.emplace(std::move(key), std::move(index)).first->second;
    }

    static constexpr std::size_t max_cached_ = 64;

    ClassifierPtr model_;
    std::shared_ptr<const BoundaryPointSet> set_;
    std::optional<FeatureSchema> schema_;
    mutable std::shared_mutex mutex_;
    mutable std::map<std::string, std::shared_ptr<const NearestIndex>> cache_;
    mutable std::once_flag full_once_;
    mutable std::unique_ptr<NearestIndex> full_;
};

/// One-shot convenience over Explainer.
[[nodiscard]] inline CounterfactualResult explain(ClassifierPtr model, std::shared_ptr<const BoundaryPointSet> set,
                                                  std::span<const double> query, const ConstraintSet& constraints,
                                                  const ExplainOptions& opt = {}) {
    return Explainer(std::move(model), std::move(set)).explain(query, constraints, opt);
}

}  // namespace ssba
