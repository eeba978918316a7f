#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <thread>
#include <unordered_set>
#include <utility>
#include <vector>

#include "ssba/datasets.hpp"
#include "ssba/error.hpp"
#include "ssba/kdtree.hpp"
#include "ssba/matrix.hpp"
#include "ssba/models/classifier.hpp"
#include "ssba/random.hpp"

namespace ssba {

/// Discrete approximation of a decision boundary.
///
/// Each point i was produced from an opposite-class pair: pair_indices[i] = (a, b) indexes row a of
/// class0_rows and row b of class1_rows. Those endpoint matrices travel with the set so that a
/// crossing direction is available without the original dataset.
struct BoundaryPointSet {
    enum class Method : std::uint8_t { ssba = 0, grid = 1 };

    Matrix points;
    double epsilon = 1e-3;
    std::uint64_t threshold_T = 0;
    std::uint64_t seed = 0;
    std::vector<std::pair<std::uint64_t, std::uint64_t>> pair_indices;
    std::uint64_t model_fingerprint = 0;
    std::vector<std::uint8_t> truncated;  // 1 where bisection hit max_iter before the bracket closed
    Matrix class0_rows;
    Matrix class1_rows;
    Method method = Method::ssba;

    [[nodiscard]] std::size_t size() const noexcept { return points.rows(); }
    [[nodiscard]] std::size_t width() const noexcept { return points.cols(); }

    [[nodiscard]] std::span<const double> class0_endpoint(std::size_t i) const {
        return class0_rows.row(static_cast<std::size_t>(pair_indices[i].first));
    }
    [[nodiscard]] std::span<const double> class1_endpoint(std::size_t i) const {
        return class1_rows.row(static_cast<std::size_t>(pair_indices[i].second));
    }

    friend bool operator==(const BoundaryPointSet&, const BoundaryPointSet&) = default;
};

struct CorrectSets {
    Matrix class0;  // rows labelled 0 and predicted 0, dataset order
    Matrix class1;
    std::vector<std::size_t> class0_source;  // dataset row of each entry
    std::vector<std::size_t> class1_source;
};

/// Splits the dataset by label and keeps only the rows the model classifies correctly.
[[nodiscard]] inline CorrectSets select_correct(const Classifier& model, const Dataset& data) {
    CorrectSets out{Matrix(0, data.width()), Matrix(0, data.width()), {}, {}};
    const auto predicted = model.predict_batch(data.rows());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const Label y = data.labels()[i];
        if (predicted[i] != y) continue;
        (y == 0 ? out.class0 : out.class1).append_row(data.row(i));
        (y == 0 ? out.class0_source : out.class1_source).push_back(i);
    }
    if (out.class0.empty() || out.class1.empty())
        throw no_correct_representatives("no correctly classified representatives for class " +
                                         std::string(out.class0.empty() ? "0" : "1") +
                                         "; boundary generation is impossible");
    return out;
}

struct BisectionResult {
    double alpha = 0.0;
    std::size_t iterations = 0;
    Label left_label = 0;
    Label right_label = 1;
    bool truncated = false;  // max_iter reached with |r - l| >= epsilon
};

/// Observer for the bracket (l, r) after each bisection step.
using BracketObserver = std::function<void(double left, double right)>;

namespace detail {
inline void check_bisection_args(double epsilon, std::size_t max_iter) {
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw argument_error("bisection: epsilon must lie in (0, 1)");
    if (max_iter < 1) throw argument_error("bisection: max_iter must be at least 1");
}
}  // namespace detail

/// Bisection on alpha along x(alpha) = (1 - alpha) x_a + alpha x_b.
///
/// Keeps l labelled y_a and r labelled otherwise; stops once r - l < epsilon or after max_iter
/// probes. The reported alpha is the midpoint of the final bracket.
[[nodiscard]] inline BisectionResult alpha_binary_search(const Classifier& model, std::span<const double> x_a,
                                                         std::span<const double> x_b, Label y_a, double epsilon,
                                                         std::size_t max_iter = 60,
                                                         const BracketObserver& observer = {}) {
    detail::check_bisection_args(epsilon, max_iter);
    if (x_a.size() != x_b.size() || x_a.size() != model.width())
        throw argument_error("alpha_binary_search: endpoint width mismatch");
    const Label right_label = model.predict(x_b);
    if (model.predict(x_a) != y_a || right_label == y_a)
        throw argument_error("alpha_binary_search: endpoints must be predicted y_a and not y_a respectively");

    double l = 0.0, r = 1.0;
    Instance probe(x_a.size());
    BisectionResult result{0.0, 0, y_a, right_label, false};
    for (std::size_t t = 1; t <= max_iter; ++t) {
        const double alpha = 0.5 * (l + r);
        interpolate(x_a, x_b, alpha, probe);
        (model.predict(probe) == y_a ? l : r) = alpha;
        result.iterations = t;
        if (observer) observer(l, r);
        if (r - l < epsilon) break;
    }
    result.truncated = !(r - l < epsilon);
    result.alpha = 0.5 * (l + r);
    return result;
}

struct BoundaryOptions {
    std::uint64_t threshold_T = 10'000;
    double epsilon = 1e-3;
    std::uint64_t seed = 0;
    std::size_t batch_size = 1000;
    std::size_t max_iter = 60;
    std::size_t threads = 1;
    /// Greedily drop points closer than epsilon * |x_b - x_a| to an earlier kept point.
    bool deduplicate = false;
};

/// Called with (pairs finished, pairs total); may be invoked from worker threads.
using ProgressCallback = std::function<void(std::size_t, std::size_t)>;

/// Pair indices into the (n0 x n1) product, sampled uniformly without replacement and returned in
/// ascending order. Takes every pair when threshold >= n0 * n1.
[[nodiscard]] inline std::vector<std::pair<std::uint64_t, std::uint64_t>> sample_pairs(std::uint64_t n0, std::uint64_t n1,
                                                                                       std::uint64_t threshold,
                                                                                       std::uint64_t seed) {
    const std::uint64_t total = n0 * n1;
    std::vector<std::uint64_t> chosen;
    if (threshold >= total) {
        chosen.resize(total);
        std::iota(chosen.begin(), chosen.end(), std::uint64_t{0});
    } else {
        // Floyd's algorithm.
        Rng rng(seed);
        std::unordered_set<std::uint64_t> seen;
        seen.reserve(threshold * 2);
        chosen.reserve(threshold);
        for (std::uint64_t j = total - threshold; j < total; ++j) {
            const std::uint64_t t = rng.index(j + 1);
            const std::uint64_t pick = seen.contains(t) ? j : t;
            seen.insert(pick);
            chosen.push_back(pick);
        }
        std::sort(chosen.begin(), chosen.end());
    }
    std::vector<std::pair<std::uint64_t, std::uint64_t>> pairs(chosen.size());
    for (std::size_t k = 0; k < chosen.size(); ++k) pairs[k] = {chosen[k] / n1, chosen[k] % n1};
    return pairs;
}

namespace detail {

/// Lock-step bisection over pairs [begin, end): each round gathers the midpoints of the still-open
/// brackets of up to batch_size pairs and labels them with one predict_batch call. Per-pair
/// results equal alpha_binary_search exactly.
inline void bisect_range(const Classifier& model, const Matrix& class0, const Matrix& class1,
                         std::span<const std::pair<std::uint64_t, std::uint64_t>> pairs, std::size_t begin, std::size_t end,
                         const BoundaryOptions& opt, std::span<BisectionResult> results, std::atomic<std::size_t>& done,
                         const ProgressCallback& progress) {
    const std::size_t batch = std::max<std::size_t>(1, opt.batch_size);
    struct Bracket {
        double l = 0.0, r = 1.0;
        bool open = true;
    };
    std::vector<Bracket> brackets;
    std::vector<std::size_t> active;
    for (std::size_t start = begin; start < end; start += batch) {
        const std::size_t stop = std::min(end, start + batch);
        brackets.assign(stop - start, {});
        for (std::size_t k = start; k < stop; ++k) results[k] = {0.0, 0, 0, 1, false};
        for (std::size_t t = 1; t <= opt.max_iter; ++t) {
            active.clear();
            for (std::size_t k = 0; k < brackets.size(); ++k)
                if (brackets[k].open) active.push_back(k);
            if (active.empty()) break;
            Matrix probes(active.size(), class0.cols());
            for (std::size_t m = 0; m < active.size(); ++m) {
                const auto& [a, b] = pairs[start + active[m]];
                const auto& br = brackets[active[m]];
                interpolate(class0.row(static_cast<std::size_t>(a)), class1.row(static_cast<std::size_t>(b)),
                            0.5 * (br.l + br.r), probes.row(m));
            }
            const auto labels = model.predict_batch(probes);
            for (std::size_t m = 0; m < active.size(); ++m) {
                auto& br = brackets[active[m]];
                const double alpha = 0.5 * (br.l + br.r);
                (labels[m] == 0 ? br.l : br.r) = alpha;
                results[start + active[m]].iterations = t;
                if (br.r - br.l < opt.epsilon) br.open = false;
            }
        }
        for (std::size_t k = 0; k < brackets.size(); ++k) {
            auto& res = results[start + k];
            res.alpha = 0.5 * (brackets[k].l + brackets[k].r);
            res.truncated = brackets[k].open;
        }
        const std::size_t finished = done.fetch_add(stop - start) + (stop - start);
        if (progress) progress(finished, pairs.size());
    }
}

}  // namespace detail

/// Boundary points by bisection over sampled pairs of correctly classified opposite-class rows.
///
/// Class-0 rows are the left endpoints (y_a = 0). The pair list is fixed before any bisection
/// runs, and results are assembled in pair order, so neither thread count nor batch size can
/// change the output. Model predictions for the probes total at most pairs * ceil(log2(1/eps)).
[[nodiscard]] inline BoundaryPointSet generate_boundary_points(const Classifier& model, const Dataset& data,
                                                               const BoundaryOptions& opt,
                                                               const ProgressCallback& progress = {}) {
    if (opt.threshold_T == 0) throw argument_error("generate_boundary_points: threshold_T must be positive");
    detail::check_bisection_args(opt.epsilon, opt.max_iter);
    if (data.width() != model.width()) throw argument_error("generate_boundary_points: dataset/model width mismatch");

    CorrectSets correct = select_correct(model, data);
    const auto pairs = sample_pairs(correct.class0.rows(), correct.class1.rows(), opt.threshold_T, opt.seed);

    std::vector<BisectionResult> results(pairs.size());
    std::atomic<std::size_t> done{0};
    const std::size_t threads = std::clamp<std::size_t>(opt.threads, 1, std::max<std::size_t>(1, pairs.size()));
    if (threads == 1) {
        detail::bisect_range(model, correct.class0, correct.class1, pairs, 0, pairs.size(), opt, results, done, progress);
    } else {
        std::vector<std::jthread> workers;
        const std::size_t chunk = (pairs.size() + threads - 1) / threads;
        for (std::size_t w = 0; w < threads; ++w) {
            const std::size_t begin = w * chunk, end = std::min(pairs.size(), begin + chunk);
            if (begin >= end) break;
            workers.emplace_back([&, begin, end] {
                detail::bisect_range(model, correct.class0, correct.class1, pairs, begin, end, opt, results, done,
                                     progress);
            });
        }
    }

    BoundaryPointSet set;
    set.epsilon = opt.epsilon;
    set.threshold_T = opt.threshold_T;
    set.seed = opt.seed;
    set.model_fingerprint = model.fingerprint();
    set.points = Matrix(pairs.size(), data.width());
    set.pair_indices = pairs;
    set.truncated.resize(pairs.size());
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        interpolate(correct.class0.row(static_cast<std::size_t>(pairs[k].first)),
                    correct.class1.row(static_cast<std::size_t>(pairs[k].second)), results[k].alpha, set.points.row(k));
        set.truncated[k] = results[k].truncated ? 1 : 0;
    }
    set.class0_rows = std::move(correct.class0);
    set.class1_rows = std::move(correct.class1);

    if (opt.deduplicate && set.size() > 1) {
        const KdTree tree(set.points);
        std::vector<std::uint8_t> dropped(set.size(), 0);
        std::vector<std::size_t> keep;
        for (std::size_t i = 0; i < set.size(); ++i) {
            if (dropped[i]) continue;
            keep.push_back(i);
            const double radius = opt.epsilon * l2_distance(set.class0_endpoint(i), set.class1_endpoint(i));
            for (auto j : tree.within(set.points.row(i), radius))
                if (j > i) dropped[j] = 1;
        }
        if (keep.size() < set.size()) {
            Matrix points(0, set.width());
            points.reserve_rows(keep.size());
            std::vector<std::pair<std::uint64_t, std::uint64_t>> kept_pairs;
            std::vector<std::uint8_t> kept_flags;
            for (auto i : keep) {
                points.append_row(set.points.row(i));
                kept_pairs.push_back(set.pair_indices[i]);
                kept_flags.push_back(set.truncated[i]);
            }
            set.points = std::move(points);
            set.pair_indices = std::move(kept_pairs);
            set.truncated = std::move(kept_flags);
        }
    }
    return set;
}

/// Bytes a full R^n grid would need at 8 bytes per coordinate.
[[nodiscard]] inline long double grid_bytes_required(std::size_t n_features, std::size_t resolution) {
    return 8.0L * static_cast<long double>(n_features) *
           std::pow(static_cast<long double>(resolution), static_cast<long double>(n_features));
}

/// Grid baseline. Evaluates every node of an R^n lattice over the bounds and emits the midpoint
/// of each axis-adjacent node pair whose labels differ. Refuses, before allocating anything, when
/// the lattice would exceed memory_budget_bytes.
[[nodiscard]] inline BoundaryPointSet grid_boundary_points(const Classifier& model, const Bounds& bounds,
                                                           std::size_t resolution, std::uint64_t memory_budget_bytes) {
    if (resolution < 2) throw argument_error("grid_boundary_points: resolution must be at least 2");
    const std::size_t n = bounds.size();
    if (n == 0 || n != model.width()) throw argument_error("grid_boundary_points: bounds/model width mismatch");
    const long double required = grid_bytes_required(n, resolution);
    if (required > static_cast<long double>(memory_budget_bytes))
        throw budget_error("grid of " + std::to_string(resolution) + "^" + std::to_string(n) + " points needs about " +
                               std::to_string(static_cast<double>(required)) + " bytes, budget is " +
                               std::to_string(memory_budget_bytes),
                           required, memory_budget_bytes);

    std::size_t total = 1;
    std::vector<std::size_t> stride(n);
    for (std::size_t d = 0; d < n; ++d) {
        stride[d] = total;
        total *= resolution;
    }
    const auto coordinate = [&](std::size_t d, std::size_t k) {
        const auto [lo, hi] = bounds[d];
        if (k + 1 == resolution) return hi;
        return lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(resolution - 1);
    };
    Matrix grid(total, n);
    for (std::size_t i = 0; i < total; ++i) {
        std::size_t rest = i;
        for (std::size_t d = 0; d < n; ++d) {
            grid(i, d) = coordinate(d, rest % resolution);
            rest /= resolution;
        }
    }
    const auto labels = model.predict_batch(grid);

    BoundaryPointSet set;
    set.method = BoundaryPointSet::Method::grid;
    set.threshold_T = total;
    set.model_fingerprint = model.fingerprint();
    set.points = Matrix(0, n);
    set.class0_rows = Matrix(0, n);
    set.class1_rows = Matrix(0, n);
    double widest_step = 0.0;
    for (const auto& [lo, hi] : bounds) widest_step = std::max(widest_step, (hi - lo) / static_cast<double>(resolution - 1));
    set.epsilon = widest_step;

    Instance mid(n);
    for (std::size_t i = 0; i < total; ++i) {
        for (std::size_t d = 0; d < n; ++d) {
            if ((i / stride[d]) % resolution + 1 == resolution) continue;
            const std::size_t j = i + stride[d];
            if (labels[i] == labels[j]) continue;
            interpolate(grid.row(i), grid.row(j), 0.5, mid);
            set.points.append_row(mid);
            const auto zero = labels[i] == 0 ? i : j;
            const auto one = labels[i] == 0 ? j : i;
            set.class0_rows.append_row(grid.row(zero));
            set.class1_rows.append_row(grid.row(one));
            const auto k = static_cast<std::uint64_t>(set.pair_indices.size());
            set.pair_indices.emplace_back(k, k);
            set.truncated.push_back(0);
        }
    }
    return set;
}

/// Steps from d_star toward `toward` by eps0, doubling the step up to max_doublings times, and
/// returns the first point whose prediction differs from y. The step never overshoots `toward`.
[[nodiscard]] inline Instance crossing_point(const Classifier& model, std::span<const double> d_star,
                                             std::span<const double> toward, Label y, double eps0,
                                             std::size_t max_doublings = 20) {
    if (!(eps0 > 0.0)) throw argument_error("crossing_point: eps0 must be positive");
    const double length = l2_distance(d_star, toward);
    if (length == 0.0) throw crossing_error("crossing_point: direction endpoint coincides with the boundary point");
    Instance p(d_star.size());
    double step = eps0;
    for (std::size_t k = 0; k <= max_doublings; ++k) {
        const bool at_end = step >= length;
        if (at_end)
            p.assign(toward.begin(), toward.end());
        else
            interpolate(d_star, toward, step / length, p);
        if (model.predict(p) != y) return p;
        if (at_end) break;
        step *= 2.0;
    }
    throw crossing_error("crossing failed: no prediction flip within " + std::to_string(max_doublings) +
                         " doublings of eps0=" + std::to_string(eps0));
}

}  // namespace ssba
