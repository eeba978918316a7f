#include <gtest/gtest.h>

#include <cmath>
#include <thread>

#include "ssba/boundary.hpp"
#include "ssba/explain.hpp"
#include "ssba/kdtree.hpp"
#include "ssba/models.hpp"
#include "ssba/records.hpp"
#include "test_models.hpp"

using namespace ssba;
using ssba::testing::threshold_model;

namespace {

// Oracle: lowest index among the minimal squared distances.
std::size_t linear_argmin(const Matrix& points, std::span<const double> q) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < points.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < q.size(); ++j) s += (points(i, j) - q[j]) * (points(i, j) - q[j]);
        if (s < best_d) {
            best_d = s;
            best = i;
        }
    }
    return best;
}

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, bool integer_grid = false) {
    Matrix m(rows, cols);
    for (auto& v : m.data()) v = integer_grid ? std::floor(rng.uniform(0.0, 6.0)) : rng.uniform(-5.0, 5.0);
    return m;
}

// Oracle predicate written out independently of satisfies().
bool feasible_oracle(std::span<const double> p, std::span<const double> q, const ConstraintSet& c, double tol) {
    for (std::size_t i = 0; i < p.size(); ++i) {
        if ((c.immutable().count(i) || c.categorical().count(i)) && !(std::fabs(p[i] - q[i]) <= tol)) return false;
        if (c.equalities().count(i) && !(std::fabs(p[i] - c.equalities().at(i)) <= tol)) return false;
        if (c.lower_bounds().count(i) && !(p[i] >= c.lower_bounds().at(i))) return false;
        if (c.upper_bounds().count(i) && !(p[i] <= c.upper_bounds().at(i))) return false;
        if (c.delta_fractions().count(i) && !(std::fabs(p[i] - q[i]) <= c.delta_fractions().at(i) * std::fabs(q[i])))
            return false;
    }
    return true;
}

ConstraintSet random_constraints(std::size_t width, std::span<const double> q, Rng& rng) {
    ConstraintSet c;
    for (std::size_t i = 0; i < width; ++i) {
        switch (rng.index(6)) {
            case 0: c.make_immutable(i); break;
            case 1: c.set_delta(i, rng.uniform(0.05, 0.6)); break;
            case 2: c.set_lower(i, q[i] - rng.uniform(-0.5, 2.0)); break;
            case 3: c.set_upper(i, q[i] + rng.uniform(-0.5, 2.0)); break;
            case 4: c.set_equal(i, q[i] + rng.uniform(-1.0, 1.0)); break;
            default: break;
        }
    }
    return c;
}

// Two continuous features and one categorical feature with codes 0..2.
Dataset mixed_dataset(std::size_t n, std::uint64_t seed) {
    const auto base = make_classification(n, 3, 2.0, seed);
    Matrix rows = base.rows();
    for (std::size_t i = 0; i < rows.rows(); ++i) rows(i, 2) = std::clamp(std::round(rows(i, 2) + 1.0), 0.0, 2.0);
    FeatureSchema schema = FeatureSchema::continuous(3);
    schema.features[2].kind = FeatureKind::categorical;
    schema.features[2].category_count = 3;
    return Dataset(std::move(schema), std::move(rows), base.labels());
}

bool inside_box(std::span<const double> p, const Bounds& box) {
    for (std::size_t i = 0; i < p.size(); ++i)
        if (p[i] < box[i].first || p[i] > box[i].second) return false;
    return true;
}

}  // namespace

TEST(KdTree, MatchesLinearScanIncludingTies) {
    Rng rng(1);
    for (bool grid : {false, true}) {
        const Matrix points = random_matrix(1000, 3, rng, grid);
        const KdTree tree(points);
        for (int k = 0; k < 1000; ++k) {
            std::vector<double> q(3);
            for (auto& v : q) v = grid ? std::floor(rng.uniform(0.0, 6.0)) + 0.5 : rng.uniform(-6.0, 6.0);
            const auto hit = tree.nearest(q);
            const auto expected = linear_argmin(points, q);
            ASSERT_EQ(hit.index, expected);
            ASSERT_EQ(hit.squared, squared_distance(points.row(expected), q));
        }
    }
}

TEST(KdTree, SinglePointAnswersEveryQuery) {
    Matrix m(0, 2);
    m.append_row(std::vector<double>{1.0, 2.0});
    const KdTree tree(m);
    for (double x : {-100.0, 0.0, 1.0, 50.0}) EXPECT_EQ(tree.nearest(std::vector<double>{x, x}).index, 0u);
}

TEST(KdTree, DuplicatesResolveToLowestIndex) {
    Matrix m(0, 1);
    for (double v : {3.0, 1.0, 1.0, 1.0}) m.append_row(std::vector<double>{v});
    const auto hit = KdTree(m).nearest(std::vector<double>{0.0});
    EXPECT_EQ(hit.index, 1u);
    EXPECT_EQ(hit.distance(), 1.0);
}

TEST(KdTree, RadiusQueryMatchesScan) {
    Rng rng(2);
    const Matrix points = random_matrix(500, 2, rng);
    const KdTree tree(points);
    for (int k = 0; k < 100; ++k) {
        const std::vector<double> q{rng.uniform(-5, 5), rng.uniform(-5, 5)};
        std::vector<std::size_t> expected;
        for (std::size_t i = 0; i < points.rows(); ++i)
            if (l2_distance(points.row(i), q) < 1.3) expected.push_back(i);
        EXPECT_EQ(tree.within(q, 1.3), expected);
    }
}

TEST(NearestIndex, EmptySetRejected) {
    BoundaryPointSet empty;
    empty.points = Matrix(0, 2);
    EXPECT_THROW((void)build_index(empty), argument_error);
}

TEST(FilterFeasible, NoConstraintsIsIdentity) {
    const auto d = make_classification(200, 2, 2.0, 3);
    const auto model = train_logistic(d, 0.1, 100, 3).first;
    BoundaryOptions opt;
    opt.threshold_T = 300;
    const auto set = generate_boundary_points(*model, d, opt);
    EXPECT_EQ(filter_feasible(set, ConstraintSet{}, std::vector<double>{0.0, 0.0}), set);
}

TEST(FilterFeasible, ImmutableFeatureAlreadyMatchingIsIdentity) {
    BoundaryPointSet set;
    set.points = Matrix(0, 2);
    for (double y : {-1.0, 0.0, 4.0}) {
        set.points.append_row(std::vector<double>{1.0, y});
        set.pair_indices.push_back({0, 0});
        set.truncated.push_back(0);
    }
    ConstraintSet c;
    c.make_immutable(0);
    EXPECT_EQ(filter_feasible(set, c, std::vector<double>{1.0, 7.0}), set);
}

TEST(FilterFeasible, MatchesBruteForcePredicate) {
    Rng rng(4);
    BoundaryPointSet set;
    set.points = random_matrix(10'000, 4, rng);
    set.pair_indices.assign(10'000, {0, 0});
    set.truncated.assign(10'000, 0);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> q(4);
        for (auto& v : q) v = rng.uniform(-4, 4);
        const auto c = random_constraints(4, q, rng);
        std::vector<std::size_t> expected;
        for (std::size_t i = 0; i < set.size(); ++i)
            if (feasible_oracle(set.points.row(i), q, c, 0.5)) expected.push_back(i);
        ASSERT_EQ(feasible_rows(set, c, q, 0.5), expected);
        ASSERT_EQ(filter_feasible(set, c, q).size(), expected.size());
    }
}

TEST(FallbackBox, DefaultFractionAroundQuery) {
    const auto box = fallback_box(std::vector<double>{10.0, 20.0}, ConstraintSet{});
    EXPECT_EQ(box, (Bounds{{8.0, 12.0}, {16.0, 24.0}}));
}

TEST(FallbackBox, PinsAndBoundsIntersect) {
    ConstraintSet c;
    c.make_immutable(0).set_equal(1, 3.0).set_upper(2, 10.5).set_delta(3, 0.5).set_lower(4, 100.0);
    const auto box = fallback_box(std::vector<double>{10.0, 20.0, 10.0, 10.0, 10.0}, c);
    EXPECT_EQ(box[0], (std::pair{10.0, 10.0}));
    EXPECT_EQ(box[1], (std::pair{3.0, 3.0}));
    EXPECT_EQ(box[2], (std::pair{8.0, 10.5}));
    EXPECT_EQ(box[3], (std::pair{5.0, 15.0}));
    EXPECT_EQ(box[4], (std::pair{12.0, 12.0}));
}

TEST(BoundedCounterfactual, BoundaryPointInsideBoxGivesZero) {
    Matrix m(0, 2);
    m.append_row(std::vector<double>{11.0, 17.0});
    m.append_row(std::vector<double>{40.0, 40.0});
    const NearestIndex index(m, {0, 1});
    const auto r = bounded_counterfactual(std::vector<double>{10.0, 20.0}, ConstraintSet{}, index);
    EXPECT_EQ(r.distance, 0.0);
    EXPECT_EQ(r.point, (Instance{11.0, 17.0}));
}

TEST(BoundedCounterfactual, NoWorseThanDenseGridAndNotBelowExactMinimum) {
    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        Matrix m(0, 2);
        for (int k = 0; k < 50; ++k) m.append_row(std::vector<double>{rng.uniform(-30, 30), rng.uniform(-30, 40)});
        std::vector<std::size_t> ids(50);
        std::iota(ids.begin(), ids.end(), 0);
        const NearestIndex index(m, ids);
        const std::vector<double> q{rng.uniform(5, 15), rng.uniform(5, 25)};
        const auto r = bounded_counterfactual(q, ConstraintSet{}, index, 64, trial);
        const auto box = fallback_box(q, ConstraintSet{});
        ASSERT_TRUE(inside_box(r.point, box));
        ASSERT_DOUBLE_EQ(r.distance, index.nearest(r.point).distance);

        double grid_best = std::numeric_limits<double>::infinity();
        for (int i = 0; i < 200; ++i)
            for (int j = 0; j < 200; ++j) {
                const std::vector<double> p{box[0].first + (box[0].second - box[0].first) * i / 199.0,
                                            box[1].first + (box[1].second - box[1].first) * j / 199.0};
                for (std::size_t k = 0; k < m.rows(); ++k) grid_best = std::min(grid_best, l2_distance(p, m.row(k)));
            }
        double exact = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < m.rows(); ++k) {
            double s = 0.0;
            for (int f = 0; f < 2; ++f) {
                const double gap = std::max({box[f].first - m(k, f), 0.0, m(k, f) - box[f].second});
                s += gap * gap;
            }
            exact = std::min(exact, std::sqrt(s));
        }
        EXPECT_LE(r.distance, 1.02 * grid_best + 1e-12);
        EXPECT_GE(r.distance, exact - 1e-12);
    }
}

TEST(BoundedCounterfactual, AllFeaturesImmutableIsAnError) {
    Matrix m(0, 2);
    m.append_row(std::vector<double>{0.0, 0.0});
    const NearestIndex index(m, {0});
    ConstraintSet c;
    c.make_immutable(0).set_equal(1, 2.0);
    EXPECT_THROW((void)bounded_counterfactual(std::vector<double>{1.0, 1.0}, c, index), no_mutable_features);
}

TEST(Explain, ToyQueryAgainstSvmFlips) {
    const auto toy = make_toy();
    const auto svm = train_linear_svm(toy, 1e-2, 500, 0).first;
    ASSERT_EQ(accuracy(*svm, toy), 1.0);
    BoundaryOptions opt;
    opt.threshold_T = 100;
    const auto set = std::make_shared<const BoundaryPointSet>(generate_boundary_points(*svm, toy, opt));
    const std::vector<double> q{11.0, 15.0};
    const auto r = explain(svm, set, q, ConstraintSet{});
    EXPECT_EQ(r.mode, ResultMode::feasible);
    ASSERT_TRUE(r.crossed.has_value());
    EXPECT_NE(svm->predict(*r.crossed), svm->predict(q));
    EXPECT_DOUBLE_EQ(r.distance, l2_distance(q, r.boundary_point));
}

TEST(Explain, ExcludingEveryPointFallsBackWithCategoricalsUnchanged) {
    const auto d = mixed_dataset(400, 6);
    const auto model = train_logistic(d, 0.1, 200, 6).first;
    BoundaryOptions opt;
    opt.threshold_T = 500;
    const auto set = std::make_shared<const BoundaryPointSet>(generate_boundary_points(*model, d, opt));
    const Explainer explainer(model, set, d.schema());
    std::vector<double> q(d.row(0).begin(), d.row(0).end());
    auto c = ConstraintSet::for_schema(d.schema());
    c.set_lower(0, 1e6);
    const auto r = explainer.explain(q, c);
    EXPECT_EQ(r.mode, ResultMode::bounded_fallback);
    EXPECT_FALSE(r.crossed.has_value());
    EXPECT_EQ(r.boundary_point[2], q[2]);
    EXPECT_TRUE(inside_box(r.boundary_point, fallback_box(q, c)));
    EXPECT_DOUBLE_EQ(r.distance, l2_distance(q, r.boundary_point));
}

TEST(Explain, NoMutableFeaturesIsAnError) {
    const auto toy = make_toy();
    const auto model = train_logistic(toy, 0.1, 100, 0).first;
    const auto set = std::make_shared<const BoundaryPointSet>(generate_boundary_points(*model, toy, {}));
    ConstraintSet c;
    c.make_immutable(0).make_immutable(1);
    EXPECT_THROW((void)explain(model, set, std::vector<double>{11.0, 15.0}, c), no_mutable_features);
}

TEST(Explain, FailedCrossingIsFlaggedNotThrown) {
    const auto toy = make_toy();
    const auto model = train_logistic(toy, 0.1, 200, 0).first;
    const auto set = std::make_shared<const BoundaryPointSet>(generate_boundary_points(*model, toy, {}));
    ExplainOptions opt;
    opt.eps0 = 1e-15;
    opt.max_doublings = 0;
    int failed = 0;
    for (std::size_t i = 0; i < toy.size(); ++i) {
        const auto r = explain(model, set, toy.row(i), ConstraintSet{}, opt);
        EXPECT_EQ(r.mode, ResultMode::feasible);
        if (r.crossing_failed) {
            ++failed;
            EXPECT_FALSE(r.crossed.has_value());
        } else {
            ASSERT_TRUE(r.crossed.has_value());
            EXPECT_NE(model->predict(*r.crossed), r.query_label);
        }
    }
    EXPECT_GT(failed, 0);
}

TEST(Explain, LinearModelDistanceMatchesHyperplane) {
    const auto d = make_classification(2000, 2, 3.0, 7);
    const auto model = train_logistic(d, 0.1, 300, 7).first;
    BoundaryOptions opt;
    opt.threshold_T = 50'000;
    const auto set = std::make_shared<const BoundaryPointSet>(generate_boundary_points(*model, d, opt));
    ASSERT_GE(set->size(), 50'000u);
    const Explainer explainer(model, set);
    int checked = 0, within = 0;
    for (auto id : sample_class1_queries(d, 50, 7)) {
        const auto q = d.row(id);
        const auto r = explainer.explain(q, ConstraintSet{});
        const double analytic = model->distance_to_hyperplane(q);
        ++checked;
        within += std::abs(r.distance - analytic) <= 0.05 * analytic;
    }
    EXPECT_GE(within, checked * 9 / 10);
}

TEST(ExplainProperties, SoundnessExactnessAndFlip) {
    const auto d = mixed_dataset(300, 8);
    const std::vector<ClassifierPtr> models{train_logistic(d, 0.1, 200, 8).first, train_mlp(d, {8}, 0.2, 200, 8).first};
    Rng rng(8);
    for (const auto& model : models) {
        BoundaryOptions opt;
        opt.threshold_T = 3000;
        const auto set = std::make_shared<const BoundaryPointSet>(generate_boundary_points(*model, d, opt));
        const Explainer explainer(model, set, d.schema());
        for (int trial = 0; trial < 100; ++trial) {
            const auto id = rng.index(d.size());
            const std::vector<double> q(d.row(id).begin(), d.row(id).end());
            auto c = random_constraints(3, q, rng);
            c.pin_categorical(d.schema());
            if (mutable_continuous_count(3, c) == 0) continue;
            const auto r = explainer.explain(q, c);
            if (r.mode == ResultMode::feasible) {
                ASSERT_TRUE(feasible_oracle(r.boundary_point, q, c, 0.5));
                if (r.crossed) {
                    ASSERT_TRUE(feasible_oracle(*r.crossed, q, c, 0.5));
                    ASSERT_NE(model->predict(*r.crossed), model->predict(q));
                } else {
                    ASSERT_TRUE(r.crossing_failed);
                }
                // Exact nearest over the brute-force feasible subset, lowest index on ties.
                std::size_t best = set->size();
                double best_d = std::numeric_limits<double>::infinity();
                for (std::size_t i = 0; i < set->size(); ++i) {
                    if (!feasible_oracle(set->points.row(i), q, c, 0.5)) continue;
                    const double s = squared_distance(set->points.row(i), q);
                    if (s < best_d) {
                        best_d = s;
                        best = i;
                    }
                }
                ASSERT_EQ(r.boundary_index, best);
            } else {
                for (std::size_t i = 0; i < set->size(); ++i) ASSERT_FALSE(feasible_oracle(set->points.row(i), q, c, 0.5));
                ASSERT_TRUE(inside_box(r.boundary_point, fallback_box(q, c)));
                ASSERT_EQ(r.boundary_point[2], q[2]);
            }
        }
    }
}

TEST(ExplainProperties, SupersetNeverIncreasesDistance) {
    const auto d = make_classification(300, 3, 1.5, 9);
    const auto model = train_logistic(d, 0.1, 200, 9).first;
    BoundaryOptions opt;
    opt.threshold_T = 4000;
    const auto full = generate_boundary_points(*model, d, opt);
    auto half = std::make_shared<BoundaryPointSet>(full);
    half->points = Matrix(0, 3);
    half->pair_indices.clear();
    half->truncated.clear();
    for (std::size_t i = 0; i < full.size(); i += 2) {
        half->points.append_row(full.points.row(i));
        half->pair_indices.push_back(full.pair_indices[i]);
        half->truncated.push_back(full.truncated[i]);
    }
    const Explainer big(model, std::make_shared<const BoundaryPointSet>(full)), small(model, half);
    Rng rng(9);
    for (int k = 0; k < 100; ++k) {
        const auto q = d.row(rng.index(d.size()));
        ConstraintSet c;
        c.set_delta(0, 0.5);
        const auto a = big.explain(q, c), b = small.explain(q, c);
        if (a.mode == ResultMode::feasible && b.mode == ResultMode::feasible) {
            EXPECT_LE(a.distance, b.distance);
        }
    }
}

TEST(ExplainProperties, ConcurrentCallsAgreeWithSequential) {
    const auto d = make_classification(300, 2, 2.0, 10);
    const auto model = train_logistic(d, 0.1, 200, 10).first;
    const auto set = std::make_shared<const BoundaryPointSet>(generate_boundary_points(*model, d, {}));
    const Explainer explainer(model, set);
    std::vector<ConstraintSet> constraints(4);
    constraints[1].set_delta(0, 0.3);
    constraints[2].make_immutable(1);
    constraints[3].set_lower(0, 0.0);
    std::vector<double> expected;
    for (std::size_t i = 0; i < 50; ++i) expected.push_back(explainer.explain(d.row(i), constraints[i % 4]).distance);
    const Explainer shared(model, set);
    std::vector<double> got(50);
    {
        std::vector<std::jthread> workers;
        for (int t = 0; t < 4; ++t)
            workers.emplace_back([&, t] {
                for (std::size_t i = t; i < 50; i += 4) got[i] = shared.explain(d.row(i), constraints[i % 4]).distance;
            });
    }
    EXPECT_EQ(got, expected);
}

TEST(Records, CounterfactualJsonShape) {
    const auto toy = make_toy();
    const auto model = train_logistic(toy, 0.1, 200, 0).first;
    const auto set = std::make_shared<const BoundaryPointSet>(generate_boundary_points(*model, toy, {}));
    const auto r = explain(model, set, std::vector<double>{11.0, 15.0}, ConstraintSet{});
    const auto j = to_json(r, &toy.schema());
    EXPECT_EQ(j["mode"], "feasible");
    EXPECT_EQ(j["distance"].get<double>(), r.distance);
    ASSERT_EQ(j["deltas"].size(), 2u);
    EXPECT_EQ(j["deltas"][0]["featureName"], toy.schema()[0].name);
    EXPECT_EQ(j["deltas"][1]["before"].get<double>(), 15.0);
    EXPECT_TRUE(j.contains("crossed"));
}

TEST(Records, ConstraintsFromJsonByNameAndIndex) {
    const auto toy = make_toy();
    const nlohmann::json j = {{"immutable", {toy.schema()[0].name}}, {"delta", {{"1", 0.15}}}, {"lower", {{"1", 2.0}}}};
    const auto c = constraints_from_json(j, toy.schema());
    EXPECT_TRUE(c.immutable().contains(0));
    EXPECT_EQ(c.delta_fractions().at(1), 0.15);
    EXPECT_EQ(c.lower_bounds().at(1), 2.0);
    EXPECT_THROW((void)constraints_from_json(nlohmann::json{{"immutable", {"nope"}}}, toy.schema()), argument_error);
}
