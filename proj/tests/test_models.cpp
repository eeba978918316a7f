#include <gtest/gtest.h>

#include <numbers>
#include <sstream>

#include "ssba/models.hpp"

using namespace ssba;

namespace {

Dataset separable_1d() {
    Matrix m(0, 1);
    std::vector<Label> y;
    for (int i = 0; i < 50; ++i) {
        m.append_row(std::vector<double>{-1.0});
        y.push_back(0);
        m.append_row(std::vector<double>{1.0});
        y.push_back(1);
    }
    return Dataset(FeatureSchema::continuous(1), std::move(m), std::move(y));
}

Dataset xor_data() {
    Matrix m(0, 2);
    m.append_row(std::vector<double>{0, 0});
    m.append_row(std::vector<double>{0, 1});
    m.append_row(std::vector<double>{1, 0});
    m.append_row(std::vector<double>{1, 1});
    return Dataset(FeatureSchema::continuous(2), std::move(m), {0, 1, 1, 0});
}

Matrix random_points(std::size_t count, std::size_t width, std::uint64_t seed, double scale = 4.0) {
    Rng rng(seed);
    Matrix m(count, width);
    for (auto& v : m.data()) v = rng.uniform(-scale, scale);
    return m;
}

std::vector<ClassifierPtr> one_of_each(const Dataset& d) {
    return {train_logistic(d, 0.1, 100, 1).first, train_linear_svm(d, 1e-2, 100, 1).first,
            train_mlp(d, {6, 4}, 0.1, 100, 1).first, train_random_forest(d, 7, 5, 1).first};
}

// Central differences on the flat parameter vector; relative error uses max(|a|, |n|) with an
// absolute floor so that exactly-zero gradients compare by absolute error.
double max_gradient_relative_error(Mlp& net, const Dataset& d) {
    std::vector<double> analytic(net.parameter_count());
    net.loss_and_gradient(d.rows(), d.labels(), analytic);
    auto p = net.parameters();
    constexpr double h = 1e-5;
    double worst = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
        const double saved = p[k];
        p[k] = saved + h;
        const double up = net.loss(d.rows(), d.labels());
        p[k] = saved - h;
        const double down = net.loss(d.rows(), d.labels());
        p[k] = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double denom = std::max({std::abs(analytic[k]), std::abs(numeric), 1e-6});
        worst = std::max(worst, std::abs(analytic[k] - numeric) / denom);
    }
    return worst;
}

}  // namespace

TEST(Logistic, SeparableOneDimensional) {
    const auto [model, report] = train_logistic(separable_1d(), 0.5, 200, 0);
    EXPECT_EQ(report.train_accuracy, 1.0);
    EXPECT_EQ(report.epochs_or_trees, 200u);
    EXPECT_TRUE(std::isfinite(report.final_loss));
}

TEST(Logistic, HyperplanePointIsLabelOne) {
    const LinearModel m("logistic", {2.0, -1.0}, 0.5);
    EXPECT_EQ(m.predict(std::vector<double>{0.0, 0.5}), 1);  // 2*0 - 0.5 + 0.5 == 0
    EXPECT_EQ(m.predict(std::vector<double>{0.0, 0.5000001}), 0);
}

TEST(Logistic, DirectionWithinFifteenDegreesOfMeanDifference) {
    const auto d = make_classification(2000, 2, 4.0, 21);
    const auto [model, report] = train_logistic(d, 0.1, 500, 21);
    std::vector<double> m0(2), m1(2);
    for (std::size_t i = 0; i < d.size(); ++i)
        for (std::size_t j = 0; j < 2; ++j) (d.labels()[i] ? m1 : m0)[j] += d.row(i)[j];
    std::vector<double> diff{m1[0] / d.count(1) - m0[0] / d.count(0), m1[1] / d.count(1) - m0[1] / d.count(0)};
    const auto& w = model->weights();
    const double cosine = dot(w, diff) / std::sqrt(dot(w, w) * dot(diff, diff));
    EXPECT_GT(cosine, std::cos(15.0 * std::numbers::pi / 180.0));
}

TEST(Logistic, SingleClassAndDivergence) {
    Matrix m(3, 1, 1.0);
    EXPECT_THROW((void)train_logistic(Dataset(FeatureSchema::continuous(1), m, {1, 1, 1}), 0.1, 10, 0), argument_error);
    Matrix huge(0, 1);
    huge.append_row(std::vector<double>{1e300});
    huge.append_row(std::vector<double>{-1e300});
    EXPECT_THROW((void)train_logistic(Dataset(FeatureSchema::continuous(1), huge, {1, 0}), 1e10, 50, 0), training_error);
}

TEST(LinearSvm, SeparableOneDimensional) {
    EXPECT_EQ(train_linear_svm(separable_1d(), 1e-2, 200, 0).second.train_accuracy, 1.0);
}

TEST(LinearSvm, ZeroRegularizationForbidden) {
    EXPECT_THROW((void)train_linear_svm(separable_1d(), 0.0, 10, 0), argument_error);
}

TEST(LinearSvm, SignZeroMapsToOne) {
    const LinearModel m("linear_svm", {1.0}, -2.0);
    EXPECT_EQ(m.predict(std::vector<double>{2.0}), 1);
}

TEST(LinearSvm, AgreesWithLogisticOracle) {
    const auto d = make_classification(1000, 2, 3.0, 5);
    const auto [svm, report] = train_linear_svm(d, 1e-3, 300, 5);
    // Unit-variance clusters with means 3 apart cannot be separated better than Phi(1.5).
    const double bayes = 0.5 * std::erfc(-1.5 / std::numbers::sqrt2);
    EXPECT_GE(report.train_accuracy, bayes - 0.02);
    const auto lr = train_logistic(d, 0.1, 500, 5).first;
    std::size_t agree = 0;
    for (std::size_t i = 0; i < d.size(); ++i) agree += svm->predict(d.row(i)) == lr->predict(d.row(i));
    EXPECT_GE(static_cast<double>(agree) / d.size(), 0.95);
}

TEST(Mlp, LearnsXor) {
    const auto d = xor_data();
    const auto [model, report] = train_mlp(d, {8}, 0.5, 5000, 3);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(model->predict(d.row(i)), d.labels()[i]) << "row " << i;
    EXPECT_EQ(report.train_accuracy, 1.0);
}

TEST(Mlp, EmptyHiddenSizesRejected) {
    EXPECT_THROW((void)train_mlp(xor_data(), {}, 0.1, 10, 0), argument_error);
}

TEST(Mlp, GradientMatchesFiniteDifferencesOnTenPoints) {
    const auto d = make_classification(10, 3, 1.0, 4);
    Mlp net({3, 5, 4, 1}, 4);
    EXPECT_LT(max_gradient_relative_error(net, d), 1e-4);
}

TEST(Mlp, GradientCheckOnRandomNetworks) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed + 100);
        const auto width = 1 + rng.index(4);
        std::vector<std::size_t> sizes{width};
        const auto depth = 1 + rng.index(2);
        for (std::size_t l = 0; l < depth; ++l) sizes.push_back(1 + rng.index(6));
        sizes.push_back(1);
        Mlp net(sizes, seed);
        const auto d = make_classification(10, width, 2.0, seed);
        EXPECT_LT(max_gradient_relative_error(net, d), 1e-4) << "seed " << seed;
    }
}

TEST(Mlp, MiniBatchIsSeeded) {
    const auto d = make_classification(200, 2, 2.0, 1);
    const auto a = train_mlp(d, {5}, 0.1, 20, 9, 32).first;
    const auto b = train_mlp(d, {5}, 0.1, 20, 9, 32).first;
    EXPECT_EQ(a->fingerprint(), b->fingerprint());
}

TEST(RandomForest, SingleStumpSeparatesOneDimensionalData) {
    const auto [model, report] = train_random_forest(separable_1d(), 1, 1, 0);
    EXPECT_EQ(report.train_accuracy, 1.0);
}

TEST(RandomForest, TiedVoteIsLabelOne) {
    DecisionTree zero, one;
    zero.nodes.push_back({-1, 0.0, 0, 0, 0});
    one.nodes.push_back({-1, 0.0, 0, 0, 1});
    const RandomForest forest(1, {zero, one});
    EXPECT_EQ(forest.predict(std::vector<double>{0.0}), 1);
}

TEST(RandomForest, ArgumentErrors) {
    EXPECT_THROW((void)train_random_forest(separable_1d(), 0, 3, 0), argument_error);
    EXPECT_THROW((void)train_random_forest(separable_1d(), 3, 0, 0), argument_error);
}

TEST(RandomForest, ForestAtLeastAsAccurateAsSingleTree) {
    const auto d = make_classification(400, 4, 1.0, 13);
    const auto single = train_random_forest(d, 1, 4, 13).second.train_accuracy;
    const auto forest = train_random_forest(d, 25, 4, 13).second.train_accuracy;
    EXPECT_GE(forest, single);
}

TEST(PredictBatch, EmptyAndSingleton) {
    const auto d = make_classification(100, 3, 2.0, 2);
    for (const auto& m : one_of_each(d)) {
        EXPECT_TRUE(m->predict_batch(Matrix(0, 3)).empty());
        const auto one = random_points(1, 3, 4);
        EXPECT_EQ(m->predict_batch(one), std::vector<Label>{m->predict(one.row(0))});
    }
}

TEST(PredictBatch, WidthMismatch) {
    const auto d = make_classification(100, 3, 2.0, 2);
    for (const auto& m : one_of_each(d)) EXPECT_THROW((void)m->predict_batch(Matrix(2, 4)), argument_error);
}

TEST(PredictBatch, EqualsSequentialLoopOnTenThousandPoints) {
    const auto d = make_classification(300, 3, 2.0, 2);
    const auto probes = random_points(10'000, 3, 77);
    for (const auto& m : one_of_each(d)) {
        const auto batch = predict_batch(*m, probes);
        for (std::size_t i = 0; i < probes.rows(); ++i) ASSERT_EQ(batch[i], m->predict(probes.row(i))) << m->family();
    }
}

TEST(Determinism, SameSeedSamePredictions) {
    const auto d = make_classification(300, 3, 1.5, 2);
    const auto a = one_of_each(d);
    const auto b = one_of_each(d);
    const auto probes = random_points(2000, 3, 5);
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(a[k]->predict_batch(probes), b[k]->predict_batch(probes));
}

TEST(ModelFile, RoundTripReproducesPredictionsExactly) {
    const auto d = make_classification(300, 3, 1.5, 2);
    const auto probes = random_points(5000, 3, 6);
    for (const auto& m : one_of_each(d)) {
        std::stringstream s;
        save_model(s, *m);
        const auto loaded = load_model(s);
        EXPECT_EQ(loaded->family(), m->family());
        EXPECT_EQ(loaded->fingerprint(), m->fingerprint());
        EXPECT_EQ(loaded->predict_batch(probes), m->predict_batch(probes));
    }
}

TEST(ModelFile, RejectsGarbage) {
    std::istringstream bad("ssba-model 9\nfamily logistic\n");
    EXPECT_THROW((void)load_model(bad), format_error);
    std::istringstream unknown("ssba-model 1\nfamily boosted\nwidth 2\n");
    EXPECT_THROW((void)load_model(unknown), format_error);
}

TEST(TrainModel, DispatchesByFamily) {
    const auto d = make_classification(200, 2, 3.0, 1);
    for (const char* family : {"logistic", "linear_svm", "mlp", "random_forest"}) {
        ModelSpec spec;
        spec.family = family;
        spec.epochs = 50;
        spec.n_trees = 5;
        EXPECT_EQ(train_model(d, spec).first->family(), family);
    }
    ModelSpec bad;
    bad.family = "kernel_svm";
    EXPECT_THROW((void)train_model(d, bad), argument_error);
}
