#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "ssba/models/classifier.hpp"

namespace ssba {

/// Affine decision function w.x + b. Label 1 iff w.x + b >= 0, which is the same as
/// sigmoid(w.x + b) >= 0.5 for logistic models and sign 0 -> 1 for SVMs.
class LinearModel final : public Classifier {
public:
    LinearModel(std::string family, std::vector<double> weights, double bias,
                std::map<std::string, std::string> hyper = {})
        : family_(std::move(family)), weights_(std::move(weights)), bias_(bias), hyper_(std::move(hyper)) {}

    [[nodiscard]] std::string_view family() const override { return family_; }
    [[nodiscard]] std::size_t width() const override { return weights_.size(); }

    [[nodiscard]] double decision(std::span<const double> x) const { return dot(weights_, x) + bias_; }

    [[nodiscard]] Label predict(std::span<const double> x) const override { return decision(x) >= 0.0 ? 1 : 0; }

    [[nodiscard]] const std::vector<double>& weights() const noexcept { return weights_; }
    [[nodiscard]] double bias() const noexcept { return bias_; }

    /// Euclidean distance from x to the hyperplane w.x + b = 0.
    [[nodiscard]] double distance_to_hyperplane(std::span<const double> x) const {
        return std::abs(decision(x)) / std::sqrt(dot(weights_, weights_));
    }

    void write_parameters(std::ostream& out) const override {
        out << "weights " << weights_.size();
        for (double w : weights_) {
            out << ' ';
            detail::put(out, w);
        }
        out << "\nbias ";
        detail::put(out, bias_);
        out << '\n';
    }

    static std::shared_ptr<LinearModel> read(std::string family, detail::TokenReader& in) {
        in.expect("weights");
        std::vector<double> w(in.count());
        for (auto& v : w) v = in.real();
        in.expect("bias");
        const double b = in.real();
        return std::make_shared<LinearModel>(std::move(family), std::move(w), b);
    }

    [[nodiscard]] std::map<std::string, std::string> hyperparameters() const override { return hyper_; }

private:
    std::string family_;
    std::vector<double> weights_;
    double bias_;
    std::map<std::string, std::string> hyper_;
};

/// Full-batch gradient descent on mean log-loss, starting from zero weights.
inline std::pair<std::shared_ptr<LinearModel>, TrainReport> train_logistic(const Dataset& data, double learning_rate,
                                                                           std::size_t epochs, std::uint64_t seed) {
    detail::require_both_classes(data, "train_logistic");
    if (!(learning_rate > 0.0)) throw argument_error("train_logistic: learning_rate must be positive");
    const std::size_t n = data.width();
    const auto count = static_cast<double>(data.size());
    std::vector<double> w(n, 0.0), grad(n);
    double b = 0.0;
    double loss = 0.0;
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        std::fill(grad.begin(), grad.end(), 0.0);
        double grad_b = 0.0;
        loss = 0.0;
        for (std::size_t i = 0; i < data.size(); ++i) {
            const auto x = data.row(i);
            const double z = dot(w, x) + b;
            const Label y = data.labels()[i];
            loss += detail::logit_loss(z, y);
            const double r = detail::sigmoid(z) - y;
            for (std::size_t j = 0; j < n; ++j) grad[j] += r * x[j];
            grad_b += r;
        }
        loss /= count;
        if (!std::isfinite(loss)) throw training_error("train_logistic: loss became non-finite (learning rate too large?)");
        for (std::size_t j = 0; j < n; ++j) w[j] -= learning_rate * grad[j] / count;
        b -= learning_rate * grad_b / count;
    }
    // Loss at the final parameters.
    double final_loss = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) final_loss += detail::logit_loss(dot(w, data.row(i)) + b, data.labels()[i]);
    final_loss /= count;
    if (!std::isfinite(final_loss) || !std::isfinite(b))
        throw training_error("train_logistic: loss became non-finite (learning rate too large?)");

    auto model = std::make_shared<LinearModel>(
        "logistic", std::move(w), b,
        std::map<std::string, std::string>{{"learning_rate", std::to_string(learning_rate)},
                                           {"epochs", std::to_string(epochs)},
                                           {"seed", std::to_string(seed)}});
    TrainReport report{accuracy(*model, data), epochs, final_loss};
    return {std::move(model), report};
}

/// Hinge loss plus (regularization / 2)|w|^2, minimized by full-batch subgradient descent with
/// step size 0.1 / (1 + 0.1 * regularization * t).
inline std::pair<std::shared_ptr<LinearModel>, TrainReport> train_linear_svm(const Dataset& data, double regularization,
                                                                             std::size_t epochs, std::uint64_t seed) {
    detail::require_both_classes(data, "train_linear_svm");
    if (!(regularization > 0.0)) throw argument_error("train_linear_svm: regularization must be positive");
    constexpr double eta0 = 0.1;
    const std::size_t n = data.width();
    const auto count = static_cast<double>(data.size());
    std::vector<double> w(n, 0.0), grad(n);
    double b = 0.0;
    const auto objective = [&] {
        double hinge = 0.0;
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double s = data.labels()[i] == 1 ? 1.0 : -1.0;
            hinge += std::max(0.0, 1.0 - s * (dot(w, data.row(i)) + b));
        }
        return hinge / count + 0.5 * regularization * dot(w, w);
    };
    for (std::size_t t = 0; t < epochs; ++t) {
        for (std::size_t j = 0; j < n; ++j) grad[j] = regularization * w[j];
        double grad_b = 0.0;
        for (std::size_t i = 0; i < data.size(); ++i) {
            const auto x = data.row(i);
            const double s = data.labels()[i] == 1 ? 1.0 : -1.0;
            if (s * (dot(w, x) + b) < 1.0) {
                for (std::size_t j = 0; j < n; ++j) grad[j] -= s * x[j] / count;
                grad_b -= s / count;
            }
        }
        const double eta = eta0 / (1.0 + eta0 * regularization * static_cast<double>(t));
        for (std::size_t j = 0; j < n; ++j) w[j] -= eta * grad[j];
        b -= eta * grad_b;
    }
    const double final_loss = objective();
    if (!std::isfinite(final_loss)) throw training_error("train_linear_svm: objective became non-finite");

    auto model = std::make_shared<LinearModel>(
        "linear_svm", std::move(w), b,
        std::map<std::string, std::string>{{"regularization", std::to_string(regularization)},
                                           {"epochs", std::to_string(epochs)},
                                           {"seed", std::to_string(seed)}});
    TrainReport report{accuracy(*model, data), epochs, final_loss};
    return {std::move(model), report};
}

}  // namespace ssba
