#pragma once

#include <string>
#include <vector>

#include "ssba/models/classifier.hpp"
#include "ssba/models/linear.hpp"
#include "ssba/models/mlp.hpp"
#include "ssba/models/model_io.hpp"
#include "ssba/models/random_forest.hpp"

namespace ssba {

/// Family name plus every hyperparameter any family understands; each family reads its own.
struct ModelSpec {
    std::string family = "logistic";  // logistic | linear_svm | mlp | random_forest
    double learning_rate = 0.1;
    std::size_t epochs = 500;
    double regularization = 1e-3;
    std::vector<std::size_t> hidden_sizes{16, 16};
    std::size_t batch_size = 0;
    std::size_t n_trees = 50;
    std::size_t max_depth = 8;
    std::size_t max_features = 0;
    std::uint64_t seed = 0;
};

[[nodiscard]] inline std::pair<ClassifierPtr, TrainReport> train_model(const Dataset& data, const ModelSpec& spec) {
    if (spec.family == "logistic") return train_logistic(data, spec.learning_rate, spec.epochs, spec.seed);
    if (spec.family == "linear_svm") return train_linear_svm(data, spec.regularization, spec.epochs, spec.seed);
    if (spec.family == "mlp")
        return train_mlp(data, spec.hidden_sizes, spec.learning_rate, spec.epochs, spec.seed, spec.batch_size);
    if (spec.family == "random_forest")
        return train_random_forest(data, spec.n_trees, spec.max_depth, spec.seed, spec.max_features);
    throw argument_error("unknown model family '" + spec.family + "'");
}

}  // namespace ssba
