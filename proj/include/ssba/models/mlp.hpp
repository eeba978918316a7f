#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "ssba/models/classifier.hpp"

namespace ssba {

/// Fully connected network: tanh hidden layers and a single sigmoid output unit.
///
/// Parameters live in one flat vector, layer by layer, each layer stored as its weight matrix
/// (row-major, fan_out x fan_in) followed by its bias vector. Loss is mean binary cross-entropy.
class Mlp final : public Classifier {
public:
    /// sizes = {input, hidden..., 1}. Weights are Xavier-uniform from the seed, biases zero.
    Mlp(std::vector<std::size_t> sizes, std::uint64_t seed) : sizes_(std::move(sizes)) {
        validate();
        params_.assign(parameter_count(), 0.0);
        Rng rng(seed);
        std::size_t offset = 0;
        for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
            const std::size_t in = sizes_[l], out = sizes_[l + 1];
            const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
            for (std::size_t k = 0; k < in * out; ++k) params_[offset + k] = rng.uniform(-limit, limit);
            offset += in * out + out;
        }
    }

    Mlp(std::vector<std::size_t> sizes, std::vector<double> params, std::map<std::string, std::string> hyper = {})
        : sizes_(std::move(sizes)), params_(std::move(params)), hyper_(std::move(hyper)) {
        validate();
        if (params_.size() != parameter_count()) throw argument_error("Mlp: parameter vector has the wrong length");
    }

    [[nodiscard]] std::string_view family() const override { return "mlp"; }
    [[nodiscard]] std::size_t width() const override { return sizes_.front(); }
    [[nodiscard]] const std::vector<std::size_t>& sizes() const noexcept { return sizes_; }

    [[nodiscard]] std::span<const double> parameters() const noexcept { return params_; }
    [[nodiscard]] std::span<double> parameters() noexcept { return params_; }

    [[nodiscard]] std::size_t parameter_count() const {
        std::size_t total = 0;
        for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) total += sizes_[l] * sizes_[l + 1] + sizes_[l + 1];
        return total;
    }

    /// Output logit; label 1 iff logit >= 0 (sigmoid >= 0.5).
    [[nodiscard]] double logit(std::span<const double> x) const {
        std::vector<double> a(x.begin(), x.end()), z;
        std::size_t offset = 0;
        for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
            affine(l, offset, a, z);
            offset += sizes_[l] * sizes_[l + 1] + sizes_[l + 1];
            if (l + 2 < sizes_.size())
                for (auto& v : z) v = std::tanh(v);
            a.swap(z);
        }
        return a[0];
    }

    [[nodiscard]] Label predict(std::span<const double> x) const override { return logit(x) >= 0.0 ? 1 : 0; }

    [[nodiscard]] double loss(const Matrix& x, std::span<const Label> y) const {
        double total = 0.0;
        for (std::size_t i = 0; i < x.rows(); ++i) total += detail::logit_loss(logit(x.row(i)), y[i]);
        return total / static_cast<double>(x.rows());
    }

    /// Mean loss over the rows, with its gradient w.r.t. every parameter written into grad.
    double loss_and_gradient(const Matrix& x, std::span<const Label> y, std::span<double> grad) const {
        std::fill(grad.begin(), grad.end(), 0.0);
        const std::size_t layers = sizes_.size() - 1;
        std::vector<std::vector<double>> acts(layers + 1);
        std::vector<std::size_t> offsets(layers);
        for (std::size_t l = 0, off = 0; l < layers; ++l) {
            offsets[l] = off;
            off += sizes_[l] * sizes_[l + 1] + sizes_[l + 1];
        }
        const auto count = static_cast<double>(x.rows());
        double total = 0.0;
        std::vector<double> delta, prev;
        for (std::size_t i = 0; i < x.rows(); ++i) {
            acts[0].assign(x.row(i).begin(), x.row(i).end());
            for (std::size_t l = 0; l < layers; ++l) {
                affine(l, offsets[l], acts[l], acts[l + 1]);
                if (l + 1 < layers)
                    for (auto& v : acts[l + 1]) v = std::tanh(v);
            }
            const double z = acts[layers][0];
            total += detail::logit_loss(z, y[i]);
            delta.assign(1, (detail::sigmoid(z) - y[i]) / count);
            for (std::size_t l = layers; l-- > 0;) {
                const std::size_t in = sizes_[l], out = sizes_[l + 1];
                double* gw = grad.data() + offsets[l];
                double* gb = gw + in * out;
                const double* w = params_.data() + offsets[l];
                for (std::size_t o = 0; o < out; ++o) {
                    for (std::size_t k = 0; k < in; ++k) gw[o * in + k] += delta[o] * acts[l][k];
                    gb[o] += delta[o];
                }
                if (l == 0) break;
                prev.assign(in, 0.0);
                for (std::size_t o = 0; o < out; ++o)
                    for (std::size_t k = 0; k < in; ++k) prev[k] += w[o * in + k] * delta[o];
                for (std::size_t k = 0; k < in; ++k) prev[k] *= 1.0 - acts[l][k] * acts[l][k];
                delta.swap(prev);
            }
        }
        return total / count;
    }

    void write_parameters(std::ostream& out) const override {
        out << "layers " << sizes_.size();
        for (auto s : sizes_) out << ' ' << s;
        out << "\nparams " << params_.size() << '\n';
        for (std::size_t i = 0; i < params_.size(); ++i) {
            detail::put(out, params_[i]);
            out << (i + 1 == params_.size() || i % 8 == 7 ? '\n' : ' ');
        }
    }

    static std::shared_ptr<Mlp> read(detail::TokenReader& in) {
        in.expect("layers");
        std::vector<std::size_t> sizes(in.count());
        for (auto& s : sizes) s = in.count();
        in.expect("params");
        std::vector<double> params(in.count());
        for (auto& p : params) p = in.real();
        return std::make_shared<Mlp>(std::move(sizes), std::move(params));
    }

    [[nodiscard]] std::map<std::string, std::string> hyperparameters() const override { return hyper_; }
    void set_hyperparameters(std::map<std::string, std::string> h) { hyper_ = std::move(h); }

private:
    void validate() const {
        if (sizes_.size() < 3) throw argument_error("Mlp: at least one hidden layer is required");
        if (sizes_.back() != 1) throw argument_error("Mlp: output layer must have a single unit");
        for (auto s : sizes_)
            if (s == 0) throw argument_error("Mlp: layer sizes must be positive");
    }

    void affine(std::size_t layer, std::size_t offset, const std::vector<double>& in_act, std::vector<double>& out) const {
        const std::size_t in = sizes_[layer], n_out = sizes_[layer + 1];
        const double* w = params_.data() + offset;
        const double* b = w + in * n_out;
        out.assign(n_out, 0.0);
        for (std::size_t o = 0; o < n_out; ++o) {
            double s = b[o];
            for (std::size_t k = 0; k < in; ++k) s += w[o * in + k] * in_act[k];
            out[o] = s;
        }
    }

    std::vector<std::size_t> sizes_;
    std::vector<double> params_;
    std::map<std::string, std::string> hyper_;
};

/// Gradient descent with backprop. batch_size 0 means full batch; otherwise rows are reshuffled
/// (seeded) at the start of every epoch.
inline std::pair<std::shared_ptr<Mlp>, TrainReport> train_mlp(const Dataset& data, const std::vector<std::size_t>& hidden_sizes,
                                                              double learning_rate, std::size_t epochs, std::uint64_t seed,
                                                              std::size_t batch_size = 0) {
    if (hidden_sizes.empty()) throw argument_error("train_mlp: hidden_sizes must not be empty");
    if (!(learning_rate > 0.0)) throw argument_error("train_mlp: learning_rate must be positive");
    detail::require_both_classes(data, "train_mlp");

    std::vector<std::size_t> sizes{data.width()};
    sizes.insert(sizes.end(), hidden_sizes.begin(), hidden_sizes.end());
    sizes.push_back(1);
    auto model = std::make_shared<Mlp>(sizes, seed);
    std::vector<double> grad(model->parameter_count());
    auto params = model->parameters();

    Rng shuffle_rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t step = batch_size == 0 ? data.size() : std::min(batch_size, data.size());

    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        if (batch_size == 0) {
            model->loss_and_gradient(data.rows(), data.labels(), grad);
            for (std::size_t k = 0; k < params.size(); ++k) params[k] -= learning_rate * grad[k];
        } else {
            shuffle_rng.shuffle(std::span(order));
            for (std::size_t start = 0; start < order.size(); start += step) {
                const auto stop = std::min(order.size(), start + step);
                const Dataset batch = data.subset(std::span(order).subspan(start, stop - start));
                model->loss_and_gradient(batch.rows(), batch.labels(), grad);
                for (std::size_t k = 0; k < params.size(); ++k) params[k] -= learning_rate * grad[k];
            }
        }
        if (!std::isfinite(params[0]) || !std::isfinite(params[params.size() - 1]))
            throw training_error("train_mlp: parameters became non-finite");
    }
    const double final_loss = model->loss(data.rows(), data.labels());
    if (!std::isfinite(final_loss)) throw training_error("train_mlp: loss became non-finite");

    std::string hidden;
    for (auto h : hidden_sizes) hidden += (hidden.empty() ? "" : ",") + std::to_string(h);
    model->set_hyperparameters({{"hidden_sizes", hidden},
                                {"learning_rate", std::to_string(learning_rate)},
                                {"epochs", std::to_string(epochs)},
                                {"batch_size", std::to_string(batch_size)},
                                {"seed", std::to_string(seed)}});
    TrainReport report{accuracy(*model, data), epochs, final_loss};
    return {std::move(model), report};
}

}  // namespace ssba
