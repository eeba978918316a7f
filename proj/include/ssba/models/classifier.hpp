#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <memory>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ssba/datasets.hpp"
#include "ssba/error.hpp"
#include "ssba/matrix.hpp"
#include "ssba/random.hpp"

namespace ssba {

struct TrainReport {
    double train_accuracy = 0.0;
    std::size_t epochs_or_trees = 0;
    double final_loss = std::numeric_limits<double>::quiet_NaN();  // NaN for forests
};

/// Uniform prediction interface over all model families.
///
/// Implementations are immutable after training: predict is a pure function of the point and the
/// fitted parameters, so one instance may be shared by any number of threads.
class Classifier {
public:
    virtual ~Classifier() = default;

    [[nodiscard]] virtual std::string_view family() const = 0;
    [[nodiscard]] virtual std::size_t width() const = 0;
    [[nodiscard]] virtual Label predict(std::span<const double> point) const = 0;

    /// Element-wise equal to calling predict on each row, in row order.
    [[nodiscard]] virtual std::vector<Label> predict_batch(const Matrix& points) const {
        check_batch(points);
        std::vector<Label> out(points.rows());
        for (std::size_t i = 0; i < points.rows(); ++i) out[i] = predict(points.row(i));
        return out;
    }

    /// Family-specific parameter block of the model file.
    virtual void write_parameters(std::ostream& out) const = 0;

    [[nodiscard]] virtual std::map<std::string, std::string> hyperparameters() const { return {}; }

    [[nodiscard]] std::uint64_t fingerprint() const {
        std::ostringstream s;
        s << family() << '\n' << width() << '\n';
        write_parameters(s);
        return fnv1a(s.str());
    }

protected:
    void check_batch(const Matrix& points) const {
        if (points.rows() > 0 && points.cols() != width())
            throw argument_error("predict_batch: point width " + std::to_string(points.cols()) +
                                 " does not match model width " + std::to_string(width()));
    }
};

using ClassifierPtr = std::shared_ptr<const Classifier>;

[[nodiscard]] inline double accuracy(const Classifier& model, const Dataset& data) {
    if (data.size() == 0) return 0.0;
    const auto predicted = model.predict_batch(data.rows());
    std::size_t hits = 0;
    for (std::size_t i = 0; i < data.size(); ++i) hits += predicted[i] == data.labels()[i];
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

[[nodiscard]] inline std::vector<Label> predict_batch(const Classifier& model, const Matrix& points) {
    return model.predict_batch(points);
}

namespace detail {

inline void require_both_classes(const Dataset& data, std::string_view who) {
    if (data.count(0) == 0 || data.count(1) == 0)
        throw argument_error(std::string(who) + ": training data must contain both classes");
}

inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

/// log(1 + e^z) without overflow.
inline double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

/// Binary cross-entropy written in terms of the logit.
inline double logit_loss(double z, Label y) { return softplus(z) - (y == 1 ? z : 0.0); }

inline void put(std::ostream& out, double v) {
    char buf[32];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    out.write(buf, end - buf);
}

/// Whitespace-token reader for model files.
class TokenReader {
public:
    explicit TokenReader(std::istream& in) : in_(in) {}

    std::string word() {
        std::string w;
        if (!(in_ >> w)) throw format_error("model file truncated");
        return w;
    }
    void expect(std::string_view keyword) {
        const auto w = word();
        if (w != keyword) throw format_error("model file: expected '" + std::string(keyword) + "', found '" + w + "'");
    }
    double real() {
        const auto w = word();
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
        if (ec != std::errc() || ptr != w.data() + w.size()) throw format_error("model file: bad number '" + w + "'");
        return v;
    }
    std::size_t count() {
        const auto w = word();
        std::size_t v = 0;
        const auto [ptr, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
        if (ec != std::errc() || ptr != w.data() + w.size()) throw format_error("model file: bad count '" + w + "'");
        return v;
    }
    long long integer() {
        const auto w = word();
        long long v = 0;
        const auto [ptr, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
        if (ec != std::errc() || ptr != w.data() + w.size()) throw format_error("model file: bad integer '" + w + "'");
        return v;
    }

private:
    std::istream& in_;
};

}  // namespace detail
}  // namespace ssba
