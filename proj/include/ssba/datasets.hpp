#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ssba/error.hpp"
#include "ssba/matrix.hpp"
#include "ssba/random.hpp"

namespace ssba {

enum class FeatureKind { continuous, categorical };

struct FeatureSpec {
    std::string name;
    FeatureKind kind = FeatureKind::continuous;
    double observed_min = 0.0;
    double observed_max = 0.0;
    std::size_t category_count = 0;  // categorical only

    [[nodiscard]] bool is_categorical() const noexcept { return kind == FeatureKind::categorical; }
    friend bool operator==(const FeatureSpec&, const FeatureSpec&) = default;
};

struct FeatureSchema {
    std::vector<FeatureSpec> features;

    [[nodiscard]] std::size_t size() const noexcept { return features.size(); }
    [[nodiscard]] const FeatureSpec& operator[](std::size_t i) const { return features[i]; }

    [[nodiscard]] std::size_t index_of(std::string_view name) const {
        for (std::size_t i = 0; i < features.size(); ++i)
            if (features[i].name == name) return i;
        throw argument_error("unknown feature '" + std::string(name) + "'");
    }

    /// All-continuous schema x0..x{n-1}.
    static FeatureSchema continuous(std::size_t n) {
        FeatureSchema s;
        for (std::size_t i = 0; i < n; ++i) s.features.push_back({"x" + std::to_string(i)});
        return s;
    }

    friend bool operator==(const FeatureSchema&, const FeatureSchema&) = default;
};

using Label = int;
using Bounds = std::vector<std::pair<double, double>>;

/// Binary-labelled instances. Immutable once constructed; observed bounds are refreshed from the rows.
class Dataset {
public:
    Dataset() = default;

    Dataset(FeatureSchema schema, Matrix rows, std::vector<Label> labels)
        : schema_(std::move(schema)), rows_(std::move(rows)), labels_(std::move(labels)) {
        if (rows_.rows() != labels_.size()) throw argument_error("row count does not match label count");
        if (rows_.rows() > 0 && rows_.cols() != schema_.size())
            throw argument_error("row width does not match schema feature count");
        for (std::size_t i = 0; i < labels_.size(); ++i)
            if (labels_[i] != 0 && labels_[i] != 1)
                throw argument_error("label at row " + std::to_string(i) + " is not 0 or 1");
        refresh_bounds();
    }

    [[nodiscard]] const FeatureSchema& schema() const noexcept { return schema_; }
    [[nodiscard]] const Matrix& rows() const noexcept { return rows_; }
    [[nodiscard]] const std::vector<Label>& labels() const noexcept { return labels_; }
    [[nodiscard]] std::size_t size() const noexcept { return labels_.size(); }
    [[nodiscard]] std::size_t width() const noexcept { return schema_.size(); }
    [[nodiscard]] std::span<const double> row(std::size_t i) const { return rows_.row(i); }

    [[nodiscard]] std::size_t count(Label label) const {
        return static_cast<std::size_t>(std::count(labels_.begin(), labels_.end(), label));
    }

    /// Rows with the given indices, in the given order.
    [[nodiscard]] Dataset subset(std::span<const std::size_t> indices) const {
        Matrix m(0, width());
        m.reserve_rows(indices.size());
        std::vector<Label> y;
        y.reserve(indices.size());
        for (auto i : indices) {
            m.append_row(rows_.row(i));
            y.push_back(labels_[i]);
        }
        return Dataset(schema_, std::move(m), std::move(y));
    }

    friend bool operator==(const Dataset&, const Dataset&) = default;

private:
    void refresh_bounds() {
        if (rows_.rows() == 0) return;
        for (std::size_t j = 0; j < schema_.size(); ++j) {
            double lo = std::numeric_limits<double>::infinity();
            double hi = -lo;
            for (std::size_t i = 0; i < rows_.rows(); ++i) {
                lo = std::min(lo, rows_(i, j));
                hi = std::max(hi, rows_(i, j));
            }
            schema_.features[j].observed_min = lo;
            schema_.features[j].observed_max = hi;
        }
    }

    FeatureSchema schema_;
    Matrix rows_;
    std::vector<Label> labels_;
};

/// Column-wise extrema.
[[nodiscard]] inline Bounds feature_bounds(const Dataset& data) {
    if (data.size() == 0) throw argument_error("feature_bounds: empty dataset");
    Bounds b;
    for (const auto& f : data.schema().features) b.emplace_back(f.observed_min, f.observed_max);
    return b;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline bool parse_double(std::string_view s, double& out) {
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

}  // namespace detail

/// Reads a headered CSV. Columns are matched to the schema by name; the label column must hold 0/1.
/// Rows are numbered from 1 (the header is row 0) in error messages.
[[nodiscard]] inline Dataset read_csv(std::istream& in, FeatureSchema schema, const std::string& label_column) {
    std::string line;
    if (!std::getline(in, line)) throw parse_error("empty CSV: missing header row", 0, "");
    const auto header = detail::split_commas(line);

    std::map<std::string, std::size_t, std::less<>> column_of;
    for (std::size_t c = 0; c < header.size(); ++c) {
        const std::string name(header[c]);
        if (column_of.contains(name)) throw parse_error("duplicate column '" + name + "'", 0, name);
        column_of[name] = c;
    }
    const auto lookup = [&](const std::string& name) {
        const auto it = column_of.find(name);
        if (it == column_of.end()) throw parse_error("missing column '" + name + "'", 0, name);
        return it->second;
    };
    std::vector<std::size_t> feature_col;
    for (const auto& f : schema.features) feature_col.push_back(lookup(f.name));
    const std::size_t label_col = lookup(label_column);
    if (header.size() != schema.size() + 1)
        throw parse_error("header has columns not declared in the schema", 0, "");

    Matrix rows(0, schema.size());
    std::vector<Label> labels;
    std::vector<double> values(schema.size());
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        ++row;
        const auto cells = detail::split_commas(line);
        if (cells.size() != header.size())
            throw parse_error("row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                                  " cells, expected " + std::to_string(header.size()),
                              row, "");
        for (std::size_t j = 0; j < schema.size(); ++j) {
            const auto& f = schema.features[j];
            const auto cell = cells[feature_col[j]];
            if (cell.empty()) throw parse_error("missing value at row " + std::to_string(row) + ", column " + f.name, row, f.name);
            if (!detail::parse_double(cell, values[j]))
                throw parse_error("non-numeric value '" + std::string(cell) + "' at row " + std::to_string(row) +
                                      ", column " + f.name,
                                  row, f.name);
            if (f.is_categorical()) {
                const double v = values[j];
                if (v != std::floor(v) || v < 0.0 || v > static_cast<double>(f.category_count) - 1.0)
                    throw parse_error("unknown categorical code '" + std::string(cell) + "' at row " +
                                          std::to_string(row) + ", column " + f.name,
                                      row, f.name);
            }
        }
        double label = 0.0;
        const auto cell = cells[label_col];
        if (!detail::parse_double(cell, label) || (label != 0.0 && label != 1.0))
            throw parse_error("label '" + std::string(cell) + "' at row " + std::to_string(row) + " is not 0 or 1",
                              row, label_column);
        rows.append_row(values);
        labels.push_back(static_cast<Label>(label));
    }
    Dataset data(std::move(schema), std::move(rows), std::move(labels));
    if (data.count(0) == 0 || data.count(1) == 0)
        throw parse_error("label column '" + label_column + "' holds a single class", 0, label_column);
    return data;
}

[[nodiscard]] inline Dataset load_csv(const std::string& path, FeatureSchema schema, const std::string& label_column) {
    std::ifstream in(path);
    if (!in) throw parse_error("cannot open '" + path + "'", 0, "");
    return read_csv(in, std::move(schema), label_column);
}

/// All-continuous schema from a CSV header line, minus the label column.
[[nodiscard]] inline FeatureSchema schema_from_header(std::string_view header_line, const std::string& label_column) {
    FeatureSchema s;
    for (auto name : detail::split_commas(header_line))
        if (name != label_column) s.features.push_back({std::string(name)});
    return s;
}

namespace detail {
inline void write_double(std::ostream& out, double v) {
    char buf[32];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    out.write(buf, end - buf);
}
}  // namespace detail

inline void write_csv(std::ostream& out, const Dataset& data, const std::string& label_column = "label") {
    for (const auto& f : data.schema().features) out << f.name << ',';
    out << label_column << '\n';
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (double v : data.row(i)) {
            detail::write_double(out, v);
            out << ',';
        }
        out << data.labels()[i] << '\n';
    }
}

/// Two isotropic unit-variance Gaussian clusters whose means are class_sep apart along a random
/// unit direction. Class 0 gets floor(n/2) rows, class 1 the rest; row order is shuffled.
[[nodiscard]] inline Dataset make_classification(std::size_t n_samples, std::size_t n_features, double class_sep,
                                                 std::uint64_t seed) {
    if (n_samples < 4) throw argument_error("make_classification: n_samples must be at least 4");
    if (n_features < 1) throw argument_error("make_classification: n_features must be at least 1");
    if (!(class_sep > 0.0)) throw argument_error("make_classification: class_sep must be positive");

    Rng rng(seed);
    std::vector<double> direction(n_features);
    double norm = 0.0;
    do {
        for (auto& d : direction) d = rng.normal();
        norm = std::sqrt(dot(direction, direction));
    } while (norm == 0.0);
    for (auto& d : direction) d /= norm;

    std::vector<Label> labels(n_samples, 1);
    std::fill_n(labels.begin(), n_samples / 2, 0);
    rng.shuffle(std::span(labels));

    Matrix rows(n_samples, n_features);
    for (std::size_t i = 0; i < n_samples; ++i) {
        const double offset = (labels[i] == 1 ? 0.5 : -0.5) * class_sep;
        for (std::size_t j = 0; j < n_features; ++j) rows(i, j) = offset * direction[j] + rng.normal();
    }
    return Dataset(FeatureSchema::continuous(n_features), std::move(rows), std::move(labels));
}

/// Small 2D demonstration set: 10 points per class, class 0 scattered around (6, 8) and class 1
/// around (14, 20) with unit spread, so (11, 15) lies on the class-1 side near the gap.
[[nodiscard]] inline Dataset make_toy(std::uint64_t seed = 0) {
    Rng rng(seed);
    Matrix rows(20, 2);
    std::vector<Label> labels(20);
    for (std::size_t i = 0; i < 20; ++i) {
        labels[i] = i < 10 ? 0 : 1;
        rows(i, 0) = (i < 10 ? 6.0 : 14.0) + rng.normal();
        rows(i, 1) = (i < 10 ? 8.0 : 20.0) + rng.normal();
    }
    FeatureSchema schema = FeatureSchema::continuous(2);
    return Dataset(std::move(schema), std::move(rows), std::move(labels));
}

/// Stratified split. Each class contributes round(train_fraction * class_count) rows to the
/// training part (ties round up); throws if either part would end up empty.
[[nodiscard]] inline std::pair<Dataset, Dataset> split(const Dataset& data, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw argument_error("split: train_fraction must lie strictly between 0 and 1");
    Rng rng(seed);
    std::vector<std::size_t> train, test;
    for (Label label : {0, 1}) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < data.size(); ++i)
            if (data.labels()[i] == label) members.push_back(i);
        rng.shuffle(std::span(members));
        const auto take = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(members.size()) + 0.5));
        train.insert(train.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(take));
        test.insert(test.end(), members.begin() + static_cast<std::ptrdiff_t>(take), members.end());
    }
    if (train.empty() || test.empty())
        throw argument_error("split: fraction " + std::to_string(train_fraction) + " leaves an empty part for N=" +
                             std::to_string(data.size()));
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    return {data.subset(train), data.subset(test)};
}

/// Explicit z-score transform. Nothing in the pipeline applies it implicitly.
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> scale;

    static Standardizer fit(const Dataset& data) {
        if (data.size() == 0) throw argument_error("Standardizer::fit: empty dataset");
        Standardizer s{std::vector<double>(data.width(), 0.0), std::vector<double>(data.width(), 0.0)};
        const auto n = static_cast<double>(data.size());
        for (std::size_t i = 0; i < data.size(); ++i)
            for (std::size_t j = 0; j < data.width(); ++j) s.mean[j] += data.row(i)[j] / n;
        for (std::size_t i = 0; i < data.size(); ++i)
            for (std::size_t j = 0; j < data.width(); ++j) {
                const double d = data.row(i)[j] - s.mean[j];
                s.scale[j] += d * d / n;
            }
        for (auto& v : s.scale) v = v > 0.0 ? std::sqrt(v) : 1.0;
        return s;
    }

    [[nodiscard]] Instance apply(std::span<const double> x) const {
        Instance out(x.size());
        for (std::size_t j = 0; j < x.size(); ++j) out[j] = (x[j] - mean[j]) / scale[j];
        return out;
    }

    [[nodiscard]] Instance invert(std::span<const double> z) const {
        Instance out(z.size());
        for (std::size_t j = 0; j < z.size(); ++j) out[j] = z[j] * scale[j] + mean[j];
        return out;
    }

    [[nodiscard]] Dataset apply(const Dataset& data) const {
        Matrix m(0, data.width());
        for (std::size_t i = 0; i < data.size(); ++i) m.append_row(apply(data.row(i)));
        return Dataset(data.schema(), std::move(m), data.labels());
    }
};

}  // namespace ssba
