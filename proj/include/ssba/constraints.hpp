#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "ssba/datasets.hpp"
#include "ssba/error.hpp"
#include "ssba/matrix.hpp"

namespace ssba {

/// User constraints on a counterfactual, keyed by feature index.
///
/// Categorical features are always pinned to the query's code (within the categorical tolerance);
/// mark them with pin_categorical or for_schema. A feature cannot be both immutable and carry a
/// delta box, and lower <= upper wherever both exist.
class ConstraintSet {
public:
    static constexpr double default_delta_fraction = 0.2;

    ConstraintSet() = default;

    static ConstraintSet for_schema(const FeatureSchema& schema) {
        ConstraintSet c;
        c.pin_categorical(schema);
        return c;
    }

    ConstraintSet& pin_categorical(const FeatureSchema& schema) {
        for (std::size_t i = 0; i < schema.size(); ++i)
            if (schema[i].is_categorical()) categorical_.insert(i);
        return *this;
    }

    ConstraintSet& make_immutable(std::size_t i) {
        if (delta_fractions_.contains(i))
            throw argument_error("feature " + std::to_string(i) + " cannot be immutable and carry a delta box");
        immutable_.insert(i);
        return *this;
    }

    ConstraintSet& set_equal(std::size_t i, double value) {
        equalities_[i] = value;
        return *this;
    }

    ConstraintSet& set_lower(std::size_t i, double value) {
        if (auto it = upper_.find(i); it != upper_.end() && value > it->second)
            throw argument_error("feature " + std::to_string(i) + ": lower bound exceeds upper bound");
        lower_[i] = value;
        return *this;
    }

    ConstraintSet& set_upper(std::size_t i, double value) {
        if (auto it = lower_.find(i); it != lower_.end() && value < it->second)
            throw argument_error("feature " + std::to_string(i) + ": upper bound is below lower bound");
        upper_[i] = value;
        return *this;
    }

    ConstraintSet& set_delta(std::size_t i, double fraction) {
        if (!(fraction >= 0.0)) throw argument_error("delta fraction must be non-negative");
        if (immutable_.contains(i))
            throw argument_error("feature " + std::to_string(i) + " cannot be immutable and carry a delta box");
        delta_fractions_[i] = fraction;
        return *this;
    }

    [[nodiscard]] const std::set<std::size_t>& immutable() const noexcept { return immutable_; }
    [[nodiscard]] const std::set<std::size_t>& categorical() const noexcept { return categorical_; }
    [[nodiscard]] const std::map<std::size_t, double>& equalities() const noexcept { return equalities_; }
    [[nodiscard]] const std::map<std::size_t, double>& lower_bounds() const noexcept { return lower_; }
    [[nodiscard]] const std::map<std::size_t, double>& upper_bounds() const noexcept { return upper_; }
    [[nodiscard]] const std::map<std::size_t, double>& delta_fractions() const noexcept { return delta_fractions_; }

    [[nodiscard]] bool empty() const noexcept {
        return immutable_.empty() && categorical_.empty() && equalities_.empty() && lower_.empty() && upper_.empty() &&
               delta_fractions_.empty();
    }

    [[nodiscard]] bool pinned(std::size_t i) const { return immutable_.contains(i) || categorical_.contains(i); }

    /// Throws if any referenced feature index is outside [0, width).
    void validate(std::size_t width) const {
        const auto check = [&](std::size_t i) {
            if (i >= width) throw argument_error("constraint references feature " + std::to_string(i) + " of " + std::to_string(width));
        };
        for (auto i : immutable_) check(i);
        for (auto i : categorical_) check(i);
        for (const auto& m : {&equalities_, &lower_, &upper_, &delta_fractions_})
            for (const auto& [i, v] : *m) check(i);
    }

    /// Stable text key of everything that, together with the query, determines the feasible set.
    [[nodiscard]] std::string signature() const {
        std::string s;
        const auto num = [&](double v) {
            char buf[32];
            const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
            s.append(buf, end);
        };
        s += "I";
        for (auto i : immutable_) s += ' ' + std::to_string(i);
        s += ";C";
        for (auto i : categorical_) s += ' ' + std::to_string(i);
        for (const auto& [tag, m] : {std::pair{";E", &equalities_}, std::pair{";L", &lower_}, std::pair{";U", &upper_},
                                     std::pair{";D", &delta_fractions_}}) {
            s += tag;
            for (const auto& [i, v] : *m) {
                s += ' ' + std::to_string(i) + '=';
                num(v);
            }
        }
        return s;
    }

    friend bool operator==(const ConstraintSet&, const ConstraintSet&) = default;

private:
    std::set<std::size_t> immutable_;
    std::set<std::size_t> categorical_;
    std::map<std::size_t, double> equalities_;
    std::map<std::size_t, double> lower_;
    std::map<std::size_t, double> upper_;
    std::map<std::size_t, double> delta_fractions_;
};

/// Membership test for the feasible region around a query:
///  - pinned (immutable or categorical) features within `tolerance` of the query,
///  - equalities within `tolerance` of their value,
///  - lower <= p <= upper with no tolerance,
///  - delta boxes |p - q| <= fraction * |q| (closed).
[[nodiscard]] inline bool satisfies(std::span<const double> point, std::span<const double> query,
                                    const ConstraintSet& c, double tolerance) {
    for (auto i : c.immutable())
        if (std::abs(point[i] - query[i]) > tolerance) return false;
    for (auto i : c.categorical())
        if (std::abs(point[i] - query[i]) > tolerance) return false;
    for (const auto& [i, v] : c.equalities())
        if (std::abs(point[i] - v) > tolerance) return false;
    for (const auto& [i, v] : c.lower_bounds())
        if (point[i] < v) return false;
    for (const auto& [i, v] : c.upper_bounds())
        if (point[i] > v) return false;
    for (const auto& [i, f] : c.delta_fractions())
        if (std::abs(point[i] - query[i]) > f * std::abs(query[i])) return false;
    return true;
}

/// Human-readable list of the constraints `point` was checked against.
[[nodiscard]] inline std::vector<std::string> describe_constraints(const ConstraintSet& c, const FeatureSchema* schema) {
    const auto name = [&](std::size_t i) {
        return schema && i < schema->size() ? (*schema)[i].name : "x" + std::to_string(i);
    };
    const auto num = [](double v) {
        char buf[32];
        const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
        return std::string(buf, end);
    };
    std::vector<std::string> out;
    for (auto i : c.immutable()) out.push_back("immutable(" + name(i) + ")");
    for (auto i : c.categorical())
        if (!c.immutable().contains(i)) out.push_back("categorical(" + name(i) + ")");
    for (const auto& [i, v] : c.equalities()) out.push_back(name(i) + " == " + num(v));
    for (const auto& [i, v] : c.lower_bounds()) out.push_back(name(i) + " >= " + num(v));
    for (const auto& [i, v] : c.upper_bounds()) out.push_back(name(i) + " <= " + num(v));
    for (const auto& [i, f] : c.delta_fractions()) out.push_back("delta(" + name(i) + ", " + num(f) + ")");
    return out;
}

/// Closed search box of the bounded fallback, one interval per feature.
///
/// Pinned features collapse to the query value, equality features to their value. Every other
/// feature spans q +- fraction * |q| (fraction defaults to 0.2), intersected with its inequality
/// bounds; an empty intersection collapses to the bound nearest the box.
[[nodiscard]] inline Bounds fallback_box(std::span<const double> query, const ConstraintSet& c) {
    Bounds box(query.size());
    for (std::size_t i = 0; i < query.size(); ++i) {
        if (c.pinned(i)) {
            box[i] = {query[i], query[i]};
            continue;
        }
        if (auto it = c.equalities().find(i); it != c.equalities().end()) {
            box[i] = {it->second, it->second};
            continue;
        }
        const auto d = c.delta_fractions().find(i);
        const double half = (d != c.delta_fractions().end() ? d->second : ConstraintSet::default_delta_fraction) *
                            std::abs(query[i]);
        const double box_lo = query[i] - half, box_hi = query[i] + half;
        const auto lower = c.lower_bounds().find(i);
        const auto upper = c.upper_bounds().find(i);
        double lo = lower != c.lower_bounds().end() ? std::max(box_lo, lower->second) : box_lo;
        double hi = upper != c.upper_bounds().end() ? std::min(box_hi, upper->second) : box_hi;
        if (lo > hi) lo = hi = (lower != c.lower_bounds().end() && lower->second > box_hi) ? box_hi : box_lo;
        box[i] = {lo, hi};
    }
    return box;
}

/// Number of features the fallback box leaves free to move.
[[nodiscard]] inline std::size_t mutable_continuous_count(std::size_t width, const ConstraintSet& c) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < width; ++i) n += !c.pinned(i) && !c.equalities().contains(i);
    return n;
}

}  // namespace ssba
