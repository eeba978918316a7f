#pragma once

#include <cmath>
#include <string>

#include <nlohmann/json.hpp>

#include "ssba/datasets.hpp"
#include "ssba/eval.hpp"
#include "ssba/explain.hpp"
#include "ssba/models/classifier.hpp"

namespace ssba {

// JSON shapes shared by the CLI and the HTTP service.

[[nodiscard]] inline nlohmann::json to_json(const CounterfactualResult& r, const FeatureSchema* schema = nullptr) {
    using nlohmann::json;
    json out;
    out["query"] = r.query;
    out["query_label"] = r.query_label;
    out["boundary_point"] = r.boundary_point;
    out["crossed"] = r.crossed ? json(*r.crossed) : json(nullptr);
    out["mode"] = std::string(to_string(r.mode));
    out["distance"] = r.distance;
    if (r.mode == ResultMode::bounded_fallback) out["boundary_distance"] = r.boundary_distance;
    out["boundary_index"] = r.boundary_index ? json(*r.boundary_index) : json(nullptr);
    out["crossing_failed"] = r.crossing_failed;
    out["satisfied_constraints"] = r.satisfied_constraints;
    const Instance& after = r.crossed ? *r.crossed : r.boundary_point;
    json deltas = json::array();
    for (std::size_t i = 0; i < r.query.size(); ++i) {
        const std::string name = schema && i < schema->size() ? (*schema)[i].name : "x" + std::to_string(i);
        deltas.push_back({{"featureName", name}, {"before", r.query[i]}, {"after", after[i]}});
    }
    out["deltas"] = std::move(deltas);
    return out;
}

[[nodiscard]] inline nlohmann::json to_json(const FeatureSchema& schema) {
    nlohmann::json features = nlohmann::json::array();
    for (const auto& f : schema.features) {
        nlohmann::json j{{"name", f.name},
                         {"kind", f.is_categorical() ? "categorical" : "continuous"},
                         {"min", f.observed_min},
                         {"max", f.observed_max}};
        if (f.is_categorical()) j["category_count"] = f.category_count;
        features.push_back(std::move(j));
    }
    return features;
}

[[nodiscard]] inline nlohmann::json to_json(const TrainReport& r) {
    nlohmann::json j{{"train_accuracy", r.train_accuracy}, {"epochs_or_trees", r.epochs_or_trees}};
    j["final_loss"] = std::isfinite(r.final_loss) ? nlohmann::json(r.final_loss) : nlohmann::json(nullptr);
    return j;
}

[[nodiscard]] inline nlohmann::json to_json(const MetricReport& r) {
    nlohmann::json samples = nlohmann::json::array();
    for (const auto& [id, d] : r.per_sample) samples.push_back({{"query_id", id}, {"distance", d}});
    return {{"mean_distance", r.mean_distance},
            {"sample_count", r.sample_count},
            {"mode", r.mode == MetricMode::unconstrained ? "unconstrained" : "constrained"},
            {"per_sample", std::move(samples)}};
}

/// ConstraintSet from {"immutable": [..], "equal": {i: v}, "lower": {..}, "upper": {..},
/// "delta": {..}}; keys may be feature indices or names. Categorical features are pinned from
/// the schema.
[[nodiscard]] inline ConstraintSet constraints_from_json(const nlohmann::json& j, const FeatureSchema& schema) {
    ConstraintSet c = ConstraintSet::for_schema(schema);
    if (j.is_null()) return c;
    if (!j.is_object()) throw argument_error("constraints must be a JSON object");
    const auto feature = [&](const std::string& key) -> std::size_t {
        if (!key.empty() && std::all_of(key.begin(), key.end(), [](char ch) { return ch >= '0' && ch <= '9'; })) {
            const auto i = static_cast<std::size_t>(std::stoull(key));
            if (i >= schema.size()) throw argument_error("constraint feature index " + key + " out of range");
            return i;
        }
        return schema.index_of(key);
    };
    for (const auto& [key, value] : j.items()) {
        if (key == "immutable") {
            for (const auto& f : value) c.make_immutable(f.is_string() ? feature(f.get<std::string>()) : feature(std::to_string(f.get<std::size_t>())));
        } else if (key == "equal" || key == "lower" || key == "upper" || key == "delta") {
            if (!value.is_object()) throw argument_error("constraints." + key + " must be an object");
            for (const auto& [name, v] : value.items()) {
                const auto i = feature(name);
                const double x = v.get<double>();
                if (key == "equal") c.set_equal(i, x);
                else if (key == "lower") c.set_lower(i, x);
                else if (key == "upper") c.set_upper(i, x);
                else c.set_delta(i, x);
            }
        } else {
            throw argument_error("unknown constraint key '" + key + "'");
        }
    }
    return c;
}

}  // namespace ssba
