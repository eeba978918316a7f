#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "ssba/boundary.hpp"
#include "ssba/constraints.hpp"
#include "ssba/datasets.hpp"
#include "ssba/error.hpp"
#include "ssba/eval.hpp"
#include "ssba/explain.hpp"
#include "ssba/models.hpp"

namespace ssba {

// Run configuration file: INI sections of `key = value` lines, '#' or ';' comments.
//
//   [run]       seed, threads, output_dir, memory_budget
//   [data]      source (generate | csv | toy), csv, label, categorical (name:count, ...),
//               samples, features, class_sep
//   [model]     family, learning_rate, epochs, regularization, hidden (comma list),
//               batch_size, trees, max_depth, max_features
//   [boundary]  method (ssba | grid), threshold, epsilon, batch_size, max_iter, deduplicate,
//               resolution
//   [explain]   query (comma list), row, eps0, max_doublings, tolerance, samples_per_dim,
//               immutable (names), equal / lower / upper / delta (name:value, ...)
//   [evaluate]  queries
//   [bench]     cases (method:features:limit, ...), samples, class_sep, repeats
//   [serve]     host, port, data_dir, workers
//   [paths]     dataset, model, boundary, result (override the output_dir defaults)
//
// Unknown sections and keys are errors. Flags go through RunConfig::set, so they are checked
// the same way and override file values.

struct RunConfig {
    // [run]
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    std::string output_dir = ".";
    std::uint64_t memory_budget = 16ULL << 30;

    // [data]
    std::string data_source = "generate";
    std::string csv_path;
    std::string label_column = "label";
    std::vector<std::pair<std::string, std::size_t>> categorical;
    std::size_t samples = 2000;
    std::size_t features = 2;
    double class_sep = 2.0;

    // [model]
    ModelSpec model;

    // [boundary]
    std::string boundary_method = "ssba";
    BoundaryOptions boundary;
    std::size_t resolution = 100;

    // [explain]
    std::optional<Instance> query;
    std::optional<std::size_t> query_row;
    ExplainOptions explain;
    std::vector<std::string> immutable;
    std::vector<std::pair<std::string, double>> equal, lower, upper, delta;

    // [evaluate]
    std::size_t eval_queries = 20;

    // [bench]
    std::vector<BenchCase> bench_cases = parse_bench_cases("ssba:2:10000,grid:2:100,grid:10:10,ssba:10:10000,ssba:50:10000");
    std::size_t bench_samples = 2000;
    double bench_class_sep = 2.0;
    std::size_t bench_repeats = 1;

    // [serve]
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string data_dir = "ssba-data";
    std::size_t workers = 2;

    // [paths]
    std::string dataset_path, model_path, boundary_path, result_path;

    /// Assigns one `section.key`; throws config errors naming the key.
    void set(const std::string& dotted_key, const std::string& value);

    [[nodiscard]] std::string path_for(const std::string& configured, const std::string& file_name) const {
        if (!configured.empty()) return configured;
        return output_dir.empty() || output_dir == "." ? file_name : output_dir + "/" + file_name;
    }
    [[nodiscard]] std::string dataset_file() const { return path_for(dataset_path, "dataset.csv"); }
    [[nodiscard]] std::string model_file() const { return path_for(model_path, "model.txt"); }
    [[nodiscard]] std::string boundary_file() const { return path_for(boundary_path, "boundary.ssbab"); }
    [[nodiscard]] std::string result_file(const std::string& default_name) const {
        return path_for(result_path, default_name);
    }
};

namespace detail {

inline std::string config_error(const std::string& key, const std::string& value, const std::string& why) {
    return "config " + key + " = '" + value + "': " + why;
}

template <class T>
T parse_integer(const std::string& key, const std::string& value) {
    T out{};
    const auto s = trim(value);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw argument_error(config_error(key, value, "expected an integer"));
    return out;
}

inline double parse_real(const std::string& key, const std::string& value) {
    double out = 0.0;
    if (!parse_double(trim(value), out)) throw argument_error(config_error(key, value, "expected a number"));
    return out;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
    const auto s = trim(value);
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw argument_error(config_error(key, value, "expected true or false"));
}

inline std::vector<std::string> parse_names(const std::string& value) {
    std::vector<std::string> out;
    for (auto item : split_commas(value))
        if (!item.empty()) out.emplace_back(item);
    return out;
}

inline std::vector<double> parse_reals(const std::string& key, const std::string& value) {
    std::vector<double> out;
    for (const auto& item : parse_names(value)) out.push_back(parse_real(key, item));
    if (out.empty()) throw argument_error(config_error(key, value, "expected a comma-separated list of numbers"));
    return out;
}

inline std::vector<std::pair<std::string, double>> parse_named_reals(const std::string& key, const std::string& value) {
    std::vector<std::pair<std::string, double>> out;
    for (const auto& item : parse_names(value)) {
        const auto colon = item.rfind(':');
        if (colon == std::string::npos || colon == 0) throw argument_error(config_error(key, value, "expected name:value pairs"));
        out.emplace_back(std::string(trim(item.substr(0, colon))), parse_real(key, item.substr(colon + 1)));
    }
    return out;
}

inline std::optional<std::size_t> find_feature(const FeatureSchema& schema, std::string_view name) {
    for (std::size_t i = 0; i < schema.size(); ++i)
        if (schema[i].name == name) return i;
    return std::nullopt;
}

}  // namespace detail

/// Byte count with an optional unit: 1024, 8e11, 512MB, 16GiB.
[[nodiscard]] inline std::uint64_t parse_byte_size(const std::string& text) {
    const auto s = detail::trim(text);
    std::size_t split = s.size();
    while (split > 0 && std::isalpha(static_cast<unsigned char>(s[split - 1]))) --split;
    double number = 0.0;
    if (!detail::parse_double(s.substr(0, split), number) || number < 0.0)
        throw argument_error("memory budget '" + text + "': expected a non-negative size");
    std::string unit(s.substr(split));
    for (auto& ch : unit) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    static const std::map<std::string, double> scale{{"", 1.0},    {"B", 1.0},          {"KB", 1e3},  {"MB", 1e6},
                                                     {"GB", 1e9},  {"TB", 1e12},        {"KIB", 1024.0},
                                                     {"MIB", 1048576.0}, {"GIB", 1073741824.0}, {"TIB", 1099511627776.0}};
    const auto it = scale.find(unit);
    if (it == scale.end()) throw argument_error("memory budget '" + text + "': unknown unit '" + unit + "'");
    const double bytes = number * it->second;
    if (bytes >= 1.8e19) throw argument_error("memory budget '" + text + "' is too large");
    return static_cast<std::uint64_t>(std::llround(bytes));
}

inline void RunConfig::set(const std::string& key, const std::string& value) {
    using namespace detail;
    using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;
    const auto size = [](std::size_t RunConfig::*field) -> Setter {
        return [field](RunConfig& c, const std::string& k, const std::string& v) { c.*field = parse_integer<std::size_t>(k, v); };
    };
    const auto real = [](double RunConfig::*field) -> Setter {
        return [field](RunConfig& c, const std::string& k, const std::string& v) { c.*field = parse_real(k, v); };
    };
    const auto text = [](std::string RunConfig::*field) -> Setter {
        return [field](RunConfig& c, const std::string&, const std::string& v) { c.*field = std::string(trim(v)); };
    };
    const auto named = [](std::vector<std::pair<std::string, double>> RunConfig::*field) -> Setter {
        return [field](RunConfig& c, const std::string& k, const std::string& v) { c.*field = parse_named_reals(k, v); };
    };
    const auto positive = [](const std::string& k, const std::string& v, std::size_t n) {
        if (n == 0) throw argument_error(config_error(k, v, "must be positive"));
        return n;
    };

    static const std::map<std::string, Setter> setters{
        {"run.seed", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.seed = parse_integer<std::uint64_t>(k, v);
             c.model.seed = c.boundary.seed = c.explain.seed = c.seed;
         }},
        {"run.threads", [=](RunConfig& c, const std::string& k, const std::string& v) {
             c.threads = positive(k, v, parse_integer<std::size_t>(k, v));
             c.boundary.threads = c.threads;
         }},
        {"run.output_dir", text(&RunConfig::output_dir)},
        {"run.memory_budget", [](RunConfig& c, const std::string&, const std::string& v) { c.memory_budget = parse_byte_size(v); }},

        {"data.source", [](RunConfig& c, const std::string& k, const std::string& v) {
             const std::string s(trim(v));
             if (s != "generate" && s != "csv" && s != "toy") throw argument_error(config_error(k, v, "expected generate, csv or toy"));
             c.data_source = s;
         }},
        {"data.csv", text(&RunConfig::csv_path)},
        {"data.label", text(&RunConfig::label_column)},
        {"data.categorical", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.categorical.clear();
             for (const auto& [name, count] : parse_named_reals(k, v)) {
                 if (count < 1.0 || count != std::floor(count)) throw argument_error(config_error(k, v, "category counts must be positive integers"));
                 c.categorical.emplace_back(name, static_cast<std::size_t>(count));
             }
         }},
        {"data.samples", size(&RunConfig::samples)},
        {"data.features", size(&RunConfig::features)},
        {"data.class_sep", real(&RunConfig::class_sep)},

        {"model.family", [](RunConfig& c, const std::string&, const std::string& v) { c.model.family = std::string(trim(v)); }},
        {"model.learning_rate", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.learning_rate = parse_real(k, v); }},
        {"model.epochs", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.epochs = parse_integer<std::size_t>(k, v); }},
        {"model.regularization", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.regularization = parse_real(k, v); }},
        {"model.hidden", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.model.hidden_sizes.clear();
             for (const auto& item : parse_names(v)) c.model.hidden_sizes.push_back(parse_integer<std::size_t>(k, item));
         }},
        {"model.batch_size", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.batch_size = parse_integer<std::size_t>(k, v); }},
        {"model.trees", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.n_trees = parse_integer<std::size_t>(k, v); }},
        {"model.max_depth", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.max_depth = parse_integer<std::size_t>(k, v); }},
        {"model.max_features", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.max_features = parse_integer<std::size_t>(k, v); }},

        {"boundary.method", [](RunConfig& c, const std::string& k, const std::string& v) {
             const std::string s(trim(v));
             if (s != "ssba" && s != "grid") throw argument_error(config_error(k, v, "expected ssba or grid"));
             c.boundary_method = s;
         }},
        {"boundary.threshold", [](RunConfig& c, const std::string& k, const std::string& v) { c.boundary.threshold_T = parse_integer<std::uint64_t>(k, v); }},
        {"boundary.epsilon", [](RunConfig& c, const std::string& k, const std::string& v) { c.boundary.epsilon = parse_real(k, v); }},
        {"boundary.batch_size", [=](RunConfig& c, const std::string& k, const std::string& v) { c.boundary.batch_size = positive(k, v, parse_integer<std::size_t>(k, v)); }},
        {"boundary.max_iter", [=](RunConfig& c, const std::string& k, const std::string& v) { c.boundary.max_iter = positive(k, v, parse_integer<std::size_t>(k, v)); }},
        {"boundary.deduplicate", [](RunConfig& c, const std::string& k, const std::string& v) { c.boundary.deduplicate = parse_bool(k, v); }},
        {"boundary.resolution", size(&RunConfig::resolution)},

        {"explain.query", [](RunConfig& c, const std::string& k, const std::string& v) { c.query = parse_reals(k, v); }},
        {"explain.row", [](RunConfig& c, const std::string& k, const std::string& v) { c.query_row = parse_integer<std::size_t>(k, v); }},
        {"explain.eps0", [](RunConfig& c, const std::string& k, const std::string& v) { c.explain.eps0 = parse_real(k, v); }},
        {"explain.max_doublings", [](RunConfig& c, const std::string& k, const std::string& v) { c.explain.max_doublings = parse_integer<std::size_t>(k, v); }},
        {"explain.tolerance", [](RunConfig& c, const std::string& k, const std::string& v) { c.explain.categorical_tolerance = parse_real(k, v); }},
        {"explain.samples_per_dim", [](RunConfig& c, const std::string& k, const std::string& v) { c.explain.samples_per_dim = parse_integer<std::size_t>(k, v); }},
        {"explain.immutable", [](RunConfig& c, const std::string&, const std::string& v) { c.immutable = parse_names(v); }},
        {"explain.equal", named(&RunConfig::equal)},
        {"explain.lower", named(&RunConfig::lower)},
        {"explain.upper", named(&RunConfig::upper)},
        {"explain.delta", named(&RunConfig::delta)},

        {"evaluate.queries", [=](RunConfig& c, const std::string& k, const std::string& v) { c.eval_queries = positive(k, v, parse_integer<std::size_t>(k, v)); }},

        {"bench.cases", [](RunConfig& c, const std::string&, const std::string& v) { c.bench_cases = parse_bench_cases(v); }},
        {"bench.samples", size(&RunConfig::bench_samples)},
        {"bench.class_sep", real(&RunConfig::bench_class_sep)},
        {"bench.repeats", [=](RunConfig& c, const std::string& k, const std::string& v) { c.bench_repeats = positive(k, v, parse_integer<std::size_t>(k, v)); }},

        {"serve.host", text(&RunConfig::host)},
        {"serve.port", [](RunConfig& c, const std::string& k, const std::string& v) {
             const auto p = parse_integer<int>(k, v);
             if (p < 0 || p > 65535) throw argument_error(config_error(k, v, "port out of range"));
             c.port = p;
         }},
        {"serve.data_dir", text(&RunConfig::data_dir)},
        {"serve.workers", [=](RunConfig& c, const std::string& k, const std::string& v) { c.workers = positive(k, v, parse_integer<std::size_t>(k, v)); }},

        {"paths.dataset", text(&RunConfig::dataset_path)},
        {"paths.model", text(&RunConfig::model_path)},
        {"paths.boundary", text(&RunConfig::boundary_path)},
        {"paths.result", text(&RunConfig::result_path)},
    };

    const auto it = setters.find(key);
    if (it == setters.end()) throw argument_error("config: unknown key '" + key + "'");
    it->second(*this, key, value);
}

/// Applies every `section.key` of an INI stream on top of `base`.
[[nodiscard]] inline RunConfig read_run_config(std::istream& in, RunConfig base = {}) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        pt::ini_parser::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw argument_error(std::string("config: ") + e.what());
    }
    for (const auto& [section, body] : tree) {
        if (body.empty()) throw argument_error("config: key '" + section + "' outside any section");
        for (const auto& [key, value] : body) base.set(section + "." + key, value.data());
    }
    return base;
}

[[nodiscard]] inline RunConfig load_run_config(const std::string& path, RunConfig base = {}) {
    std::ifstream in(path);
    if (!in) throw argument_error("cannot open config file '" + path + "'");
    return read_run_config(in, std::move(base));
}

/// Dataset described by the [data] section.
[[nodiscard]] inline Dataset make_dataset(const RunConfig& c) {
    if (c.data_source == "toy") return make_toy(c.seed);
    if (c.data_source == "generate") return make_classification(c.samples, c.features, c.class_sep, c.seed);
    if (c.csv_path.empty()) throw argument_error("config data.csv is required when data.source = csv");
    std::ifstream in(c.csv_path);
    if (!in) throw parse_error("cannot open '" + c.csv_path + "'", 0, "");
    std::string header;
    std::getline(in, header);
    auto schema = schema_from_header(header, c.label_column);
    for (const auto& [name, count] : c.categorical) {
        const auto i = detail::find_feature(schema, name);
        if (!i) throw argument_error("config data.categorical: no column '" + name + "'");
        schema.features[*i].kind = FeatureKind::categorical;
        schema.features[*i].category_count = count;
    }
    in.clear();
    in.seekg(0);
    return read_csv(in, std::move(schema), c.label_column);
}

/// Constraints from the [explain] section, with categorical features pinned.
[[nodiscard]] inline ConstraintSet make_constraints(const RunConfig& c, const FeatureSchema& schema) {
    const auto index = [&](const std::string& name) {
        if (const auto i = detail::find_feature(schema, name)) return *i;
        std::size_t i = 0;
        const auto [ptr, ec] = std::from_chars(name.data(), name.data() + name.size(), i);
        if (ec == std::errc() && ptr == name.data() + name.size() && i < schema.size()) return i;
        throw argument_error("constraint refers to unknown feature '" + name + "'");
    };
    auto set = ConstraintSet::for_schema(schema);
    for (const auto& name : c.immutable) set.make_immutable(index(name));
    for (const auto& [name, v] : c.equal) set.set_equal(index(name), v);
    for (const auto& [name, v] : c.lower) set.set_lower(index(name), v);
    for (const auto& [name, v] : c.upper) set.set_upper(index(name), v);
    for (const auto& [name, v] : c.delta) set.set_delta(index(name), v);
    return set;
}

[[nodiscard]] inline BenchConfig make_bench_config(const RunConfig& c) {
    BenchConfig b;
    b.cases = c.bench_cases;
    b.n_samples = c.bench_samples;
    b.class_sep = c.bench_class_sep;
    b.seed = c.seed;
    b.epsilon = c.boundary.epsilon;
    b.batch_size = c.boundary.batch_size;
    b.threads = c.threads;
    b.memory_budget_bytes = c.memory_budget;
    b.repeats = c.bench_repeats;
    return b;
}

}  // namespace ssba
