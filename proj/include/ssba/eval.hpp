#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ssba/boundary.hpp"
#include "ssba/datasets.hpp"
#include "ssba/explain.hpp"
#include "ssba/models/linear.hpp"

namespace ssba {

enum class MetricMode { unconstrained, constrained };

struct MetricReport {
    double mean_distance = 0.0;
    std::size_t sample_count = 0;
    MetricMode mode = MetricMode::unconstrained;
    std::vector<std::pair<std::size_t, double>> per_sample;  // (query id, distance)

    friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

namespace detail {
inline double ordered_mean(const std::vector<std::pair<std::size_t, double>>& samples) {
    double sum = 0.0;
    for (const auto& [id, d] : samples) sum += d;
    return sum / static_cast<double>(samples.size());
}
}  // namespace detail

/// Class-1 rows drawn uniformly without replacement (all of them when count >= |X1|), ascending.
[[nodiscard]] inline std::vector<std::size_t> sample_class1_queries(const Dataset& data, std::size_t count,
                                                                    std::uint64_t seed) {
    std::vector<std::size_t> ones;
    for (std::size_t i = 0; i < data.size(); ++i)
        if (data.labels()[i] == 1) ones.push_back(i);
    Rng rng(seed);
    rng.shuffle(std::span(ones));
    ones.resize(std::min(count, ones.size()));
    std::sort(ones.begin(), ones.end());
    return ones;
}

/// Mean l2(query, d*) over feasible-mode results. ids default to 0..k-1.
[[nodiscard]] inline MetricReport mean_unconstrained_distance(const std::vector<CounterfactualResult>& results,
                                                              std::vector<std::size_t> ids = {}) {
    if (results.empty()) throw argument_error("mean_unconstrained_distance: empty sample");
    if (ids.empty()) {
        ids.resize(results.size());
        std::iota(ids.begin(), ids.end(), std::size_t{0});
    }
    if (ids.size() != results.size()) throw argument_error("mean_unconstrained_distance: id count mismatch");
    MetricReport report;
    report.mode = MetricMode::unconstrained;
    for (std::size_t k = 0; k < results.size(); ++k) {
        if (results[k].mode != ResultMode::feasible)
            throw argument_error("mean_unconstrained_distance: result " + std::to_string(ids[k]) + " is not feasible-mode");
        report.per_sample.emplace_back(ids[k], results[k].distance);
    }
    report.sample_count = report.per_sample.size();
    report.mean_distance = detail::ordered_mean(report.per_sample);
    return report;
}

/// Mean over (x', index) of the distance from x' to its exact nearest indexed boundary point.
[[nodiscard]] inline MetricReport mean_bounded_distance(const std::vector<std::pair<Instance, const NearestIndex*>>& bounded) {
    if (bounded.empty()) throw argument_error("mean_bounded_distance: empty sample");
    MetricReport report;
    report.mode = MetricMode::constrained;
    for (std::size_t k = 0; k < bounded.size(); ++k)
        report.per_sample.emplace_back(k, bounded[k].second->nearest(bounded[k].first).distance);
    report.sample_count = report.per_sample.size();
    report.mean_distance = detail::ordered_mean(report.per_sample);
    return report;
}

inline void write_metric_csv(std::ostream& out, const MetricReport& r) {
    out << "query_id,distance\n";
    for (const auto& [id, d] : r.per_sample) {
        out << id << ',';
        detail::write_double(out, d);
        out << '\n';
    }
}

// ---------------------------------------------------------------------------------------------
// Benchmark harness

enum class BenchMethod { ssba, grid };

struct BenchCase {
    std::size_t n_features = 2;
    BenchMethod method = BenchMethod::ssba;
    std::uint64_t limit = 10'000;  // threshold T for ssba, resolution R for grid
};

struct BenchConfig {
    std::vector<BenchCase> cases;
    std::size_t n_samples = 2000;
    double class_sep = 2.0;
    std::uint64_t seed = 0;
    double epsilon = 1e-3;
    std::size_t batch_size = 1000;
    std::size_t threads = 1;
    std::uint64_t memory_budget_bytes = 16ULL << 30;
    std::size_t repeats = 1;
};

struct BenchRecord {
    std::size_t n_features = 0;
    BenchMethod method = BenchMethod::ssba;
    std::uint64_t threshold_T = 0;  // requested points: T, or R^n for grid (saturating)
    std::uint64_t resolution = 0;   // grid only
    double wall_time = 0.0;         // seconds, first run
    std::vector<double> repeat_times;
    std::size_t points_generated = 0;
    std::optional<std::string> error;
    long double required_bytes = 0.0L;  // grid budget errors
};

/// Parses "ssba:2:10000, grid:10:10" into cases (method:features:limit).
[[nodiscard]] inline std::vector<BenchCase> parse_bench_cases(std::string_view text) {
    std::vector<BenchCase> cases;
    for (auto item : detail::split_commas(text)) {
        if (item.empty()) continue;
        const auto c1 = item.find(':');
        const auto c2 = c1 == std::string_view::npos ? c1 : item.find(':', c1 + 1);
        if (c2 == std::string_view::npos) throw argument_error("bench case '" + std::string(item) + "': expected method:features:limit");
        BenchCase bc;
        const auto method = item.substr(0, c1);
        if (method == "ssba")
            bc.method = BenchMethod::ssba;
        else if (method == "grid")
            bc.method = BenchMethod::grid;
        else
            throw argument_error("bench case '" + std::string(item) + "': unknown method '" + std::string(method) + "'");
        const auto parse = [&](std::string_view s, std::uint64_t& v) {
            const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            if (ec != std::errc() || ptr != s.data() + s.size())
                throw argument_error("bench case '" + std::string(item) + "': bad number '" + std::string(s) + "'");
        };
        std::uint64_t features = 0;
        parse(item.substr(c1 + 1, c2 - c1 - 1), features);
        parse(item.substr(c2 + 1), bc.limit);
        if (features == 0) throw argument_error("bench case '" + std::string(item) + "': features must be positive");
        bc.n_features = static_cast<std::size_t>(features);
        cases.push_back(bc);
    }
    return cases;
}

/// Times boundary generation only; data generation and training happen outside the clock.
/// Grid budget refusals become error records. SSBA with T = 0 is an argument error.
[[nodiscard]] inline std::vector<BenchRecord> run_benchmark(const BenchConfig& config) {
    for (const auto& c : config.cases)
        if (c.method == BenchMethod::ssba && c.limit == 0) throw argument_error("run_benchmark: threshold_T must be positive");

    using clock = std::chrono::steady_clock;
    std::vector<BenchRecord> records;
    std::map<std::size_t, std::pair<Dataset, std::shared_ptr<LinearModel>>> fitted;
    for (const auto& c : config.cases) {
        auto it = fitted.find(c.n_features);
        if (it == fitted.end()) {
            auto data = make_classification(config.n_samples, c.n_features, config.class_sep, config.seed);
            auto model = train_logistic(data, 0.1, 200, config.seed).first;
            it = fitted.emplace(c.n_features, std::pair{std::move(data), std::move(model)}).first;
        }
        const auto& [data, model] = it->second;

        BenchRecord rec;
        rec.n_features = c.n_features;
        rec.method = c.method;
        const std::size_t runs = std::max<std::size_t>(1, config.repeats);
        for (std::size_t run = 0; run < runs; ++run) {
            const auto start = clock::now();
            try {
                if (c.method == BenchMethod::ssba) {
                    rec.threshold_T = c.limit;
                    BoundaryOptions opt;
                    opt.threshold_T = c.limit;
                    opt.epsilon = config.epsilon;
                    opt.seed = config.seed;
                    opt.batch_size = config.batch_size;
                    opt.threads = config.threads;
                    rec.points_generated = generate_boundary_points(*model, data, opt).size();
                } else {
                    rec.resolution = c.limit;
                    const long double total = std::pow(static_cast<long double>(c.limit), static_cast<long double>(c.n_features));
                    rec.threshold_T = total >= 1.8e19L ? ~std::uint64_t{0} : static_cast<std::uint64_t>(total);
                    rec.points_generated =
                        grid_boundary_points(*model, feature_bounds(data), c.limit, config.memory_budget_bytes).size();
                }
            } catch (const budget_error& e) {
                rec.error = e.what();
                rec.required_bytes = e.required_bytes();
                rec.points_generated = 0;
            }
            const double seconds = std::chrono::duration<double>(clock::now() - start).count();
            if (run == 0) rec.wall_time = seconds;
            rec.repeat_times.push_back(seconds);
            if (rec.error) break;
        }
        records.push_back(std::move(rec));
    }
    return records;
}

namespace detail {

inline std::string limit_label(const BenchRecord& r) {
    std::ostringstream s;
    if (r.method == BenchMethod::ssba) {
        s << "T=" << r.threshold_T;
    } else {
        s << "R=" << r.resolution << " (" << r.resolution << "^" << r.n_features << " points)";
    }
    return s.str();
}

inline std::string memory_label(const BenchRecord& r) {
    if (!r.error) return "-";
    std::ostringstream s;
    s << std::fixed << std::setprecision(0) << static_cast<double>(r.required_bytes / (1024.0L * 1024.0L * 1024.0L))
      << " GiB Memory Error";
    return s.str();
}

}  // namespace detail

/// Aligned text table: Features | Method | Limit for Boundary Points | Runtime | Memory / Error | Number.
inline void write_bench_table(std::ostream& out, const std::vector<BenchRecord>& records) {
    std::vector<std::array<std::string, 6>> rows{
        {"Features", "Method", "Limit for Boundary Points", "Runtime", "Memory / Error", "Number"}};
    for (const auto& r : records) {
        std::ostringstream t;
        if (r.error)
            t << "-";
        else
            t << std::fixed << std::setprecision(3) << r.wall_time << "s";
        rows.push_back({std::to_string(r.n_features), r.method == BenchMethod::ssba ? "SSBA" : "Grid-based",
                        detail::limit_label(r), t.str(), detail::memory_label(r), std::to_string(r.points_generated)});
    }
    std::array<std::size_t, 6> widths{};
    for (const auto& row : rows)
        for (std::size_t c = 0; c < 6; ++c) widths[c] = std::max(widths[c], row[c].size());
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < 6; ++c)
            out << (c ? " | " : "") << std::left << std::setw(static_cast<int>(widths[c])) << row[c];
        out << '\n';
    }
}

inline void write_bench_csv(std::ostream& out, const std::vector<BenchRecord>& records) {
    out << "features,method,threshold_T,resolution,wall_time_s,points_generated,required_bytes,error\n";
    for (const auto& r : records) {
        out << r.n_features << ',' << (r.method == BenchMethod::ssba ? "ssba" : "grid") << ',' << r.threshold_T << ','
            << r.resolution << ',';
        detail::write_double(out, r.wall_time);
        out << ',' << r.points_generated << ',';
        detail::write_double(out, static_cast<double>(r.required_bytes));
        out << ',' << (r.error ? "budget" : "") << '\n';
    }
}

/// Scatter data for external plotting: one row per dataset point, boundary point, query and
/// counterfactual, tagged by kind. Query/CFE rows share a segment id.
inline void write_plot_csv(std::ostream& out, const Dataset& data, const BoundaryPointSet* set,
                           const std::vector<CounterfactualResult>& results, std::size_t max_boundary_points = 5000) {
    out << "kind,segment,label";
    for (const auto& f : data.schema().features) out << ',' << f.name;
    out << '\n';
    const auto row = [&](std::string_view kind, long long segment, int label, std::span<const double> p) {
        out << kind << ',' << segment << ',' << label;
        for (double v : p) {
            out << ',';
            detail::write_double(out, v);
        }
        out << '\n';
    };
    for (std::size_t i = 0; i < data.size(); ++i) row("data", -1, data.labels()[i], data.row(i));
    if (set) {
        const std::size_t stride = std::max<std::size_t>(1, (set->size() + max_boundary_points - 1) / max_boundary_points);
        for (std::size_t i = 0; i < set->size(); i += stride) row("boundary", -1, -1, set->points.row(i));
    }
    for (std::size_t k = 0; k < results.size(); ++k) {
        row("query", static_cast<long long>(k), results[k].query_label, results[k].query);
        row("counterfactual", static_cast<long long>(k), -1,
            results[k].crossed ? std::span<const double>(*results[k].crossed) : std::span<const double>(results[k].boundary_point));
    }
}

}  // namespace ssba
