// ssba command-line tool.
//
// Exit codes: 0 success, 1 unexpected failure, 2 usage or configuration error, 3 memory budget
// exceeded, 4 unreadable or malformed input, 5 no mutable features for explain.

#include <csignal>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ssba/ssba.hpp"
#include "ssba/config.hpp"
#include "ssba/service.hpp"

namespace {

using nlohmann::json;
using namespace ssba;

constexpr int exit_failure = 1;
constexpr int exit_usage = 2;
constexpr int exit_budget = 3;
constexpr int exit_input = 4;
constexpr int exit_no_mutable = 5;

struct GlobalFlags {
    std::optional<std::string> config, seed, threads, output_dir, memory_budget;
    std::vector<std::string> sets;  // section.key=value
};

/// Flags that map one-to-one onto config keys, collected per subcommand.
struct KeyFlags {
    std::deque<std::pair<std::string, std::optional<std::string>>> entries;  // stable addresses for CLI11

    void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
        entries.emplace_back(key, std::nullopt);
        app->add_option(flag, entries.back().second, help + " [" + key + "]");
    }
};

RunConfig resolve(const GlobalFlags& g, const KeyFlags& k) {
    RunConfig c;
    if (g.config) c = load_run_config(*g.config);
    for (const auto& kv : g.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw argument_error("--set expects section.key=value, got '" + kv + "'");
        c.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    for (const auto& [key, value] : k.entries)
        if (value) c.set(key, *value);
    if (g.seed) c.set("run.seed", *g.seed);
    if (g.threads) c.set("run.threads", *g.threads);
    if (g.output_dir) c.set("run.output_dir", *g.output_dir);
    if (g.memory_budget) c.set("run.memory_budget", *g.memory_budget);
    return c;
}

void prepare_output(const std::string& file) {
    const auto parent = std::filesystem::path(file).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
}

void write_text(const std::string& path, const std::string& text) {
    prepare_output(path);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw format_error("cannot write '" + path + "'");
    out << text;
}

ClassifierPtr read_model(const std::string& path) { return load_model(path); }

std::string hex(std::uint64_t v) {
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << v;
    return s.str();
}

Instance pick_query(const RunConfig& c, const Dataset& data) {
    if (c.query) return *c.query;
    if (c.query_row) {
        if (*c.query_row >= data.size()) throw argument_error("explain.row " + std::to_string(*c.query_row) + " is out of range");
        const auto r = data.row(*c.query_row);
        return {r.begin(), r.end()};
    }
    throw argument_error("explain needs a query (--query or --row)");
}

// ---------------------------------------------------------------------------------------------

int cmd_gen_data(const RunConfig& c) {
    const auto data = make_dataset(c);
    const auto path = c.dataset_file();
    prepare_output(path);
    std::ofstream out(path);
    if (!out) throw format_error("cannot write '" + path + "'");
    write_csv(out, data, c.label_column);
    std::cout << "dataset: " << path << " (" << data.size() << " rows, " << data.width() << " features, class counts "
              << data.count(0) << '/' << data.count(1) << ")\n";
    return 0;
}

int cmd_train(const RunConfig& c) {
    const auto data = make_dataset(c);
    auto spec = c.model;
    spec.seed = c.seed;
    const auto [model, report] = train_model(data, spec);
    const auto path = c.model_file();
    prepare_output(path);
    save_model(path, *model);
    json j = to_json(report);
    j["family"] = std::string(model->family());
    j["model"] = path;
    j["fingerprint"] = hex(model->fingerprint());
    std::cout << j.dump(2) << '\n';
    return 0;
}

int cmd_boundary(const RunConfig& c) {
    const auto data = make_dataset(c);
    const auto model = read_model(c.model_file());
    BoundaryPointSet set;
    if (c.boundary_method == "grid") {
        set = grid_boundary_points(*model, feature_bounds(data), c.resolution, c.memory_budget);
    } else {
        auto opt = c.boundary;
        opt.seed = c.seed;
        opt.threads = c.threads;
        set = generate_boundary_points(*model, data, opt);
    }
    const auto path = c.boundary_file();
    prepare_output(path);
    save_boundary(path, set);
    const auto truncated = std::count(set.truncated.begin(), set.truncated.end(), 1);
    std::cout << "boundary: " << path << '\n'
              << "method: " << c.boundary_method << '\n'
              << "points: " << set.size() << '\n'
              << "truncated: " << truncated << '\n'
              << "digest: " << hex(boundary_digest(set)) << '\n';
    return 0;
}

int cmd_explain(const RunConfig& c) {
    const auto data = make_dataset(c);
    const auto model = read_model(c.model_file());
    const auto set = std::make_shared<const BoundaryPointSet>(load_boundary(c.boundary_file()));
    verify_fingerprint(*set, *model, &std::cerr);
    const Explainer explainer(model, set, data.schema());
    const auto query = pick_query(c, data);
    auto opt = c.explain;
    opt.seed = c.seed;
    const auto result = explainer.explain(query, make_constraints(c, data.schema()), opt);
    const auto text = to_json(result, &data.schema()).dump(2) + "\n";
    const auto path = c.result_file("explain.json");
    write_text(path, text);
    std::cout << text;
    return 0;
}

int cmd_evaluate(const RunConfig& c) {
    const auto data = make_dataset(c);
    const auto model = read_model(c.model_file());
    const auto set = std::make_shared<const BoundaryPointSet>(load_boundary(c.boundary_file()));
    verify_fingerprint(*set, *model, &std::cerr);
    const Explainer explainer(model, set, data.schema());
    auto opt = c.explain;
    opt.seed = c.seed;

    const auto ids = sample_class1_queries(data, c.eval_queries, c.seed);
    std::vector<CounterfactualResult> results;
    for (auto id : ids) results.push_back(explainer.explain(data.row(id), ConstraintSet::for_schema(data.schema()), opt));
    const auto unconstrained = mean_unconstrained_distance(results, ids);

    json report{{"seed", c.seed}, {"unconstrained", to_json(unconstrained)}};
    const auto constraints = make_constraints(c, data.schema());
    if (!(constraints == ConstraintSet::for_schema(data.schema()))) {
        std::vector<std::pair<Instance, const NearestIndex*>> bounded;
        for (auto id : ids) {
            auto x = bounded_counterfactual(data.row(id), constraints, explainer.full_index(), opt.samples_per_dim, c.seed + id);
            bounded.emplace_back(std::move(x.point), &explainer.full_index());
        }
        report["constrained"] = to_json(mean_bounded_distance(bounded));
    }

    std::ostringstream csv;
    write_metric_csv(csv, unconstrained);
    write_text(c.path_for("", "metrics.csv"), csv.str());
    std::ostringstream plot;
    write_plot_csv(plot, data, set.get(), results);
    write_text(c.path_for("", "plot.csv"), plot.str());
    const auto text = report.dump(2) + "\n";
    write_text(c.result_file("metrics.json"), text);
    std::cout << text;
    return 0;
}

int cmd_bench(const RunConfig& c) {
    const auto records = run_benchmark(make_bench_config(c));
    std::ostringstream table, csv;
    write_bench_table(table, records);
    write_bench_csv(csv, records);
    write_text(c.path_for("", "bench.txt"), table.str());
    write_text(c.path_for("", "bench.csv"), csv.str());
    std::cout << table.str();
    const bool refused = std::any_of(records.begin(), records.end(), [](const BenchRecord& r) { return r.error.has_value(); });
    if (refused) std::cerr << "error: at least one case exceeded the memory budget\n";
    return refused ? exit_budget : 0;
}

service::Service* running_service = nullptr;

int cmd_serve(const RunConfig& c) {
    service::ServiceOptions opt;
    opt.data_dir = c.data_dir;
    opt.workers = c.workers;
    opt.threads_per_job = c.threads;
    opt.memory_budget = c.memory_budget;
    service::Service svc(opt);
    const int port = svc.bind(c.host, c.port);
    std::cout << "listening on http://" << c.host << ':' << port << std::endl;
    running_service = &svc;
    std::signal(SIGINT, [](int) {
        if (running_service) running_service->stop();
    });
    std::signal(SIGTERM, [](int) {
        if (running_service) running_service->stop();
    });
    svc.run();
    running_service = nullptr;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Decision boundary sampling and counterfactual explanations"};
    app.require_subcommand(1);
    GlobalFlags g;
    const auto global = [&](CLI::App* sub) {
        sub->add_option("--config", g.config, "INI run configuration")->envname("SSBA_CONFIG");
        sub->add_option("--seed", g.seed, "random seed")->envname("SSBA_SEED");
        sub->add_option("--threads", g.threads, "worker threads")->envname("SSBA_THREADS");
        sub->add_option("--output-dir", g.output_dir, "directory for artifacts")->envname("SSBA_OUTPUT_DIR");
        sub->add_option("--memory-budget", g.memory_budget, "grid memory budget, e.g. 16GiB")->envname("SSBA_MEMORY_BUDGET");
        sub->add_option("--set", g.sets, "override any config key: section.key=value");
    };
    const auto data_flags = [](CLI::App* sub, KeyFlags& k) {
        k.add(sub, "--source", "data.source", "generate, csv or toy");
        k.add(sub, "--csv", "data.csv", "CSV file to read");
        k.add(sub, "--label", "data.label", "label column name");
        k.add(sub, "--categorical", "data.categorical", "categorical columns name:count,...");
        k.add(sub, "--samples", "data.samples", "generated rows");
        k.add(sub, "--features", "data.features", "generated features");
        k.add(sub, "--class-sep", "data.class_sep", "distance between class means");
        k.add(sub, "--dataset", "paths.dataset", "dataset CSV output path");
    };

    std::map<std::string, KeyFlags> keys;
    std::map<std::string, std::function<int(const RunConfig&)>> commands;

    auto* gen = app.add_subcommand("gen-data", "write a dataset CSV");
    global(gen);
    data_flags(gen, keys["gen-data"]);
    commands["gen-data"] = cmd_gen_data;

    auto* train = app.add_subcommand("train", "train a classifier and save it");
    global(train);
    data_flags(train, keys["train"]);
    keys["train"].add(train, "--family", "model.family", "logistic, linear_svm, mlp or random_forest");
    keys["train"].add(train, "--learning-rate", "model.learning_rate", "step size");
    keys["train"].add(train, "--epochs", "model.epochs", "training epochs");
    keys["train"].add(train, "--regularization", "model.regularization", "SVM regularization");
    keys["train"].add(train, "--hidden", "model.hidden", "MLP hidden sizes, e.g. 16,16");
    keys["train"].add(train, "--trees", "model.trees", "forest size");
    keys["train"].add(train, "--max-depth", "model.max_depth", "tree depth limit");
    keys["train"].add(train, "--model", "paths.model", "model output path");
    commands["train"] = cmd_train;

    auto* boundary = app.add_subcommand("boundary", "generate decision boundary points");
    global(boundary);
    data_flags(boundary, keys["boundary"]);
    keys["boundary"].add(boundary, "--model", "paths.model", "model file");
    keys["boundary"].add(boundary, "--out", "paths.boundary", "boundary file output path");
    keys["boundary"].add(boundary, "--method", "boundary.method", "ssba or grid");
    keys["boundary"].add(boundary, "--threshold", "boundary.threshold", "number of pairs T");
    keys["boundary"].add(boundary, "--epsilon", "boundary.epsilon", "bisection tolerance");
    keys["boundary"].add(boundary, "--batch-size", "boundary.batch_size", "pairs per predict batch");
    keys["boundary"].add(boundary, "--max-iter", "boundary.max_iter", "bisection iteration cap");
    keys["boundary"].add(boundary, "--deduplicate", "boundary.deduplicate", "drop near-duplicate points");
    keys["boundary"].add(boundary, "--resolution", "boundary.resolution", "grid nodes per axis");
    commands["boundary"] = cmd_boundary;

    const auto explain_flags = [](CLI::App* sub, KeyFlags& k) {
        k.add(sub, "--model", "paths.model", "model file");
        k.add(sub, "--boundary", "paths.boundary", "boundary file");
        k.add(sub, "--out", "paths.result", "result JSON path");
        k.add(sub, "--immutable", "explain.immutable", "features that may not change");
        k.add(sub, "--equal", "explain.equal", "name:value,...");
        k.add(sub, "--lower", "explain.lower", "name:value,...");
        k.add(sub, "--upper", "explain.upper", "name:value,...");
        k.add(sub, "--delta", "explain.delta", "name:fraction,...");
        k.add(sub, "--eps0", "explain.eps0", "initial crossing step");
        k.add(sub, "--tolerance", "explain.tolerance", "categorical match tolerance");
    };
    auto* explain = app.add_subcommand("explain", "nearest counterfactual for one query");
    global(explain);
    data_flags(explain, keys["explain"]);
    explain_flags(explain, keys["explain"]);
    keys["explain"].add(explain, "--query", "explain.query", "comma-separated feature values");
    keys["explain"].add(explain, "--row", "explain.row", "use this dataset row as the query");
    commands["explain"] = cmd_explain;

    auto* evaluate = app.add_subcommand("evaluate", "average counterfactual distance metrics");
    global(evaluate);
    data_flags(evaluate, keys["evaluate"]);
    explain_flags(evaluate, keys["evaluate"]);
    keys["evaluate"].add(evaluate, "--queries", "evaluate.queries", "class-1 queries to sample");
    commands["evaluate"] = cmd_evaluate;

    auto* bench = app.add_subcommand("bench", "runtime and point-count benchmark");
    global(bench);
    keys["bench"].add(bench, "--cases", "bench.cases", "method:features:limit,...");
    keys["bench"].add(bench, "--samples", "bench.samples", "rows per generated dataset");
    keys["bench"].add(bench, "--class-sep", "bench.class_sep", "distance between class means");
    keys["bench"].add(bench, "--repeats", "bench.repeats", "timed runs per case");
    keys["bench"].add(bench, "--epsilon", "boundary.epsilon", "bisection tolerance");
    keys["bench"].add(bench, "--batch-size", "boundary.batch_size", "pairs per predict batch");
    commands["bench"] = cmd_bench;

    auto* serve = app.add_subcommand("serve", "run the HTTP service");
    global(serve);
    keys["serve"].add(serve, "--host", "serve.host", "bind address");
    keys["serve"].add(serve, "--port", "serve.port", "port (0 picks a free one)");
    keys["serve"].add(serve, "--data-dir", "serve.data_dir", "boundary file directory");
    keys["serve"].add(serve, "--workers", "serve.workers", "boundary job threads");
    serve->get_option("--host")->envname("SSBA_HOST");
    serve->get_option("--port")->envname("SSBA_PORT");
    serve->get_option("--data-dir")->envname("SSBA_DATA_DIR");
    commands["serve"] = cmd_serve;

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_usage;
    }

    const auto* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    try {
        const auto config = resolve(g, keys[name]);
        std::cout << "seed: " << config.seed << std::endl;
        return commands[name](config);
    } catch (const budget_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_budget;
    } catch (const no_mutable_features& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_no_mutable;
    } catch (const parse_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_input;
    } catch (const format_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_input;
    } catch (const argument_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_usage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_failure;
    }
}
