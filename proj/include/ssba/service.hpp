#pragma once

// HTTP facade over the library. Needs cpp-httplib on the include path.

#include <atomic>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "ssba/boundary.hpp"
#include "ssba/boundary_io.hpp"
#include "ssba/datasets.hpp"
#include "ssba/error.hpp"
#include "ssba/explain.hpp"
#include "ssba/models.hpp"
#include "ssba/records.hpp"

namespace ssba::service {

using nlohmann::json;

/// Fixed number of threads draining a FIFO of jobs. Destruction finishes queued jobs.
class WorkerPool {
public:
    explicit WorkerPool(std::size_t workers) {
        if (workers == 0) throw argument_error("worker pool needs at least one thread");
        for (std::size_t i = 0; i < workers; ++i)
            threads_.emplace_back([this](std::stop_token stop) { run(stop); });
    }
    ~WorkerPool() {
        {
            std::lock_guard lock(mutex_);
            closing_ = true;
        }
        cv_.notify_all();
    }
    WorkerPool(const WorkerPool&) = delete;
    WorkerPool& operator=(const WorkerPool&) = delete;

    void submit(std::function<void()> job) {
        {
            std::lock_guard lock(mutex_);
            jobs_.push_back(std::move(job));
        }
        cv_.notify_one();
    }

private:
    void run(std::stop_token) {
        for (;;) {
            std::function<void()> job;
            {
                std::unique_lock lock(mutex_);
                cv_.wait(lock, [&] { return closing_ || !jobs_.empty(); });
                if (jobs_.empty()) return;
                job = std::move(jobs_.front());
                jobs_.pop_front();
            }
            job();
        }
    }

    std::mutex mutex_;
    std::condition_variable cv_;
    std::deque<std::function<void()>> jobs_;
    bool closing_ = false;
    std::vector<std::jthread> threads_;  // last member: joined before the queue is destroyed
};

enum class JobStatus { queued, running, done, failed };

[[nodiscard]] inline std::string_view to_string(JobStatus s) {
    switch (s) {
        case JobStatus::queued: return "queued";
        case JobStatus::running: return "running";
        case JobStatus::done: return "done";
        case JobStatus::failed: return "failed";
    }
    return "failed";
}

struct ModelEntry {
    ClassifierPtr model;
    std::string dataset_id;
    ModelSpec spec;
    TrainReport report;
};

struct BoundaryEntry {
    std::string model_id, dataset_id;
    std::string method = "ssba";
    double epsilon = 1e-3;
    std::uint64_t threshold_T = 0;
    std::uint64_t seed = 0;
    std::atomic<JobStatus> status{JobStatus::queued};
    std::atomic<std::size_t> processed{0}, total{0};
    // Written once by the job before status becomes done/failed.
    std::shared_ptr<const BoundaryPointSet> set;
    std::shared_ptr<const Explainer> explainer;
    std::string path, error, file_hash;
};

/// Everything the server holds. Readers take the shared lock; inserts and deletes the exclusive one.
class SessionState {
public:
    std::string add_dataset(std::shared_ptr<const Dataset> d) {
        std::unique_lock lock(mutex_);
        auto id = "d" + std::to_string(++next_dataset_);
        datasets_.emplace(id, std::move(d));
        return id;
    }
    std::string add_model(std::shared_ptr<const ModelEntry> m) {
        std::unique_lock lock(mutex_);
        auto id = "m" + std::to_string(++next_model_);
        models_.emplace(id, std::move(m));
        return id;
    }
    std::string add_boundary(std::shared_ptr<BoundaryEntry> b) {
        std::unique_lock lock(mutex_);
        auto id = "b" + std::to_string(++next_boundary_);
        boundaries_.emplace(id, std::move(b));
        return id;
    }

    [[nodiscard]] std::shared_ptr<const Dataset> dataset(const std::string& id) const { return find(datasets_, id); }
    [[nodiscard]] std::shared_ptr<const ModelEntry> model(const std::string& id) const { return find(models_, id); }
    [[nodiscard]] std::shared_ptr<BoundaryEntry> boundary(const std::string& id) const { return find(boundaries_, id); }

    /// False when a queued or running job still references the dataset or model.
    bool erase_dataset(const std::string& id) { return erase(datasets_, id, [&](const BoundaryEntry& b) { return b.dataset_id == id; }); }
    bool erase_model(const std::string& id) { return erase(models_, id, [&](const BoundaryEntry& b) { return b.model_id == id; }); }

private:
    template <class Map>
    typename Map::mapped_type find(const Map& m, const std::string& id) const {
        std::shared_lock lock(mutex_);
        const auto it = m.find(id);
        return it == m.end() ? nullptr : it->second;
    }

    template <class Map, class Refers>
    bool erase(Map& m, const std::string& id, Refers refers) {
        std::unique_lock lock(mutex_);
        for (const auto& [bid, b] : boundaries_) {
            const auto s = b->status.load();
            if ((s == JobStatus::queued || s == JobStatus::running) && refers(*b)) return false;
        }
        m.erase(id);
        return true;
    }

    mutable std::shared_mutex mutex_;
    std::map<std::string, std::shared_ptr<const Dataset>> datasets_;
    std::map<std::string, std::shared_ptr<const ModelEntry>> models_;
    std::map<std::string, std::shared_ptr<BoundaryEntry>> boundaries_;
    std::uint64_t next_dataset_ = 0, next_model_ = 0, next_boundary_ = 0;
};

struct ServiceOptions {
    std::string data_dir = "ssba-data";
    std::size_t workers = 2;
    std::size_t threads_per_job = 1;
    std::uint64_t memory_budget = 16ULL << 30;
    std::size_t max_points = 5000;  // cap on point payloads
};

/// HTTP error carrying its status code.
struct http_error : error {
    http_error(int status, const std::string& what) : error(what), status(status) {}
    int status;
};

namespace detail {

inline std::string hex64(std::uint64_t v) {
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << v;
    return s.str();
}

inline json points_payload(const Matrix& m, std::size_t cap, const std::vector<Label>* labels = nullptr) {
    const std::size_t stride = std::max<std::size_t>(1, (m.rows() + cap - 1) / std::max<std::size_t>(1, cap));
    json points = json::array(), out_labels = json::array();
    for (std::size_t i = 0; i < m.rows(); i += stride) {
        points.push_back(std::vector<double>(m.row(i).begin(), m.row(i).end()));
        if (labels) out_labels.push_back((*labels)[i]);
    }
    json j{{"total", m.rows()}, {"returned", points.size()}, {"points", std::move(points)}};
    if (labels) j["labels"] = std::move(out_labels);
    return j;
}

inline void require_object(const json& body) {
    if (!body.is_object()) throw http_error(400, "request body must be a JSON object");
}

template <class T>
T get_or(const json& body, const char* key, T fallback) {
    const auto it = body.find(key);
    return it == body.end() || it->is_null() ? fallback : it->get<T>();
}

inline std::string required_string(const json& body, const char* key) {
    const auto it = body.find(key);
    if (it == body.end() || !it->is_string()) throw http_error(400, std::string("missing string field '") + key + "'");
    return it->get<std::string>();
}

}  // namespace detail

/// Routes:
///   POST   /datasets               generator spec, toy, or CSV text (JSON or text/csv body)
///   GET    /datasets/{id}/points   scatter payload, capped
///   DELETE /datasets/{id}
///   POST   /models                 {dataset_id, family, hyperparameters, seed}
///   DELETE /models/{id}
///   POST   /boundary               {model_id, dataset_id, threshold_T, epsilon, seed, ...} -> 202
///   GET    /boundary/{id}/status
///   GET    /boundary/{id}/points   capped sample
///   POST   /explain                {boundary_id, query, constraints, eps0, ...}
///   GET    /health
class Service {
public:
    explicit Service(ServiceOptions opt = {}) : opt_(std::move(opt)), pool_(opt_.workers) {
        std::filesystem::create_directories(opt_.data_dir);
        routes();
    }
    ~Service() { stop(); }

    [[nodiscard]] httplib::Server& http() noexcept { return server_; }
    [[nodiscard]] SessionState& state() noexcept { return state_; }

    /// Binds; port 0 picks a free port. Returns the bound port.
    int bind(const std::string& host, int port) {
        const int bound = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
        if (bound < 0) throw error("cannot bind " + host + ":" + std::to_string(port));
        return bound;
    }
    /// Serves until stop(); call after bind.
    bool run() { return server_.listen_after_bind(); }
    void stop() {
        if (server_.is_running()) server_.stop();
    }

    /// Blocks until the boundary job leaves the queued/running states.
    JobStatus wait(const std::string& boundary_id) const {
        const auto b = state_.boundary(boundary_id);
        if (!b) throw http_error(404, "unknown boundary id '" + boundary_id + "'");
        for (;;) {
            const auto s = b->status.load();
            if (s == JobStatus::done || s == JobStatus::failed) return s;
            std::this_thread::sleep_for(std::chrono::milliseconds(2));
        }
    }

    // Handlers, callable without HTTP. Each returns the response body; errors are http_error.

    json create_dataset(const json& body) {
        detail::require_object(body);
        std::shared_ptr<const Dataset> data;
        if (const auto g = body.find("generator"); g != body.end()) {
            data = std::make_shared<const Dataset>(make_classification(
                detail::get_or<std::size_t>(*g, "samples", 2000), detail::get_or<std::size_t>(*g, "features", 2),
                detail::get_or<double>(*g, "class_sep", 2.0), detail::get_or<std::uint64_t>(*g, "seed", 0)));
        } else if (const auto t = body.find("toy"); t != body.end()) {
            data = std::make_shared<const Dataset>(make_toy(detail::get_or<std::uint64_t>(*t, "seed", 0)));
        } else if (const auto c = body.find("csv"); c != body.end() && c->is_string()) {
            std::map<std::string, std::size_t> categorical;
            if (const auto k = body.find("categorical"); k != body.end()) categorical = k->get<std::map<std::string, std::size_t>>();
            data = std::make_shared<const Dataset>(parse_csv_text(c->get<std::string>(), detail::get_or<std::string>(body, "label", "label"), categorical));
        } else {
            throw http_error(400, "expected one of 'generator', 'toy' or 'csv'");
        }
        return dataset_summary(state_.add_dataset(data), *data);
    }

    json create_dataset_from_csv(const std::string& text, const std::string& label) {
        const auto data = std::make_shared<const Dataset>(parse_csv_text(text, label, {}));
        return dataset_summary(state_.add_dataset(data), *data);
    }

    json dataset_points(const std::string& id, std::size_t cap) const {
        const auto d = state_.dataset(id);
        if (!d) throw http_error(404, "unknown dataset id '" + id + "'");
        auto j = detail::points_payload(d->rows(), std::min(cap, opt_.max_points), &d->labels());
        j["features"] = to_json(d->schema());
        return j;
    }

    json train(const json& body) {
        detail::require_object(body);
        const auto dataset_id = detail::required_string(body, "dataset_id");
        const auto data = state_.dataset(dataset_id);
        if (!data) throw http_error(404, "unknown dataset id '" + dataset_id + "'");
        ModelSpec spec;
        spec.family = detail::required_string(body, "family");
        spec.seed = detail::get_or<std::uint64_t>(body, "seed", 0);
        if (const auto h = body.find("hyperparameters"); h != body.end() && !h->is_null()) {
            if (!h->is_object()) throw http_error(400, "hyperparameters must be an object");
            for (const auto& [key, v] : h->items()) {
                if (key == "learning_rate") spec.learning_rate = v.get<double>();
                else if (key == "epochs") spec.epochs = v.get<std::size_t>();
                else if (key == "regularization") spec.regularization = v.get<double>();
                else if (key == "hidden") spec.hidden_sizes = v.get<std::vector<std::size_t>>();
                else if (key == "batch_size") spec.batch_size = v.get<std::size_t>();
                else if (key == "n_trees") spec.n_trees = v.get<std::size_t>();
                else if (key == "max_depth") spec.max_depth = v.get<std::size_t>();
                else if (key == "max_features") spec.max_features = v.get<std::size_t>();
                else throw http_error(400, "unknown hyperparameter '" + key + "'");
            }
        }
        auto [model, report] = train_model(*data, spec);
        auto entry = std::make_shared<const ModelEntry>(ModelEntry{model, dataset_id, spec, report});
        const auto id = state_.add_model(entry);
        return {{"id", id}, {"family", spec.family}, {"dataset_id", dataset_id}, {"report", to_json(report)},
                {"fingerprint", detail::hex64(model->fingerprint())}};
    }

    json start_boundary(const json& body) {
        detail::require_object(body);
        const auto model_id = detail::required_string(body, "model_id");
        const auto model = state_.model(model_id);
        if (!model) throw http_error(404, "unknown model id '" + model_id + "'");
        const auto dataset_id = detail::get_or<std::string>(body, "dataset_id", model->dataset_id);
        const auto data = state_.dataset(dataset_id);
        if (!data) throw http_error(404, "unknown dataset id '" + dataset_id + "'");
        if (data->width() != model->model->width()) throw http_error(400, "dataset and model widths differ");

        auto entry = std::make_shared<BoundaryEntry>();
        entry->model_id = model_id;
        entry->dataset_id = dataset_id;
        entry->method = detail::get_or<std::string>(body, "method", "ssba");
        BoundaryOptions opt;
        opt.threshold_T = detail::get_or<std::uint64_t>(body, "threshold_T", opt.threshold_T);
        opt.epsilon = detail::get_or<double>(body, "epsilon", opt.epsilon);
        opt.seed = detail::get_or<std::uint64_t>(body, "seed", 0);
        opt.batch_size = detail::get_or<std::size_t>(body, "batch_size", opt.batch_size);
        opt.max_iter = detail::get_or<std::size_t>(body, "max_iter", opt.max_iter);
        opt.deduplicate = detail::get_or<bool>(body, "deduplicate", false);
        opt.threads = opt_.threads_per_job;
        const auto resolution = detail::get_or<std::size_t>(body, "resolution", 100);
        if (entry->method == "ssba") {
            if (opt.threshold_T == 0) throw http_error(400, "threshold_T must be positive");
            if (!(opt.epsilon > 0.0 && opt.epsilon < 1.0)) throw http_error(400, "epsilon must lie in (0, 1)");
            if (opt.batch_size == 0 || opt.max_iter == 0) throw http_error(400, "batch_size and max_iter must be positive");
        } else if (entry->method == "grid") {
            if (resolution < 2) throw http_error(400, "resolution must be at least 2");
        } else {
            throw http_error(400, "unknown boundary method '" + entry->method + "'");
        }
        entry->epsilon = opt.epsilon;
        entry->threshold_T = opt.threshold_T;
        entry->seed = opt.seed;
        const auto id = state_.add_boundary(entry);
        entry->path = (std::filesystem::path(opt_.data_dir) / (id + ".ssbab")).string();

        pool_.submit([entry, model, data, opt, resolution, this] {
            entry->status = JobStatus::running;
            try {
                auto set = std::make_shared<BoundaryPointSet>(
                    entry->method == "ssba"
                        ? generate_boundary_points(*model->model, *data, opt,
                                                   [&](std::size_t done, std::size_t total) {
                                                       entry->processed = done;
                                                       entry->total = total;
                                                   })
                        : grid_boundary_points(*model->model, feature_bounds(*data), resolution, opt_.memory_budget));
                save_boundary(entry->path, *set);
                entry->file_hash = detail::hex64(boundary_digest(*set));
                if (set->size() > 0)
                    entry->explainer = std::make_shared<const Explainer>(model->model, set, data->schema());
                entry->set = std::move(set);
                entry->status = JobStatus::done;
            } catch (const std::exception& e) {
                entry->error = e.what();
                entry->status = JobStatus::failed;
            }
        });
        return {{"id", id}, {"status", "queued"}};
    }

    json boundary_status(const std::string& id) const {
        const auto b = state_.boundary(id);
        if (!b) throw http_error(404, "unknown boundary id '" + id + "'");
        const auto status = b->status.load();
        json j{{"id", id},
               {"status", to_string(status)},
               {"model_id", b->model_id},
               {"dataset_id", b->dataset_id},
               {"method", b->method},
               {"epsilon", b->epsilon},
               {"threshold_T", b->threshold_T},
               {"seed", b->seed},
               {"processed", b->processed.load()},
               {"total", b->total.load()}};
        if (status == JobStatus::done) {
            j["count"] = b->set->size();
            j["path"] = b->path;
            j["file_hash"] = b->file_hash;
        } else if (status == JobStatus::failed) {
            j["error"] = b->error;
        }
        return j;
    }

    json boundary_points(const std::string& id, std::size_t cap) const {
        const auto b = ready_boundary(id);
        return detail::points_payload(b->set->points, std::min(cap, opt_.max_points));
    }

    json explain(const json& body) const {
        detail::require_object(body);
        const auto b = ready_boundary(detail::required_string(body, "boundary_id"));
        if (!b->explainer) throw http_error(409, "boundary set is empty");
        const auto& schema = state_.dataset(b->dataset_id) ? state_.dataset(b->dataset_id)->schema()
                                                           : FeatureSchema::continuous(b->set->width());
        const auto q = body.find("query");
        if (q == body.end() || !q->is_array()) throw http_error(400, "missing numeric array 'query'");
        const auto query = q->get<std::vector<double>>();
        if (query.size() != b->set->width())
            throw http_error(400, "query has " + std::to_string(query.size()) + " values, expected " + std::to_string(b->set->width()));
        const auto constraints = constraints_from_json(body.value("constraints", json()), schema);
        ExplainOptions opt;
        opt.eps0 = detail::get_or<double>(body, "eps0", opt.eps0);
        opt.max_doublings = detail::get_or<std::size_t>(body, "max_doublings", opt.max_doublings);
        opt.categorical_tolerance = detail::get_or<double>(body, "tolerance", opt.categorical_tolerance);
        opt.samples_per_dim = detail::get_or<std::size_t>(body, "samples_per_dim", opt.samples_per_dim);
        opt.seed = detail::get_or<std::uint64_t>(body, "seed", 0);
        auto j = to_json(b->explainer->explain(query, constraints, opt), &schema);
        j["boundary_id"] = detail::required_string(body, "boundary_id");
        return j;
    }

private:
    static Dataset parse_csv_text(const std::string& text, const std::string& label,
                                  const std::map<std::string, std::size_t>& categorical) {
        std::istringstream in(text);
        std::string header;
        if (!std::getline(in, header)) throw parse_error("empty CSV", 0, "");
        auto schema = schema_from_header(header, label);
        for (const auto& [name, count] : categorical) {
            const auto i = schema.index_of(name);
            schema.features[i].kind = FeatureKind::categorical;
            schema.features[i].category_count = count;
        }
        in.clear();
        in.seekg(0);
        return read_csv(in, std::move(schema), label);
    }

    static json dataset_summary(const std::string& id, const Dataset& d) {
        json bounds = json::array();
        for (const auto& [lo, hi] : feature_bounds(d)) bounds.push_back({lo, hi});
        return {{"id", id},
                {"rows", d.size()},
                {"n_features", d.width()},
                {"class_counts", {d.count(0), d.count(1)}},
                {"schema", to_json(d.schema())},
                {"bounds", std::move(bounds)}};
    }

    std::shared_ptr<BoundaryEntry> ready_boundary(const std::string& id) const {
        const auto b = state_.boundary(id);
        if (!b) throw http_error(404, "unknown boundary id '" + id + "'");
        const auto s = b->status.load();
        if (s == JobStatus::failed) throw http_error(409, "boundary job failed: " + b->error);
        if (s != JobStatus::done) throw http_error(409, "boundary job is still " + std::string(to_string(s)));
        return b;
    }

    static void send(httplib::Response& res, int status, const json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    /// Maps library and parse errors to status codes.
    template <class F>
    static httplib::Server::Handler guarded(F f, int ok_status = 200) {
        return [f = std::move(f), ok_status](const httplib::Request& req, httplib::Response& res) {
            try {
                send(res, ok_status, f(req));
            } catch (const http_error& e) {
                send(res, e.status, {{"error", e.what()}});
            } catch (const parse_error& e) {
                send(res, 422, {{"error", e.what()}, {"row", e.row()}, {"column", e.column()}});
            } catch (const no_mutable_features& e) {
                send(res, 409, {{"error", e.what()}});
            } catch (const budget_error& e) {
                send(res, 413, {{"error", e.what()}, {"required_bytes", static_cast<double>(e.required_bytes())}});
            } catch (const json::exception& e) {
                send(res, 400, {{"error", std::string("malformed request: ") + e.what()}});
            } catch (const argument_error& e) {
                send(res, 400, {{"error", e.what()}});
            } catch (const training_error& e) {
                send(res, 422, {{"error", e.what()}});
            } catch (const no_correct_representatives& e) {
                send(res, 422, {{"error", e.what()}});
            } catch (const std::exception& e) {
                send(res, 500, {{"error", e.what()}});
            }
        };
    }

    static json parse_body(const httplib::Request& req) {
        if (req.body.empty()) throw http_error(400, "empty request body");
        return json::parse(req.body);
    }

    static std::size_t cap_param(const httplib::Request& req, std::size_t fallback) {
        if (!req.has_param("max")) return fallback;
        const auto v = req.get_param_value("max");
        std::size_t out = 0;
        const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
        if (ec != std::errc() || ptr != v.data() + v.size() || out == 0) throw http_error(400, "max must be a positive integer");
        return out;
    }

    void routes() {
        server_.Get("/health", guarded([](const httplib::Request&) { return json{{"status", "ok"}}; }));
        server_.Post("/datasets", guarded(
                                      [this](const httplib::Request& req) {
                                          if (req.get_header_value("Content-Type").starts_with("text/csv"))
                                              return create_dataset_from_csv(
                                                  req.body, req.has_param("label") ? req.get_param_value("label") : "label");
                                          return create_dataset(parse_body(req));
                                      },
                                      201));
        server_.Get(R"(/datasets/([^/]+)/points)", guarded([this](const httplib::Request& req) {
                        return dataset_points(req.matches[1], cap_param(req, opt_.max_points));
                    }));
        server_.Delete(R"(/datasets/([^/]+))", guarded([this](const httplib::Request& req) {
                           const std::string id = req.matches[1];
                           if (!state_.dataset(id)) throw http_error(404, "unknown dataset id '" + id + "'");
                           if (!state_.erase_dataset(id)) throw http_error(409, "dataset is referenced by a running job");
                           return json{{"deleted", id}};
                       }));
        server_.Post("/models", guarded([this](const httplib::Request& req) { return train(parse_body(req)); }, 201));
        server_.Delete(R"(/models/([^/]+))", guarded([this](const httplib::Request& req) {
                           const std::string id = req.matches[1];
                           if (!state_.model(id)) throw http_error(404, "unknown model id '" + id + "'");
                           if (!state_.erase_model(id)) throw http_error(409, "model is referenced by a running job");
                           return json{{"deleted", id}};
                       }));
        server_.Post("/boundary", guarded([this](const httplib::Request& req) { return start_boundary(parse_body(req)); }, 202));
        server_.Get(R"(/boundary/([^/]+)/status)",
                    guarded([this](const httplib::Request& req) { return boundary_status(req.matches[1]); }));
        server_.Get(R"(/boundary/([^/]+)/points)", guarded([this](const httplib::Request& req) {
                        return boundary_points(req.matches[1], cap_param(req, opt_.max_points));
                    }));
        server_.Post("/explain", guarded([this](const httplib::Request& req) { return explain(parse_body(req)); }));
    }

    ServiceOptions opt_;
    SessionState state_;
    httplib::Server server_;
    WorkerPool pool_;  // declared last: drains jobs before the state they touch is destroyed
};

}  // namespace ssba::service
