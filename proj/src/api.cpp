#include "cardio/api.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <fstream>

#include <fmt/format.h>

#include "cardio/pipeline.hpp"
#include "cardio/summary.hpp"
#include "httplib.h"

#ifndef CARDIO_SHARE_DIR
#define CARDIO_SHARE_DIR "."
#endif

namespace cardio::api {

using nlohmann::json;
namespace fs = std::filesystem;

ApiConfig default_config() {
    ApiConfig c;
    const fs::path share = CARDIO_SHARE_DIR;
    c.schema_dir = share / "schemas";
    c.lexicon_path = share / "data" / "lexicon.json";
    c.corpus_path = share / "data" / "knowledge.ndjson";
    return c;
}

ApiConfig load_config(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw ConfigError(fmt::format("cannot read service config '{}'", file.string()));
    const fs::path base = file.has_parent_path() ? file.parent_path() : fs::path(".");
    auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
    ApiConfig c = default_config();
    try {
        const auto j = json::parse(in);
        c.host = j.value("host", c.host);
        c.port = j.value("port", c.port);
        if (!j.contains("data_dir")) throw ConfigError("service config needs data_dir");
        c.data_dir = resolve(j.at("data_dir").get<std::string>());
        if (j.contains("model_path") && !j.at("model_path").is_null())
            c.model_path = resolve(j.at("model_path").get<std::string>());
        c.cors_origins = j.value("cors_origins", c.cors_origins);
        if (j.contains("auth_token") && !j.at("auth_token").is_null())
            c.auth_token = j.at("auth_token").get<std::string>();
        if (j.contains("schema_dir")) c.schema_dir = resolve(j.at("schema_dir").get<std::string>());
        if (j.contains("lexicon_path")) c.lexicon_path = resolve(j.at("lexicon_path").get<std::string>());
        if (j.contains("corpus_path")) c.corpus_path = resolve(j.at("corpus_path").get<std::string>());
        if (j.contains("alert_policy")) {
            const auto& p = j.at("alert_policy");
            c.policy = p.is_string() ? alert::load_policy(resolve(p.get<std::string>())) : p.get<alert::AlertPolicy>();
        }
        c.threads = j.value("threads", c.threads);
    } catch (const json::exception& e) {
        throw ConfigError(fmt::format("malformed service config '{}': {}", file.string(), e.what()));
    }
    if (c.port < 0 || c.port > 65535) throw ConfigError("port must be in [0, 65535]");
    if (c.threads < 1) throw ConfigError("threads must be >= 1");
    c.policy.validate();
    return c;
}

// ---------------------------------------------------------------------------
// Helpers

namespace {

Response error_response(int status, std::string code, std::string message, std::vector<std::string> fields = {}) {
    Response r;
    r.status = status;
    r.schema = "error";
    r.body = {{"error", {{"code", std::move(code)}, {"message", std::move(message)}, {"fields", std::move(fields)}}}};
    return r;
}

Response ok(json body, std::string schema, int status = 200) {
    Response r;
    r.status = status;
    r.body = std::move(body);
    r.schema = std::move(schema);
    return r;
}

std::optional<std::int64_t> query_int(const Request& req, const std::string& name, bool required) {
    auto it = req.query.find(name);
    if (it == req.query.end() || it->second.empty()) {
        if (required) throw ValidationError(fmt::format("query parameter '{}' is required", name), {"query." + name});
        return std::nullopt;
    }
    std::int64_t v = 0;
    const auto& s = it->second;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw ValidationError(fmt::format("query parameter '{}' must be an integer", name), {"query." + name});
    return v;
}

std::string query_string(const Request& req, const std::string& name) {
    auto it = req.query.find(name);
    if (it == req.query.end() || it->second.empty())
        throw ValidationError(fmt::format("query parameter '{}' is required", name), {"query." + name});
    return it->second;
}

std::vector<std::string> split_path(const std::string& path) {
    std::vector<std::string> parts;
    std::size_t i = 0;
    while (i < path.size()) {
        while (i < path.size() && path[i] == '/') ++i;
        std::size_t j = i;
        while (j < path.size() && path[j] != '/') ++j;
        if (j > i) parts.push_back(path.substr(i, j - i));
        i = j;
    }
    return parts;
}

EpochMs now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
}

} // namespace

// ---------------------------------------------------------------------------
// Service

Service::Service(ApiConfig config) : config_(std::move(config)) {
    config_.policy.validate();
    if (!fs::is_directory(config_.data_dir))
        throw ConfigError(fmt::format("data directory '{}' is not readable", config_.data_dir.string()));
    schemas_ = schema::SchemaSet(config_.schema_dir);
    store_ = std::make_unique<store::Store>(config_.data_dir);
    if (!config_.model_path.empty()) {
        try {
            model_ = std::make_unique<risk::TrainedModel>(risk::load_model(config_.model_path));
        } catch (const Error&) {
            model_.reset();
        }
    }
    try {
        engine_ = std::make_unique<conv::DialogueEngine>(conv::load_lexicon(config_.lexicon_path),
                                                         conv::load_corpus(config_.corpus_path));
    } catch (const Error&) {
        engine_.reset();
    }
}

Service::~Service() = default;

std::mutex& Service::stream_lock(const std::string& patient_id, Metric m) {
    std::lock_guard lk(locks_mu_);
    auto& p = stream_locks_[patient_id + "/" + std::string(to_string(m))];
    if (!p) p = std::make_unique<std::mutex>();
    return *p;
}

std::mutex& Service::patient_lock(const std::string& patient_id) {
    std::lock_guard lk(locks_mu_);
    auto& p = patient_locks_[patient_id];
    if (!p) p = std::make_unique<std::mutex>();
    return *p;
}

json Service::parse_body(const Request& req, const std::string& schema_name) const {
    json body;
    try {
        body = json::parse(req.body);
    } catch (const json::exception&) {
        throw ValidationError("request body is not valid JSON", {"$"});
    }
    const auto violations = schemas_.validate(body, schema_name);
    if (!violations.empty()) {
        std::vector<std::string> fields;
        for (const auto& v : violations) fields.push_back(v.path);
        throw ValidationError(fmt::format("{} {}", violations.front().path, violations.front().message), fields);
    }
    return body;
}

Response Service::handle(const Request& req) {
    Response resp;
    const auto origin = req.headers.find("origin");
    const bool cors = origin != req.headers.end() &&
                      std::find(config_.cors_origins.begin(), config_.cors_origins.end(), origin->second) !=
                          config_.cors_origins.end();
    if (req.method == "OPTIONS") {
        resp.status = cors ? 204 : 403;
        resp.body = nullptr;
    } else {
        try {
            resp = route(req);
        } catch (const ValidationError& e) {
            resp = error_response(400, "invalid_request", e.what(), e.fields());
        } catch (const NotFoundError& e) {
            resp = error_response(404, "not_found", e.what());
        } catch (const std::exception& e) {
            resp = error_response(500, "internal_error", e.what());
        }
    }
    if (cors) {
        resp.headers["Access-Control-Allow-Origin"] = origin->second;
        resp.headers["Vary"] = "Origin";
        resp.headers["Access-Control-Allow-Headers"] = "Authorization, Content-Type";
        resp.headers["Access-Control-Allow-Methods"] = "GET, POST, OPTIONS";
    }
    return resp;
}

Response Service::route(const Request& req) {
    const auto parts = split_path(req.path);
    if (parts.size() < 3 || parts[0] != "api" || parts[1] != "v1")
        return error_response(404, "not_found", fmt::format("no route for '{}'", req.path));
    const std::vector<std::string> rest(parts.begin() + 2, parts.end());
    const bool get = req.method == "GET", post = req.method == "POST";
    auto method_not_allowed = [&] {
        return error_response(405, "method_not_allowed", fmt::format("{} is not allowed on '{}'", req.method, req.path));
    };

    if (rest.size() == 1 && rest[0] == "health") return get ? health() : method_not_allowed();

    if (config_.auth_token) {
        auto it = req.headers.find("authorization");
        if (it == req.headers.end() || it->second != "Bearer " + *config_.auth_token)
            return error_response(401, "unauthorized", "missing or invalid bearer token");
    }

    if (rest.size() == 2 && rest[0] == "ingest" && rest[1] == "vitals")
        return post ? post_ingest(req) : method_not_allowed();
    if (rest[0] != "patients") return error_response(404, "not_found", fmt::format("no route for '{}'", req.path));
    if (rest.size() == 1) return get ? list_patients() : method_not_allowed();
    const std::string& id = rest[1];
    if (rest.size() == 2) return get ? get_patient(id) : method_not_allowed();
    const std::string& what = rest[2];
    if (rest.size() == 3) {
        if (what == "vitals") return get ? get_vitals(id, req) : method_not_allowed();
        if (what == "risk") return get ? get_risk(id) : method_not_allowed();
        if (what == "conversations") return get ? get_conversations(id, req) : method_not_allowed();
        if (what == "summary") return get ? get_summary(id, req) : method_not_allowed();
        if (what == "alerts") return get ? get_alerts(id, req) : method_not_allowed();
        if (what == "notes") return post ? post_note(id, req) : method_not_allowed();
    }
    if (rest.size() == 4 && what == "conversation" && rest[3] == "turn")
        return post ? post_turn(id, req) : method_not_allowed();
    return error_response(404, "not_found", fmt::format("no route for '{}'", req.path));
}

Response Service::health() const {
    const bool store_ok = fs::is_directory(config_.data_dir);
    json components = {{"store", store_ok ? "ok" : "unavailable"},
                       {"risk", model_ ? "available" : "unavailable"},
                       {"conversation", engine_ ? "available" : "unavailable"}};
    const bool all = store_ok && model_ && engine_;
    return ok({{"status", all ? "ok" : "degraded"}, {"components", components}, {"version", kApiVersion}}, "health");
}

Response Service::list_patients() const { return ok({{"patients", store_->list_patients()}}, "patients"); }

Response Service::get_patient(const std::string& id) const { return ok(store_->get_patient(id), "patient"); }

Response Service::get_vitals(const std::string& id, const Request& req) const {
    const auto metric_name = query_string(req, "metric");
    const auto metric = parse_metric(metric_name);
    if (!metric) throw ValidationError(fmt::format("unknown metric '{}'", metric_name), {"query.metric"});
    store::Resolution res = store::Resolution::raw;
    if (auto it = req.query.find("resolution"); it != req.query.end() && !it->second.empty()) {
        auto r = store::parse_resolution(it->second);
        if (!r) throw ValidationError(fmt::format("unknown resolution '{}'", it->second), {"query.resolution"});
        res = *r;
    }
    const auto from = *query_int(req, "from", true);
    const auto to = *query_int(req, "to", true);
    const auto result = store_->query_series({id, *metric, from, to, res});
    json samples = json::array();
    for (const auto& s : result.samples) samples.push_back({{"t", s.t}, {"v", s.value}});
    return ok({{"patient_id", id},
               {"metric", to_string(*metric)},
               {"from", from},
               {"to", to},
               {"resolution", to_string(res)},
               {"buckets", result.buckets},
               {"samples", std::move(samples)}},
              "vitals");
}

Response Service::get_risk(const std::string& id) const {
    if (!store_->has_patient(id)) throw NotFoundError(fmt::format("unknown patient '{}'", id));
    const auto assessments = store_->list_assessments(id);
    json trend = json::array();
    for (const auto& a : assessments) trend.push_back({{"t", a.t}, {"score", a.score}});
    json body = {{"patient_id", id},
                 {"model", model_ ? "available" : "unavailable"},
                 {"latest", nullptr},
                 {"trend", std::move(trend)}};
    if (!assessments.empty()) {
        body["latest"] = assessments.back();
        body["tier"] = to_string(assessments.back().tier);
    }
    return ok(std::move(body), "risk");
}

Response Service::get_conversations(const std::string& id, const Request& req) const {
    const auto date = query_string(req, "date");
    return ok({{"patient_id", id}, {"date", date}, {"turns", store_->get_log(id, date)}}, "conversations");
}

Response Service::get_summary(const std::string& id, const Request& req) const {
    const auto date = query_string(req, "date");
    if (!store_->has_patient(id)) throw NotFoundError(fmt::format("unknown patient '{}'", id));
    if (auto stored = store_->find_summary(id, date)) return ok({{"stored", true}, {"summary", *stored}}, "summary");
    auto s = summary::build_daily_summary(*store_, id, date, summary::baselines_from_store(*store_, id, config_.policy),
                                          config_.policy);
    return ok({{"stored", false}, {"summary", summary::to_json(s)}}, "summary");
}

Response Service::get_alerts(const std::string& id, const Request& req) const {
    const auto from = query_int(req, "from", false).value_or(INT64_MIN);
    const auto to = query_int(req, "to", false).value_or(INT64_MAX);
    if (from >= to) throw ValidationError("'from' must be before 'to'", {"query.from"});
    return ok({{"patient_id", id}, {"alerts", store_->list_alerts(id, from, to)}}, "alerts");
}

Response Service::post_note(const std::string& id, const Request& req) {
    const auto body = parse_body(req, "note_request");
    const auto note = store_->add_note(id, body.at("text").get<std::string>(), body.value("author", std::string()),
                                       body.contains("t") ? body.at("t").get<EpochMs>() : now_ms());
    return ok(note, "note", 201);
}

Response Service::post_ingest(const Request& req) {
    const auto body = parse_body(req, "ingest_request");
    const auto pid = body.at("patient_id").get<std::string>();
    const auto metric = *parse_metric(body.at("metric").get<std::string>());
    if (!store_->has_patient(pid)) throw NotFoundError(fmt::format("unknown patient '{}'", pid));

    std::vector<VitalSample> batch;
    for (const auto& s : body.at("samples"))
        batch.push_back({pid, metric, s.at("t").get<EpochMs>(), s.at("v").get<double>()});

    std::lock_guard lk(stream_lock(pid, metric));
    const auto outcome = ingest_and_detect(*store_, batch, config_.policy);
    const auto& receipt = outcome.receipt;

    json rejections = json::array();
    for (const auto& r : receipt.rejections) rejections.push_back({{"index", r.index}, {"reason", r.reason}});
    return ok({{"accepted", receipt.accepted},
               {"duplicates", receipt.duplicates},
               {"rejected", receipt.rejected},
               {"rejections", std::move(rejections)},
               {"alerts", outcome.alerts}},
              "ingest_receipt");
}

Response Service::post_turn(const std::string& id, const Request& req) {
    const auto body = parse_body(req, "turn_request");
    if (!engine_) return error_response(503, "unavailable", "conversation engine is not loaded");
    const auto patient = store_->get_patient(id);
    EpochMs t = body.contains("t") ? body.at("t").get<EpochMs>() : now_ms();
    const auto text = body.at("text").get<std::string>();

    std::lock_guard lk(patient_lock(id));
    const auto memory = store_->all_turns(id);
    auto it = sessions_.find(id);
    const bool fresh = it == sessions_.end() || it->second.stage == conv::Stage::done;
    if (fresh) {
        auto s = engine_->open_session(id, fmt::format("{}-{}", id, t), body.value("patient_name", patient.name));
        it = sessions_.insert_or_assign(id, std::move(s)).first;
    }
    auto& session = it->second;

    json out = {{"session_id", session.session_id}, {"patient_turn", nullptr}, {"alert", nullptr}};
    if (text.empty()) {
        out["assistant_turn"] = conv::record_turn(*store_, engine_->assistant_turn(session, memory, t));
    } else {
        // A patient speaking first still gets the greeting on record before
        // their turn.
        if (fresh) conv::record_turn(*store_, engine_->assistant_turn(session, memory, t++));
        auto r = engine_->patient_turn(session, memory, text, t);
        out["patient_turn"] = conv::record_turn(*store_, r.patient_turn);
        if (r.alert) out["alert"] = store_->store_alert(*r.alert);
        out["assistant_turn"] = conv::record_turn(*store_, r.assistant_turn);
    }
    static constexpr const char* kStages[] = {"greeting", "recall", "open_question", "follow_up",
                                              "screening", "closing", "done"};
    out["stage"] = kStages[static_cast<int>(session.stage)];
    return ok(std::move(out), "turn_response");
}

// ---------------------------------------------------------------------------
// Server

Server::Server(Service& service) : service_(service), http_(std::make_unique<httplib::Server>()) {
    const int threads = service_.config().threads;
    http_->new_task_queue = [threads] { return new httplib::ThreadPool(static_cast<std::size_t>(threads)); };
    auto bridge = [this](const httplib::Request& hreq, httplib::Response& hres) {
        Request req;
        req.method = hreq.method;
        req.path = hreq.path;
        for (const auto& [k, v] : hreq.params) req.query.emplace(k, v);
        for (const auto& [k, v] : hreq.headers) {
            std::string key = k;
            std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
            req.headers.emplace(std::move(key), v);
        }
        req.body = hreq.body;
        const auto resp = service_.handle(req);
        hres.status = resp.status;
        for (const auto& [k, v] : resp.headers) hres.set_header(k, v);
        if (!resp.body.is_null()) hres.set_content(resp.body.dump(), "application/json");
    };
    http_->Get(".*", bridge);
    http_->Post(".*", bridge);
    http_->Options(".*", bridge);
}

Server::~Server() { stop(); }

int Server::start() {
    const auto& c = service_.config();
    if (c.port == 0) {
        port_ = http_->bind_to_any_port(c.host);
        if (port_ <= 0) throw Error(fmt::format("cannot bind to {}", c.host));
    } else {
        if (!http_->bind_to_port(c.host, c.port)) throw Error(fmt::format("cannot bind to {}:{}", c.host, c.port));
        port_ = c.port;
    }
    thread_ = std::thread([this] { http_->listen_after_bind(); });
    http_->wait_until_ready();
    return port_;
}

void Server::wait() {
    if (thread_.joinable()) thread_.join();
}

void Server::stop() {
    if (http_) http_->stop();
    if (thread_.joinable()) thread_.join();
}

// ---------------------------------------------------------------------------
// HttpSink

HttpSink::HttpSink(std::string host, int port, std::optional<std::string> token)
    : host_(std::move(host)), port_(port), token_(std::move(token)) {}

void HttpSink::deliver(const IngestBatch& batch) {
    httplib::Client cli(host_, port_);
    cli.set_connection_timeout(5);
    if (token_) cli.set_bearer_token_auth(*token_);
    json samples = json::array();
    for (const auto& s : batch.samples) samples.push_back({{"t", s.t}, {"v", s.value}});
    const json body = {{"patient_id", batch.patient_id},
                       {"device_id", batch.device_id.empty() ? "sim" : batch.device_id},
                       {"metric", to_string(batch.metric)},
                       {"samples", std::move(samples)}};
    auto res = cli.Post("/api/v1/ingest/vitals", body.dump(), "application/json");
    if (!res) throw Error(fmt::format("ingestion request failed: {}", httplib::to_string(res.error())));
    if (res->status != 200) throw Error(fmt::format("ingestion rejected with status {}: {}", res->status, res->body));
}

} // namespace cardio::api
