#pragma once

// HTTP boundary under /api/v1. `Service` maps a request to a JSON response
// and holds no HTTP state, so handlers are testable in-process; `Server`
// binds it to a socket with cpp-httplib.
//
// Auth (when a token is configured) is a static bearer token on every route
// except /health. Responses carry CORS headers for allow-listed origins.

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "cardio/alert.hpp"
#include "cardio/cohort.hpp"
#include "cardio/conversation.hpp"
#include "cardio/risk/train.hpp"
#include "cardio/schema.hpp"
#include "cardio/store.hpp"
#include "json.hpp"

namespace httplib {
class Server;
}

namespace cardio::api {

inline constexpr const char* kApiVersion = "1.0.0";

struct ApiConfig {
    std::string host = "127.0.0.1";
    int port = 8080; ///< 0 picks a free port
    std::filesystem::path data_dir;
    std::filesystem::path model_path; ///< empty or unloadable: risk unavailable
    std::vector<std::string> cors_origins;
    std::optional<std::string> auth_token;
    std::filesystem::path schema_dir;
    std::filesystem::path lexicon_path;
    std::filesystem::path corpus_path;
    alert::AlertPolicy policy;
    int threads = 8;
};

/// Defaults for the shipped schema, lexicon, and corpus locations.
ApiConfig default_config();

/// Reads a JSON config file; relative paths resolve against its directory.
/// Throws ConfigError.
ApiConfig load_config(const std::filesystem::path& file);

struct Request {
    std::string method;
    std::string path;
    std::map<std::string, std::string> query;
    std::map<std::string, std::string> headers; ///< lower-cased names
    std::string body;
};

struct Response {
    int status = 200;
    nlohmann::json body;
    std::map<std::string, std::string> headers;
    /// Schema name the body conforms to ("error" for failures).
    std::string schema;
};

class Service {
public:
    /// Throws ConfigError when the data directory or schemas are unusable.
    explicit Service(ApiConfig config);
    ~Service();

    Response handle(const Request& req);

    const ApiConfig& config() const { return config_; }
    const schema::SchemaSet& schemas() const { return schemas_; }
    store::Store& store() { return *store_; }
    bool model_available() const { return model_ != nullptr; }
    bool conversation_available() const { return engine_ != nullptr; }

private:
    Response route(const Request& req);
    Response health() const;
    Response list_patients() const;
    Response get_patient(const std::string& id) const;
    Response get_vitals(const std::string& id, const Request& req) const;
    Response get_risk(const std::string& id) const;
    Response get_conversations(const std::string& id, const Request& req) const;
    Response get_summary(const std::string& id, const Request& req) const;
    Response get_alerts(const std::string& id, const Request& req) const;
    Response post_note(const std::string& id, const Request& req);
    Response post_ingest(const Request& req);
    Response post_turn(const std::string& id, const Request& req);

    nlohmann::json parse_body(const Request& req, const std::string& schema_name) const;
    std::mutex& stream_lock(const std::string& patient_id, Metric m);
    std::mutex& patient_lock(const std::string& patient_id);

    ApiConfig config_;
    schema::SchemaSet schemas_;
    std::unique_ptr<store::Store> store_;
    std::unique_ptr<risk::TrainedModel> model_;
    std::unique_ptr<conv::DialogueEngine> engine_;

    std::mutex locks_mu_;
    std::map<std::string, std::unique_ptr<std::mutex>> stream_locks_;
    std::map<std::string, std::unique_ptr<std::mutex>> patient_locks_;
    std::map<std::string, conv::Session> sessions_; ///< guarded by the patient lock
};

/// Runs a Service on a socket in a background thread.
class Server {
public:
    explicit Server(Service& service);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    /// Binds and starts listening; returns the bound port. Throws Error when
    /// the bind fails.
    int start();
    /// Blocks until stop() is called from another thread or a signal handler.
    void wait();
    void stop();
    int port() const { return port_; }

private:
    Service& service_;
    std::unique_ptr<httplib::Server> http_;
    std::thread thread_;
    int port_ = 0;
};

/// Delivers emitted batches to a running service's ingestion endpoint.
class HttpSink : public sim::VitalSink {
public:
    HttpSink(std::string host, int port, std::optional<std::string> token = std::nullopt);
    void deliver(const IngestBatch& batch) override;

private:
    std::string host_;
    int port_;
    std::optional<std::string> token_;
};

} // namespace cardio::api
