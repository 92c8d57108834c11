#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "svae/data.hpp"
#include "svae/training.hpp"

namespace svae::service {

using json = nlohmann::json;

/// Loaded once at startup and only read afterwards.
struct Snapshot {
    Checkpoint checkpoint;
    SvaeModel model;
    std::optional<Dataset> samples;    // served by /api/dataset/sample
    std::optional<Dataset> baselines;  // GradientShap baseline pool

    static Snapshot from_checkpoint(Checkpoint ck, std::optional<Dataset> samples = std::nullopt,
                                    std::optional<Dataset> baselines = std::nullopt);
};

struct Response {
    int status = 200;
    json body;
};

json model_metadata(const Snapshot& s);

Response handle_model(const Snapshot& s);
Response handle_dataset_sample(const Snapshot& s, const std::string& index);
Response handle_encode(const Snapshot& s, const json& request);
Response handle_generate(const Snapshot& s, const json& request);
Response handle_grid(const Snapshot& s, const json& request);
Response handle_attribute(const Snapshot& s, const json& request);
Response handle_counterfactual(const Snapshot& s, const json& request);

/// Dispatches one request; body is raw JSON text, query holds URL parameters.
Response route(const Snapshot& s, const std::string& method, const std::string& path, const std::string& body,
               const std::map<std::string, std::string>& query = {});

struct ServerOptions {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string cors_origin = "*";
    std::size_t threads = 4;
};

/// Blocks until stop_server is called from another thread or the process exits.
class Server {
public:
    Server(const Snapshot& snapshot, ServerOptions options);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    /// Binds; returns the bound port (useful with port 0).
    int bind();
    void listen();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace svae::service
