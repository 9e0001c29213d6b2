#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "docrecon/graph.hpp"
#include "docrecon/pairnet.hpp"

namespace docrecon {

struct ServiceConfig {
    std::optional<ModelParams<float>> model;  // inference is unavailable without one
    int patch_size = kDefaultPatchSize;
    double default_tau = 0.8;
    std::size_t infer_chunk = 32;
};

struct EdgeRef {
    int source = 0;
    int target = 0;

    auto operator<=>(const EdgeRef&) const = default;
};

// One curation session: the immutable inference output, a threshold and an
// append-only log of edge deletions. Every view is recomputed from these.
struct Session {
    std::string id;
    AssemblyGraph base;
    double tau = 0.8;
    std::vector<EdgeRef> deleted;
};

// In-memory session store behind the HTTP routes. Views are pure functions of
// (base graph, tau, edit log). Errors are docrecon::Error; the HTTP layer maps
// not_found -> 404, conflict -> 409, degenerate_graph -> 422,
// unavailable -> 503, other input errors -> 400.
class SessionStore {
public:
    explicit SessionStore(ServiceConfig config);

    bool has_model() const noexcept { return config_.model.has_value(); }
    const ServiceConfig& config() const noexcept { return config_; }

    // Runs inference over the complete graph of the patches.
    std::string create_from_patches(std::vector<Patch> patches);
    // Uses predictions already in the graph; infers when there are none.
    std::string create_from_graph(AssemblyGraph graph);

    // Filtered graph with deletions applied, using tau_override when given.
    AssemblyGraph current_view(const std::string& id, std::optional<double> tau_override = std::nullopt) const;

    // graphio document of the current view, layout included, plus a "view"
    // object {tau, deleted}.
    std::string view_json(const std::string& id, std::optional<double> tau_override = std::nullopt) const;

    void set_tau(const std::string& id, double tau);
    void delete_edge(const std::string& id, EdgeRef edge);
    void undo(const std::string& id);

    std::vector<std::uint8_t> patch_png(const std::string& id, int node_id) const;
    std::vector<std::string> ids() const;

    // JSON snapshot of every session (embedded patches).
    void save_snapshot(const std::filesystem::path& path) const;
    void load_snapshot(const std::filesystem::path& path);

private:
    struct Entry {
        mutable std::shared_mutex mutex;
        Session session;
    };

    std::shared_ptr<Entry> find(const std::string& id) const;
    std::string insert(AssemblyGraph base);
    void validate_patches(const std::vector<Patch>& patches) const;

    ServiceConfig config_;
    mutable std::mutex store_mutex_;
    std::mutex inference_mutex_;
    std::map<std::string, std::shared_ptr<Entry>> sessions_;
    long long next_id_ = 1;
};

struct ServerOptions {
    std::string host = "127.0.0.1";
    int port = 8080;  // 0 picks a free port
};

// HTTP facade:
//   POST /graphs                      multipart patch PNGs, or a graphio document
//   GET  /graphs/{id}?tau=            current view
//   POST /graphs/{id}/tau             {"tau": x}
//   POST /graphs/{id}/edits           {"op": "delete_edge", "source": s, "target": t}
//   POST /graphs/{id}/undo
//   GET  /graphs/{id}/patches/{n}.png
class HttpServer {
public:
    explicit HttpServer(SessionStore& store);
    ~HttpServer();

    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    // Binds and returns the port; call run() (blocking) afterwards.
    int bind(const ServerOptions& options);
    void run();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace docrecon
