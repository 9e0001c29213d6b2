#include "docrecon/service.hpp"

#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <sstream>

#include "docrecon/assembly.hpp"
#include "docrecon/dataset.hpp"
#include "docrecon/error.hpp"
#include "docrecon/graphio.hpp"
#include "docrecon/reconstruct.hpp"

namespace docrecon {

using nlohmann::json;

SessionStore::SessionStore(ServiceConfig config) : config_(std::move(config)) {
    if (config_.default_tau < 0 || config_.default_tau > 1) {
        throw Error(ErrorKind::invalid_argument, "default threshold must lie in [0,1]");
    }
}

std::shared_ptr<SessionStore::Entry> SessionStore::find(const std::string& id) const {
    std::lock_guard lock(store_mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error(ErrorKind::not_found, "unknown graph id '" + id + "'");
    return it->second;
}

std::string SessionStore::insert(AssemblyGraph base) {
    auto entry = std::make_shared<Entry>();
    std::lock_guard lock(store_mutex_);
    const std::string id = "g" + std::to_string(next_id_++);
    entry->session = Session{id, std::move(base), config_.default_tau, {}};
    sessions_.emplace(id, std::move(entry));
    return id;
}

void SessionStore::validate_patches(const std::vector<Patch>& patches) const {
    for (const auto& p : patches) {
        if (!p.pixels || p.pixels->height != config_.patch_size || p.pixels->width != config_.patch_size) {
            throw Error(ErrorKind::shape_mismatch,
                        "patch " + std::to_string(p.node_id) + " is not " + std::to_string(config_.patch_size) + "x" +
                            std::to_string(config_.patch_size));
        }
    }
    if (patches.size() < 2) throw Error(ErrorKind::degenerate_graph, "need at least 2 patches");
}

std::string SessionStore::create_from_patches(std::vector<Patch> patches) {
    validate_patches(patches);
    if (!config_.model) throw Error(ErrorKind::unavailable, "no checkpoint loaded");
    AssemblyGraph g = complete_graph(std::move(patches));
    AssemblyGraph predicted;
    {
        std::lock_guard lock(inference_mutex_);
        predicted = infer(g, *config_.model, config_.infer_chunk);
    }
    return insert(std::move(predicted));
}

std::string SessionStore::create_from_graph(AssemblyGraph graph) {
    validate_patches(graph.nodes());
    if (graph.has_predictions()) return insert(std::move(graph));
    if (!config_.model) throw Error(ErrorKind::unavailable, "no checkpoint loaded");
    AssemblyGraph predicted;
    {
        std::lock_guard lock(inference_mutex_);
        predicted = infer(graph, *config_.model, config_.infer_chunk);
    }
    return insert(std::move(predicted));
}

namespace {

AssemblyGraph apply_view(const Session& s, double tau) {
    AssemblyGraph filtered = filter_edges(s.base, tau);
    if (s.deleted.empty()) return filtered;
    std::vector<RelationLabel> labels = *filtered.predicted();
    for (const auto& d : s.deleted) labels[*filtered.find_edge(d.source, d.target)] = RelationLabel::None;
    return filtered.with_predictions(filtered.edge_labels(), std::move(labels));
}

void check_tau(double tau) {
    if (!(tau >= 0 && tau <= 1)) throw Error(ErrorKind::invalid_argument, "threshold must lie in [0,1]");
}

}  // namespace

AssemblyGraph SessionStore::current_view(const std::string& id, std::optional<double> tau_override) const {
    auto entry = find(id);
    std::shared_lock lock(entry->mutex);
    const double tau = tau_override.value_or(entry->session.tau);
    check_tau(tau);
    return apply_view(entry->session, tau);
}

std::string SessionStore::view_json(const std::string& id, std::optional<double> tau_override) const {
    auto entry = find(id);
    AssemblyGraph view;
    double tau;
    std::vector<EdgeRef> deleted;
    {
        std::shared_lock lock(entry->mutex);
        tau = tau_override.value_or(entry->session.tau);
        check_tau(tau);
        view = apply_view(entry->session, tau);
        deleted = entry->session.deleted;
    }
    const LayoutResult lay = layout(view);
    ExportOptions opts;
    opts.patches = ExportOptions::Patches::url;
    opts.url_prefix = "/graphs/" + id + "/patches/";
    json doc = json::parse(export_graph_string(view, &lay, opts));
    json del = json::array();
    for (const auto& d : deleted) del.push_back({d.source, d.target});
    doc["view"] = {{"graph_id", id}, {"tau", round6(tau)}, {"deleted", std::move(del)}};
    return doc.dump(1) + "\n";
}

void SessionStore::set_tau(const std::string& id, double tau) {
    check_tau(tau);
    auto entry = find(id);
    std::unique_lock lock(entry->mutex);
    entry->session.tau = tau;
}

void SessionStore::delete_edge(const std::string& id, EdgeRef edge) {
    auto entry = find(id);
    std::unique_lock lock(entry->mutex);
    Session& s = entry->session;
    if (!s.base.find_edge(edge.source, edge.target)) {
        throw Error(ErrorKind::not_found,
                    "no edge " + std::to_string(edge.source) + "->" + std::to_string(edge.target));
    }
    if (std::find(s.deleted.begin(), s.deleted.end(), edge) != s.deleted.end()) {
        throw Error(ErrorKind::conflict, "edge already deleted");
    }
    const AssemblyGraph view = apply_view(s, s.tau);
    if (view.label(*view.find_edge(edge.source, edge.target)) == RelationLabel::None) {
        throw Error(ErrorKind::conflict, "edge is already None in the current view");
    }
    s.deleted.push_back(edge);
}

void SessionStore::undo(const std::string& id) {
    auto entry = find(id);
    std::unique_lock lock(entry->mutex);
    if (entry->session.deleted.empty()) throw Error(ErrorKind::conflict, "nothing to undo");
    entry->session.deleted.pop_back();
}

std::vector<std::uint8_t> SessionStore::patch_png(const std::string& id, int node_id) const {
    auto entry = find(id);
    std::shared_lock lock(entry->mutex);
    return encode_png(*entry->session.base.node(node_id).pixels);
}

std::vector<std::string> SessionStore::ids() const {
    std::lock_guard lock(store_mutex_);
    std::vector<std::string> out;
    for (const auto& [id, _] : sessions_) out.push_back(id);
    return out;
}

void SessionStore::save_snapshot(const std::filesystem::path& path) const {
    json sessions = json::array();
    for (const auto& id : ids()) {
        auto entry = find(id);
        std::shared_lock lock(entry->mutex);
        const Session& s = entry->session;
        json del = json::array();
        for (const auto& d : s.deleted) del.push_back({d.source, d.target});
        sessions.push_back({{"id", s.id},
                            {"tau", s.tau},
                            {"deleted", std::move(del)},
                            {"graph", json::parse(export_graph_string(s.base))}});
    }
    long long next;
    {
        std::lock_guard lock(store_mutex_);
        next = next_id_;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
    out << json{{"next_id", next}, {"sessions", std::move(sessions)}}.dump() << '\n';
}

void SessionStore::load_snapshot(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::malformed, std::string("snapshot is not valid JSON: ") + e.what());
    }
    std::map<std::string, std::shared_ptr<Entry>> loaded;
    try {
        for (const auto& js : doc.at("sessions")) {
            auto entry = std::make_shared<Entry>();
            entry->session.id = js.at("id").get<std::string>();
            entry->session.tau = js.at("tau").get<double>();
            entry->session.base = import_graph_string(js.at("graph").dump()).graph;
            for (const auto& d : js.at("deleted")) entry->session.deleted.push_back({d.at(0).get<int>(), d.at(1).get<int>()});
            loaded.emplace(entry->session.id, std::move(entry));
        }
        std::lock_guard lock(store_mutex_);
        sessions_ = std::move(loaded);
        next_id_ = doc.at("next_id").get<long long>();
    } catch (const json::exception& e) {
        throw Error(ErrorKind::malformed, std::string("snapshot schema error: ") + e.what());
    }
}

// ---------------------------------------------------------------------------

namespace {

int http_status(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::not_found: return 404;
        case ErrorKind::conflict: return 409;
        case ErrorKind::degenerate_graph: return 422;
        case ErrorKind::unavailable: return 503;
        case ErrorKind::io: return 500;
        default: return 400;
    }
}

void send_error(httplib::Response& res, int status, const std::string& message) {
    res.status = status;
    res.set_content(json{{"error", message}}.dump() + "\n", "application/json");
}

template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        send_error(res, http_status(e.kind()), e.what());
    } catch (const json::exception& e) {
        send_error(res, 400, std::string("bad request body: ") + e.what());
    } catch (const std::exception& e) {
        send_error(res, 500, e.what());
    }
}

std::optional<double> tau_param(const httplib::Request& req) {
    if (!req.has_param("tau")) return std::nullopt;
    try {
        std::size_t used = 0;
        const std::string v = req.get_param_value("tau");
        const double tau = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return tau;
    } catch (const std::logic_error&) {
        throw Error(ErrorKind::invalid_argument, "tau must be a number");
    }
}

}  // namespace

struct HttpServer::Impl {
    SessionStore& store;
    httplib::Server server;

    explicit Impl(SessionStore& s) : store(s) { routes(); }

    void send_view(httplib::Response& res, const std::string& id, int status = 200) {
        res.status = status;
        res.set_content(store.view_json(id), "application/json");
    }

    void routes() {
        server.Post("/graphs", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                std::string id;
                if (req.is_multipart_form_data()) {
                    std::vector<std::pair<std::string, const httplib::MultipartFormData*>> files;
                    const httplib::MultipartFormData* graph_file = nullptr;
                    for (const auto& [field, file] : req.files) {
                        if (field == "graph" || file.filename.ends_with(".json")) {
                            graph_file = &file;
                        } else {
                            files.emplace_back(file.filename.empty() ? field : file.filename, &file);
                        }
                    }
                    if (graph_file) {
                        id = store.create_from_graph(import_graph_string(graph_file->content).graph);
                    } else {
                        std::sort(files.begin(), files.end(),
                                  [](const auto& a, const auto& b) { return a.first < b.first; });
                        std::vector<Patch> patches;
                        for (std::size_t i = 0; i < files.size(); ++i) {
                            const auto& content = files[i].second->content;
                            Image img = decode_png(std::span<const std::uint8_t>(
                                reinterpret_cast<const std::uint8_t*>(content.data()), content.size()));
                            const std::string stem = std::filesystem::path(files[i].first).stem().string();
                            patches.emplace_back(static_cast<int>(i), std::move(img), tag_from_patch_stem(stem));
                        }
                        id = store.create_from_patches(std::move(patches));
                    }
                } else {
                    id = store.create_from_graph(import_graph_string(req.body).graph);
                }
                res.status = 201;
                res.set_content(json{{"graph_id", id}}.dump() + "\n", "application/json");
            });
        });

        server.Get(R"(/graphs/([A-Za-z0-9_-]+))", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] { res.set_content(store.view_json(req.matches[1], tau_param(req)), "application/json"); });
        });

        server.Post(R"(/graphs/([A-Za-z0-9_-]+)/tau)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const json body = json::parse(req.body);
                store.set_tau(req.matches[1], body.at("tau").get<double>());
                send_view(res, req.matches[1]);
            });
        });

        server.Post(R"(/graphs/([A-Za-z0-9_-]+)/edits)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const json body = json::parse(req.body);
                if (body.at("op").get<std::string>() != "delete_edge") {
                    throw Error(ErrorKind::invalid_argument, "unsupported edit op");
                }
                store.delete_edge(req.matches[1], {body.at("source").get<int>(), body.at("target").get<int>()});
                send_view(res, req.matches[1]);
            });
        });

        server.Post(R"(/graphs/([A-Za-z0-9_-]+)/undo)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                store.undo(req.matches[1]);
                send_view(res, req.matches[1]);
            });
        });

        server.Get(R"(/graphs/([A-Za-z0-9_-]+)/patches/(\d+)\.png)",
                   [this](const httplib::Request& req, httplib::Response& res) {
                       guarded(res, [&] {
                           const auto png = store.patch_png(req.matches[1], std::stoi(req.matches[2]));
                           res.set_content(std::string(png.begin(), png.end()), "image/png");
                       });
                   });
    }
};

HttpServer::HttpServer(SessionStore& store) : impl_(std::make_unique<Impl>(store)) {}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const ServerOptions& options) {
    int port = options.port;
    if (port == 0) {
        port = impl_->server.bind_to_any_port(options.host);
    } else if (!impl_->server.bind_to_port(options.host, port)) {
        port = -1;
    }
    if (port < 0) throw Error(ErrorKind::io, "cannot bind " + options.host + ":" + std::to_string(options.port));
    return port;
}

void HttpServer::run() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
    if (impl_) impl_->server.stop();
}

}  // namespace docrecon
