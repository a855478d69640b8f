#include "vr4/qc_server.hpp"

#include <charconv>
#include <limits>
#include <thread>

#include <httplib.h>

#include "vr4/image_io.hpp"

using nlohmann::json;

namespace vr4::qc {

namespace {

void send_json(httplib::Response& res, int status, const json& body)
{
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message,
                json extra = json::object())
{
    json body{{"code", code}, {"message", message}};
    body.update(extra);
    send_json(res, status, body);
}

void send_png(httplib::Response& res, const Frame& frame)
{
    const auto bytes = encode_png(frame);
    res.status = 200;
    res.set_content(reinterpret_cast<const char*>(bytes.data()), bytes.size(), "image/png");
}

template <typename F>
httplib::Server::Handler guarded(F&& f)
{
    return [f = std::forward<F>(f)](const httplib::Request& req, httplib::Response& res) {
        try {
            f(req, res);
        } catch (const ValidationFailed& e) {
            json violations = json::array();
            for (const auto& v : e.violations()) violations.push_back(trajectory::to_json(v));
            send_error(res, 422, "validation_failed", e.what(), {{"violations", std::move(violations)}});
        } catch (const ConflictError& e) {
            send_error(res, 409, "conflict", e.what(), {{"current_version", e.current_version()}});
        } catch (const NotFoundError& e) {
            send_error(res, 404, "not_found", e.what());
        } catch (const InputError& e) {
            send_error(res, 400, "bad_request", e.what());
        } catch (const json::exception& e) {
            send_error(res, 400, "bad_request", e.what());
        } catch (const std::exception& e) {
            send_error(res, 500, "internal", e.what());
        }
    };
}

std::size_t parse_count(const std::string& text, const char* what)
{
    std::size_t v = 0;
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end || text.empty()) throw InputError(std::string("invalid ") + what);
    return v;
}

json parse_body(const httplib::Request& req)
{
    json body;
    try {
        body = json::parse(req.body);
    } catch (const json::parse_error& e) {
        throw InputError(std::string("request body is not JSON: ") + e.what());
    }
    if (!body.is_object()) throw InputError("request body must be an object");
    return body;
}

std::string require_string(const json& body, const char* key)
{
    if (!body.contains(key) || !body.at(key).is_string()) throw InputError(std::string("'") + key + "' must be a string");
    return body.at(key).get<std::string>();
}

std::uint64_t require_version(const json& body)
{
    if (!body.contains("expected_version") || !body.at("expected_version").is_number_unsigned()) {
        throw InputError("'expected_version' must be a non-negative integer");
    }
    return body.at("expected_version").get<std::uint64_t>();
}

} // namespace

struct QcServer::Impl {
    ReviewStore& store;
    std::filesystem::path export_root;
    httplib::Server server;
    std::thread thread;

    Impl(ReviewStore& s, std::filesystem::path root) : store(s), export_root(std::move(root)) { routes(); }

    std::filesystem::path resolve_export(const std::string& requested) const
    {
        if (requested.empty()) throw InputError("'path' must not be empty");
        const auto root = std::filesystem::weakly_canonical(export_root);
        const auto target = std::filesystem::weakly_canonical(root / requested);
        const auto rel = target.lexically_relative(root);
        if (rel.empty() || *rel.begin() == "..") throw InputError("export path leaves the export directory");
        return target;
    }

    void routes()
    {
        server.Get("/items", guarded([this](const httplib::Request& req, httplib::Response& res) {
            std::optional<ReviewStatus> status;
            if (req.has_param("status") && !req.get_param_value("status").empty()) {
                status = status_from_string(req.get_param_value("status"));
            }
            const std::size_t page = req.has_param("page") ? parse_count(req.get_param_value("page"), "page") : 1;
            const std::size_t size =
                req.has_param("page_size") ? parse_count(req.get_param_value("page_size"), "page_size") : 20;
            send_json(res, 200, to_json(store.list_items(status, page, size)));
        }));
        server.Get(R"(/items/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
            send_json(res, 200, store.render_bundle(req.matches[1]));
        }));
        server.Get(R"(/items/([^/]+)/frames/(\d+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto index = parse_count(req.matches[2], "frame index");
            if (index > static_cast<std::size_t>(std::numeric_limits<int>::max())) throw NotFoundError("no such frame");
            send_png(res, store.frame_image(req.matches[1], static_cast<int>(index)));
        }));
        server.Get(R"(/items/([^/]+)/crops/(\d+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
            send_png(res, store.crop_image(req.matches[1], parse_count(req.matches[2], "call index")));
        }));
        server.Post(R"(/items/([^/]+)/decision)", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto body = parse_body(req);
            const auto action = action_from_string(require_string(body, "action"));
            if (action == ReviewAction::edit) throw InputError("use PUT /items/{id}/body to edit");
            const auto item = store.record_decision(req.matches[1], action, require_string(body, "reviewer"),
                                                    require_version(body));
            send_json(res, 200, to_json(item));
        }));
        server.Put(R"(/items/([^/]+)/body)", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto body = parse_body(req);
            if (!body.contains("trajectory")) throw InputError("'trajectory' is required");
            auto t = trajectory::trajectory_from_json(body.at("trajectory"));
            const auto item =
                store.save_edit(req.matches[1], std::move(t), require_string(body, "reviewer"), require_version(body));
            send_json(res, 200, to_json(item));
        }));
        server.Post("/export", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto body = parse_body(req);
            const auto path = resolve_export(require_string(body, "path"));
            auto manifest = to_json(store.export_curated(path));
            manifest["path"] = path.string();
            send_json(res, 200, manifest);
        }));
    }
};

QcServer::QcServer(ReviewStore& store, std::filesystem::path export_root)
    : impl_(std::make_unique<Impl>(store, std::move(export_root)))
{
}

QcServer::~QcServer()
{
    stop();
}

int QcServer::start(const std::string& host, int port)
{
    int bound = port;
    if (port == 0) {
        bound = impl_->server.bind_to_any_port(host);
        if (bound < 0) throw Error("cannot bind " + host);
    } else if (!impl_->server.bind_to_port(host, port)) {
        throw Error("cannot bind " + host + ":" + std::to_string(port));
    }
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return bound;
}

void QcServer::serve(const std::string& host, int port)
{
    if (!impl_->server.listen(host, port)) throw Error("cannot serve on " + host + ":" + std::to_string(port));
}

void QcServer::stop()
{
    if (!impl_) return;
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

} // namespace vr4::qc
