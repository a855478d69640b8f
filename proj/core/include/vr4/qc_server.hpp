#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "vr4/qc_store.hpp"

namespace vr4::qc {

// HTTP front end of a ReviewStore:
//   GET  /items?status=&page=&page_size=
//   GET  /items/{id}
//   GET  /items/{id}/frames/{index}        image/png
//   GET  /items/{id}/crops/{call_index}    image/png
//   POST /items/{id}/decision   {action, reviewer, expected_version}
//   PUT  /items/{id}/body       {trajectory, reviewer, expected_version}
//   POST /export                {path}
// Errors are {code, message, violations?} with 400, 404, 409 or 422.
class QcServer {
public:
    // Export paths in requests resolve under `export_root` and may not leave it.
    QcServer(ReviewStore& store, std::filesystem::path export_root);
    ~QcServer();

    QcServer(const QcServer&) = delete;
    QcServer& operator=(const QcServer&) = delete;

    // Binds (port 0 picks a free port) and serves on a background thread.
    // Returns the bound port; throws Error when binding fails.
    int start(const std::string& host, int port);
    // Binds and serves on the calling thread until stop().
    void serve(const std::string& host, int port);
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace vr4::qc
