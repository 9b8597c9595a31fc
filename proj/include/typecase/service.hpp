#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>

#include "typecase/curation.hpp"
#include "typecase/raster.hpp"

namespace httplib {
class Server;
}

namespace typecase {

struct ApiRequest {
  std::string method;  // "GET" or "POST"
  std::string path;    // decoded, e.g. "/api/blocks/3"
  std::map<std::string, std::string> query;
  std::string body;
};

struct ApiResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
  std::int64_t revision = 0;
};

// HTTP status for a library error code.
int http_status(ErrorCode code);

struct CacheStats {
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::size_t entries = 0;
};

// Transport-independent API. handle() is safe to call from many threads;
// reads work on whichever snapshot was current when the call began and
// edits go through the curator's single writer.
class Service {
 public:
  explicit Service(CurationState state, std::shared_ptr<const PageSource> images = nullptr,
                   Curator::Clock clock = utc_timestamp);

  ApiResponse handle(const ApiRequest& request);

  std::shared_ptr<const Snapshot> snapshot() const { return curator_.snapshot(); }
  CacheStats cache_stats() const;

 private:
  enum class Scope { Static, Global, Character, Block };

  struct CacheEntry {
    std::uint64_t serial = 0;
    Scope scope = Scope::Global;
    std::string tag;  // character or block the entry depends on
    ApiResponse response;
  };

  ApiResponse route(const ApiRequest& request, const std::shared_ptr<const Snapshot>& snap);
  ApiResponse edit(const ApiRequest& request);
  ApiResponse cached(const Snapshot& snap, const ApiRequest& request, Scope scope, const std::string& tag,
                     const std::function<ApiResponse()>& compute);
  void advance_cache(std::uint64_t from_serial, std::uint64_t to_serial, const EditOutcome& outcome);

  Curator curator_;
  std::shared_ptr<const PageSource> images_;
  std::mutex edit_mutex_;
  mutable std::mutex cache_mutex_;
  std::unordered_map<std::string, CacheEntry> cache_;
  std::uint64_t hits_ = 0;
  std::uint64_t misses_ = 0;
};

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::optional<std::filesystem::path> ui_dir;
};

// Binds the service to HTTP/1.1. Responses carry the revision in the
// X-Typecase-Revision header as well as in JSON bodies.
class HttpServer {
 public:
  HttpServer(Service& service, ServerOptions options);
  ~HttpServer();

  // Binds and returns the bound port; throws BadRequest if binding fails.
  int bind();
  void listen();                // blocks until stop()
  void start_background();      // bind() must have succeeded
  void stop();

 private:
  Service& service_;
  ServerOptions options_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace typecase
