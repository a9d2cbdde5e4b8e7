#pragma once

#include <memory>
#include <string>
#include <thread>

#include "posbias/backend.hpp"

namespace httplib {
class Server;
}

namespace posbias {

// Serves any EmbeddingProvider over the /v1 HTTP protocol. Used to run the
// mock as a network service and to test HttpProvider end to end.
class ProviderServer {
 public:
  ProviderServer(EmbeddingProvider& provider, std::size_t max_batch = 256);
  ~ProviderServer();

  ProviderServer(const ProviderServer&) = delete;
  ProviderServer& operator=(const ProviderServer&) = delete;

  // Binds and serves on a background thread; returns the bound port
  // (port 0 picks a free one).
  int start(const std::string& host = "127.0.0.1", int port = 0);
  // Blocks the calling thread until stop() is called from elsewhere.
  void serve_forever(const std::string& host, int port);
  void stop();

 private:
  void install_routes();

  EmbeddingProvider& provider_;
  std::size_t max_batch_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace posbias
