// Serves the deterministic mock provider over the /v1 HTTP protocol so the
// HTTP client path can be exercised without a model.
#include <chrono>
#include <csignal>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "posbias/backend.hpp"
#include "posbias/provider_server.hpp"

namespace {
volatile std::sig_atomic_t g_stop = 0;
void on_signal(int) { g_stop = 1; }
}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mock embedding provider", "posbias_mock_server"};
  std::string host = "127.0.0.1";
  int port = 8765;
  std::size_t max_batch = 256;
  app.add_option("--host", host, "Bind address");
  app.add_option("--port", port, "Port (0 picks a free one)");
  app.add_option("--max-batch", max_batch, "Largest accepted request batch");
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  posbias::MockProvider provider;
  posbias::ProviderServer server(provider, max_batch);
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  try {
    const int bound = server.start(host, port);
    std::cout << "listening on http://" << host << ":" << bound << std::endl;
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    server.stop();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
