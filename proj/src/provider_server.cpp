#include "posbias/provider_server.hpp"

#include "httplib.h"

namespace posbias {

namespace {

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, json{{"error", message}}, status);
}

}  // namespace

ProviderServer::ProviderServer(EmbeddingProvider& provider, std::size_t max_batch)
    : provider_(provider), max_batch_(max_batch), server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

ProviderServer::~ProviderServer() { stop(); }

void ProviderServer::install_routes() {
  // Every handler maps its failure class onto a status code: malformed input
  // 400, oversize batch 413, provider failure 500.
  auto guarded = [](auto handler) {
    return [handler](const httplib::Request& req, httplib::Response& res) {
      try {
        handler(req, res);
      } catch (const json::exception& e) {
        send_error(res, 400, std::string("malformed request: ") + e.what());
      } catch (const ValidationError& e) {
        send_error(res, 400, e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, e.what());
      }
    };
  };
  auto check_batch = [this](std::size_t n, httplib::Response& res) {
    if (n > max_batch_) {
      send_error(res, 413, "batch of " + std::to_string(n) + " exceeds max batch " +
                               std::to_string(max_batch_));
      return false;
    }
    return true;
  };

  server_->Get("/v1/info", guarded([this](const httplib::Request&, httplib::Response& res) {
                 send_json(res, json(provider_.info()));
               }));

  server_->Post("/v1/tokenize", guarded([this, check_batch](const httplib::Request& req,
                                                             httplib::Response& res) {
                  const auto body = json::parse(req.body);
                  const auto texts = body.at("texts").get<std::vector<std::string>>();
                  if (!check_batch(texts.size(), res)) return;
                  auto out = provider_.tokenize(texts);
                  send_json(res, json{{"token_ids", out.token_ids}, {"truncated", out.truncated}});
                }));

  server_->Post("/v1/embed_tokens", guarded([this, check_batch](const httplib::Request& req,
                                                                 httplib::Response& res) {
                  const auto body = json::parse(req.body);
                  const auto ids = body.at("token_ids").get<std::vector<std::vector<TokenId>>>();
                  if (!check_batch(ids.size(), res)) return;
                  send_json(res, json{{"embeddings", provider_.embed_tokens(ids)}});
                }));

  server_->Post("/v1/embed_images", guarded([this, check_batch](const httplib::Request& req,
                                                                 httplib::Response& res) {
                  const auto body = json::parse(req.body);
                  const auto& images = body.at("images_png_b64");
                  if (!check_batch(images.size(), res)) return;
                  std::vector<std::string> pngs;
                  pngs.reserve(images.size());
                  for (const auto& b64 : images) pngs.push_back(base64_decode(b64.get<std::string>()));
                  send_json(res, json{{"embeddings", provider_.embed_images(pngs)}});
                }));
}

int ProviderServer::start(const std::string& host, int port) {
  const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

void ProviderServer::serve_forever(const std::string& host, int port) {
  if (!server_->listen(host, port))
    throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port));
}

void ProviderServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace posbias
