#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "posbias/core.hpp"
#include "posbias/textprobe.hpp"

namespace posbias {

// The model contract a provider reports over GET /v1/info.
struct ProviderInfo {
  ModelProfile profile;
  std::string tokenizer_id;
  std::int64_t vocab_size = 0;

  void validate() const;
  bool operator==(const ProviderInfo&) const = default;
};

void to_json(json& j, const ProviderInfo& info);
void from_json(const json& j, ProviderInfo& info);

struct TokenizeResult {
  std::vector<std::vector<TokenId>> token_ids;
  std::vector<bool> truncated;
};

// Anything that speaks the tokenize/embed protocol. Implementations must be
// safe to call from several threads at once.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  virtual ProviderInfo info() = 0;
  virtual TokenizeResult tokenize(std::span<const std::string> texts) = 0;
  virtual std::vector<std::vector<float>> embed_tokens(
      std::span<const std::vector<TokenId>> token_ids) = 0;
  virtual std::vector<std::vector<float>> embed_images(std::span<const std::string> pngs) = 0;
};

// Canonical text payload: decimal ids joined by ',' with no spaces.
std::string canonical_token_payload(std::span<const TokenId> ids);

// Deterministic pseudo-embedding for a content key. Component i is
// (u / 2^63) - 1 where u is the first 8 bytes (little-endian) of
// SHA-256(key_ascii || u64le(i)); the vector is then L2-normalized.
EmbeddingRecord mock_embedding(std::string_view key, int dim);

// Hermetic in-process provider. Tokenizes by hashing lowercase words and
// punctuation marks; embeds every payload with mock_embedding.
class MockProvider : public EmbeddingProvider {
 public:
  static ProviderInfo default_info();

  explicit MockProvider(ProviderInfo info = default_info());

  ProviderInfo info() override { return info_; }
  TokenizeResult tokenize(std::span<const std::string> texts) override;
  std::vector<std::vector<float>> embed_tokens(std::span<const std::vector<TokenId>> token_ids) override;
  std::vector<std::vector<float>> embed_images(std::span<const std::string> pngs) override;

  // Embed requests received and payloads encoded so far.
  std::uint64_t embed_calls() const noexcept { return embed_calls_.load(); }
  std::uint64_t encodings() const noexcept { return encodings_.load(); }
  // The next n embed requests fail with ProviderError.
  void inject_failures(int n) noexcept { failures_.store(n); }

 private:
  void maybe_fail();

  ProviderInfo info_;
  std::atomic<std::uint64_t> embed_calls_{0};
  std::atomic<std::uint64_t> encodings_{0};
  std::atomic<int> failures_{0};
};

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{500};
  std::chrono::seconds timeout{300};
};

// Client for the HTTP/1.1 + JSON provider protocol. Connection failures, 5xx
// and 429 responses are retried with exponential backoff; other non-200
// responses fail immediately.
class HttpProvider : public EmbeddingProvider {
 public:
  explicit HttpProvider(std::string base_url, RetryPolicy retry = {});

  ProviderInfo info() override;
  TokenizeResult tokenize(std::span<const std::string> texts) override;
  std::vector<std::vector<float>> embed_tokens(std::span<const std::vector<TokenId>> token_ids) override;
  std::vector<std::vector<float>> embed_images(std::span<const std::string> pngs) override;

  const std::string& base_url() const noexcept { return base_url_; }

 private:
  json request(const std::string& method, const std::string& path, const json* body);

  std::string base_url_;   // scheme://host:port
  std::string path_prefix_;
  RetryPolicy retry_;
};

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

// Content-addressed store of `<key>.emb` files: u32le dim followed by dim
// little-endian float32 values. Writes go through a temp file and rename, so
// concurrent readers never see a partial entry.
class EmbeddingCache {
 public:
  explicit EmbeddingCache(std::filesystem::path root);

  std::optional<std::vector<float>> get(std::string_view key) const;
  void put(std::string_view key, std::span<const float> vector) const;
  bool contains(std::string_view key) const;
  std::filesystem::path path_for(std::string_view key) const;
  const std::filesystem::path& root() const noexcept { return root_; }

 private:
  std::filesystem::path root_;
};

struct EmbedOptions {
  std::size_t batch_size = 64;
  std::size_t max_in_flight = 4;
  // Stop with RunInterrupted once this many provider batches were issued.
  std::optional<std::size_t> batch_budget;
};

struct EmbedStats {
  std::uint64_t provider_calls = 0;
  std::uint64_t encodings = 0;
  std::uint64_t cache_hits = 0;
  std::uint64_t tokenize_calls = 0;
};

// Cache-first embedding front end: keys every payload with content_key,
// serves hits from the cache, deduplicates misses, sends them in batches
// (several in flight) and persists the results. Output order always matches
// input order.
class Embedder {
 public:
  Embedder(EmbeddingProvider& provider, ProviderInfo info, const EmbeddingCache* cache,
           EmbedOptions options = {});

  std::vector<TokenSequence> tokenize(std::span<const std::string> texts,
                                      std::span<const std::string> item_ids = {});
  std::vector<EmbeddingRecord> embed_tokens(std::span<const std::vector<TokenId>> token_ids);
  std::vector<EmbeddingRecord> embed_images(std::span<const std::string> pngs);

  const EmbedStats& stats() const noexcept { return stats_; }
  const ProviderInfo& info() const noexcept { return info_; }

 private:
  template <class Payload, class Dispatch>
  std::vector<EmbeddingRecord> embed(std::span<const Payload> items,
                                     std::vector<std::string> payload_keys, Dispatch dispatch);

  EmbeddingProvider& provider_;
  ProviderInfo info_;
  const EmbeddingCache* cache_;
  EmbedOptions options_;
  EmbedStats stats_;
};

}  // namespace posbias
