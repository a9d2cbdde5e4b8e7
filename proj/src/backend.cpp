#include "posbias/backend.hpp"

#include <algorithm>
#include <cctype>
#include <cstring>
#include <fstream>
#include <future>
#include <thread>
#include <unordered_map>

#include <openssl/evp.h>
#include <unistd.h>

#include "httplib.h"

namespace posbias {

// ---- ProviderInfo ----

void ProviderInfo::validate() const {
  if (vocab_size < 1) throw ValidationError("provider info: vocab_size must be >= 1");
  profile.validate(vocab_size);
}

void to_json(json& j, const ProviderInfo& info) {
  j = info.profile;
  j["tokenizer_id"] = info.tokenizer_id;
  j["vocab_size"] = info.vocab_size;
}

void from_json(const json& j, ProviderInfo& info) {
  j.get_to(info.profile);
  info.tokenizer_id = j.value("tokenizer_id", std::string{});
  j.at("vocab_size").get_to(info.vocab_size);
}

// ---- payloads and the mock ----

std::string canonical_token_payload(std::span<const TokenId> ids) {
  std::string out;
  out.reserve(ids.size() * 6);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(ids[i]);
  }
  return out;
}

namespace {

std::uint64_t le64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

void append_le64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

// Lowercase alphanumeric runs and single punctuation marks.
std::vector<std::string> mock_pieces(std::string_view text) {
  std::vector<std::string> pieces;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(c)));
      continue;
    }
    if (!cur.empty()) pieces.push_back(std::move(cur)), cur.clear();
    if (!std::isspace(c)) pieces.emplace_back(1, ch);
  }
  if (!cur.empty()) pieces.push_back(std::move(cur));
  return pieces;
}

}  // namespace

EmbeddingRecord mock_embedding(std::string_view key, int dim) {
  if (dim < 1) throw ValidationError("mock embedding dim must be >= 1");
  std::vector<float> raw(static_cast<std::size_t>(dim));
  std::string buf(key);
  const std::size_t base = buf.size();
  for (int i = 0; i < dim; ++i) {
    buf.resize(base);
    append_le64(buf, static_cast<std::uint64_t>(i));
    const auto h = sha256(buf);
    const double u = static_cast<double>(le64(h.data()));
    raw[static_cast<std::size_t>(i)] = static_cast<float>(u / 9223372036854775808.0 - 1.0);
  }
  EmbeddingRecord rec;
  rec.vector = l2_normalize(raw);
  rec.key = std::string(key);
  rec.normalized = true;
  return rec;
}

ProviderInfo MockProvider::default_info() {
  ProviderInfo info;
  info.profile.model_id = "posbias-mock";
  info.profile.text_window = 77;
  info.profile.bos_token_id = 49406;
  info.profile.eos_token_id = 49407;
  info.profile.pad_token_id = 0;
  info.profile.image_resolution = 224;
  info.profile.patch_size = 16;
  info.profile.embed_dim = 64;
  info.profile.normalizes_embeddings = true;
  info.tokenizer_id = "posbias-mock-wordhash";
  info.vocab_size = 49408;
  return info;
}

MockProvider::MockProvider(ProviderInfo info) : info_(std::move(info)) { info_.validate(); }

TokenizeResult MockProvider::tokenize(std::span<const std::string> texts) {
  const auto& p = info_.profile;
  const auto vocab = static_cast<std::uint64_t>(info_.vocab_size);
  auto is_special = [&p](TokenId id) {
    return id == p.bos_token_id || id == p.eos_token_id || id == p.pad_token_id;
  };
  TokenizeResult result;
  for (const auto& text : texts) {
    std::vector<TokenId> interior;
    for (const auto& piece : mock_pieces(text)) {
      const auto h = sha256(piece);
      auto id = static_cast<TokenId>(1 + le64(h.data()) % (vocab - 1));
      while (is_special(id)) id = static_cast<TokenId>(id % static_cast<TokenId>(vocab - 1) + 1);
      interior.push_back(id);
    }
    auto seq = make_token_sequence(interior, p);
    result.token_ids.push_back(std::move(seq.ids));
    result.truncated.push_back(seq.truncated);
  }
  return result;
}

void MockProvider::maybe_fail() {
  ++embed_calls_;
  int left = failures_.load();
  while (left > 0) {
    if (failures_.compare_exchange_weak(left, left - 1))
      throw ProviderError("mock provider: injected failure");
  }
}

std::vector<std::vector<float>> MockProvider::embed_tokens(
    std::span<const std::vector<TokenId>> token_ids) {
  maybe_fail();
  std::vector<std::vector<float>> out;
  out.reserve(token_ids.size());
  for (const auto& ids : token_ids) {
    const auto key = content_key(info_.profile.model_id, canonical_token_payload(ids));
    out.push_back(mock_embedding(key, info_.profile.embed_dim).vector);
  }
  encodings_ += token_ids.size();
  return out;
}

std::vector<std::vector<float>> MockProvider::embed_images(std::span<const std::string> pngs) {
  maybe_fail();
  std::vector<std::vector<float>> out;
  out.reserve(pngs.size());
  for (const auto& png : pngs) {
    const auto key = content_key(info_.profile.model_id, png);
    out.push_back(mock_embedding(key, info_.profile.embed_dim).vector);
  }
  encodings_ += pngs.size();
  return out;
}

// ---- base64 ----

std::string base64_encode(std::string_view bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::string base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw ValidationError("base64 input length is not a multiple of 4");
  std::string out(3 * (text.size() / 4), '\0');
  const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw ValidationError("invalid base64 input");
  std::size_t pad = 0;
  if (!text.empty() && text.back() == '=') ++pad;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

// ---- HTTP client ----

HttpProvider::HttpProvider(std::string base_url, RetryPolicy retry) : retry_(retry) {
  while (!base_url.empty() && base_url.back() == '/') base_url.pop_back();
  const auto scheme = base_url.find("://");
  if (scheme == std::string::npos) base_url = "http://" + base_url;
  const auto host_start = base_url.find("://") + 3;
  const auto slash = base_url.find('/', host_start);
  if (slash != std::string::npos) {
    path_prefix_ = base_url.substr(slash);
    base_url.resize(slash);
  }
  base_url_ = std::move(base_url);
  if (retry_.attempts < 1) retry_.attempts = 1;
}

json HttpProvider::request(const std::string& method, const std::string& path, const json* body) {
  const std::string full_path = path_prefix_ + path;
  std::string last_error;
  int last_status = 0;
  for (int attempt = 1; attempt <= retry_.attempts; ++attempt) {
    httplib::Client cli(base_url_);
    cli.set_connection_timeout(std::chrono::seconds(10));
    cli.set_read_timeout(retry_.timeout);
    cli.set_write_timeout(retry_.timeout);
    httplib::Result res = method == "GET"
                              ? cli.Get(full_path)
                              : cli.Post(full_path, body ? body->dump() : "{}", "application/json");
    bool retryable = true;
    if (!res) {
      last_error = httplib::to_string(res.error());
      last_status = 0;
    } else if (res->status == 200) {
      try {
        return json::parse(res->body);
      } catch (const json::exception& e) {
        throw ProviderError(method + " " + full_path + ": malformed JSON response: " + e.what(),
                            attempt, res->status);
      }
    } else {
      last_status = res->status;
      last_error = "HTTP " + std::to_string(res->status);
      try {
        auto err = json::parse(res->body);
        if (err.contains("error")) last_error += ": " + err["error"].get<std::string>();
      } catch (const json::exception&) {
      }
      retryable = res->status >= 500 || res->status == 429;
    }
    if (!retryable) throw ProviderError(method + " " + full_path + ": " + last_error, attempt, last_status);
    if (attempt < retry_.attempts)
      std::this_thread::sleep_for(retry_.initial_backoff * (1 << (attempt - 1)));
  }
  throw ProviderError(method + " " + full_path + " failed after " + std::to_string(retry_.attempts) +
                          " attempts: " + last_error,
                      retry_.attempts, last_status);
}

namespace {

std::vector<std::vector<float>> parse_embeddings(const json& res, std::size_t expected) {
  if (!res.contains("embeddings") || !res["embeddings"].is_array())
    throw ProviderError("provider response lacks an 'embeddings' array");
  auto out = res["embeddings"].get<std::vector<std::vector<float>>>();
  if (out.size() != expected)
    throw ProviderError("provider returned " + std::to_string(out.size()) + " embeddings for " +
                        std::to_string(expected) + " inputs");
  return out;
}

}  // namespace

ProviderInfo HttpProvider::info() {
  auto res = request("GET", "/v1/info", nullptr);
  try {
    return res.get<ProviderInfo>();
  } catch (const json::exception& e) {
    throw ProviderError(std::string("malformed /v1/info response: ") + e.what());
  }
}

TokenizeResult HttpProvider::tokenize(std::span<const std::string> texts) {
  json body = {{"texts", std::vector<std::string>(texts.begin(), texts.end())}};
  auto res = request("POST", "/v1/tokenize", &body);
  TokenizeResult out;
  try {
    res.at("token_ids").get_to(out.token_ids);
    if (res.contains("truncated")) res["truncated"].get_to(out.truncated);
  } catch (const json::exception& e) {
    throw ProviderError(std::string("malformed /v1/tokenize response: ") + e.what());
  }
  if (out.token_ids.size() != texts.size())
    throw ProviderError("tokenize returned the wrong number of rows");
  out.truncated.resize(texts.size(), false);
  return out;
}

std::vector<std::vector<float>> HttpProvider::embed_tokens(
    std::span<const std::vector<TokenId>> token_ids) {
  json body = {{"token_ids", std::vector<std::vector<TokenId>>(token_ids.begin(), token_ids.end())}};
  return parse_embeddings(request("POST", "/v1/embed_tokens", &body), token_ids.size());
}

std::vector<std::vector<float>> HttpProvider::embed_images(std::span<const std::string> pngs) {
  json images = json::array();
  for (const auto& png : pngs) images.push_back(base64_encode(png));
  json body = {{"images_png_b64", std::move(images)}};
  return parse_embeddings(request("POST", "/v1/embed_images", &body), pngs.size());
}

// ---- cache ----

EmbeddingCache::EmbeddingCache(std::filesystem::path root) : root_(std::move(root)) {
  std::filesystem::create_directories(root_);
}

std::filesystem::path EmbeddingCache::path_for(std::string_view key) const {
  if (key.size() != 64 || !std::all_of(key.begin(), key.end(), [](char c) {
        return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
      }))
    throw ValidationError("cache key must be 64 lowercase hex characters");
  return root_ / (std::string(key) + ".emb");
}

bool EmbeddingCache::contains(std::string_view key) const {
  return std::filesystem::exists(path_for(key));
}

std::optional<std::vector<float>> EmbeddingCache::get(std::string_view key) const {
  std::ifstream in(path_for(key), std::ios::binary);
  if (!in) return std::nullopt;
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 4) return std::nullopt;
  const auto* p = reinterpret_cast<const std::uint8_t*>(bytes.data());
  const std::uint32_t dim = p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  if (bytes.size() != 4 + 4 * static_cast<std::size_t>(dim)) return std::nullopt;
  std::vector<float> v(dim);
  for (std::uint32_t i = 0; i < dim; ++i) {
    const auto* q = p + 4 + 4 * i;
    const std::uint32_t bits = q[0] | (q[1] << 8) | (q[2] << 16) | (static_cast<std::uint32_t>(q[3]) << 24);
    std::memcpy(&v[i], &bits, 4);
  }
  return v;
}

void EmbeddingCache::put(std::string_view key, std::span<const float> vector) const {
  const auto target = path_for(key);
  std::string bytes;
  bytes.reserve(4 + 4 * vector.size());
  auto push32 = [&bytes](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  };
  push32(static_cast<std::uint32_t>(vector.size()));
  for (float f : vector) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    push32(bits);
  }
  static std::atomic<std::uint64_t> counter{0};
  auto tmp = target;
  tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write cache entry " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("short write on cache entry " + tmp.string());
  }
  std::filesystem::rename(tmp, target);
}

// ---- Embedder ----

Embedder::Embedder(EmbeddingProvider& provider, ProviderInfo info, const EmbeddingCache* cache,
                   EmbedOptions options)
    : provider_(provider), info_(std::move(info)), cache_(cache), options_(options) {
  if (options_.batch_size == 0) options_.batch_size = 1;
  if (options_.max_in_flight == 0) options_.max_in_flight = 1;
}

std::vector<TokenSequence> Embedder::tokenize(std::span<const std::string> texts,
                                              std::span<const std::string> item_ids) {
  std::vector<TokenSequence> out;
  out.reserve(texts.size());
  for (std::size_t start = 0; start < texts.size(); start += options_.batch_size) {
    const auto n = std::min(options_.batch_size, texts.size() - start);
    ++stats_.tokenize_calls;
    auto res = provider_.tokenize(texts.subspan(start, n));
    if (res.token_ids.size() != n) throw ProviderError("tokenize returned the wrong number of rows");
    for (std::size_t i = 0; i < n; ++i) {
      std::string id = item_ids.size() > start + i ? item_ids[start + i] : std::string{};
      TokenSequence seq;
      try {
        seq = token_sequence_from_ids(res.token_ids[i], info_.profile, std::move(id));
      } catch (const ValidationError& e) {
        throw ProviderError(std::string("tokenize: ") + e.what());
      }
      seq.truncated = seq.truncated || res.truncated[i];
      out.push_back(std::move(seq));
    }
  }
  return out;
}

template <class Payload, class Dispatch>
std::vector<EmbeddingRecord> Embedder::embed(std::span<const Payload> items,
                                             std::vector<std::string> keys, Dispatch dispatch) {
  const std::size_t n = items.size();
  std::vector<EmbeddingRecord> out(n);
  std::unordered_map<std::string, std::size_t> first;
  std::vector<std::size_t> misses;
  for (std::size_t i = 0; i < n; ++i) {
    if (!first.emplace(keys[i], i).second) continue;
    if (cache_) {
      if (auto v = cache_->get(keys[i]); v && v->size() == static_cast<std::size_t>(info_.profile.embed_dim)) {
        out[i] = EmbeddingRecord{std::move(*v), keys[i], true};
        ++stats_.cache_hits;
        continue;
      }
    }
    misses.push_back(i);
  }

  const std::size_t bs = options_.batch_size;
  std::vector<std::span<const std::size_t>> batches;
  for (std::size_t s = 0; s < misses.size(); s += bs)
    batches.emplace_back(misses.data() + s, std::min(bs, misses.size() - s));

  bool interrupted = false;
  for (std::size_t w = 0; w < batches.size() && !interrupted; w += options_.max_in_flight) {
    std::vector<std::pair<std::span<const std::size_t>, std::future<std::vector<std::vector<float>>>>>
        wave;
    for (std::size_t b = w; b < std::min(batches.size(), w + options_.max_in_flight); ++b) {
      if (options_.batch_budget && stats_.provider_calls >= *options_.batch_budget) {
        interrupted = true;
        break;
      }
      std::vector<Payload> payload;
      payload.reserve(batches[b].size());
      for (auto idx : batches[b]) payload.push_back(items[idx]);
      ++stats_.provider_calls;
      stats_.encodings += payload.size();
      wave.emplace_back(batches[b], std::async(std::launch::async, [&dispatch, p = std::move(payload)] {
                          return dispatch(std::span<const Payload>(p));
                        }));
    }
    std::exception_ptr failure;
    for (auto& [batch, fut] : wave) {
      std::vector<std::vector<float>> vectors;
      try {
        vectors = fut.get();
        if (vectors.size() != batch.size())
          throw ProviderError("provider returned " + std::to_string(vectors.size()) +
                              " embeddings for a batch of " + std::to_string(batch.size()));
        for (std::size_t i = 0; i < batch.size(); ++i) {
          auto& vec = vectors[i];
          if (vec.size() != static_cast<std::size_t>(info_.profile.embed_dim))
            throw ProviderError("provider returned dim " + std::to_string(vec.size()) +
                                ", profile says " + std::to_string(info_.profile.embed_dim));
          EmbeddingRecord rec;
          try {
            rec.vector = l2_normalize(vec);
          } catch (const ValidationError& e) {
            throw ProviderError(std::string("provider returned a ") + e.what());
          }
          if (info_.profile.normalizes_embeddings) {
            // Trust the provider's values but insist on its declared contract.
            double sq = 0.0;
            for (float x : vec) sq += static_cast<double>(x) * x;
            if (std::abs(std::sqrt(sq) - 1.0) > 1e-4)
              throw ProviderError("provider declares normalized embeddings but returned norm " +
                                  std::to_string(std::sqrt(sq)));
            rec.vector = std::move(vec);
          }
          rec.key = keys[batch[i]];
          rec.normalized = true;
          if (cache_) cache_->put(rec.key, rec.vector);
          out[batch[i]] = std::move(rec);
        }
      } catch (...) {
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);
  }
  if (interrupted) throw RunInterrupted("embedding batch budget exhausted");

  for (std::size_t i = 0; i < n; ++i)
    if (out[i].key.empty()) out[i] = out[first.at(keys[i])];
  return out;
}

std::vector<EmbeddingRecord> Embedder::embed_tokens(std::span<const std::vector<TokenId>> token_ids) {
  std::vector<std::string> keys;
  keys.reserve(token_ids.size());
  for (const auto& ids : token_ids) {
    if (static_cast<int>(ids.size()) != info_.profile.text_window)
      throw ValidationError("token row of length " + std::to_string(ids.size()) +
                            " does not fill the text window of " +
                            std::to_string(info_.profile.text_window));
    keys.push_back(content_key(info_.profile.model_id, canonical_token_payload(ids)));
  }
  return embed(token_ids, std::move(keys), [this](std::span<const std::vector<TokenId>> batch) {
    return provider_.embed_tokens(batch);
  });
}

std::vector<EmbeddingRecord> Embedder::embed_images(std::span<const std::string> pngs) {
  std::vector<std::string> keys;
  keys.reserve(pngs.size());
  for (const auto& png : pngs) keys.push_back(content_key(info_.profile.model_id, png));
  return embed(pngs, std::move(keys),
               [this](std::span<const std::string> batch) { return provider_.embed_images(batch); });
}

}  // namespace posbias
