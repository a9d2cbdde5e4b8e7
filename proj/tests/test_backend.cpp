#include <cmath>
#include <fstream>
#include <set>

#include "doctest.h"
#include "posbias/backend.hpp"
#include "support.hpp"

using namespace posbias;

namespace {

// Returns fixed-scale vectors and counts calls; optionally claims to normalize.
class ScaledProvider : public EmbeddingProvider {
 public:
  explicit ScaledProvider(bool claims_normalized, float scale = 3.0f) : scale_(scale) {
    info_ = MockProvider::default_info();
    info_.profile.model_id = "scaled";
    info_.profile.embed_dim = 4;
    info_.profile.normalizes_embeddings = claims_normalized;
  }
  ProviderInfo info() override { return info_; }
  TokenizeResult tokenize(std::span<const std::string>) override { return {}; }
  std::vector<std::vector<float>> embed_tokens(std::span<const std::vector<TokenId>> rows) override {
    ++calls;
    return std::vector<std::vector<float>>(rows.size(), {scale_, 0, 0, 0});
  }
  std::vector<std::vector<float>> embed_images(std::span<const std::string> pngs) override {
    ++calls;
    return std::vector<std::vector<float>>(pngs.size(), {0, scale_, 0, 0});
  }
  std::atomic<int> calls{0};

 private:
  ProviderInfo info_;
  float scale_;
};

std::vector<TokenId> row_of(const ProviderInfo& info, std::initializer_list<TokenId> interior) {
  return make_token_sequence(std::vector<TokenId>(interior), info.profile).ids;
}

}  // namespace

TEST_CASE("mock embedding matches an independent SHA-256 oracle") {
  // Frozen from Python hashlib for key = content_key("posbias-mock", "1,2,3").
  const std::string key = "a74df7237092eba8b24e95ef2d3770973899484717bb0d2bb55a8400c80d1694";
  const auto rec = mock_embedding(key, 4);
  REQUIRE(rec.vector.size() == 4);
  CHECK(rec.vector[0] == doctest::Approx(0.820320701).epsilon(1e-6));
  CHECK(rec.vector[1] == doctest::Approx(-0.40520549).epsilon(1e-6));
  CHECK(rec.vector[2] == doctest::Approx(-0.258919831).epsilon(1e-6));
  CHECK(rec.vector[3] == doctest::Approx(-0.309585174).epsilon(1e-6));
  CHECK(rec.key == key);
  CHECK(rec.normalized);
  CHECK(mock_embedding(key, 4) == rec);
  CHECK_THROWS_AS(mock_embedding(key, 0), ValidationError);

  double sq = 0;
  for (float x : mock_embedding(key, 512).vector) sq += double(x) * x;
  CHECK(std::sqrt(sq) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("mock provider info and tokenizer") {
  MockProvider mock;
  const auto info = mock.info();
  CHECK(info.profile.text_window == 77);
  CHECK(info.profile.image_resolution == 224);
  CHECK(info.profile.embed_dim == 64);
  CHECK(json(info)["tokenizer_id"] == "posbias-mock-wordhash");
  CHECK(json(info).get<ProviderInfo>() == info);

  const std::vector<std::string> texts{"", "A dog, running.", "a dog, running.", std::string(400, 'x') + " y"};
  const auto r = mock.tokenize(texts);
  REQUIRE(r.token_ids.size() == 4);
  CHECK(r.token_ids[0][1] == info.profile.eos_token_id);
  CHECK(r.token_ids[1] == r.token_ids[2]);
  // a, dog, ",", running, "."
  CHECK(r.token_ids[1][6] == info.profile.eos_token_id);
  CHECK_FALSE(r.truncated[1]);

  std::string long_text;
  for (int i = 0; i < 300; ++i) long_text += "w" + std::to_string(i) + " ";
  const std::vector<std::string> longer{long_text};
  const auto t = mock.tokenize(longer);
  CHECK(t.truncated[0]);
  CHECK(t.token_ids[0].size() == 77);
  CHECK(t.token_ids[0].back() == info.profile.eos_token_id);
  for (auto id : t.token_ids[0]) CHECK(id < info.vocab_size);
}

TEST_CASE("canonical payloads") {
  const std::vector<TokenId> ids{49406, 5, 0};
  CHECK(canonical_token_payload(ids) == "49406,5,0");
  CHECK(canonical_token_payload({}) == "");
}

TEST_CASE("base64") {
  CHECK(base64_encode("") == "");
  CHECK(base64_encode("f") == "Zg==");
  CHECK(base64_encode("fo") == "Zm8=");
  CHECK(base64_encode("foobar") == "Zm9vYmFy");
  for (const std::string& s : std::vector<std::string>{"", "f", "fo", "foo", std::string("\0\xff\x10", 3)}) CHECK(base64_decode(base64_encode(s)) == s);
  CHECK_THROWS_AS(base64_decode("abc"), ValidationError);
  CHECK_THROWS_AS(base64_decode("@@@@"), ValidationError);
}

TEST_CASE("embedding cache round trip") {
  TempDir dir("cache");
  EmbeddingCache cache(dir.path / "c");
  const std::string key(64, 'a');
  CHECK_FALSE(cache.contains(key));
  CHECK_FALSE(cache.get(key).has_value());
  const std::vector<float> v{0.1f, -2.5f, 3.0e-8f, 1.0f};
  cache.put(key, v);
  CHECK(cache.contains(key));
  CHECK(*cache.get(key) == v);
  CHECK(*EmbeddingCache(dir.path / "c").get(key) == v);  // a fresh instance sees it

  std::ifstream in(cache.path_for(key), std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), {});
  REQUIRE(bytes.size() == 4 + 16);
  CHECK(bytes.substr(0, 4) == std::string("\x04\0\0\0", 4));
  // 1.0f little-endian
  CHECK(bytes.substr(16, 4) == std::string("\0\0\x80\x3f", 4));

  CHECK_THROWS_AS(cache.path_for("../etc/passwd"), ValidationError);
  CHECK_THROWS_AS(cache.path_for(std::string(64, 'A')), ValidationError);
  for (const auto& e : std::filesystem::directory_iterator(cache.root()))
    CHECK(e.path().extension() == ".emb");
}

TEST_CASE("embedder: order, cache hits, dedupe") {
  TempDir dir("emb");
  MockProvider mock;
  const auto info = mock.info();
  EmbeddingCache cache(dir.path);
  Embedder emb(mock, info, &cache, {.batch_size = 5, .max_in_flight = 3});

  std::vector<std::vector<TokenId>> rows;
  for (int i = 0; i < 36; ++i) rows.push_back(row_of(info, {TokenId(10 + i), 7}));
  rows.push_back(rows[3]);  // duplicate

  const auto recs = emb.embed_tokens(rows);
  REQUIRE(recs.size() == 37);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto key = content_key(info.profile.model_id, canonical_token_payload(rows[i]));
    CHECK(recs[i].key == key);
    CHECK(recs[i].vector == mock_embedding(key, 64).vector);
  }
  CHECK(mock.encodings() == 36);
  CHECK(mock.embed_calls() == 8);  // ceil(36 / 5)
  CHECK(emb.stats().provider_calls == 8);

  Embedder warm(mock, info, &cache);
  const auto again = warm.embed_tokens(rows);
  CHECK(again == recs);
  CHECK(mock.embed_calls() == 8);
  CHECK(warm.stats().cache_hits == 36);

  // Identical images collapse to one provider-side encoding.
  const std::vector<std::string> pngs(5, std::string("\x89PNG fake", 9));
  const auto before = mock.encodings();
  const auto img = emb.embed_images(pngs);
  CHECK(mock.encodings() == before + 1);
  for (const auto& r : img) CHECK(r == img[0]);
}

TEST_CASE("embedder rejects rows that do not fill the window") {
  MockProvider mock;
  Embedder emb(mock, mock.info(), nullptr);
  const std::vector<std::vector<TokenId>> rows{{49406, 49407}};
  CHECK_THROWS_AS(emb.embed_tokens(rows), ValidationError);
}

TEST_CASE("embedder tokenizes through the provider") {
  MockProvider mock;
  Embedder emb(mock, mock.info(), nullptr, {.batch_size = 2});
  const std::vector<std::string> texts{"", "a b", "c", "d e f"};
  const std::vector<std::string> ids{"i0", "i1", "i2", "i3"};
  const auto seqs = emb.tokenize(texts, ids);
  REQUIRE(seqs.size() == 4);
  CHECK(seqs[0].valid_len == 0);
  CHECK(seqs[3].valid_len == 3);
  CHECK(seqs[2].source_item == "i2");
  CHECK(emb.stats().tokenize_calls == 2);
}

TEST_CASE("normalization contract") {
  SUBCASE("unnormalized providers are normalized harness-side") {
    ScaledProvider p(false);
    Embedder emb(p, p.info(), nullptr);
    const auto recs = emb.embed_tokens(std::vector<std::vector<TokenId>>{row_of(p.info(), {5})});
    CHECK(recs[0].vector == std::vector<float>{1, 0, 0, 0});
    CHECK(recs[0].normalized);
  }
  SUBCASE("a provider that claims normalization must deliver it") {
    ScaledProvider p(true);
    Embedder emb(p, p.info(), nullptr);
    CHECK_THROWS_AS(emb.embed_tokens(std::vector<std::vector<TokenId>>{row_of(p.info(), {5})}),
                    ProviderError);
  }
  SUBCASE("zero vectors are a provider error") {
    ScaledProvider p(false, 0.0f);
    Embedder emb(p, p.info(), nullptr);
    CHECK_THROWS_AS(emb.embed_images(std::vector<std::string>{"x"}), ProviderError);
  }
}

TEST_CASE("embedder propagates provider failures and honours the batch budget") {
  TempDir dir("budget");
  MockProvider mock;
  const auto info = mock.info();
  EmbeddingCache cache(dir.path);
  std::vector<std::vector<TokenId>> rows;
  for (int i = 0; i < 20; ++i) rows.push_back(row_of(info, {TokenId(100 + i)}));

  {
    mock.inject_failures(1);
    Embedder emb(mock, info, &cache, {.batch_size = 4, .max_in_flight = 1});
    CHECK_THROWS_AS(emb.embed_tokens(rows), ProviderError);
  }
  {
    Embedder emb(mock, info, &cache, {.batch_size = 4, .max_in_flight = 2, .batch_budget = 3});
    CHECK_THROWS_AS(emb.embed_tokens(rows), RunInterrupted);
    CHECK(emb.stats().provider_calls == 3);
    std::size_t cached = 0;
    for (const auto& r : rows) cached += cache.contains(content_key(info.profile.model_id, canonical_token_payload(r)));
    CHECK(cached == 12);
  }
  {
    Embedder emb(mock, info, &cache, {.batch_size = 4});
    const auto recs = emb.embed_tokens(rows);
    CHECK(emb.stats().cache_hits == 12);
    CHECK(emb.stats().provider_calls == 2);
    CHECK(recs.size() == 20);
  }
}
