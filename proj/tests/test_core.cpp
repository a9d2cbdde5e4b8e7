#include <cmath>

#include "doctest.h"
#include "posbias/core.hpp"

using namespace posbias;

TEST_CASE("l2_normalize examples") {
  const std::vector<float> a{3, 4};
  auto n = l2_normalize(a);
  CHECK(n[0] == doctest::Approx(0.6));
  CHECK(n[1] == doctest::Approx(0.8));

  const std::vector<float> unit{1, 0, 0};
  CHECK(l2_normalize(unit) == unit);

  const std::vector<float> twos{2, 2, 2, 2};
  for (float x : l2_normalize(twos)) CHECK(x == doctest::Approx(0.5));
}

TEST_CASE("l2_normalize rejects degenerate input") {
  const std::vector<float> zero{0, 0, 0};
  CHECK_THROWS_WITH_AS(l2_normalize(zero), "degenerate embedding", ValidationError);
  const std::vector<float> bad{NAN, 1};
  CHECK_THROWS_AS(l2_normalize(bad), ValidationError);
}

TEST_CASE("sha256 matches published vectors") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("content_key is a length-prefixed SHA-256") {
  // Frozen from Python: hashlib.sha256(struct.pack('<Q', len(m)) + m + payload)
  CHECK(content_key("m", "") == "dbf4d2dc183e512db0d6a50848b1616adc2b647e664650be9ec4006e51015d3e");
  CHECK(content_key("posbias-mock", "1,2,3") ==
        "a74df7237092eba8b24e95ef2d3770973899484717bb0d2bb55a8400c80d1694");
  CHECK(content_key("posbias-mock", "1,2,4") ==
        "2438c62057710b6763987e0ca7eff588e57a804f8d3081996e02430c8bc4c3d7");
  CHECK(content_key("posbias-mock", "1,2,3") == content_key("posbias-mock", "1,2,3"));
  // The prefix keeps (model, payload) boundaries unambiguous.
  CHECK(content_key("ab", "c") != content_key("a", "bc"));
}

TEST_CASE("enum names round-trip") {
  for (auto m : {Modality::kText, Modality::kImage}) CHECK(parse_modality(to_string(m)) == m);
  for (auto s : {Schedule::kStepEqual, Schedule::kEvenSpread, Schedule::kExplicit})
    CHECK(parse_schedule(to_string(s)) == s);
  for (auto a : {Axis::kRows, Axis::kColumns}) CHECK(parse_axis(to_string(a)) == a);
  for (auto v : {VariantMode::kImportance, VariantMode::kBiasMask, VariantMode::kBiasLorem})
    CHECK(parse_variant_mode(to_string(v)) == v);
  CHECK(to_string(Schedule::kEvenSpread) == "even-spread");
  CHECK_THROWS_AS(parse_schedule("sideways"), ValidationError);
  CHECK(make_variant_id("x7", VariantMode::kBiasMask, 2, 5) == "x7:bias-mask:2:5");
}

TEST_CASE("ModelProfile validation") {
  ModelProfile p;
  p.model_id = "clip";
  CHECK_NOTHROW(p.validate(49408));
  CHECK(p.text_capacity() == 75);

  auto bad = p;
  bad.model_id.clear();
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = p;
  bad.eos_token_id = 60000;
  CHECK_THROWS_AS(bad.validate(49408), ValidationError);
  CHECK_NOTHROW(bad.validate());
  bad = p;
  bad.rgb_std[1] = 0.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = p;
  bad.text_window = 3;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("PairDataset validation") {
  PairDataset d;
  CHECK_THROWS_AS(d.validate(true, false), ValidationError);
  d.items = {{"a", "a.png", "cap", std::nullopt}, {"b", "b.png", "", std::string("dog")}};
  CHECK_THROWS_WITH_AS(d.validate(true, false), "item 'b' has an empty caption", ValidationError);
  CHECK_THROWS_AS(d.validate(false, true), ValidationError);
  d.items[1].caption = "x";
  CHECK_NOTHROW(d.validate(true, false));
  d.items[1].item_id = "a";
  CHECK_THROWS_WITH_AS(d.validate(true, false), "duplicate item id 'a'", ValidationError);
}

TEST_CASE("SegmentationPlan validation") {
  SegmentationPlan p;
  p.num_segments = 3;
  p.segment_length = 4;
  p.capacity = 12;
  p.positions = {0, 4, 8};
  CHECK_NOTHROW(p.validate());

  auto q = p;
  q.positions = {0, 4, 9};
  CHECK_THROWS_AS(q.validate(), ValidationError);  // offset + s exceeds capacity
  q = p;
  q.positions = {0, 8, 4};
  CHECK_THROWS_AS(q.validate(), ValidationError);
  q = p;
  q.positions = {0, 3, 8};
  CHECK_THROWS_AS(q.validate(), ValidationError);  // step-equal needs multiples of s
  q = p;
  q.positions = {0, 8};
  CHECK_THROWS_AS(q.validate(), ValidationError);  // step-equal needs P == N
  q.schedule = Schedule::kEvenSpread;
  CHECK_NOTHROW(q.validate());
  q = p;
  q.num_segments = 1;
  CHECK_THROWS_AS(q.validate(), ValidationError);
}

TEST_CASE("EmbeddingRecord validation") {
  EmbeddingRecord r{{0.6f, 0.8f}, "k", true};
  CHECK_NOTHROW(r.validate(2));
  CHECK_THROWS_AS(r.validate(3), ValidationError);
  r.vector = {1.0f, 1.0f};
  CHECK_THROWS_AS(r.validate(2), ValidationError);
  r.normalized = false;
  CHECK_NOTHROW(r.validate(2));
  r.vector = {INFINITY, 0.0f};
  CHECK_THROWS_AS(r.validate(2), ValidationError);
}

TEST_CASE("JSON round trips") {
  ModelProfile p;
  p.model_id = "m";
  p.patch_size.reset();
  CHECK(json(p).get<ModelProfile>() == p);
  p.patch_size = 14;
  CHECK(json(p).get<ModelProfile>() == p);

  PairItem item{"i", "/x.png", "a caption", std::string("cat")};
  const json ji = item;
  CHECK(ji["id"] == "i");
  CHECK(ji.get<PairItem>() == item);

  SegmentationPlan plan;
  plan.modality = Modality::kImage;
  plan.num_segments = 7;
  plan.segment_length = 32;
  plan.positions = {0, 32, 64, 96, 128, 160, 192};
  plan.capacity = 224;
  plan.axis = Axis::kColumns;
  plan.patch_aligned = true;
  CHECK(json(plan).get<SegmentationPlan>() == plan);

  BiasCurve c{2, {0.5, 0.25}, 0.333, "recall@1:t2i", true};
  CHECK(json(c).get<BiasCurve>() == c);
  ImportanceCurve ic{{0.1, 0.2}, {0.1, 0.15, 0.2}, "top1:zero-shot"};
  CHECK(json(ic).get<ImportanceCurve>() == ic);
}
