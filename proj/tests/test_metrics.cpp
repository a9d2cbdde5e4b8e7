#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "posbias/metrics.hpp"

using namespace posbias;

namespace {

EmbeddingRecord rec(std::vector<float> v) { return EmbeddingRecord{std::move(v), "", true}; }

SimilarityMatrix from_rows(const std::vector<std::vector<double>>& rows) {
  SimilarityMatrix m;
  m.rows = rows.size();
  m.cols = rows.empty() ? 0 : rows[0].size();
  for (const auto& r : rows) m.scores.insert(m.scores.end(), r.begin(), r.end());
  return m;
}

}  // namespace

TEST_CASE("similarity matrix") {
  const std::vector<EmbeddingRecord> q{rec({1, 0}), rec({0, 1})};
  const std::vector<EmbeddingRecord> g{rec({1, 0}), rec({0, 1}), rec({0.6f, 0.8f})};
  const auto s = similarity_matrix(q, g);
  CHECK(s.rows == 2);
  CHECK(s.cols == 3);
  CHECK(s.at(0, 0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(s.at(0, 1) == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(s.at(1, 2) == doctest::Approx(0.8).epsilon(1e-6));
  const auto m = oracle::dot_products({{1, 0}, {0, 1}}, {{1, 0}, {0, 1}, {0.6f, 0.8f}});
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(s.at(i, j) == m[i][j]);

  const std::vector<EmbeddingRecord> bad{rec({1, 0, 0})};
  CHECK_THROWS_AS(similarity_matrix(q, bad), ValidationError);
  CHECK_THROWS_AS(similarity_matrix(q, g, {"only-one"}), ValidationError);
}

TEST_CASE("recall@K examples") {
  const auto diag = from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  const std::vector<std::size_t> id{0, 1, 2};
  CHECK(recall_at_k(diag, id, 1) == 1.0);

  // truth ranks 1st, 2nd, 3rd
  const auto ranks = from_rows({{0.9, 0.1, 0.0}, {0.9, 0.5, 0.0}, {0.9, 0.5, 0.1}});
  const std::vector<std::size_t> t{0, 1, 2};
  CHECK(recall_at_k(ranks, t, 1) == doctest::Approx(1.0 / 3));
  CHECK(recall_at_k(ranks, t, 2) == doctest::Approx(2.0 / 3));
  CHECK(recall_at_k(ranks, t, 3) == 1.0);

  const auto flat = from_rows({{0.5, 0.5, 0.5}, {0.5, 0.5, 0.5}});
  const std::vector<std::size_t> last{2, 2};
  CHECK(recall_at_k(flat, last, 1) == 0.0);
  CHECK(recall_at_k(flat, last, 3) == 1.0);
  const std::vector<std::size_t> first{0, 0};
  CHECK(recall_at_k(flat, first, 1) == 1.0);

  CHECK_THROWS_AS(recall_at_k(diag, id, 0), ValidationError);
  CHECK_THROWS_AS(recall_at_k(diag, std::vector<std::size_t>{0, 1}, 1), ValidationError);
  CHECK_THROWS_AS(recall_at_k(diag, std::vector<std::size_t>{0, 1, 3}, 1), ValidationError);
}

TEST_CASE("top-1 zero-shot") {
  const std::vector<EmbeddingRecord> classes{rec({1, 0}), rec({0, 1}), rec({0.6f, 0.8f})};
  // images sitting exactly on their class vectors
  CHECK(top1_zero_shot(classes, classes, std::vector<std::size_t>{0, 1, 2}) == 1.0);
  // single class
  const std::vector<EmbeddingRecord> one{rec({0, 1})};
  const std::vector<EmbeddingRecord> imgs{rec({1, 0}), rec({0.6f, 0.8f})};
  CHECK(top1_zero_shot(imgs, one, std::vector<std::size_t>{0, 0}) == 1.0);
  // hand-built 3-class toy against the brute-force argmax
  const std::vector<EmbeddingRecord> toy{rec({0.8f, 0.6f}), rec({0, 1}), rec({1, 0}), rec({0.6f, 0.8f})};
  const std::vector<std::size_t> labels{2, 1, 0, 1};
  const auto logits = oracle::dot_products({{0.8f, 0.6f}, {0, 1}, {1, 0}, {0.6f, 0.8f}}, {{1, 0}, {0, 1}, {0.6f, 0.8f}});
  CHECK(top1_zero_shot(toy, classes, labels) == oracle::top1(logits, labels));
  CHECK_THROWS_AS(top1_zero_shot(toy, {}, labels), ValidationError);
  // ties go to the lowest class index
  const auto tie = from_rows({{0.5, 0.5}});
  CHECK(argmax_rows(tie)[0] == 0);
}

TEST_CASE("coefficient of variation") {
  CHECK(coefficient_of_variation(std::vector<double>{0.5, 0.5, 0.5}) == 0.0);
  CHECK(coefficient_of_variation(std::vector<double>{2, 4}) == doctest::Approx(0.3333).epsilon(1e-4));
  CHECK_THROWS_WITH_AS(coefficient_of_variation(std::vector<double>{0, 0}), "degenerate accuracy vector",
                       ValidationError);
  CHECK_THROWS_AS(coefficient_of_variation(std::vector<double>{1}), ValidationError);
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> v(2 + t % 9);
    for (auto& x : v) x = u(rng);
    CHECK(std::abs(coefficient_of_variation(v) - oracle::cv(v)) < 1e-12);
  }
}

TEST_CASE("interpolation to a common scale") {
  CHECK(interpolate_to_scale(std::vector<double>{0, 1}, 3) == std::vector<double>{0, 0.5, 1});
  for (double x : interpolate_to_scale(std::vector<double>{0.3, 0.3, 0.3, 0.3}, 17)) CHECK(x == 0.3);
  const std::vector<double> seg{0.2, 0.9, 0.1, 0.5, 0.4};
  const auto out = interpolate_to_scale(seg, 100);
  CHECK(out.size() == 100);
  CHECK(out.front() == 0.2);
  CHECK(out.back() == 0.4);
  for (double x : out) {
    CHECK(x >= 0.1);
    CHECK(x <= 0.9);
  }
  // x = 0.5 is the centre anchor of five segments.
  CHECK(interpolate_to_scale(seg, 3)[1] == doctest::Approx(0.1));
  CHECK_THROWS_AS(interpolate_to_scale(std::vector<double>{1}, 10), ValidationError);
  CHECK_THROWS_AS(interpolate_to_scale(seg, 1), ValidationError);

  const auto curve = make_importance_curve(seg, "recall@1:t2i", 11);
  CHECK(curve.per_segment == seg);
  CHECK(curve.interpolated.size() == 11);
  CHECK(curve.metric_id == "recall@1:t2i");
}

TEST_CASE("assembling bias curves") {
  AccuracyTable t(3, 4);
  CHECK(t.missing().size() == 12);
  for (int k = 0; k < 3; ++k)
    for (int j = 0; j < 4; ++j) t.set(k, j, 0.9 - 0.1 * j - 0.05 * k);
  const auto curves = assemble_bias_curves(t, "recall@1:t2i");
  REQUIRE(curves.size() == 3);
  for (const auto& c : curves) {
    CHECK(c.accuracies.size() == 4);
    CHECK(c.beginning_biased);
    CHECK(c.cv == coefficient_of_variation(c.accuracies));
    CHECK(c.metric_id == "recall@1:t2i");
  }
  t.set(1, 2, 1.0);
  CHECK_FALSE(assemble_bias_curves(t, "m")[1].beginning_biased);

  AccuracyTable zeros(2, 2);
  for (int k = 0; k < 2; ++k)
    for (int j = 0; j < 2; ++j) zeros.set(k, j, 0.0);
  CHECK(assemble_bias_curves(zeros, "m")[0].cv == 0.0);

  AccuracyTable holes(2, 2);
  holes.set(0, 0, 0.5);
  CHECK_THROWS_WITH_AS(assemble_bias_curves(holes, "m"), doctest::Contains("(1,1)"), ValidationError);
  CHECK_THROWS_AS(holes.set(0, 0, 1.5), ValidationError);
  CHECK_THROWS_AS(holes.set(2, 0, 0.5), ValidationError);

  AccuracyTable grid(6, 6);
  for (int k = 0; k < 6; ++k)
    for (int j = 0; j < 6; ++j) grid.set(k, j, 0.5);
  CHECK(assemble_bias_curves(grid, "m").size() == 6);
}
