#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "posbias/core.hpp"

namespace posbias {

// Row-major Q x G cosine scores (queries x gallery).
struct SimilarityMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> scores;
  std::vector<std::string> query_ids;
  std::vector<std::string> gallery_ids;

  double at(std::size_t q, std::size_t g) const { return scores[q * cols + g]; }
  std::span<const double> row(std::size_t q) const {
    return std::span<const double>(scores).subspan(q * cols, cols);
  }
};

// Dot products accumulated in double. Inputs are expected unit-norm.
SimilarityMatrix similarity_matrix(std::span<const EmbeddingRecord> queries,
                                   std::span<const EmbeddingRecord> gallery,
                                   std::vector<std::string> query_ids = {},
                                   std::vector<std::string> gallery_ids = {});

// 0-based rank of gallery item `truth` in `row`: items scoring strictly
// higher, plus equal-scoring items with a lower index.
std::size_t rank_of(std::span<const double> row, std::size_t truth);

// Fraction of queries whose true gallery index ranks within the top K.
double recall_at_k(const SimilarityMatrix& sim, std::span<const std::size_t> truth, int k);

// argmax per row, lowest index on ties.
std::vector<std::size_t> argmax_rows(const SimilarityMatrix& sim);
double top1_accuracy(const SimilarityMatrix& logits, std::span<const std::size_t> truth);
double top1_zero_shot(std::span<const EmbeddingRecord> image_embs,
                      std::span<const EmbeddingRecord> class_prompt_embs,
                      std::span<const std::size_t> truth);

// Population standard deviation over the mean. Throws on mean <= 0.
double coefficient_of_variation(std::span<const double> values);

// Segment k sits at x = (k + 0.5) / N; samples x = i / (M - 1) with linear
// interpolation between anchors and clamping outside them.
std::vector<double> interpolate_to_scale(std::span<const double> per_segment, int m = 100);

ImportanceCurve make_importance_curve(std::vector<double> per_segment, std::string metric_id,
                                      int m = 100);

// Accuracy per (segment k, position j); cells start empty.
class AccuracyTable {
 public:
  AccuracyTable(int num_segments, int num_positions);

  void set(int k, int j, double accuracy);
  std::optional<double> get(int k, int j) const;
  int num_segments() const noexcept { return n_; }
  int num_positions() const noexcept { return p_; }
  std::vector<std::pair<int, int>> missing() const;

 private:
  int n_;
  int p_;
  std::vector<std::optional<double>> cells_;
};

// One curve per segment with its CV and beginning-bias flag. A segment whose
// accuracies are all zero gets cv = 0.
std::vector<BiasCurve> assemble_bias_curves(const AccuracyTable& table, const std::string& metric_id);

}  // namespace posbias
