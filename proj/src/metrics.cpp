#include "posbias/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace posbias {

SimilarityMatrix similarity_matrix(std::span<const EmbeddingRecord> queries,
                                   std::span<const EmbeddingRecord> gallery,
                                   std::vector<std::string> query_ids,
                                   std::vector<std::string> gallery_ids) {
  SimilarityMatrix sim;
  sim.rows = queries.size();
  sim.cols = gallery.size();
  if (!query_ids.empty() && query_ids.size() != sim.rows)
    throw ValidationError("query id count does not match the query list");
  if (!gallery_ids.empty() && gallery_ids.size() != sim.cols)
    throw ValidationError("gallery id count does not match the gallery list");
  const std::size_t dim = !queries.empty() ? queries[0].dim() : (!gallery.empty() ? gallery[0].dim() : 0);
  for (const auto& r : queries)
    if (r.dim() != dim) throw ValidationError("embedding dim mismatch in queries");
  for (const auto& r : gallery)
    if (r.dim() != dim) throw ValidationError("embedding dim mismatch between queries and gallery");

  sim.scores.resize(sim.rows * sim.cols);
  for (std::size_t q = 0; q < sim.rows; ++q) {
    const auto& a = queries[q].vector;
    for (std::size_t g = 0; g < sim.cols; ++g) {
      const auto& b = gallery[g].vector;
      double acc = 0.0;
      for (std::size_t d = 0; d < dim; ++d) acc += static_cast<double>(a[d]) * b[d];
      sim.scores[q * sim.cols + g] = acc;
    }
  }
  sim.query_ids = std::move(query_ids);
  sim.gallery_ids = std::move(gallery_ids);
  return sim;
}

std::size_t rank_of(std::span<const double> row, std::size_t truth) {
  const double t = row[truth];
  std::size_t rank = 0;
  for (std::size_t g = 0; g < row.size(); ++g)
    if (row[g] > t || (row[g] == t && g < truth)) ++rank;
  return rank;
}

double recall_at_k(const SimilarityMatrix& sim, std::span<const std::size_t> truth, int k) {
  if (k < 1) throw ValidationError("recall@K needs K >= 1");
  if (truth.size() != sim.rows) throw ValidationError("truth mapping must cover every query");
  if (sim.rows == 0) throw ValidationError("recall@K over zero queries");
  std::size_t hits = 0;
  for (std::size_t q = 0; q < sim.rows; ++q) {
    if (truth[q] >= sim.cols)
      throw ValidationError("truth index " + std::to_string(truth[q]) + " out of range for gallery of " +
                            std::to_string(sim.cols));
    if (rank_of(sim.row(q), truth[q]) < static_cast<std::size_t>(k)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(sim.rows);
}

std::vector<std::size_t> argmax_rows(const SimilarityMatrix& sim) {
  if (sim.cols == 0) throw ValidationError("empty class set");
  std::vector<std::size_t> out(sim.rows);
  for (std::size_t q = 0; q < sim.rows; ++q) {
    const auto row = sim.row(q);
    // max_element returns the first maximum.
    out[q] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

double top1_accuracy(const SimilarityMatrix& logits, std::span<const std::size_t> truth) {
  if (truth.size() != logits.rows) throw ValidationError("truth labels must cover every image");
  if (logits.rows == 0) throw ValidationError("top-1 accuracy over zero images");
  const auto pred = argmax_rows(logits);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (truth[i] >= logits.cols) throw ValidationError("truth label out of range");
    if (pred[i] == truth[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

double top1_zero_shot(std::span<const EmbeddingRecord> image_embs,
                      std::span<const EmbeddingRecord> class_prompt_embs,
                      std::span<const std::size_t> truth) {
  if (class_prompt_embs.empty()) throw ValidationError("empty class set");
  return top1_accuracy(similarity_matrix(image_embs, class_prompt_embs), truth);
}

double coefficient_of_variation(std::span<const double> values) {
  if (values.size() < 2) throw ValidationError("coefficient of variation needs >= 2 values");
  // Welford
  double mean = 0.0;
  double m2 = 0.0;
  std::size_t n = 0;
  for (double x : values) {
    ++n;
    const double delta = x - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (x - mean);
  }
  if (!(mean > 0.0)) throw ValidationError("degenerate accuracy vector");
  return std::sqrt(m2 / static_cast<double>(n)) / mean;
}

std::vector<double> interpolate_to_scale(std::span<const double> per_segment, int m) {
  const auto n = per_segment.size();
  if (n < 2) throw ValidationError("interpolation needs >= 2 segments");
  if (m < 2) throw ValidationError("interpolation needs >= 2 samples");
  const double nn = static_cast<double>(n);
  auto anchor = [nn](std::size_t k) { return (static_cast<double>(k) + 0.5) / nn; };
  std::vector<double> out(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    const double x = static_cast<double>(i) / (m - 1);
    double v;
    if (x <= anchor(0)) {
      v = per_segment.front();
    } else if (x >= anchor(n - 1)) {
      v = per_segment.back();
    } else {
      auto k = static_cast<std::size_t>(std::floor(x * nn - 0.5));
      k = std::min(k, n - 2);
      const double t = std::clamp((x - anchor(k)) * nn, 0.0, 1.0);
      v = per_segment[k] + t * (per_segment[k + 1] - per_segment[k]);
    }
    out[static_cast<std::size_t>(i)] = v;
  }
  return out;
}

ImportanceCurve make_importance_curve(std::vector<double> per_segment, std::string metric_id, int m) {
  ImportanceCurve curve;
  curve.interpolated = interpolate_to_scale(per_segment, m);
  curve.per_segment = std::move(per_segment);
  curve.metric_id = std::move(metric_id);
  return curve;
}

AccuracyTable::AccuracyTable(int num_segments, int num_positions)
    : n_(num_segments), p_(num_positions) {
  if (n_ < 1 || p_ < 1) throw ValidationError("accuracy table needs N, P >= 1");
  cells_.resize(static_cast<std::size_t>(n_) * p_);
}

void AccuracyTable::set(int k, int j, double accuracy) {
  if (k < 0 || k >= n_ || j < 0 || j >= p_) throw ValidationError("accuracy cell out of range");
  if (!(accuracy >= 0.0 && accuracy <= 1.0)) throw ValidationError("accuracy outside [0,1]");
  cells_[static_cast<std::size_t>(k) * p_ + j] = accuracy;
}

std::optional<double> AccuracyTable::get(int k, int j) const {
  if (k < 0 || k >= n_ || j < 0 || j >= p_) throw ValidationError("accuracy cell out of range");
  return cells_[static_cast<std::size_t>(k) * p_ + j];
}

std::vector<std::pair<int, int>> AccuracyTable::missing() const {
  std::vector<std::pair<int, int>> out;
  for (int k = 0; k < n_; ++k)
    for (int j = 0; j < p_; ++j)
      if (!get(k, j)) out.emplace_back(k, j);
  return out;
}

std::vector<BiasCurve> assemble_bias_curves(const AccuracyTable& table, const std::string& metric_id) {
  if (const auto gaps = table.missing(); !gaps.empty()) {
    std::string msg = "incomplete run, missing cells:";
    for (auto [k, j] : gaps) msg += " (" + std::to_string(k) + "," + std::to_string(j) + ")";
    throw ValidationError(msg);
  }
  std::vector<BiasCurve> curves;
  for (int k = 0; k < table.num_segments(); ++k) {
    BiasCurve c;
    c.segment_index = k;
    c.metric_id = metric_id;
    for (int j = 0; j < table.num_positions(); ++j) c.accuracies.push_back(*table.get(k, j));
    const bool all_zero = std::all_of(c.accuracies.begin(), c.accuracies.end(),
                                      [](double a) { return a == 0.0; });
    c.cv = (all_zero || c.accuracies.size() < 2) ? 0.0 : coefficient_of_variation(c.accuracies);
    c.beginning_biased =
        c.accuracies.front() >= *std::max_element(c.accuracies.begin(), c.accuracies.end());
    curves.push_back(std::move(c));
  }
  return curves;
}

}  // namespace posbias
