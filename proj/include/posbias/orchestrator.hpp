#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "posbias/backend.hpp"
#include "posbias/core.hpp"

namespace posbias {

enum class AuditMode { kImportance, kBiasMask, kBiasLorem, kClassify };

std::string to_string(AuditMode m);
AuditMode parse_audit_mode(std::string_view s);

struct ExperimentConfig {
  std::string dataset_manifest;  // as written; relative to base_dir
  std::optional<std::string> provider_url;
  bool mock = false;
  Modality modality = Modality::kText;
  AuditMode mode = AuditMode::kBiasMask;
  int num_segments = 6;
  Schedule schedule = Schedule::kStepEqual;
  std::optional<int> num_positions;
  std::vector<int> positions;  // explicit schedule only
  int recall_k = 1;
  std::uint64_t seed = 0;
  std::string output_dir;
  Axis axis = Axis::kRows;
  std::string prompt_template = "a photo of a {label}";
  VariantMode classify_variants = VariantMode::kBiasMask;
  std::optional<std::string> lorem_bank;
  bool include_baseline = false;
  int interpolation_samples = 100;
  // Runtime knobs; they do not change results and are left out of the hash.
  std::optional<std::string> cache_dir;
  std::size_t batch_size = 64;
  std::size_t max_in_flight = 4;

  std::filesystem::path base_dir;  // directory of the config file

  void validate() const;
  std::filesystem::path resolve(const std::string& p) const;
  std::filesystem::path manifest_path() const { return resolve(dataset_manifest); }
  std::filesystem::path output_path() const { return resolve(output_dir); }

  // All fields with defaults filled in.
  json to_json() const;
  // Fields that determine results, serialized with sorted keys and no
  // whitespace, then SHA-256.
  std::string hash() const;
};

ExperimentConfig config_from_json(const json& j, std::filesystem::path base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

struct ManifestRequirements {
  bool captions = true;
  bool labels = false;
  bool check_images = true;
};

// JSONL rows {"id", "image", "caption", "label"?}. Image paths are resolved
// against the manifest's directory.
PairDataset parse_manifest(const std::filesystem::path& path, ManifestRequirements req = {});

enum class VariantStatus { kPending, kEmbedded, kScored };

struct RunManifest {
  std::string config_hash;
  json config;
  std::optional<ProviderInfo> provider;
  std::string status = "running";  // running | interrupted | failed | complete
  std::string error;
  std::map<std::string, VariantStatus> variants;
  json metrics = json::object();
  std::string started_at;
  std::string updated_at;
  EmbedStats stats;
};

void to_json(json& j, const RunManifest& m);
void from_json(const json& j, RunManifest& m);
RunManifest load_run_manifest(const std::filesystem::path& path);
void save_run_manifest(const RunManifest& m, const std::filesystem::path& path);

struct RunOptions {
  bool resume = false;
  // Overrides the config's cache directory (the CLI feeds POSBIAS_CACHE_DIR here).
  std::optional<std::filesystem::path> cache_dir;
  // Test hook: stop with RunInterrupted after this many provider batches.
  std::optional<std::size_t> interrupt_after_batches;
};

struct AuditResult {
  RunManifest manifest;
  std::vector<BiasCurve> curves;              // bias and classify modes
  std::optional<ImportanceCurve> importance;  // importance mode
  std::optional<double> baseline;
  std::string metric_id;
  std::filesystem::path output_dir;
};

// Embeds the untouched opposite modality once as the gallery, embeds every
// perturbation variant as queries, scores each (segment, position) cell with
// identity truth, and writes manifest.json plus curves or importance tables
// and SVG plots under the output directory.
AuditResult run_audit(const ExperimentConfig& config, EmbeddingProvider& provider,
                      const RunOptions& options = {});

}  // namespace posbias
