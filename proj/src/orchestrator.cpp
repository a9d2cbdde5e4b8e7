#include "posbias/orchestrator.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>

#include "posbias/image_io.hpp"
#include "posbias/imageprobe.hpp"
#include "posbias/metrics.hpp"
#include "posbias/report.hpp"
#include "posbias/textprobe.hpp"

namespace posbias {

std::string to_string(AuditMode m) {
  switch (m) {
    case AuditMode::kImportance:
      return "importance";
    case AuditMode::kBiasMask:
      return "bias-mask";
    case AuditMode::kBiasLorem:
      return "bias-lorem";
    case AuditMode::kClassify:
      return "classify";
  }
  return "bias-mask";
}

AuditMode parse_audit_mode(std::string_view s) {
  if (s == "importance") return AuditMode::kImportance;
  if (s == "bias-mask") return AuditMode::kBiasMask;
  if (s == "bias-lorem") return AuditMode::kBiasLorem;
  if (s == "classify") return AuditMode::kClassify;
  throw ValidationError("unknown mode '" + std::string(s) + "'");
}

// ---- config ----

void ExperimentConfig::validate() const {
  if (dataset_manifest.empty()) throw ValidationError("config: dataset_manifest is required");
  if (output_dir.empty()) throw ValidationError("config: output_dir is required");
  if (!mock && (!provider_url || provider_url->empty()))
    throw ValidationError("config: set provider_url or mock=true");
  if (num_segments < 2) throw ValidationError("config: num_segments must be >= 2");
  if (recall_k < 1) throw ValidationError("config: recall_k must be >= 1");
  if (mode == AuditMode::kBiasLorem && modality != Modality::kText)
    throw ValidationError("config: bias-lorem mode requires text modality");
  if (mode == AuditMode::kClassify && modality != Modality::kImage)
    throw ValidationError("config: classify mode requires image modality");
  if (mode == AuditMode::kClassify && classify_variants == VariantMode::kBiasLorem)
    throw ValidationError("config: classify_variants must be importance or bias-mask");
  if (mode == AuditMode::kClassify && prompt_template.find("{label}") == std::string::npos)
    throw ValidationError("config: prompt_template must contain {label}");
  if (schedule == Schedule::kEvenSpread && num_positions && *num_positions < 2)
    throw ValidationError("config: even-spread schedule needs num_positions >= 2");
  if (schedule == Schedule::kExplicit) {
    if (modality != Modality::kText) throw ValidationError("config: explicit offsets are text-only");
    if (positions.size() < 2) throw ValidationError("config: explicit schedule needs >= 2 positions");
  } else if (!positions.empty()) {
    throw ValidationError("config: positions are only used by the explicit schedule");
  }
  if (schedule == Schedule::kStepEqual && num_positions && *num_positions != num_segments)
    throw ValidationError("config: step-equal schedule requires num_positions == num_segments");
  if (mode == AuditMode::kBiasLorem && schedule == Schedule::kExplicit)
    throw ValidationError("config: bias-lorem does not use token offsets");
  if (interpolation_samples < 2) throw ValidationError("config: interpolation_samples must be >= 2");
  if (batch_size < 1 || max_in_flight < 1)
    throw ValidationError("config: batch_size and max_in_flight must be >= 1");
}

std::filesystem::path ExperimentConfig::resolve(const std::string& p) const {
  std::filesystem::path path(p);
  if (path.is_absolute() || base_dir.empty()) return path;
  return base_dir / path;
}

json ExperimentConfig::to_json() const {
  json j = {{"dataset_manifest", dataset_manifest},
            {"provider_url", provider_url ? json(*provider_url) : json(nullptr)},
            {"mock", mock},
            {"modality", modality},
            {"mode", to_string(mode)},
            {"num_segments", num_segments},
            {"schedule", schedule},
            {"num_positions", num_positions ? json(*num_positions) : json(nullptr)},
            {"positions", positions},
            {"recall_k", recall_k},
            {"seed", seed},
            {"output_dir", output_dir},
            {"axis", axis},
            {"prompt_template", prompt_template},
            {"classify_variants", classify_variants},
            {"lorem_bank", lorem_bank ? json(*lorem_bank) : json(nullptr)},
            {"include_baseline", include_baseline},
            {"interpolation_samples", interpolation_samples},
            {"cache_dir", cache_dir ? json(*cache_dir) : json(nullptr)},
            {"batch_size", batch_size},
            {"max_in_flight", max_in_flight}};
  return j;
}

std::string ExperimentConfig::hash() const {
  json j = to_json();
  for (const char* runtime_only : {"cache_dir", "batch_size", "max_in_flight"}) j.erase(runtime_only);
  // nlohmann::json objects keep keys sorted; dump() without indent emits no
  // whitespace.
  return sha256_hex(j.dump());
}

ExperimentConfig config_from_json(const json& j, std::filesystem::path base_dir) {
  static const std::set<std::string> known = {
      "dataset_manifest", "provider_url", "mock",       "modality",          "mode",
      "num_segments",     "schedule",     "num_positions", "positions",      "recall_k",
      "seed",             "output_dir",   "axis",       "prompt_template",   "classify_variants",
      "lorem_bank",       "include_baseline", "interpolation_samples", "cache_dir", "batch_size",
      "max_in_flight"};
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) throw ValidationError("config: unknown key '" + key + "'");

  ExperimentConfig c;
  c.base_dir = std::move(base_dir);
  auto opt_string = [&j](const char* key) -> std::optional<std::string> {
    if (auto it = j.find(key); it != j.end() && !it->is_null()) return it->get<std::string>();
    return std::nullopt;
  };
  try {
    c.dataset_manifest = j.value("dataset_manifest", std::string{});
    c.provider_url = opt_string("provider_url");
    c.mock = j.value("mock", false);
    c.modality = parse_modality(j.value("modality", std::string("text")));
    c.mode = parse_audit_mode(j.value("mode", std::string("bias-mask")));
    c.num_segments = j.value("num_segments", 6);
    if (auto it = j.find("num_positions"); it != j.end() && !it->is_null()) c.num_positions = it->get<int>();
    // With no schedule named, P != N can only mean an even spread.
    const bool spread = c.num_positions && *c.num_positions != c.num_segments;
    c.schedule = parse_schedule(j.value("schedule", std::string(spread ? "even-spread" : "step-equal")));
    if (auto it = j.find("positions"); it != j.end() && !it->is_null()) it->get_to(c.positions);
    c.recall_k = j.value("recall_k", 1);
    c.seed = j.value("seed", std::uint64_t{0});
    c.output_dir = j.value("output_dir", std::string{});
    c.axis = parse_axis(j.value("axis", std::string("rows")));
    c.prompt_template = j.value("prompt_template", c.prompt_template);
    c.classify_variants = parse_variant_mode(j.value("classify_variants", std::string("bias-mask")));
    c.lorem_bank = opt_string("lorem_bank");
    c.include_baseline = j.value("include_baseline", false);
    c.interpolation_samples = j.value("interpolation_samples", 100);
    c.cache_dir = opt_string("cache_dir");
    c.batch_size = j.value("batch_size", std::size_t{64});
    c.max_in_flight = j.value("max_in_flight", std::size_t{4});
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ValidationError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j, std::filesystem::absolute(path).parent_path());
}

// ---- dataset manifest ----

PairDataset parse_manifest(const std::filesystem::path& path, ManifestRequirements req) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read dataset manifest '" + path.string() + "'");
  const auto base = std::filesystem::absolute(path).parent_path();
  PairDataset ds;
  std::set<std::string> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "manifest line " + std::to_string(line_no);
    json row;
    try {
      row = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ValidationError(where + ": malformed JSON: " + e.what());
    }
    if (!row.is_object()) throw ValidationError(where + ": row must be a JSON object");
    auto get_string = [&](const char* key, bool required) -> std::optional<std::string> {
      auto it = row.find(key);
      if (it == row.end() || it->is_null()) {
        if (required) throw ValidationError(where + ": missing \"" + key + "\"");
        return std::nullopt;
      }
      if (!it->is_string()) throw ValidationError(where + ": \"" + key + "\" must be a string");
      return it->get<std::string>();
    };
    PairItem item;
    item.item_id = *get_string("id", true);
    if (item.item_id.empty()) throw ValidationError(where + ": empty \"id\"");
    if (!seen.insert(item.item_id).second)
      throw ValidationError(where + ": duplicate id '" + item.item_id + "'");
    std::filesystem::path image(*get_string("image", true));
    item.image_path = (image.is_absolute() ? image : base / image).lexically_normal().string();
    auto caption = get_string("caption", req.captions);
    if (req.captions && caption->empty()) throw ValidationError(where + ": empty \"caption\"");
    item.caption = caption.value_or("");
    item.label = get_string("label", req.labels);
    if (req.labels && item.label->empty()) throw ValidationError(where + ": empty \"label\"");
    ds.items.push_back(std::move(item));
  }
  if (ds.items.empty()) throw ValidationError("dataset manifest '" + path.string() + "' has no rows");
  if (req.check_images) {
    std::string missing;
    for (const auto& item : ds.items)
      if (!std::filesystem::exists(item.image_path)) missing += (missing.empty() ? "" : ", ") + item.item_id;
    if (!missing.empty()) throw ValidationError("missing image files for ids: " + missing);
  }
  return ds;
}

// ---- run manifest ----

namespace {

const char* status_name(VariantStatus s) {
  switch (s) {
    case VariantStatus::kPending:
      return "pending";
    case VariantStatus::kEmbedded:
      return "embedded";
    case VariantStatus::kScored:
      return "scored";
  }
  return "pending";
}

VariantStatus parse_status(const std::string& s) {
  if (s == "pending") return VariantStatus::kPending;
  if (s == "embedded") return VariantStatus::kEmbedded;
  if (s == "scored") return VariantStatus::kScored;
  throw ValidationError("unknown variant status '" + s + "'");
}

std::string now_utc() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

void to_json(json& j, const RunManifest& m) {
  json variants = json::object();
  for (const auto& [id, s] : m.variants) variants[id] = status_name(s);
  j = json{{"config_hash", m.config_hash},
           {"config", m.config},
           {"provider", m.provider ? json(*m.provider) : json(nullptr)},
           {"status", m.status},
           {"error", m.error},
           {"variants", std::move(variants)},
           {"metrics", m.metrics},
           {"started_at", m.started_at},
           {"updated_at", m.updated_at},
           {"embed_stats",
            {{"provider_calls", m.stats.provider_calls},
             {"encodings", m.stats.encodings},
             {"cache_hits", m.stats.cache_hits},
             {"tokenize_calls", m.stats.tokenize_calls}}}};
}

void from_json(const json& j, RunManifest& m) {
  j.at("config_hash").get_to(m.config_hash);
  m.config = j.value("config", json::object());
  if (auto it = j.find("provider"); it != j.end() && !it->is_null()) m.provider = it->get<ProviderInfo>();
  m.status = j.value("status", std::string("running"));
  m.error = j.value("error", std::string{});
  m.variants.clear();
  const json variants = j.value("variants", json::object());
  for (const auto& [id, s] : variants.items()) m.variants[id] = parse_status(s.get<std::string>());
  m.metrics = j.value("metrics", json::object());
  m.started_at = j.value("started_at", std::string{});
  m.updated_at = j.value("updated_at", std::string{});
  if (auto it = j.find("embed_stats"); it != j.end()) {
    m.stats.provider_calls = it->value("provider_calls", std::uint64_t{0});
    m.stats.encodings = it->value("encodings", std::uint64_t{0});
    m.stats.cache_hits = it->value("cache_hits", std::uint64_t{0});
    m.stats.tokenize_calls = it->value("tokenize_calls", std::uint64_t{0});
  }
}

RunManifest load_run_manifest(const std::filesystem::path& path) {
  try {
    return json::parse(read_text_file(path)).get<RunManifest>();
  } catch (const json::exception& e) {
    throw ValidationError("run manifest '" + path.string() + "' is corrupt: " + e.what());
  }
}

void save_run_manifest(const RunManifest& m, const std::filesystem::path& path) {
  auto tmp = path;
  tmp += ".tmp";
  write_text_file(tmp, json(m).dump(2) + "\n");
  std::filesystem::rename(tmp, path);
}

// ---- the run ----

namespace {

std::string metric_id_for(const ExperimentConfig& c) {
  if (c.mode == AuditMode::kClassify) return "top1:zero-shot";
  return "recall@" + std::to_string(c.recall_k) + (c.modality == Modality::kText ? ":t2i" : ":i2t");
}

// A query embedding awaiting its (segment, position) cell.
struct QuerySlot {
  std::string variant_id;
  int segment = 0;
  int position = 0;
  std::size_t item = 0;
};

class AuditRun {
 public:
  AuditRun(const ExperimentConfig& config, EmbeddingProvider& provider, const RunOptions& options)
      : config_(config), provider_(provider), options_(options) {}

  AuditResult run();

 private:
  ImageCanvas load_canvas(const PairItem& item) const;
  std::vector<EmbeddingRecord> embed_images_chunked(const std::vector<std::size_t>& items);
  std::vector<EmbeddingRecord> embed_texts_as_gallery(const std::vector<std::string>& texts,
                                                      const std::vector<std::string>& ids);
  void text_mask_queries(AuditMode mode);
  void text_lorem_queries();
  void image_queries(VariantMode variants);
  void embed_token_queries(const std::vector<std::vector<TokenId>>& rows,
                           const std::vector<QuerySlot>& slots);
  void embed_png_queries(const std::vector<std::string>& pngs, const std::vector<QuerySlot>& slots);
  void store(const std::vector<EmbeddingRecord>& recs, const std::vector<QuerySlot>& slots);
  void mark_interrupted(const std::vector<std::string>& keys, const std::vector<QuerySlot>& slots);
  void set_grid(int n, int p);
  void save();

  std::size_t chunk_rows() const { return config_.batch_size * config_.max_in_flight; }

  const ExperimentConfig& config_;
  EmbeddingProvider& provider_;
  const RunOptions& options_;
  ProviderInfo info_;
  PairDataset dataset_;
  std::optional<EmbeddingCache> cache_;
  std::optional<Embedder> embedder_;
  RunManifest manifest_;
  std::filesystem::path out_dir_;
  std::filesystem::path manifest_path_;

  int grid_n_ = 0;
  int grid_p_ = 0;
  // [k * P + j][item]
  std::vector<std::vector<EmbeddingRecord>> cells_;
  std::vector<EmbeddingRecord> gallery_;
  std::vector<EmbeddingRecord> baseline_queries_;
  std::vector<std::size_t> truth_;
};

void AuditRun::save() {
  manifest_.updated_at = now_utc();
  if (embedder_) manifest_.stats = embedder_->stats();
  save_run_manifest(manifest_, manifest_path_);
}

ImageCanvas AuditRun::load_canvas(const PairItem& item) const {
  try {
    return preprocess_image(read_image_file(item.image_path), info_.profile);
  } catch (const ValidationError& e) {
    throw IngestionError(item.item_id, e.what());
  }
}

void AuditRun::set_grid(int n, int p) {
  grid_n_ = n;
  grid_p_ = p;
  cells_.assign(static_cast<std::size_t>(n) * p, {});
}

void AuditRun::store(const std::vector<EmbeddingRecord>& recs, const std::vector<QuerySlot>& slots) {
  for (std::size_t i = 0; i < slots.size(); ++i) {
    auto& cell = cells_[static_cast<std::size_t>(slots[i].segment) * grid_p_ + slots[i].position];
    if (cell.empty()) cell.resize(dataset_.size());
    cell[slots[i].item] = recs[i];
    manifest_.variants[slots[i].variant_id] = VariantStatus::kEmbedded;
  }
}

void AuditRun::mark_interrupted(const std::vector<std::string>& keys, const std::vector<QuerySlot>& slots) {
  for (std::size_t i = 0; i < slots.size(); ++i)
    if (cache_->contains(keys[i])) manifest_.variants[slots[i].variant_id] = VariantStatus::kEmbedded;
}

void AuditRun::embed_token_queries(const std::vector<std::vector<TokenId>>& rows,
                                   const std::vector<QuerySlot>& slots) {
  for (std::size_t start = 0; start < rows.size(); start += chunk_rows()) {
    const auto end = std::min(rows.size(), start + chunk_rows());
    std::vector<std::vector<TokenId>> chunk(rows.begin() + static_cast<std::ptrdiff_t>(start),
                                            rows.begin() + static_cast<std::ptrdiff_t>(end));
    std::vector<QuerySlot> chunk_slots(slots.begin() + static_cast<std::ptrdiff_t>(start),
                                       slots.begin() + static_cast<std::ptrdiff_t>(end));
    try {
      store(embedder_->embed_tokens(chunk), chunk_slots);
    } catch (const RunInterrupted&) {
      std::vector<std::string> keys;
      for (const auto& r : chunk)
        keys.push_back(content_key(info_.profile.model_id, canonical_token_payload(r)));
      mark_interrupted(keys, chunk_slots);
      throw;
    }
  }
}

void AuditRun::embed_png_queries(const std::vector<std::string>& pngs,
                                 const std::vector<QuerySlot>& slots) {
  try {
    store(embedder_->embed_images(pngs), slots);
  } catch (const RunInterrupted&) {
    std::vector<std::string> keys;
    for (const auto& p : pngs) keys.push_back(content_key(info_.profile.model_id, p));
    mark_interrupted(keys, slots);
    throw;
  }
}

std::vector<EmbeddingRecord> AuditRun::embed_images_chunked(const std::vector<std::size_t>& items) {
  std::vector<EmbeddingRecord> out;
  out.reserve(items.size());
  for (std::size_t start = 0; start < items.size(); start += chunk_rows()) {
    std::vector<std::string> pngs;
    for (std::size_t i = start; i < std::min(items.size(), start + chunk_rows()); ++i)
      pngs.push_back(encode_png(load_canvas(dataset_.items[items[i]])));
    auto recs = embedder_->embed_images(pngs);
    out.insert(out.end(), std::make_move_iterator(recs.begin()), std::make_move_iterator(recs.end()));
  }
  return out;
}

std::vector<EmbeddingRecord> AuditRun::embed_texts_as_gallery(const std::vector<std::string>& texts,
                                                              const std::vector<std::string>& ids) {
  const auto seqs = embedder_->tokenize(texts, ids);
  std::vector<std::vector<TokenId>> rows;
  rows.reserve(seqs.size());
  for (const auto& s : seqs) rows.push_back(s.ids);
  std::vector<EmbeddingRecord> out;
  for (std::size_t start = 0; start < rows.size(); start += chunk_rows()) {
    const auto end = std::min(rows.size(), start + chunk_rows());
    std::vector<std::vector<TokenId>> chunk(rows.begin() + static_cast<std::ptrdiff_t>(start),
                                            rows.begin() + static_cast<std::ptrdiff_t>(end));
    auto recs = embedder_->embed_tokens(chunk);
    out.insert(out.end(), std::make_move_iterator(recs.begin()), std::make_move_iterator(recs.end()));
  }
  return out;
}

void AuditRun::text_mask_queries(AuditMode mode) {
  std::vector<std::string> captions, ids;
  for (const auto& item : dataset_.items) {
    captions.push_back(item.caption);
    ids.push_back(item.item_id);
  }
  const auto seqs = embedder_->tokenize(captions, ids);
  const auto& profile = info_.profile;

  std::vector<std::vector<TokenId>> rows;
  std::vector<QuerySlot> slots;
  int p = -1;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const auto plan = derive_text_plan(profile, seqs[i], config_.num_segments, config_.schedule,
                                       config_.num_positions, config_.positions);
    if (p < 0) p = plan.num_positions();
    if (plan.num_positions() != p)
      throw ValidationError("item '" + ids[i] + "' yields " + std::to_string(plan.num_positions()) +
                            " positions, other items " + std::to_string(p));
    auto variants = mode == AuditMode::kImportance ? make_text_importance_variants(seqs[i], plan, profile)
                                                   : make_text_bias_variants(seqs[i], plan, profile);
    for (auto& v : variants) {
      slots.push_back({v.variant_id, v.segment_index, v.position_index, i});
      manifest_.variants.emplace(v.variant_id, VariantStatus::kPending);
      rows.push_back(std::move(v.ids));
    }
  }
  set_grid(config_.num_segments, mode == AuditMode::kImportance ? config_.num_segments : p);
  if (config_.include_baseline) {
    std::vector<std::vector<TokenId>> originals;
    for (const auto& s : seqs) originals.push_back(s.ids);
    baseline_queries_ = embedder_->embed_tokens(originals);
  }
  save();
  embed_token_queries(rows, slots);
}

void AuditRun::text_lorem_queries() {
  const auto bank = config_.lorem_bank ? load_lorem_bank(config_.resolve(*config_.lorem_bank).string())
                                       : default_lorem_bank();
  const int p = config_.num_positions.value_or(config_.num_segments);
  std::vector<std::string> texts;
  std::vector<QuerySlot> slots;
  for (std::size_t i = 0; i < dataset_.size(); ++i) {
    const auto& item = dataset_.items[i];
    std::vector<TextVariant> variants;
    try {
      variants = make_text_lorem_variants(item.caption, config_.num_segments, p, bank, item.item_id);
    } catch (const ValidationError& e) {
      throw ValidationError("item '" + item.item_id + "': " + e.what());
    }
    for (auto& v : variants) {
      slots.push_back({v.variant_id, v.segment_index, v.position_index, i});
      manifest_.variants.emplace(v.variant_id, VariantStatus::kPending);
      texts.push_back(std::move(v.text));
    }
  }
  set_grid(config_.num_segments, p);
  if (config_.include_baseline) {
    std::vector<std::string> captions;
    for (const auto& item : dataset_.items) captions.push_back(item.caption);
    std::vector<std::vector<TokenId>> originals;
    for (const auto& s : embedder_->tokenize(captions)) originals.push_back(s.ids);
    baseline_queries_ = embedder_->embed_tokens(originals);
  }
  save();
  std::vector<std::vector<TokenId>> rows;
  rows.reserve(texts.size());
  for (auto& seq : embedder_->tokenize(texts)) rows.push_back(std::move(seq.ids));
  embed_token_queries(rows, slots);
}

void AuditRun::image_queries(VariantMode variants) {
  const auto& profile = info_.profile;
  const auto plan =
      derive_image_plan(profile, config_.num_segments, config_.axis, config_.schedule, config_.num_positions);
  const bool importance = variants == VariantMode::kImportance;
  set_grid(plan.num_segments, importance ? plan.num_segments : plan.num_positions());

  // Variant ids are known up front; pixels are generated a chunk at a time.
  for (const auto& item : dataset_.items)
    for (int k = 0; k < plan.num_segments; ++k)
      for (int j = 0; j < plan.num_positions(); ++j)
        if (!importance || j == k)
          manifest_.variants.emplace(make_variant_id(item.item_id, variants, k, j), VariantStatus::kPending);
  save();

  const std::size_t per_item =
      static_cast<std::size_t>(importance ? plan.num_segments : plan.num_segments * plan.num_positions());
  const std::size_t items_per_chunk = std::max<std::size_t>(1, chunk_rows() / per_item);
  if (config_.include_baseline) baseline_queries_.clear();
  for (std::size_t start = 0; start < dataset_.size(); start += items_per_chunk) {
    std::vector<std::string> pngs;
    std::vector<QuerySlot> slots;
    for (std::size_t i = start; i < std::min(dataset_.size(), start + items_per_chunk); ++i) {
      const auto& item = dataset_.items[i];
      const auto canvas = load_canvas(item);
      if (config_.include_baseline) {
        const std::string png = encode_png(canvas);
        auto rec = embedder_->embed_images(std::span<const std::string>(&png, 1));
        baseline_queries_.push_back(std::move(rec[0]));
      }
      auto vs = importance ? make_image_importance_variants(canvas, plan, profile, item.item_id)
                           : make_image_bias_variants(canvas, plan, profile, item.item_id);
      for (auto& v : vs) {
        slots.push_back({v.variant_id, v.segment_index, v.position_index, i});
        pngs.push_back(encode_png(v.canvas));
      }
    }
    embed_png_queries(pngs, slots);
  }
}

AuditResult AuditRun::run() {
  config_.validate();
  info_ = provider_.info();
  info_.validate();

  const bool classify = config_.mode == AuditMode::kClassify;
  dataset_ = parse_manifest(config_.manifest_path(), {.captions = !classify, .labels = classify, .check_images = true});

  out_dir_ = config_.output_path();
  std::filesystem::create_directories(out_dir_);
  manifest_path_ = out_dir_ / "manifest.json";

  const std::string hash = config_.hash();
  if (options_.resume && std::filesystem::exists(manifest_path_)) {
    manifest_ = load_run_manifest(manifest_path_);
    if (manifest_.config_hash != hash)
      throw ValidationError("cannot resume: run manifest was written by a different config (hash " +
                            manifest_.config_hash + ", current " + hash + ")");
    if (manifest_.provider && !(*manifest_.provider == info_))
      throw ValidationError("cannot resume: provider reports a different model contract");
  } else {
    manifest_ = RunManifest{};
    manifest_.started_at = now_utc();
  }
  manifest_.config_hash = hash;
  manifest_.config = config_.to_json();
  manifest_.provider = info_;
  manifest_.status = "running";
  manifest_.error.clear();

  std::filesystem::path cache_root = options_.cache_dir ? *options_.cache_dir
                                     : config_.cache_dir ? config_.resolve(*config_.cache_dir)
                                                         : out_dir_ / "cache";
  cache_.emplace(cache_root);
  embedder_.emplace(provider_, info_, &*cache_,
                    EmbedOptions{config_.batch_size, config_.max_in_flight, options_.interrupt_after_batches});

  const std::string metric_id = metric_id_for(config_);
  try {
    std::vector<std::size_t> all(dataset_.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    std::vector<std::string> ids;
    for (const auto& item : dataset_.items) ids.push_back(item.item_id);

    if (classify) {
      std::set<std::string> label_set;
      for (const auto& item : dataset_.items) label_set.insert(*item.label);
      const std::vector<std::string> labels(label_set.begin(), label_set.end());
      std::vector<std::string> prompts;
      for (const auto& label : labels) {
        std::string prompt = config_.prompt_template;
        for (auto pos = prompt.find("{label}"); pos != std::string::npos; pos = prompt.find("{label}", pos + label.size()))
          prompt.replace(pos, 7, label);
        prompts.push_back(std::move(prompt));
      }
      gallery_ = embed_texts_as_gallery(prompts, labels);
      for (const auto& item : dataset_.items)
        truth_.push_back(static_cast<std::size_t>(
            std::lower_bound(labels.begin(), labels.end(), *item.label) - labels.begin()));
      manifest_.metrics["labels"] = labels;
      save();
      image_queries(config_.classify_variants);
    } else if (config_.modality == Modality::kText) {
      gallery_ = embed_images_chunked(all);
      truth_ = all;
      save();
      if (config_.mode == AuditMode::kBiasLorem)
        text_lorem_queries();
      else
        text_mask_queries(config_.mode);
    } else {
      std::vector<std::string> captions;
      for (const auto& item : dataset_.items) captions.push_back(item.caption);
      gallery_ = embed_texts_as_gallery(captions, ids);
      truth_ = all;
      save();
      image_queries(config_.mode == AuditMode::kImportance ? VariantMode::kImportance : VariantMode::kBiasMask);
    }
  } catch (const RunInterrupted& e) {
    manifest_.status = "interrupted";
    manifest_.error = e.what();
    save();
    throw;
  } catch (const ProviderError& e) {
    manifest_.status = "failed";
    manifest_.error = e.what();
    save();
    throw;
  }

  // ---- scoring ----
  auto score = [&](const std::vector<EmbeddingRecord>& queries) {
    const auto sim = similarity_matrix(queries, gallery_);
    return classify ? top1_accuracy(sim, truth_) : recall_at_k(sim, truth_, config_.recall_k);
  };

  AuditResult result;
  result.metric_id = metric_id;
  result.output_dir = out_dir_;
  AccuracyTable table(grid_n_, grid_p_);
  json cell_json = json::array();
  for (int k = 0; k < grid_n_; ++k) {
    json row = json::array();
    for (int j = 0; j < grid_p_; ++j) {
      const auto& cell = cells_[static_cast<std::size_t>(k) * grid_p_ + j];
      if (cell.empty()) {
        row.push_back(nullptr);
        continue;
      }
      const double acc = score(cell);
      table.set(k, j, acc);
      row.push_back(acc);
    }
    cell_json.push_back(std::move(row));
  }
  for (auto& [id, status] : manifest_.variants)
    if (status == VariantStatus::kEmbedded) status = VariantStatus::kScored;

  manifest_.metrics["metric_id"] = metric_id;
  manifest_.metrics["num_items"] = dataset_.size();
  manifest_.metrics["num_segments"] = grid_n_;
  manifest_.metrics["num_positions"] = grid_p_;
  manifest_.metrics["cells"] = cell_json;
  if (!baseline_queries_.empty()) {
    result.baseline = score(baseline_queries_);
    manifest_.metrics["baseline"] = *result.baseline;
  }

  const bool importance_out = config_.mode == AuditMode::kImportance ||
                              (classify && config_.classify_variants == VariantMode::kImportance);
  const std::string title = info_.profile.model_id + " # " + config_.dataset_manifest + " # " + metric_id;
  if (importance_out) {
    std::vector<double> per_segment;
    for (int k = 0; k < grid_n_; ++k) per_segment.push_back(*table.get(k, k));
    result.importance = make_importance_curve(per_segment, metric_id, config_.interpolation_samples);
    emit_importance_csv(*result.importance, out_dir_ / "importance.csv");
    json doc = {{"metric_id", metric_id},
                {"modality", config_.modality},
                {"num_segments", grid_n_},
                {"config_hash", hash},
                {"importance", *result.importance}};
    if (config_.modality == Modality::kImage) doc["axis"] = config_.axis;
    write_text_file(out_dir_ / "importance.json", doc.dump(2) + "\n");
    emit_svg_lines(importance_plot(*result.importance, title), out_dir_ / "plots" / "importance.svg");
    manifest_.metrics["importance"] = *result.importance;
  } else {
    result.curves = assemble_bias_curves(table, metric_id);
    emit_curves_csv(result.curves, out_dir_ / "curves.csv");
    json doc = {{"metric_id", metric_id},
                {"modality", config_.modality},
                {"mode", to_string(config_.mode)},
                {"num_segments", grid_n_},
                {"num_positions", grid_p_},
                {"config_hash", hash},
                {"curves", result.curves}};
    if (config_.modality == Modality::kImage) doc["axis"] = config_.axis;
    write_text_file(out_dir_ / "curves.json", doc.dump(2) + "\n");
    emit_svg_lines(bias_plot(result.curves, title), out_dir_ / "plots" / "curves.svg");
    manifest_.metrics["curves"] = result.curves;
  }

  manifest_.status = "complete";
  save();
  result.manifest = manifest_;
  return result;
}

}  // namespace

AuditResult run_audit(const ExperimentConfig& config, EmbeddingProvider& provider, const RunOptions& options) {
  AuditRun run(config, provider, options);
  return run.run();
}

}  // namespace posbias
