// posbias: command-line front end for positional-bias audits.
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>

#include "CLI11.hpp"
#include "posbias/backend.hpp"
#include "posbias/errors.hpp"
#include "posbias/orchestrator.hpp"
#include "posbias/report.hpp"
#include "posbias/textprobe.hpp"

using namespace posbias;

namespace {

struct Globals {
  bool mock = false;
  bool json_out = false;
};

std::unique_ptr<EmbeddingProvider> make_provider(const Globals& g, bool config_mock,
                                                 const std::optional<std::string>& url) {
  if (g.mock || config_mock) return std::make_unique<MockProvider>();
  if (!url || url->empty()) throw ValidationError("no provider: pass --provider URL or --mock-provider");
  return std::make_unique<HttpProvider>(*url);
}

std::optional<std::filesystem::path> env_cache_dir() {
  if (const char* v = std::getenv("POSBIAS_CACHE_DIR"); v && *v) return std::filesystem::path(v);
  return std::nullopt;
}

void print_curves(const std::vector<BiasCurve>& curves, const std::string& metric_id) {
  std::cout << metric_id << "\n";
  for (const auto& c : curves) {
    std::cout << "segment " << c.segment_index << ":";
    for (double a : c.accuracies) std::cout << ' ' << a;
    std::cout << "  cv=" << c.cv << (c.beginning_biased ? "  (beginning-biased)" : "") << "\n";
  }
}

int cmd_info(const Globals& g, const std::string& url) {
  auto provider = make_provider(g, false, url);
  const auto info = provider->info();
  info.validate();
  if (g.json_out) {
    std::cout << json(info).dump() << "\n";
  } else {
    std::cout << json(info).dump(2) << "\n";
  }
  return 0;
}

int cmd_audit(const Globals& g, const std::string& config_path, bool resume,
              std::optional<AuditMode> forced_mode) {
  auto config = load_config(config_path);
  if (forced_mode) {
    config.mode = *forced_mode;
    config.validate();
  }
  auto provider = make_provider(g, config.mock, config.provider_url);
  RunOptions opts;
  opts.resume = resume;
  opts.cache_dir = env_cache_dir();
  const auto result = run_audit(config, *provider, opts);

  if (g.json_out) {
    json out = {{"status", result.manifest.status},
                {"output_dir", result.output_dir.string()},
                {"config_hash", result.manifest.config_hash},
                {"metric_id", result.metric_id},
                {"embed_stats", json(result.manifest)["embed_stats"]}};
    if (result.importance) out["importance"] = *result.importance;
    else out["curves"] = result.curves;
    if (result.baseline) out["baseline"] = *result.baseline;
    std::cout << out.dump() << "\n";
    return 0;
  }
  if (result.importance) {
    std::cout << result.metric_id << "\nper-segment:";
    for (double a : result.importance->per_segment) std::cout << ' ' << a;
    std::cout << "\n";
  } else {
    print_curves(result.curves, result.metric_id);
  }
  if (result.baseline) std::cout << "baseline: " << *result.baseline << "\n";
  const auto& s = result.manifest.stats;
  std::cout << "provider calls " << s.provider_calls << ", cache hits " << s.cache_hits << "\n"
            << "outputs in " << result.output_dir.string() << "\n";
  return 0;
}

int cmd_shuffle(const Globals& g, const std::string& in_path, const std::string& out_path,
                std::uint64_t seed) {
  std::ifstream in(in_path);
  if (!in) throw ValidationError("cannot read '" + in_path + "'");
  std::string out;
  std::string line;
  std::uint64_t index = 0;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    const std::uint64_t row = index++;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    // Accept JSONL rows ({"id"|"item_id", "caption"}) or one plain caption per line.
    std::string item_id = std::to_string(row);
    std::string caption = line;
    if (line.front() == '{') {
      json j;
      try {
        j = json::parse(line);
        caption = j.at("caption").get<std::string>();
        if (j.contains("item_id")) item_id = j["item_id"].get<std::string>();
        else if (j.contains("id")) item_id = j["id"].get<std::string>();
      } catch (const json::exception& e) {
        throw ValidationError("line " + std::to_string(row + 1) + ": " + e.what());
      }
    }
    out += json{{"item_id", item_id}, {"caption", shuffle_caption(caption, seed + row)}}.dump() + "\n";
    ++rows;
  }
  write_text_file(out_path, out);
  if (g.json_out)
    std::cout << json{{"rows", rows}, {"out", out_path}, {"seed", seed}}.dump() << "\n";
  else
    std::cout << "shuffled " << rows << " captions into " << out_path << "\n";
  return 0;
}

int cmd_report(const Globals& g, const std::filesystem::path& run_dir) {
  const auto manifest = load_run_manifest(run_dir / "manifest.json");
  if (manifest.status != "complete")
    throw ValidationError("run in " + run_dir.string() + " is " + manifest.status + ", not complete");
  const std::string metric_id = manifest.metrics.value("metric_id", std::string{});
  json out = {{"run", run_dir.string()}, {"metric_id", metric_id}, {"config_hash", manifest.config_hash}};
  const std::string title = (manifest.provider ? manifest.provider->profile.model_id : std::string("model")) +
                            " # " + manifest.config.value("dataset_manifest", std::string{}) + " # " + metric_id;

  if (std::filesystem::exists(run_dir / "curves.csv")) {
    auto curves = read_curves_csv(run_dir / "curves.csv");
    for (auto& c : curves) c.metric_id = metric_id;
    emit_svg_lines(bias_plot(curves, title), run_dir / "plots" / "curves.svg");
    out["curves"] = curves;
    if (!g.json_out) print_curves(curves, metric_id);
  } else if (std::filesystem::exists(run_dir / "importance.json")) {
    const auto doc = json::parse(read_text_file(run_dir / "importance.json"));
    const auto curve = doc.at("importance").get<ImportanceCurve>();
    emit_svg_lines(importance_plot(curve, title), run_dir / "plots" / "importance.svg");
    out["importance"] = curve;
    if (!g.json_out) {
      std::cout << metric_id << "\nper-segment:";
      for (double a : curve.per_segment) std::cout << ' ' << a;
      std::cout << "\n";
    }
  } else {
    throw ValidationError("no result tables in " + run_dir.string());
  }
  if (g.json_out) std::cout << out.dump() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Positional-bias audits for dual-encoder models", "posbias"};
  app.require_subcommand(1);
  Globals g;
  app.add_flag("--mock-provider", g.mock, "Use the deterministic in-process mock provider");
  app.add_flag("--json", g.json_out, "Print machine-readable JSON on stdout");

  std::string provider_url, config_path, in_path, out_path, run_dir;
  bool resume = false;
  std::uint64_t seed = 0;

  auto* info = app.add_subcommand("info", "Show the provider's model contract");
  info->add_option("--provider", provider_url, "Provider base URL");

  auto* audit = app.add_subcommand("audit", "Run the audit described by a config file");
  audit->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  audit->add_flag("--resume", resume, "Continue an interrupted run from its manifest");

  auto* importance = app.add_subcommand("importance", "Run a context-importance audit");
  importance->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  importance->add_flag("--resume", resume, "Continue an interrupted run from its manifest");

  auto* classify = app.add_subcommand("classify", "Run a zero-shot classification audit");
  classify->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  classify->add_flag("--resume", resume, "Continue an interrupted run from its manifest");

  auto* shuffle = app.add_subcommand("shuffle-captions", "Reorder caption sentences deterministically");
  shuffle->add_option("--in", in_path, "Captions: JSONL rows or one caption per line")->required();
  shuffle->add_option("--out", out_path, "Output JSONL")->required();
  shuffle->add_option("--seed", seed, "Base seed (row i uses seed + i)")->required();

  auto* report = app.add_subcommand("report", "Summarize a finished run and redraw its plots");
  report->add_option("--run", run_dir, "Run output directory")->required();

  // Global flags are accepted after the subcommand too.
  for (auto* sub : {info, audit, importance, classify, shuffle, report}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (*info) return cmd_info(g, provider_url);
    if (*audit) return cmd_audit(g, config_path, resume, std::nullopt);
    if (*importance) return cmd_audit(g, config_path, resume, AuditMode::kImportance);
    if (*classify) return cmd_audit(g, config_path, resume, AuditMode::kClassify);
    if (*shuffle) return cmd_shuffle(g, in_path, out_path, seed);
    if (*report) return cmd_report(g, run_dir);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ProviderError& e) {
    std::cerr << "provider error: " << e.what() << "\n";
    return 2;
  } catch (const RunInterrupted& e) {
    std::cerr << "interrupted: " << e.what() << " (rerun with --resume)\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
