// Drives the built CLI binary as a subprocess.
#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <cstdlib>

#include "doctest.h"
#include "posbias/core.hpp"
#include "posbias/report.hpp"
#include "posbias/synthetic.hpp"
#include "posbias/textprobe.hpp"
#include "support.hpp"

using namespace posbias;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run cli(const std::string& args, const std::string& env = {}) {
  const std::string cmd = env + " '" POSBIAS_CLI_PATH "' " + args + " 2>/dev/null";
  Run r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST_CASE("info prints the provider contract") {
  const auto r = cli("--mock-provider info --json");
  CHECK(r.code == 0);
  const auto j = json::parse(r.out);
  CHECK(j["model_id"] == "posbias-mock");
  CHECK(json::parse(cli("info --mock-provider --json").out) == j);
}

TEST_CASE("exit codes") {
  CHECK(cli("--bogus").code == 1);
  CHECK(cli("").code == 1);
  CHECK(cli("audit").code == 1);
  CHECK(cli("audit --config /nonexistent.json").code == 1);
  // nothing listens on port 9 of localhost: provider failure
  CHECK(cli("info --provider http://127.0.0.1:9").code == 2);
  CHECK(cli("report --run /nonexistent").code == 1);
}

TEST_CASE("audit end to end through the CLI") {
  TempDir dir("cli");
  write_synthetic_dataset(dir.path / "data", {.num_items = 6, .seed = 2});
  write_text_file(dir / "bad.json", R"({"dataset_manifest":"data/manifest.jsonl","mock":true,"output_dir":"o","num_segments":1})");
  CHECK(cli("audit --config " + q(dir / "bad.json")).code == 1);

  write_text_file(dir / "cfg.json", R"({"dataset_manifest":"data/manifest.jsonl","mock":true,"output_dir":"run","num_segments":3})");
  const auto first = cli("--json audit --config " + q(dir / "cfg.json"));
  REQUIRE(first.code == 0);
  const auto j1 = json::parse(first.out);
  CHECK(j1["status"] == "complete");
  CHECK(j1["curves"].size() == 3);
  CHECK(j1["embed_stats"]["provider_calls"].get<int>() > 0);
  const auto csv = read_text_file(dir / "run/curves.csv");

  const auto second = cli("--json audit --config " + q(dir / "cfg.json"));
  REQUIRE(second.code == 0);
  CHECK(json::parse(second.out)["embed_stats"]["provider_calls"] == 0);
  CHECK(read_text_file(dir / "run/curves.csv") == csv);

  const auto rep = cli("report --json --run " + q(dir / "run"));
  CHECK(rep.code == 0);
  CHECK(json::parse(rep.out)["config_hash"] == j1["config_hash"]);
  CHECK(cli("report --run " + q(dir / "run")).out.find("segment 2:") != std::string::npos);

  // POSBIAS_CACHE_DIR moves the cache; the new location starts cold.
  const auto cold = cli("--json audit --config " + q(dir / "cfg.json"), "POSBIAS_CACHE_DIR=" + q(dir / "elsewhere"));
  REQUIRE(cold.code == 0);
  CHECK(json::parse(cold.out)["embed_stats"]["provider_calls"].get<int>() > 0);
  CHECK(std::filesystem::exists(dir / "elsewhere"));
}

TEST_CASE("importance subcommand") {
  TempDir dir("cli-imp");
  write_synthetic_dataset(dir.path / "data", {.num_items = 4, .seed = 5});
  write_text_file(dir / "cfg.json", R"({"dataset_manifest":"data/manifest.jsonl","mock":true,"output_dir":"run","num_segments":3})");
  const auto r = cli("importance --json --config " + q(dir / "cfg.json"));
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["importance"]["per_segment"].size() == 3);
  CHECK(std::filesystem::exists(dir / "run/importance.csv"));
}

TEST_CASE("shuffle-captions is reproducible") {
  TempDir dir("cli-shuf");
  write_text_file(dir / "in.jsonl",
                  R"({"id":"a","caption":"One. Two. Three."})" "\n" R"({"item_id":"b","caption":"Red? Blue! Green."})" "\n");
  REQUIRE(cli("shuffle-captions --in " + q(dir / "in.jsonl") + " --out " + q(dir / "x.jsonl") + " --seed 7").code == 0);
  REQUIRE(cli("shuffle-captions --in " + q(dir / "in.jsonl") + " --out " + q(dir / "y.jsonl") + " --seed 7").code == 0);
  const auto x = read_text_file(dir / "x.jsonl");
  CHECK(x == read_text_file(dir / "y.jsonl"));
  const auto first_row = json::parse(x.substr(0, x.find('\n')));
  CHECK(first_row["item_id"] == "a");
  CHECK(first_row["caption"] == shuffle_caption("One. Two. Three.", 7));

  write_text_file(dir / "plain.txt", "Alpha. Beta.\nGamma. Delta. Epsilon.\n");
  REQUIRE(cli("shuffle-captions --in " + q(dir / "plain.txt") + " --out " + q(dir / "p.jsonl") + " --seed 0").code == 0);
  const auto p = read_text_file(dir / "p.jsonl");
  const auto second = json::parse(p.substr(p.find('\n') + 1, p.rfind('\n') - p.find('\n') - 1));
  CHECK(second["caption"] == shuffle_caption("Gamma. Delta. Epsilon.", 1));
  CHECK(cli("shuffle-captions --in " + q(dir / "missing") + " --out " + q(dir / "z") + " --seed 1").code == 1);
}
