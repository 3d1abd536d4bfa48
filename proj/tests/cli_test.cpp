#include "doctest.h"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string output;
};

// Runs the installed CLI with stdout+stderr captured through a temp file.
RunResult run_cli(const std::string& args) {
  static int counter = 0;
  const fs::path out = fs::temp_directory_path() / ("vaest_cli_out_" + std::to_string(counter++));
  const std::string cmd = std::string(VAEST_CLI_PATH) + " " + args + " > " + out.string() + " 2>&1";
  const int raw = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  std::ifstream is(out);
  r.output = std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  fs::remove(out);
  return r;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  return p;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream is(text);
  for (std::string line; std::getline(is, line);) {
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream os(p);
  os << text;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(is.good());
  return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("cli: label prints nine weights that sum to one") {
  const auto r = run_cli("label --valence 0.25 --arousal -0.4");
  REQUIRE(r.exit_code == 0);
  const auto lines = lines_of(r.output);
  REQUIRE(lines.size() == 9);
  double sum = 0.0;
  for (std::size_t i = 0; i < 9; ++i) {
    std::size_t idx = 99;
    double w = -1.0;
    char name[128] = {0};
    REQUIRE(std::sscanf(lines[i].c_str(), "%zu %lf %127[^\n]", &idx, &w, name) == 3);
    CHECK(idx == i);
    CHECK(w > 0.0);
    sum += w;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("cli: label honors grid overrides and rejects bad centers") {
  const auto narrow = run_cli("label --valence 1 --arousal 1 --centers=-0.66,0,0.66 --sigma 0.45");
  REQUIRE(narrow.exit_code == 0);
  const auto lines = lines_of(narrow.output);
  REQUIRE(lines.size() == 9);
  // Region 8 is the high-valence high-arousal corner; at (1,1) it dominates.
  double w8 = -1.0;
  std::size_t idx = 0;
  std::sscanf(lines[8].c_str(), "%zu %lf", &idx, &w8);
  CHECK(w8 > 0.5);

  const auto bad = run_cli("label --valence 0 --arousal 0 --centers=-1,1");
  CHECK(bad.exit_code != 0);
  CHECK(bad.output.find("three") != std::string::npos);

  const auto out_of_range = run_cli("label --valence 1.5 --arousal 0");
  CHECK(out_of_range.exit_code != 0);
}

TEST_CASE("cli: grad-check runs a reduced pass and reports per module") {
  const auto r = run_cli("grad-check --module loss --seeds 2");
  REQUIRE(r.exit_code == 0);
  CHECK(r.output.find("ccc") != std::string::npos);
  CHECK(r.output.find("kl") != std::string::npos);
  CHECK(r.output.find("objective") != std::string::npos);
  CHECK(r.output.find("pass") != std::string::npos);
  CHECK(r.output.find("FAIL") == std::string::npos);

  const auto bad = run_cli("grad-check --module lstm");
  CHECK(bad.exit_code != 0);
  CHECK(bad.output.find("lstm") != std::string::npos);
}

TEST_CASE("cli: gen-data, train, eval, and ablate round trip") {
  const fs::path ds = fresh_dir("vaest_cli_ds");
  const fs::path run = fresh_dir("vaest_cli_run");
  const fs::path abl = fresh_dir("vaest_cli_abl");
  const fs::path cfg_dir = fs::temp_directory_path();

  write_file(cfg_dir / "vaest_cli_synth.json",
             R"({"sequences": 2, "duration_sec": 16.0, "visual_dim": 20, "audio_dim": 28,
                 "visual_rate": 6.0, "audio_rate": 10.0, "seed": 11})");
  const auto gen = run_cli("gen-data --config " + (cfg_dir / "vaest_cli_synth.json").string() +
                           " --out " + ds.string());
  REQUIRE(gen.exit_code == 0);
  CHECK(gen.output.find("wrote 2 sequences") != std::string::npos);
  REQUIRE(fs::exists(ds / "manifest.json"));
  REQUIRE(fs::exists(ds / "seq0_visual.vafs"));

  write_file(cfg_dir / "vaest_cli_train.json",
             R"({"batch_size": 3, "epochs": 2, "head_lr": 0.003, "hidden": 16, "heads": 2,
                 "val_fraction": 0.5, "seed": 5})");
  const auto tr = run_cli("train --config " + (cfg_dir / "vaest_cli_train.json").string() +
                          " --data " + (ds / "manifest.json").string() + " --out " + run.string());
  REQUIRE(tr.exit_code == 0);
  CHECK(tr.output.find("epoch   0") != std::string::npos);
  CHECK(tr.output.find("train CCC_v") != std::string::npos);
  CHECK(tr.output.find("val CCC_v") != std::string::npos);
  REQUIRE(fs::exists(run / "checkpoint.vack"));
  REQUIRE(fs::exists(run / "report.json"));
  REQUIRE(fs::exists(run / "trace.csv"));

  std::ifstream rep_in(run / "report.json");
  const auto rep = nlohmann::json::parse(rep_in);
  CHECK(rep["aborted"].get<bool>() == false);
  CHECK(rep["epochs"].size() == 2);
  CHECK(rep["config"]["batch_size"].get<int>() == 3);
  CHECK(rep["train"]["frames"].get<int>() > 0);

  const auto ev = run_cli("eval --checkpoint " + (run / "checkpoint.vack").string() + " --data " +
                          (ds / "manifest.json").string());
  REQUIRE(ev.exit_code == 0);
  CHECK(ev.output.find("checkpoint epoch 2 step 2") != std::string::npos);
  CHECK(ev.output.find("eval CCC_v") != std::string::npos);

  write_file(cfg_dir / "vaest_cli_abl.json",
             R"({"batch_size": 2, "epochs": 1, "head_lr": 0.003, "hidden": 8, "heads": 2,
                 "val_fraction": 0.5, "seed": 5})");
  const auto ab = run_cli("ablate --config " + (cfg_dir / "vaest_cli_abl.json").string() +
                          " --data " + (ds / "manifest.json").string() + " --out " + abl.string());
  REQUIRE(ab.exit_code == 0);
  CHECK(ab.output.find("| gru | hierarchical |") != std::string::npos);
  CHECK(ab.output.find("| tcn | attention_only |") != std::string::npos);
  CHECK(ab.output.find("Shared data-order digest:") != std::string::npos);
  REQUIRE(fs::exists(abl / "ablation.md"));
  REQUIRE(fs::exists(abl / "ablation.csv"));
}

TEST_CASE("cli: seed override reaches the config") {
  const fs::path ds = fresh_dir("vaest_cli_seed_ds");
  write_file(fs::temp_directory_path() / "vaest_cli_seed_synth.json",
             R"({"sequences": 1, "duration_sec": 12.0, "visual_dim": 8, "audio_dim": 8,
                 "seed": 11})");
  const std::string cfg = (fs::temp_directory_path() / "vaest_cli_seed_synth.json").string();
  REQUIRE(run_cli("gen-data --config " + cfg + " --out " + ds.string()).exit_code == 0);
  const auto base = file_bytes(ds / "seq0_visual.vafs");

  // Same config, overridden seed: the features must differ.
  const fs::path ds2 = fresh_dir("vaest_cli_seed_ds2");
  REQUIRE(run_cli("gen-data --seed 99 --config " + cfg + " --out " + ds2.string()).exit_code == 0);
  const auto alt = file_bytes(ds2 / "seq0_visual.vafs");
  CHECK(base != alt);

  // Override equal to the config seed reproduces it bit for bit.
  const fs::path ds3 = fresh_dir("vaest_cli_seed_ds3");
  REQUIRE(run_cli("gen-data --config " + cfg + " --seed 11 --out " + ds3.string()).exit_code == 0);
  CHECK(file_bytes(ds3 / "seq0_visual.vafs") == base);
}

TEST_CASE("cli: rejections exit nonzero with a diagnostic") {
  const auto no_sub = run_cli("");
  CHECK(no_sub.exit_code != 0);

  const auto missing_data = run_cli("train --data /nonexistent/manifest.json --out /tmp/x");
  CHECK(missing_data.exit_code != 0);
  CHECK(missing_data.output.find("nonexistent") != std::string::npos);

  const fs::path bad_cfg = fs::temp_directory_path() / "vaest_cli_bad.json";
  write_file(bad_cfg, R"({"batch_sizes": 4})");
  const fs::path ds = fresh_dir("vaest_cli_badcfg_ds");
  write_file(fs::temp_directory_path() / "vaest_cli_badcfg_synth.json",
             R"({"sequences": 1, "duration_sec": 12.0, "visual_dim": 8, "audio_dim": 8})");
  REQUIRE(run_cli("gen-data --config " +
                  (fs::temp_directory_path() / "vaest_cli_badcfg_synth.json").string() + " --out " +
                  ds.string())
              .exit_code == 0);
  const auto bad = run_cli("train --config " + bad_cfg.string() + " --data " +
                           (ds / "manifest.json").string() + " --out /tmp/x");
  CHECK(bad.exit_code != 0);
  CHECK(bad.output.find("batch_sizes") != std::string::npos);

  const auto bad_ckpt = run_cli("eval --checkpoint " + (ds / "manifest.json").string() +
                                " --data " + (ds / "manifest.json").string());
  CHECK(bad_ckpt.exit_code != 0);
}
