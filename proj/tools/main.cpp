#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "vaest/dataio.hpp"
#include "vaest/diagnostics.hpp"
#include "vaest/label_space.hpp"
#include "vaest/model.hpp"
#include "vaest/trainer.hpp"

namespace {

std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error(path.string() + ": cannot open");
  return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

std::string hex64(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

nlohmann::json metrics_json(const vaest::EvalMetrics& m) {
  return {{"ccc_v", m.ccc_v}, {"ccc_a", m.ccc_a}, {"ccc_mean", m.ccc_mean}, {"frames", m.frames}};
}

void print_metrics(const char* split, const vaest::EvalMetrics& m) {
  std::printf("%s CCC_v %.6f CCC_a %.6f CCC_mean %.6f (%zu frames)\n", split, m.ccc_v, m.ccc_a,
              m.ccc_mean, m.frames);
}

int run_gen_data(const std::string& config_path, const std::string& out_dir,
                 const CLI::Option* seed_opt, std::uint64_t seed) {
  vaest::SynthConfig cfg;
  if (!config_path.empty()) cfg = vaest::synth_config_from_json(read_text(config_path));
  if (seed_opt->count() > 0) cfg.seed = seed;
  const auto records = vaest::synth_generate(cfg);
  const auto manifest = vaest::save_dataset(out_dir, records);
  std::printf("wrote %zu sequences (%.1f s each) to %s\n", records.size(), cfg.duration_sec,
              manifest.string().c_str());
  return 0;
}

int run_label(double valence, double arousal, const std::vector<double>& centers, double sigma,
              bool sigma_given) {
  vaest::GridConfig grid;
  if (!centers.empty()) {
    if (centers.size() != 3) {
      throw std::invalid_argument("--centers expects exactly three comma-separated values");
    }
    grid.axis_centers = {centers[0], centers[1], centers[2]};
  }
  if (sigma_given) grid.sigma = sigma;
  const auto label = vaest::soft_label({valence, arousal}, grid);
  const auto regions = vaest::grid_regions(grid);
  for (std::size_t i = 0; i < 9; ++i) {
    std::printf("%zu %.17g %s\n", i, label.weights[i], regions[i].name.c_str());
  }
  return 0;
}

int run_grad_check(const std::string& selector, std::size_t seeds, double tol) {
  const auto modules = vaest::expand_gradient_modules(selector);
  bool all_pass = true;
  std::printf("%-10s %6s %9s %13s  %s\n", "module", "seeds", "checked", "max_rel_err", "status");
  for (const auto& report : vaest::run_gradient_suite(modules, seeds, tol)) {
    all_pass = all_pass && report.pass();
    std::printf("%-10s %6zu %9zu %13.3e  %s\n", report.module.c_str(), report.seeds,
                report.checked, report.max_rel_err, report.pass() ? "pass" : "FAIL");
  }
  if (!all_pass) std::cerr << "gradient check failed\n";
  return all_pass ? 0 : 1;
}

int run_train(const std::string& config_path, const std::string& data_path,
              const std::string& out_dir, const CLI::Option* seed_opt, std::uint64_t seed) {
  vaest::TrainConfig cfg;
  if (!config_path.empty()) cfg = vaest::train_config_from_json(read_text(config_path));
  if (seed_opt->count() > 0) cfg.seed = seed;
  const auto dataset = vaest::load_dataset(data_path);
  const auto result = vaest::train(cfg, dataset, out_dir);

  for (const auto& e : result.report.epochs) {
    std::printf("epoch %3zu  total %.6f  ccc_loss %.6f  kl_loss %.6f  (%zu steps)\n", e.epoch,
                e.mean_total, e.mean_ccc_loss, e.mean_kl_loss, e.steps);
  }

  nlohmann::json rep;
  rep["config"] = nlohmann::json::parse(vaest::train_config_to_json(cfg));
  rep["aborted"] = result.aborted;
  rep["data_order_digest"] = hex64(result.data_order_digest);
  rep["steps"] = result.steps.size();
  rep["checkpoint"] = result.checkpoint.string();
  auto& epochs = rep["epochs"] = nlohmann::json::array();
  for (const auto& e : result.report.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"steps", e.steps},
                      {"mean_total", e.mean_total},
                      {"mean_ccc_loss", e.mean_ccc_loss},
                      {"mean_kl_loss", e.mean_kl_loss}});
  }
  if (result.aborted) {
    rep["abort_reason"] = result.abort_reason;
  } else {
    rep["train"] = metrics_json(result.report.train);
    rep["val"] = result.report.val ? metrics_json(*result.report.val) : nlohmann::json();
  }
  {
    std::ofstream os(std::filesystem::path(out_dir) / "report.json");
    os << rep.dump(2) << "\n";
  }
  {
    std::ofstream os(std::filesystem::path(out_dir) / "trace.csv");
    os << "step,epoch,total,ccc_loss,kl_loss\n";
    char line[160];
    for (const auto& s : result.steps) {
      std::snprintf(line, sizeof(line), "%llu,%zu,%.17g,%.17g,%.17g\n",
                    static_cast<unsigned long long>(s.step), s.epoch, s.total, s.ccc_loss,
                    s.kl_loss);
      os << line;
    }
  }

  if (result.aborted) {
    std::cerr << "training aborted: " << result.abort_reason << "\n";
    return 1;
  }
  print_metrics("train", result.report.train);
  if (result.report.val) print_metrics("val", *result.report.val);
  std::printf("checkpoint %s\n", result.checkpoint.string().c_str());
  std::printf("data order %s\n", hex64(result.data_order_digest).c_str());
  return 0;
}

int run_eval(const std::string& checkpoint_path, const std::string& data_path, double window_sec,
             double stride_sec) {
  const auto loaded = vaest::load_checkpoint(checkpoint_path);
  const auto dataset = vaest::load_dataset(data_path);
  const auto metrics = vaest::evaluate(
      loaded.model, std::span<const vaest::SequenceRecord>(dataset), window_sec, stride_sec);
  std::printf("checkpoint epoch %llu step %llu\n",
              static_cast<unsigned long long>(loaded.epoch),
              static_cast<unsigned long long>(loaded.step));
  print_metrics("eval", metrics);
  return 0;
}

int run_ablate(const std::string& config_path, const std::string& data_path,
               const std::string& out_dir, const CLI::Option* seed_opt, std::uint64_t seed) {
  vaest::TrainConfig cfg;
  if (!config_path.empty()) cfg = vaest::train_config_from_json(read_text(config_path));
  if (seed_opt->count() > 0) cfg.seed = seed;
  const auto dataset = vaest::load_dataset(data_path);
  const auto report = vaest::ablate(cfg, dataset, out_dir);
  std::fputs(report.to_markdown().c_str(), stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale valence-arousal estimation over precomputed features"};
  app.require_subcommand(1);
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "override the config seed");

  std::string gen_config, gen_out;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic feature dataset");
  gen->add_option("--config", gen_config, "SynthConfig JSON file")->check(CLI::ExistingFile);
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->fallthrough();

  double valence = 0.0, arousal = 0.0, sigma = 0.0;
  std::vector<double> centers;
  auto* label = app.add_subcommand("label", "print the nine soft region weights of a VA point");
  label->add_option("--valence", valence, "valence in [-1, 1]")->required();
  label->add_option("--arousal", arousal, "arousal in [-1, 1]")->required();
  label->add_option("--centers", centers, "three axis centers, comma separated")->delimiter(',');
  auto* sigma_opt = label->add_option("--sigma", sigma, "kernel width");
  label->fallthrough();

  std::string module = "all";
  std::size_t seeds = 20;
  double tol = 1e-4;
  auto* grad = app.add_subcommand("grad-check", "compare analytic and numeric gradients");
  grad->add_option("--module", module, "all|loss|gru|tcn|attention|gate|heads|semantic|ccc|kl|objective");
  grad->add_option("--seeds", seeds, "random draws per module");
  grad->add_option("--tol", tol, "relative error tolerance");
  grad->fallthrough();

  std::string train_config, train_data, train_out;
  auto* train = app.add_subcommand("train", "train a model on a dataset manifest");
  train->add_option("--config", train_config, "TrainConfig JSON file")->check(CLI::ExistingFile);
  train->add_option("--data", train_data, "dataset manifest")->required()->check(CLI::ExistingFile);
  train->add_option("--out", train_out, "output directory")->required();
  train->fallthrough();

  std::string eval_checkpoint, eval_data;
  double eval_window = 10.0, eval_stride = 3.0;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset manifest");
  eval->add_option("--checkpoint", eval_checkpoint, "checkpoint file")
      ->required()
      ->check(CLI::ExistingFile);
  eval->add_option("--data", eval_data, "dataset manifest")->required()->check(CLI::ExistingFile);
  eval->add_option("--window-sec", eval_window, "window length");
  eval->add_option("--stride-sec", eval_stride, "window stride");
  eval->fallthrough();

  std::string abl_config, abl_data, abl_out;
  auto* abl = app.add_subcommand("ablate", "run the temporal/fusion and grid ablation table");
  abl->add_option("--config", abl_config, "base TrainConfig JSON file")->check(CLI::ExistingFile);
  abl->add_option("--data", abl_data, "dataset manifest")->required()->check(CLI::ExistingFile);
  abl->add_option("--out", abl_out, "output directory")->required();
  abl->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return run_gen_data(gen_config, gen_out, seed_opt, seed);
    if (label->parsed()) {
      return run_label(valence, arousal, centers, sigma, sigma_opt->count() > 0);
    }
    if (grad->parsed()) return run_grad_check(module, seeds, tol);
    if (train->parsed()) return run_train(train_config, train_data, train_out, seed_opt, seed);
    if (eval->parsed()) return run_eval(eval_checkpoint, eval_data, eval_window, eval_stride);
    if (abl->parsed()) return run_ablate(abl_config, abl_data, abl_out, seed_opt, seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
