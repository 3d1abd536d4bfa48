#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "doctest.h"
#include "vaest/trainer.hpp"

using namespace vaest;

namespace {

std::filesystem::path test_dir(const char* leaf) {
  auto dir = std::filesystem::temp_directory_path() / "vaest_trainer_test" / leaf;
  std::filesystem::create_directories(dir);
  return dir;
}

std::vector<SequenceRecord> tiny_dataset(std::size_t sequences, double duration,
                                         std::uint64_t seed = 5, double noise = 0.05) {
  SynthConfig cfg;
  cfg.sequences = sequences;
  cfg.duration_sec = duration;
  cfg.visual_dim = 12;
  cfg.audio_dim = 10;
  cfg.feature_noise = noise;
  cfg.seed = seed;
  return synth_generate(cfg);
}

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.epochs = 2;
  cfg.hidden = 8;
  cfg.heads = 2;
  cfg.head_lr = 1e-3;
  cfg.val_fraction = 0.0;
  cfg.seed = 7;
  return cfg;
}

}  // namespace

TEST_CASE("split_dataset proportions") {
  auto data = tiny_dataset(5, 13.0);
  auto s1 = split_dataset(data, 0.2);
  CHECK(s1.train.size() == 4);
  CHECK(s1.val.size() == 1);
  CHECK(s1.val[0] == &data[4]);

  auto s2 = split_dataset(data, 0.0);
  CHECK(s2.train.size() == 5);
  CHECK(s2.val.empty());

  // A tiny positive fraction still reserves one sequence.
  auto s3 = split_dataset(data, 0.01);
  CHECK(s3.val.size() == 1);

  CHECK_THROWS_AS(split_dataset(data, 1.0), std::invalid_argument);
}

TEST_CASE("train config json round trip") {
  TrainConfig cfg;
  cfg.batch_size = 9;
  cfg.epochs = 3;
  cfg.head_lr = 5e-3;
  cfg.lambda = 0.7;
  cfg.temporal = TemporalType::tcn;
  cfg.fusion = FusionMode::gated_only;
  cfg.hidden = 32;
  cfg.heads = 8;
  cfg.grid.axis_centers = {-1.0, 0.0, 1.0};
  cfg.grid.sigma = 0.6;
  cfg.window_sec = 8.0;
  cfg.stride_sec = 2.0;
  cfg.val_fraction = 0.25;
  cfg.seed = 99;
  auto back = train_config_from_json(train_config_to_json(cfg));
  CHECK(back.batch_size == 9);
  CHECK(back.epochs == 3);
  CHECK(back.head_lr == 5e-3);
  CHECK(back.lambda == 0.7);
  CHECK(back.temporal == TemporalType::tcn);
  CHECK(back.fusion == FusionMode::gated_only);
  CHECK(back.hidden == 32);
  CHECK(back.heads == 8);
  CHECK(back.grid.axis_centers[0] == -1.0);
  CHECK(back.grid.sigma == 0.6);
  CHECK(back.window_sec == 8.0);
  CHECK(back.val_fraction == 0.25);
  CHECK(back.seed == 99);
}

TEST_CASE("train config json rejects bad input") {
  CHECK_THROWS_AS(train_config_from_json("{\"batch_sizes\": 4}"), std::invalid_argument);
  CHECK_THROWS_AS(train_config_from_json("{\"grid\": {\"sigmas\": 0.4}}"),
                  std::invalid_argument);
  CHECK_THROWS_AS(train_config_from_json("{\"temporal\": \"lstm\"}"), std::invalid_argument);
  CHECK_THROWS_AS(train_config_from_json("[1,2]"), std::invalid_argument);
  CHECK_THROWS_AS(train_config_from_json("not json"), std::invalid_argument);
  CHECK_THROWS_AS(train_config_from_json("{\"epochs\": 0}"), std::invalid_argument);
  // Defaults survive an empty object.
  auto cfg = train_config_from_json("{}");
  CHECK(cfg.batch_size == 16);
  CHECK(cfg.epochs == 15);
  CHECK(cfg.lambda == 0.2);
}

TEST_CASE("synth config json round trip and rejection") {
  SynthConfig cfg;
  cfg.sequences = 11;
  cfg.duration_sec = 17.5;
  cfg.visual_dim = 24;
  cfg.signal_scale = 0.0;
  cfg.seed = 3;
  auto back = synth_config_from_json(synth_config_to_json(cfg));
  CHECK(back.sequences == 11);
  CHECK(back.duration_sec == 17.5);
  CHECK(back.visual_dim == 24);
  CHECK(back.signal_scale == 0.0);
  CHECK(back.seed == 3);
  CHECK_THROWS_AS(synth_config_from_json("{\"sequence\": 2}"), std::invalid_argument);
  CHECK_THROWS_AS(synth_config_from_json("{\"visual_rate\": 0}"), std::invalid_argument);
}

TEST_CASE("training is deterministic given the seed") {
  auto data = tiny_dataset(2, 16.0);
  auto cfg = tiny_config();
  auto r1 = train(cfg, data, test_dir("det1"));
  auto r2 = train(cfg, data, test_dir("det2"));
  CHECK_FALSE(r1.aborted);
  REQUIRE(r1.steps.size() == r2.steps.size());
  for (std::size_t i = 0; i < r1.steps.size(); ++i) {
    CHECK(r1.steps[i].total == r2.steps[i].total);
    CHECK(r1.steps[i].ccc_loss == r2.steps[i].ccc_loss);
    CHECK(r1.steps[i].kl_loss == r2.steps[i].kl_loss);
  }
  CHECK(r1.data_order_digest == r2.data_order_digest);
  CHECK(r1.report.train.ccc_v == r2.report.train.ccc_v);
  CHECK(r1.report.train.ccc_a == r2.report.train.ccc_a);

  auto cfg3 = cfg;
  cfg3.seed = 8;
  auto r3 = train(cfg3, data, test_dir("det3"));
  CHECK(r3.data_order_digest != r1.data_order_digest);
}

TEST_CASE("the data order depends on the seed, not the model settings") {
  auto data = tiny_dataset(2, 16.0);
  auto cfg = tiny_config();
  auto a = train(cfg, data, test_dir("order_a"));
  auto cfg_b = cfg;
  cfg_b.fusion = FusionMode::gated_only;
  cfg_b.head_lr = 5e-4;
  cfg_b.grid.sigma = 0.6;
  auto b = train(cfg_b, data, test_dir("order_b"));
  CHECK(a.data_order_digest == b.data_order_digest);
}

TEST_CASE("lambda only adds the KL path") {
  auto data = tiny_dataset(2, 16.0);
  auto cfg = tiny_config();
  cfg.epochs = 1;
  cfg.lambda = 0.0;
  auto r0 = train(cfg, data, test_dir("lam0"));
  cfg.lambda = 0.2;
  auto r2 = train(cfg, data, test_dir("lam2"));
  REQUIRE(!r0.steps.empty());
  // Identical initialization and data order, so the first CCC loss matches.
  CHECK(r0.steps[0].ccc_loss == r2.steps[0].ccc_loss);
  CHECK(r0.steps[0].total == r0.steps[0].ccc_loss);
  CHECK(r2.steps[0].total > r2.steps[0].ccc_loss);
}

TEST_CASE("every logged step decomposes exactly") {
  auto data = tiny_dataset(2, 16.0);
  auto cfg = tiny_config();
  cfg.lambda = 0.2;
  auto res = train(cfg, data, test_dir("decomp"));
  REQUIRE(!res.steps.empty());
  for (const auto& s : res.steps) {
    CHECK(std::fabs(s.total - (s.ccc_loss + 0.2 * s.kl_loss)) <= 1e-12);
    CHECK(s.kl_loss >= 0.0);
  }
  for (const auto& e : res.report.epochs) {
    CHECK(e.steps > 0);
    CHECK(std::isfinite(e.mean_total));
  }
}

TEST_CASE("training reduces the loss on a small dataset") {
  auto data = tiny_dataset(1, 22.0, 9, 0.0);
  auto cfg = tiny_config();
  cfg.epochs = 12;
  cfg.head_lr = 3e-3;
  auto res = train(cfg, data, test_dir("learn"));
  REQUIRE(res.report.epochs.size() == 12);
  CHECK(res.report.epochs.back().mean_total < res.report.epochs.front().mean_total);
  CHECK(res.report.train.ccc_mean > 0.0);
}

TEST_CASE("checkpoint reload reproduces the evaluation bitwise") {
  auto data = tiny_dataset(3, 13.0);
  auto cfg = tiny_config();
  cfg.val_fraction = 0.34;  // 1 of 3 sequences validates
  cfg.batch_size = 2;
  auto res = train(cfg, data, test_dir("ckpt"));
  REQUIRE_FALSE(res.aborted);
  REQUIRE(res.report.val.has_value());
  auto loaded = load_checkpoint(res.checkpoint);
  CHECK(loaded.epoch == cfg.epochs);
  CHECK(loaded.step == res.steps.size());
  auto split = split_dataset(data, cfg.val_fraction);
  auto val = evaluate(loaded.model, std::span<const SequenceRecord* const>(split.val),
                      cfg.window_sec, cfg.stride_sec);
  CHECK(val.ccc_v == res.report.val->ccc_v);
  CHECK(val.ccc_a == res.report.val->ccc_a);
  CHECK(val.ccc_mean == res.report.val->ccc_mean);
  CHECK(val.frames == res.report.val->frames);
}

TEST_CASE("evaluate invariants") {
  auto data = tiny_dataset(2, 13.0);
  Rng rng(4);
  ModelConfig mc;
  mc.visual_dim = 12;
  mc.audio_dim = 10;
  mc.hidden = 8;
  mc.heads = 2;
  auto model = Model::init(rng, mc);
  auto metrics = evaluate(model, std::span<const SequenceRecord>(data));
  CHECK(metrics.ccc_mean == (metrics.ccc_v + metrics.ccc_a) / 2.0);
  CHECK(metrics.frames > 0);

  // A zeroed output layer predicts a constant, which scores zero CCC.
  for (auto& v : model.head.w2->mut_data()) v = 0.0;
  for (auto& v : model.head.b2->mut_data()) v = 0.0;
  auto zero = evaluate(model, std::span<const SequenceRecord>(data));
  CHECK(zero.ccc_v == 0.0);
  CHECK(zero.ccc_a == 0.0);

  CHECK_THROWS_AS(evaluate(model, std::span<const SequenceRecord>()), std::invalid_argument);
}

TEST_CASE("train validates its inputs") {
  auto data = tiny_dataset(1, 13.0);
  auto cfg = tiny_config();
  cfg.batch_size = 64;  // far more than the two available windows
  CHECK_THROWS_AS(train(cfg, data, test_dir("few")), std::invalid_argument);

  cfg = tiny_config();
  CHECK_THROWS_AS(train(cfg, std::span<const SequenceRecord>(), test_dir("empty")),
                  std::invalid_argument);

  cfg = tiny_config();
  cfg.semantic = SemanticMode::prototype;
  CHECK_THROWS_AS(train(cfg, data, test_dir("proto")), std::invalid_argument);
}

TEST_CASE("poisoned features abort and keep the previous checkpoint") {
  auto data = tiny_dataset(1, 16.0);
  // First epoch trains clean; the NaN then lands mid-stream.
  auto clean = data;
  auto cfg = tiny_config();
  cfg.batch_size = 3;
  cfg.epochs = 1;
  const auto dir = test_dir("abort");
  auto first = train(cfg, clean, dir);
  REQUIRE_FALSE(first.aborted);
  const auto good_bytes = std::filesystem::file_size(first.checkpoint);

  // Frame 0 is sampled by every window that covers it, so the poison is seen.
  for (std::size_t c = 0; c < data[0].visual.dim; ++c) {
    data[0].visual.data[c] = std::numeric_limits<float>::quiet_NaN();
  }
  cfg.epochs = 3;
  auto res = train(cfg, data, dir);
  CHECK(res.aborted);
  CHECK_FALSE(res.abort_reason.empty());
  CHECK(res.checkpoint.empty());  // aborted before its own first epoch finished
  CHECK(std::filesystem::file_size(dir / "checkpoint.vack") == good_bytes);
}

TEST_CASE("ablate runs the full grid and shares the data order") {
  auto data = tiny_dataset(4, 13.0, 6);
  auto cfg = tiny_config();
  cfg.batch_size = 2;
  cfg.epochs = 1;
  cfg.val_fraction = 0.25;
  const auto dir = test_dir("ablate");
  auto report = ablate(cfg, data, dir);
  REQUIRE(report.rows.size() == 8);
  std::size_t fusion_rows = 0, grid_rows = 0;
  for (const auto& row : report.rows) {
    CHECK(row.ok);
    if (row.group == "fusion") ++fusion_rows;
    if (row.group == "grid") ++grid_rows;
    CHECK(row.data_order_digest == report.rows[0].data_order_digest);
  }
  CHECK(fusion_rows == 6);
  CHECK(grid_rows == 2);
  CHECK(report.rows[0].config.temporal == TemporalType::gru);
  CHECK(report.rows[3].config.temporal == TemporalType::tcn);
  CHECK(report.rows[6].config.grid.sigma == 0.60);
  CHECK(report.rows[7].config.grid.sigma == 0.45);
  CHECK(std::filesystem::exists(dir / "ablation.md"));
  CHECK(std::filesystem::exists(dir / "ablation.csv"));

  const auto md = [&] {
    std::ifstream is(dir / "ablation.md");
    return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  }();
  CHECK(md.find("| gru | hierarchical |") != std::string::npos);
  CHECK(md.find("| tcn | attention_only |") != std::string::npos);
  CHECK(md.find("Grid settings") != std::string::npos);
}

TEST_CASE("ablate records failures and continues") {
  auto data = tiny_dataset(4, 13.0, 6);
  auto cfg = tiny_config();
  cfg.batch_size = 2;
  cfg.epochs = 1;
  cfg.semantic = SemanticMode::prototype;
  cfg.prototypes = "/nonexistent/protos.vapb";
  auto report = ablate(cfg, data, test_dir("ablate_fail"));
  REQUIRE(report.rows.size() == 8);
  for (const auto& row : report.rows) {
    CHECK_FALSE(row.ok);
    CHECK_FALSE(row.error.empty());
  }
  const auto csv = report.to_csv();
  CHECK(csv.find("false") != std::string::npos);
}
