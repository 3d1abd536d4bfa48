#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vaest/dataio.hpp"
#include "vaest/model.hpp"
#include "vaest/optimizer.hpp"

namespace vaest {

struct TrainConfig {
  std::size_t batch_size = 16;
  std::size_t epochs = 15;
  double head_lr = 1e-4;
  double backbone_lr = 3e-6;
  double weight_decay = 1e-4;
  double lambda = 0.2;
  TemporalType temporal = TemporalType::gru;
  FusionMode fusion = FusionMode::hierarchical;
  SemanticMode semantic = SemanticMode::linear;
  std::string prototypes;  // VAPB path, required by the prototype semantic mode
  std::size_t hidden = 256;
  std::size_t heads = 4;
  GridConfig grid;
  double window_sec = 10.0;
  double stride_sec = 3.0;
  double val_fraction = 0.2;
  std::uint64_t seed = 1;

  void validate() const;
  ModelConfig model_config(std::size_t visual_dim, std::size_t audio_dim) const;
};

// JSON text mirroring the config field names. Parsing rejects unknown keys;
// absent keys keep their defaults.
std::string train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const std::string& text);
std::string synth_config_to_json(const SynthConfig& config);
SynthConfig synth_config_from_json(const std::string& text);

struct StepTrace {
  std::uint64_t step = 0;  // global, 1-based
  std::size_t epoch = 0;   // 0-based
  double total = 0.0;
  double ccc_loss = 0.0;
  double kl_loss = 0.0;
};

struct EpochTrace {
  std::size_t epoch = 0;
  std::size_t steps = 0;
  double mean_total = 0.0;
  double mean_ccc_loss = 0.0;
  double mean_kl_loss = 0.0;
};

struct EvalMetrics {
  double ccc_v = 0.0;
  double ccc_a = 0.0;
  double ccc_mean = 0.0;  // always (ccc_v + ccc_a) / 2
  std::size_t frames = 0;
};

struct EvalReport {
  EvalMetrics train;
  std::optional<EvalMetrics> val;
  std::vector<EpochTrace> epochs;
};

struct TrainResult {
  EvalReport report;
  std::vector<StepTrace> steps;
  std::filesystem::path checkpoint;  // latest epoch; last-good when aborted
  std::uint64_t data_order_digest = 0;
  bool aborted = false;
  std::string abort_reason;
};

// Leading sequences train, trailing ones validate; the count is
// round(n * val_fraction). The split depends only on dataset order.
struct SplitView {
  std::vector<const SequenceRecord*> train;
  std::vector<const SequenceRecord*> val;
};
SplitView split_dataset(std::span<const SequenceRecord> dataset, double val_fraction);

// Full optimization loop: windowing, seeded epoch shuffling, batched forward
// and backward, AdamW updates, a checkpoint per epoch, and final evaluation of
// both splits. A non-finite loss aborts, keeping the previous checkpoint.
TrainResult train(const TrainConfig& config, std::span<const SequenceRecord> dataset,
                  const std::filesystem::path& out_dir);

// Sliced predictions averaged per frame across overlapping windows, then CCC
// per dimension over the frames of all sequences concatenated in time order.
EvalMetrics evaluate(const Model& model, std::span<const SequenceRecord> dataset,
                     double window_sec = 10.0, double stride_sec = 3.0);
EvalMetrics evaluate(const Model& model, std::span<const SequenceRecord* const> dataset,
                     double window_sec = 10.0, double stride_sec = 3.0);

struct AblationRow {
  std::string label;
  std::string group;  // "fusion" or "grid"
  TrainConfig config;
  bool ok = false;
  std::string error;
  EvalMetrics metrics;  // validation split when present, else train
  std::uint64_t data_order_digest = 0;
};

struct AblationReport {
  std::vector<AblationRow> rows;  // six temporal x fusion rows, then two grid rows

  std::string to_markdown() const;
  std::string to_csv() const;
};

// Runs {gru, tcn} x {attention_only, gated_only, hierarchical} plus two grid
// settings under the base config. A failed run is recorded and the harness
// continues; completed runs must agree on the data-order digest.
AblationReport ablate(const TrainConfig& base, std::span<const SequenceRecord> dataset,
                      const std::filesystem::path& out_dir);

}  // namespace vaest
