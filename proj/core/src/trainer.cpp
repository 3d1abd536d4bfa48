#include "vaest/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "vaest/digest.hpp"
#include "vaest/objectives.hpp"

namespace vaest {

namespace {

struct TrainWindow {
  WindowSample window;
  TensorPtr target_va;    // [20 x 2] constant
  TensorPtr target_dist;  // [20 x 9] constant
};

std::vector<TrainWindow> prepare_windows(std::span<const SequenceRecord* const> seqs,
                                         const TrainConfig& config) {
  std::vector<TrainWindow> out;
  for (const auto* rec : seqs) {
    for (auto& w : slice_windows(*rec, config.window_sec, config.stride_sec, &config.grid)) {
      TrainWindow tw;
      std::vector<double> va;
      va.reserve(w.targets.size() * 2);
      for (const auto& p : w.targets) {
        va.push_back(p.valence);
        va.push_back(p.arousal);
      }
      tw.target_va = Tensor::create({w.targets.size(), 2}, std::move(va));
      std::vector<double> dist;
      dist.reserve(w.soft_targets.size() * 9);
      for (const auto& s : w.soft_targets) {
        dist.insert(dist.end(), s.weights.begin(), s.weights.end());
      }
      tw.target_dist = Tensor::create({w.soft_targets.size(), 9}, std::move(dist));
      tw.window = std::move(w);
      out.push_back(std::move(tw));
    }
  }
  return out;
}

// Fisher-Yates driven by raw engine output; the order is a pure function of
// the seed, independent of standard library distribution internals.
void shuffle_indices(std::vector<std::size_t>& idx, std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  for (std::size_t i = idx.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(eng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
}

void check_dims(std::span<const SequenceRecord> dataset) {
  for (const auto& rec : dataset) {
    if (rec.visual.dim != dataset[0].visual.dim || rec.audio.dim != dataset[0].audio.dim) {
      throw std::invalid_argument("train: sequence '" + rec.id +
                                  "' feature dimensions disagree with the first sequence");
    }
  }
}

std::string format_metric(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

std::string centers_str(const GridConfig& grid) {
  std::ostringstream os;
  os << "[" << grid.axis_centers[0] << "," << grid.axis_centers[1] << ","
     << grid.axis_centers[2] << "]";
  return os.str();
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size == 0) throw std::invalid_argument("TrainConfig: batch_size must be positive");
  if (epochs == 0) throw std::invalid_argument("TrainConfig: epochs must be positive");
  if (!(head_lr > 0.0) || !(backbone_lr > 0.0)) {
    throw std::invalid_argument("TrainConfig: learning rates must be positive");
  }
  if (weight_decay < 0.0) {
    throw std::invalid_argument("TrainConfig: weight_decay must be non-negative");
  }
  if (lambda < 0.0) throw std::invalid_argument("TrainConfig: lambda must be non-negative");
  if (hidden == 0 || hidden % 2 != 0) {
    throw std::invalid_argument("TrainConfig: hidden must be positive and even");
  }
  if (heads == 0 || hidden % heads != 0) {
    throw std::invalid_argument("TrainConfig: heads must divide hidden");
  }
  if (semantic == SemanticMode::prototype && prototypes.empty()) {
    throw std::invalid_argument("TrainConfig: prototype semantic mode needs a prototypes file");
  }
  grid.validate();
  if (!(window_sec > 0.0) || !(stride_sec > 0.0)) {
    throw std::invalid_argument("TrainConfig: window_sec and stride_sec must be positive");
  }
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
    throw std::invalid_argument("TrainConfig: val_fraction must lie in [0, 1)");
  }
}

ModelConfig TrainConfig::model_config(std::size_t visual_dim, std::size_t audio_dim) const {
  ModelConfig m;
  m.visual_dim = visual_dim;
  m.audio_dim = audio_dim;
  m.hidden = hidden;
  m.heads = heads;
  m.temporal = temporal;
  m.fusion = fusion;
  m.semantic = semantic;
  return m;
}

std::string train_config_to_json(const TrainConfig& c) {
  nlohmann::json j{{"batch_size", c.batch_size},
                   {"epochs", c.epochs},
                   {"head_lr", c.head_lr},
                   {"backbone_lr", c.backbone_lr},
                   {"weight_decay", c.weight_decay},
                   {"lambda", c.lambda},
                   {"temporal", temporal_type_name(c.temporal)},
                   {"fusion", fusion_mode_name(c.fusion)},
                   {"semantic", semantic_mode_name(c.semantic)},
                   {"prototypes", c.prototypes},
                   {"hidden", c.hidden},
                   {"heads", c.heads},
                   {"grid", {{"axis_centers", c.grid.axis_centers}, {"sigma", c.grid.sigma}}},
                   {"window_sec", c.window_sec},
                   {"stride_sec", c.stride_sec},
                   {"val_fraction", c.val_fraction},
                   {"seed", c.seed}};
  return j.dump(2);
}

TrainConfig train_config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("TrainConfig: bad JSON: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("TrainConfig: expected a JSON object");
  static const std::set<std::string> known{
      "batch_size", "epochs",   "head_lr",  "backbone_lr", "weight_decay", "lambda",
      "temporal",   "fusion",   "semantic", "prototypes",  "hidden",       "heads",
      "grid",       "window_sec", "stride_sec", "val_fraction", "seed"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) {
      throw std::invalid_argument("TrainConfig: unknown key '" + key + "'");
    }
  }
  TrainConfig c;
  try {
    if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<std::size_t>();
    if (j.contains("epochs")) c.epochs = j["epochs"].get<std::size_t>();
    if (j.contains("head_lr")) c.head_lr = j["head_lr"].get<double>();
    if (j.contains("backbone_lr")) c.backbone_lr = j["backbone_lr"].get<double>();
    if (j.contains("weight_decay")) c.weight_decay = j["weight_decay"].get<double>();
    if (j.contains("lambda")) c.lambda = j["lambda"].get<double>();
    if (j.contains("temporal")) c.temporal = parse_temporal_type(j["temporal"].get<std::string>());
    if (j.contains("fusion")) c.fusion = parse_fusion_mode(j["fusion"].get<std::string>());
    if (j.contains("semantic")) c.semantic = parse_semantic_mode(j["semantic"].get<std::string>());
    if (j.contains("prototypes")) c.prototypes = j["prototypes"].get<std::string>();
    if (j.contains("hidden")) c.hidden = j["hidden"].get<std::size_t>();
    if (j.contains("heads")) c.heads = j["heads"].get<std::size_t>();
    if (j.contains("grid")) {
      const auto& gobj = j["grid"];
      if (!gobj.is_object()) throw std::invalid_argument("TrainConfig: grid must be an object");
      for (const auto& [key, value] : gobj.items()) {
        if (key != "axis_centers" && key != "sigma") {
          throw std::invalid_argument("TrainConfig: unknown grid key '" + key + "'");
        }
      }
      if (gobj.contains("axis_centers")) {
        c.grid.axis_centers = gobj["axis_centers"].get<std::array<double, 3>>();
      }
      if (gobj.contains("sigma")) c.grid.sigma = gobj["sigma"].get<double>();
    }
    if (j.contains("window_sec")) c.window_sec = j["window_sec"].get<double>();
    if (j.contains("stride_sec")) c.stride_sec = j["stride_sec"].get<double>();
    if (j.contains("val_fraction")) c.val_fraction = j["val_fraction"].get<double>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("TrainConfig: ") + e.what());
  }
  c.validate();
  return c;
}

std::string synth_config_to_json(const SynthConfig& c) {
  nlohmann::json j{{"sequences", c.sequences},     {"duration_sec", c.duration_sec},
                   {"visual_rate", c.visual_rate}, {"audio_rate", c.audio_rate},
                   {"visual_dim", c.visual_dim},   {"audio_dim", c.audio_dim},
                   {"theta", c.theta},             {"eta", c.eta},
                   {"feature_noise", c.feature_noise},
                   {"signal_scale", c.signal_scale},
                   {"seed", c.seed}};
  return j.dump(2);
}

SynthConfig synth_config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("SynthConfig: bad JSON: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("SynthConfig: expected a JSON object");
  static const std::set<std::string> known{"sequences",  "duration_sec", "visual_rate",
                                           "audio_rate", "visual_dim",   "audio_dim",
                                           "theta",      "eta",          "feature_noise",
                                           "signal_scale", "seed"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) {
      throw std::invalid_argument("SynthConfig: unknown key '" + key + "'");
    }
  }
  SynthConfig c;
  try {
    if (j.contains("sequences")) c.sequences = j["sequences"].get<std::size_t>();
    if (j.contains("duration_sec")) c.duration_sec = j["duration_sec"].get<double>();
    if (j.contains("visual_rate")) c.visual_rate = j["visual_rate"].get<double>();
    if (j.contains("audio_rate")) c.audio_rate = j["audio_rate"].get<double>();
    if (j.contains("visual_dim")) c.visual_dim = j["visual_dim"].get<std::size_t>();
    if (j.contains("audio_dim")) c.audio_dim = j["audio_dim"].get<std::size_t>();
    if (j.contains("theta")) c.theta = j["theta"].get<double>();
    if (j.contains("eta")) c.eta = j["eta"].get<double>();
    if (j.contains("feature_noise")) c.feature_noise = j["feature_noise"].get<double>();
    if (j.contains("signal_scale")) c.signal_scale = j["signal_scale"].get<double>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("SynthConfig: ") + e.what());
  }
  c.validate();
  return c;
}

SplitView split_dataset(std::span<const SequenceRecord> dataset, double val_fraction) {
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
    throw std::invalid_argument("split_dataset: val_fraction must lie in [0, 1)");
  }
  SplitView split;
  auto n_val = static_cast<std::size_t>(
      std::llround(static_cast<double>(dataset.size()) * val_fraction));
  if (val_fraction > 0.0 && n_val == 0 && dataset.size() > 1) n_val = 1;
  if (n_val >= dataset.size() && !dataset.empty()) n_val = dataset.size() - 1;
  const std::size_t n_train = dataset.size() - n_val;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    (i < n_train ? split.train : split.val).push_back(&dataset[i]);
  }
  return split;
}

TrainResult train(const TrainConfig& config, std::span<const SequenceRecord> dataset,
                  const std::filesystem::path& out_dir) {
  config.validate();
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  check_dims(dataset);
  const auto split = split_dataset(dataset, config.val_fraction);

  auto windows = prepare_windows(split.train, config);
  if (windows.size() < config.batch_size) {
    throw std::invalid_argument("train: " + std::to_string(windows.size()) +
                                " training windows, need at least the batch size " +
                                std::to_string(config.batch_size));
  }

  std::optional<PrototypeMatrix> protos;
  if (config.semantic == SemanticMode::prototype) {
    protos = load_prototypes(config.prototypes);
  }
  Rng rng(config.seed);
  auto model = Model::init(rng, config.model_config(dataset[0].visual.dim, dataset[0].audio.dim),
                           std::move(protos));
  AdamWConfig ocfg;
  ocfg.head_lr = config.head_lr;
  ocfg.backbone_lr = config.backbone_lr;
  ocfg.weight_decay = config.weight_decay;
  AdamW opt(ocfg);
  for (const auto& [name, tensor] : model.named_parameters()) {
    opt.add_param(name, tensor, ParamGroup::head);
  }

  std::filesystem::create_directories(out_dir);
  TrainResult result;
  result.checkpoint = out_dir / "checkpoint.vack";
  const std::uint64_t seed_digest = fnv1a64_u64(config.seed, 0xcbf29ce484222325ull);
  result.data_order_digest = seed_digest;

  std::uint64_t global_step = 0;
  bool wrote_checkpoint = false;
  for (std::size_t epoch = 0; epoch < config.epochs && !result.aborted; ++epoch) {
    std::vector<std::size_t> order(windows.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle_indices(order, fnv1a64_u64(epoch, seed_digest));
    for (auto idx : order) result.data_order_digest = fnv1a64_u64(idx, result.data_order_digest);

    EpochTrace etrace;
    etrace.epoch = epoch;
    for (std::size_t b0 = 0; b0 < order.size() && !result.aborted; b0 += config.batch_size) {
      const auto b1 = std::min(b0 + config.batch_size, order.size());
      Graph g;
      LossBreakdown breakdown;
      // Numeric blowups surface as domain_error from the primitives; treat
      // them like a non-finite loss and abort, keeping the last checkpoint.
      try {
        std::vector<TensorPtr> preds_va, preds_dist, targets_va, targets_dist;
        for (std::size_t k = b0; k < b1; ++k) {
          const auto& item = windows[order[k]];
          auto out = model.forward(g, item.window.visual, item.window.audio);
          preds_va.push_back(out.va);
          preds_dist.push_back(out.dist);
          targets_va.push_back(item.target_va);
          targets_dist.push_back(item.target_dist);
        }
        breakdown =
            total_loss(g, g.concat_rows(preds_va), g.concat_rows(targets_va),
                       g.concat_rows(preds_dist), g.concat_rows(targets_dist), config.lambda);
        if (!std::isfinite(breakdown.total)) {
          throw std::domain_error("non-finite loss value");
        }
        g.backward(breakdown.total_node);
      } catch (const std::domain_error& e) {
        result.aborted = true;
        result.abort_reason = std::string(e.what()) + " at step " + std::to_string(global_step + 1);
        std::cerr << "train: " << result.abort_reason << "; keeping the last checkpoint\n";
        break;
      }
      opt.step();
      opt.zero_grad();
      ++global_step;
      result.steps.push_back(
          {global_step, epoch, breakdown.total, breakdown.ccc_loss, breakdown.kl_loss});
      ++etrace.steps;
      etrace.mean_total += breakdown.total;
      etrace.mean_ccc_loss += breakdown.ccc_loss;
      etrace.mean_kl_loss += breakdown.kl_loss;
    }
    if (result.aborted) break;
    if (etrace.steps > 0) {
      etrace.mean_total /= static_cast<double>(etrace.steps);
      etrace.mean_ccc_loss /= static_cast<double>(etrace.steps);
      etrace.mean_kl_loss /= static_cast<double>(etrace.steps);
    }
    result.report.epochs.push_back(etrace);
    save_checkpoint(result.checkpoint, model, epoch + 1, global_step);
    wrote_checkpoint = true;
  }

  if (result.aborted && !wrote_checkpoint) result.checkpoint.clear();
  if (!result.aborted) {
    result.report.train = evaluate(model, std::span<const SequenceRecord* const>(split.train),
                                   config.window_sec, config.stride_sec);
    if (!split.val.empty()) {
      result.report.val = evaluate(model, std::span<const SequenceRecord* const>(split.val),
                                   config.window_sec, config.stride_sec);
    }
  }
  return result;
}

EvalMetrics evaluate(const Model& model, std::span<const SequenceRecord* const> dataset,
                     double window_sec, double stride_sec) {
  if (dataset.empty()) throw std::invalid_argument("evaluate: empty dataset");
  std::vector<double> pred_v, pred_a, true_v, true_a;
  Graph g;
  g.set_grad_enabled(false);
  for (const auto* rec : dataset) {
    const auto windows = slice_windows(*rec, window_sec, stride_sec);
    if (windows.empty()) continue;
    const auto frames = rec->visual.frames();
    std::vector<double> sum_v(frames, 0.0), sum_a(frames, 0.0);
    std::vector<std::size_t> hits(frames, 0);
    for (const auto& w : windows) {
      const auto out = model.forward(g, w.visual, w.audio);
      for (std::size_t i = 0; i < w.frame_indices.size(); ++i) {
        const auto f = w.frame_indices[i];
        sum_v[f] += out.va->at(i, 0);
        sum_a[f] += out.va->at(i, 1);
        ++hits[f];
      }
    }
    for (std::size_t f = 0; f < frames; ++f) {
      if (hits[f] == 0) continue;
      pred_v.push_back(sum_v[f] / static_cast<double>(hits[f]));
      pred_a.push_back(sum_a[f] / static_cast<double>(hits[f]));
      true_v.push_back(rec->labels[f].valence);
      true_a.push_back(rec->labels[f].arousal);
    }
  }
  if (pred_v.size() < 2) {
    throw std::invalid_argument("evaluate: fewer than two scored frames");
  }
  EvalMetrics m;
  m.ccc_v = ccc(pred_v, true_v);
  m.ccc_a = ccc(pred_a, true_a);
  m.ccc_mean = (m.ccc_v + m.ccc_a) / 2.0;
  m.frames = pred_v.size();
  return m;
}

EvalMetrics evaluate(const Model& model, std::span<const SequenceRecord> dataset,
                     double window_sec, double stride_sec) {
  std::vector<const SequenceRecord*> ptrs;
  ptrs.reserve(dataset.size());
  for (const auto& rec : dataset) ptrs.push_back(&rec);
  return evaluate(model, std::span<const SequenceRecord* const>(ptrs), window_sec, stride_sec);
}

std::string AblationReport::to_markdown() const {
  std::ostringstream os;
  os << "# Ablation\n";
  os << "\n## Temporal encoding and fusion\n\n";
  os << "| Temporal | Fusion | CCC_v | CCC_a | CCC_mean |\n";
  os << "|---|---|---|---|---|\n";
  for (const auto& row : rows) {
    if (row.group != "fusion") continue;
    os << "| " << temporal_type_name(row.config.temporal) << " | "
       << fusion_mode_name(row.config.fusion) << " | ";
    if (row.ok) {
      os << format_metric(row.metrics.ccc_v) << " | " << format_metric(row.metrics.ccc_a)
         << " | " << format_metric(row.metrics.ccc_mean);
    } else {
      os << "failed: " << row.error << " | - | -";
    }
    os << " |\n";
  }
  os << "\n## Grid settings\n\n";
  os << "| Centers | Sigma | CCC_v | CCC_a | CCC_mean |\n";
  os << "|---|---|---|---|---|\n";
  for (const auto& row : rows) {
    if (row.group != "grid") continue;
    os << "| " << centers_str(row.config.grid) << " | " << row.config.grid.sigma << " | ";
    if (row.ok) {
      os << format_metric(row.metrics.ccc_v) << " | " << format_metric(row.metrics.ccc_a)
         << " | " << format_metric(row.metrics.ccc_mean);
    } else {
      os << "failed: " << row.error << " | - | -";
    }
    os << " |\n";
  }
  std::uint64_t digest = 0;
  for (const auto& row : rows) {
    if (row.ok) {
      digest = row.data_order_digest;
      break;
    }
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(digest));
  os << "\nShared data-order digest: " << buf << "\n";
  return os.str();
}

std::string AblationReport::to_csv() const {
  std::ostringstream os;
  os << "label,group,temporal,fusion,centers,sigma,ccc_v,ccc_a,ccc_mean,frames,ok,error\n";
  for (const auto& row : rows) {
    std::string error = row.error;
    std::replace(error.begin(), error.end(), ',', ';');
    os << row.label << "," << row.group << "," << temporal_type_name(row.config.temporal) << ","
       << fusion_mode_name(row.config.fusion) << "," << row.config.grid.axis_centers[0] << "/"
       << row.config.grid.axis_centers[1] << "/" << row.config.grid.axis_centers[2] << ","
       << row.config.grid.sigma << ",";
    if (row.ok) {
      os << format_metric(row.metrics.ccc_v) << "," << format_metric(row.metrics.ccc_a) << ","
         << format_metric(row.metrics.ccc_mean) << "," << row.metrics.frames;
    } else {
      os << ",,,";
    }
    os << "," << (row.ok ? "true" : "false") << "," << error << "\n";
  }
  return os.str();
}

AblationReport ablate(const TrainConfig& base, std::span<const SequenceRecord> dataset,
                      const std::filesystem::path& out_dir) {
  base.validate();
  std::filesystem::create_directories(out_dir);

  std::vector<AblationRow> rows;
  for (const auto temporal : {TemporalType::gru, TemporalType::tcn}) {
    for (const auto fusion :
         {FusionMode::attention_only, FusionMode::gated_only, FusionMode::hierarchical}) {
      AblationRow row;
      row.config = base;
      row.config.temporal = temporal;
      row.config.fusion = fusion;
      row.group = "fusion";
      row.label = std::string(temporal_type_name(temporal)) + " + " + fusion_mode_name(fusion);
      rows.push_back(std::move(row));
    }
  }
  const GridConfig wide{{-1.0, 0.0, 1.0}, 0.60};
  const GridConfig narrow{{-0.66, 0.0, 0.66}, 0.45};
  for (const auto& grid : {wide, narrow}) {
    AblationRow row;
    row.config = base;
    row.config.grid = grid;
    row.group = "grid";
    row.label = "grid " + centers_str(grid) + " sigma=" + format_metric(grid.sigma);
    rows.push_back(std::move(row));
  }

  AblationReport report;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto& row = rows[i];
    const auto run_dir = out_dir / ("run_" + std::to_string(i));
    try {
      auto res = train(row.config, dataset, run_dir);
      if (res.aborted) throw std::runtime_error("training aborted: " + res.abort_reason);
      row.metrics = res.report.val ? *res.report.val : res.report.train;
      row.data_order_digest = res.data_order_digest;
      row.ok = true;
    } catch (const std::exception& e) {
      row.error = e.what();
      std::cerr << "ablate: run '" << row.label << "' failed: " << row.error << "\n";
    }
    report.rows.push_back(std::move(row));
  }

  bool have_digest = false;
  std::uint64_t digest = 0;
  for (const auto& row : report.rows) {
    if (!row.ok) continue;
    if (!have_digest) {
      digest = row.data_order_digest;
      have_digest = true;
    } else if (row.data_order_digest != digest) {
      throw std::logic_error("ablate: data order diverged between runs");
    }
  }

  std::ofstream md(out_dir / "ablation.md");
  md << report.to_markdown();
  std::ofstream csv(out_dir / "ablation.csv");
  csv << report.to_csv();
  if (!md || !csv) throw std::runtime_error("ablate: failed writing reports");
  return report;
}

}  // namespace vaest
