#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vaest/fusion.hpp"
#include "vaest/label_space.hpp"
#include "vaest/sequence_model.hpp"

namespace vaest {

enum class TemporalType { gru, tcn };

const char* temporal_type_name(TemporalType type);
TemporalType parse_temporal_type(const std::string& name);

const char* semantic_mode_name(SemanticMode mode);
SemanticMode parse_semantic_mode(const std::string& name);

struct ModelConfig {
  std::size_t visual_dim = 512;
  std::size_t audio_dim = 768;
  std::size_t hidden = 256;
  std::size_t heads = 4;
  TemporalType temporal = TemporalType::gru;
  FusionMode fusion = FusionMode::hierarchical;
  SemanticMode semantic = SemanticMode::linear;

  void validate() const;
};

struct ModelOutput {
  TensorPtr va;    // [T_v x 2]
  TensorPtr dist;  // [T_v x 9]
};

// The full pipeline downstream of the frozen feature extractors: per-modality
// projection and temporal encoding, cross-modal fusion, and the two heads.
struct Model {
  ModelConfig config;
  ProjectionParams proj_v, proj_a;
  GruParams gru_v, gru_a;  // populated when temporal == gru
  TcnParams tcn_v, tcn_a;  // populated when temporal == tcn
  FusionParams fusion;
  HeadParams head;
  SemanticHead semantic;

  static Model init(Rng& rng, const ModelConfig& config,
                    std::optional<PrototypeMatrix> protos = std::nullopt);

  ModelOutput forward(Graph& g, const TensorPtr& visual, const TensorPtr& audio) const;

  // Trainable tensors in a fixed order. Names are stable checkpoint keys; both
  // fusion branches are always present so the key set depends only on the
  // temporal type and semantic mode, not on the fusion mode.
  std::vector<std::pair<std::string, TensorPtr>> named_parameters() const;
};

void save_checkpoint(const std::filesystem::path& path, const Model& model, std::uint64_t epoch,
                     std::uint64_t step);

struct LoadedCheckpoint {
  Model model;
  std::uint64_t epoch = 0;
  std::uint64_t step = 0;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace vaest
