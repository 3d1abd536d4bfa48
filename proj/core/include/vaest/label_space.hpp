#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vaest/graph.hpp"
#include "vaest/rng.hpp"
#include "vaest/tensor.hpp"

namespace vaest {

struct VAPoint {
  double valence = 0.0;
  double arousal = 0.0;
};

// 3x3 grid over the VA square. The same three centers serve both axes.
struct GridConfig {
  std::array<double, 3> axis_centers{-0.66, 0.0, 0.66};
  double sigma = 0.45;

  void validate() const;  // throws std::invalid_argument on violation
};

struct RegionSpec {
  std::size_t index = 0;  // arousal_level * 3 + valence_level
  VAPoint center;
  std::string name;
  std::array<std::string, 3> prompt_texts;
};

struct SoftLabel {
  std::array<double, 9> weights{};
};

// Unit-norm region embeddings loaded from a VAPB file. `raw` preserves the
// exact f32 payload so a save after load is byte-identical; `rows` holds the
// renormalized values used for computation.
struct PrototypeMatrix {
  std::size_t dim = 0;
  std::vector<float> raw;
  std::vector<double> rows;
  std::uint64_t source_digest = 0;
};

std::array<RegionSpec, 9> grid_regions(const GridConfig& config);

// Gaussian soft assignment of a VA point to the nine regions, normalized to
// sum one. Exponents are max-subtracted, so every weight is strictly positive.
SoftLabel soft_label(VAPoint y, const GridConfig& config);

PrototypeMatrix load_prototypes(const std::filesystem::path& path);
void save_prototypes(const std::filesystem::path& path, const PrototypeMatrix& protos);
PrototypeMatrix make_prototypes(std::size_t dim, const std::vector<double>& rows);

enum class SemanticMode { linear, prototype };

// Head turning fused features into a 9-way region distribution. Linear mode is
// a learned projection; prototype mode scores cosine similarity against fixed
// region embeddings under a learnable temperature.
struct SemanticHead {
  SemanticMode mode = SemanticMode::linear;
  std::size_t hidden = 256;

  TensorPtr w;  // hidden x 9 (linear)
  TensorPtr b;  // 9

  TensorPtr proj_w;  // hidden x E (prototype)
  TensorPtr proj_b;  // E
  TensorPtr tau;     // scalar temperature
  TensorPtr prototypes_t;  // E x 9 constant, unit columns
  std::optional<PrototypeMatrix> prototypes;

  static SemanticHead init(Rng& rng, std::size_t hidden, SemanticMode mode,
                           std::optional<PrototypeMatrix> protos = std::nullopt);
};

// feature: [T x hidden] -> [T x 9], each row a softmax distribution.
TensorPtr semantic_distribution(Graph& g, const TensorPtr& feature, const SemanticHead& head);

}  // namespace vaest
