#include "vaest/label_space.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "binio.hpp"
#include "vaest/digest.hpp"

namespace vaest {

namespace {

constexpr std::array<const char*, 9> kRegionNames = {
    "sad, tired, and low-energy",            // (arousal low, valence low)
    "calm and neutral in a quiet way",       // (low, mid)
    "content, relaxed, and peaceful",        // (low, high)
    "uncomfortable and displeased",          // (mid, low)
    "neutral and composed",                  // (mid, mid)
    "pleased and comfortable",               // (mid, high)
    "angry, distressed, and highly-aroused",  // (high, low)
    "alert, surprised, and highly-aroused",  // (high, mid)
    "excited, joyful, and energetic",        // (high, high)
};

constexpr std::array<const char*, 3> kPromptTemplates = {
    "a photo of a person who looks ",
    "a face showing ",
    "a facial expression of ",
};

TensorPtr init_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  return Tensor::create({rows, cols}, rng.uniform_vec(rows * cols, -bound, bound), true);
}

}  // namespace

void GridConfig::validate() const {
  for (double c : axis_centers) {
    if (!(c >= -1.0 && c <= 1.0)) {
      throw std::invalid_argument("grid: axis center " + std::to_string(c) +
                                  " outside [-1, 1]");
    }
  }
  if (!(axis_centers[0] < axis_centers[1] && axis_centers[1] < axis_centers[2])) {
    throw std::invalid_argument("grid: axis centers must be strictly increasing");
  }
  if (!(sigma > 0.0)) {
    throw std::invalid_argument("grid: sigma must be positive, got " + std::to_string(sigma));
  }
}

std::array<RegionSpec, 9> grid_regions(const GridConfig& config) {
  config.validate();
  std::array<RegionSpec, 9> out;
  for (std::size_t row = 0; row < 3; ++row) {      // arousal level, low to high
    for (std::size_t col = 0; col < 3; ++col) {    // valence level, low to high
      const std::size_t i = row * 3 + col;
      RegionSpec& r = out[i];
      r.index = i;
      r.center = {config.axis_centers[col], config.axis_centers[row]};
      r.name = kRegionNames[i];
      for (std::size_t t = 0; t < 3; ++t) r.prompt_texts[t] = kPromptTemplates[t] + r.name;
    }
  }
  return out;
}

SoftLabel soft_label(VAPoint y, const GridConfig& config) {
  config.validate();
  if (!(y.valence >= -1.0 && y.valence <= 1.0 && y.arousal >= -1.0 && y.arousal <= 1.0)) {
    throw std::invalid_argument("soft_label: point (" + std::to_string(y.valence) + ", " +
                                std::to_string(y.arousal) + ") outside [-1, 1]^2");
  }
  std::array<double, 9> expo;
  const double inv = 1.0 / (2.0 * config.sigma * config.sigma);
  for (std::size_t row = 0; row < 3; ++row) {
    for (std::size_t col = 0; col < 3; ++col) {
      const double dv = y.valence - config.axis_centers[col];
      const double da = y.arousal - config.axis_centers[row];
      expo[row * 3 + col] = -(dv * dv + da * da) * inv;
    }
  }
  const double mx = *std::max_element(expo.begin(), expo.end());
  SoftLabel label;
  double sum = 0.0;
  for (std::size_t i = 0; i < 9; ++i) {
    label.weights[i] = std::exp(expo[i] - mx);
    sum += label.weights[i];
  }
  for (double& w : label.weights) w /= sum;
  return label;
}

PrototypeMatrix load_prototypes(const std::filesystem::path& path) {
  const std::string p = path.string();
  std::ifstream is(p, std::ios::binary);
  if (!is) throw std::runtime_error(p + ": cannot open");
  binio::expect_magic(is, "VAPB", p);
  const auto version = binio::read_u32(is, "version");
  if (version != 1) throw std::runtime_error(p + ": unsupported version " + std::to_string(version));
  const auto rows = binio::read_u32(is, "row count");
  if (rows != 9) throw std::runtime_error(p + ": expected 9 prototype rows, got " + std::to_string(rows));
  const auto dim = binio::read_u32(is, "embedding dimension");
  if (dim == 0) throw std::runtime_error(p + ": zero embedding dimension");

  PrototypeMatrix out;
  out.dim = dim;
  out.raw.resize(9 * static_cast<std::size_t>(dim));
  if (!is.read(reinterpret_cast<char*>(out.raw.data()),
               static_cast<std::streamsize>(out.raw.size() * sizeof(float)))) {
    throw std::runtime_error(p + ": truncated prototype payload");
  }
  out.rows.resize(out.raw.size());
  for (std::size_t r = 0; r < 9; ++r) {
    double ss = 0.0;
    for (std::size_t j = 0; j < out.dim; ++j) {
      const double v = out.raw[r * out.dim + j];
      ss += v * v;
    }
    if (!(ss > 0.0)) {
      throw std::runtime_error(p + ": prototype row " + std::to_string(r) + " has zero norm");
    }
    const double inv = 1.0 / std::sqrt(ss);
    for (std::size_t j = 0; j < out.dim; ++j) {
      out.rows[r * out.dim + j] = out.raw[r * out.dim + j] * inv;
    }
  }
  out.source_digest = fnv1a64(binio::read_all(p));
  return out;
}

void save_prototypes(const std::filesystem::path& path, const PrototypeMatrix& protos) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error(path.string() + ": cannot open for writing");
  os.write("VAPB", 4);
  binio::write_u32(os, 1);
  binio::write_u32(os, 9);
  binio::write_u32(os, static_cast<std::uint32_t>(protos.dim));
  os.write(reinterpret_cast<const char*>(protos.raw.data()),
           static_cast<std::streamsize>(protos.raw.size() * sizeof(float)));
  if (!os) throw std::runtime_error(path.string() + ": write failed");
}

PrototypeMatrix make_prototypes(std::size_t dim, const std::vector<double>& rows) {
  if (dim == 0 || rows.size() != 9 * dim) {
    throw std::invalid_argument("make_prototypes: expected 9 rows of dimension " +
                                std::to_string(dim));
  }
  PrototypeMatrix out;
  out.dim = dim;
  out.raw.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out.raw[i] = static_cast<float>(rows[i]);
  out.rows.resize(rows.size());
  for (std::size_t r = 0; r < 9; ++r) {
    double ss = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      const double v = out.raw[r * dim + j];
      ss += v * v;
    }
    if (!(ss > 0.0)) {
      throw std::invalid_argument("make_prototypes: row " + std::to_string(r) + " has zero norm");
    }
    const double inv = 1.0 / std::sqrt(ss);
    for (std::size_t j = 0; j < dim; ++j) out.rows[r * dim + j] = out.raw[r * dim + j] * inv;
  }
  return out;
}

SemanticHead SemanticHead::init(Rng& rng, std::size_t hidden, SemanticMode mode,
                                std::optional<PrototypeMatrix> protos) {
  SemanticHead head;
  head.mode = mode;
  head.hidden = hidden;
  if (mode == SemanticMode::linear) {
    head.w = init_matrix(rng, hidden, 9);
    head.b = Tensor::zeros({9}, true);
    return head;
  }
  if (!protos) {
    throw std::invalid_argument("semantic head: prototype mode requires a prototype matrix");
  }
  const std::size_t e = protos->dim;
  head.proj_w = init_matrix(rng, hidden, e);
  head.proj_b = Tensor::zeros({e}, true);
  head.tau = Tensor::scalar(10.0, true);
  std::vector<double> pt(e * 9);
  for (std::size_t r = 0; r < 9; ++r) {
    for (std::size_t j = 0; j < e; ++j) pt[j * 9 + r] = protos->rows[r * e + j];
  }
  head.prototypes_t = Tensor::create({e, 9}, std::move(pt), false);
  head.prototypes = std::move(protos);
  return head;
}

TensorPtr semantic_distribution(Graph& g, const TensorPtr& feature, const SemanticHead& head) {
  if (feature->rank() != 2 || feature->shape()[1] != head.hidden) {
    throw std::invalid_argument("semantic head: feature shape " + shape_str(feature->shape()) +
                                " does not match hidden dimension " + std::to_string(head.hidden));
  }
  if (head.mode == SemanticMode::linear) {
    return g.softmax(g.add(g.matmul(feature, head.w), head.b));
  }
  if (!head.prototypes_t) {
    throw std::invalid_argument("semantic head: prototype mode without loaded prototypes");
  }
  const std::size_t t = feature->shape()[0];
  const std::size_t e = head.prototypes_t->shape()[0];
  auto proj = g.add(g.matmul(feature, head.proj_w), head.proj_b);  // [T x E]
  auto ss = g.matmul(g.square(proj), Tensor::full({e, 1}, 1.0));   // [T x 1]
  auto norm = g.sqrt(g.add(ss, Tensor::create({1}, {1e-12})));
  auto inv = g.div(Tensor::full({t, 1}, 1.0), norm);
  auto unit = g.mul(proj, g.matmul(inv, Tensor::full({1, e}, 1.0)));
  auto cos = g.matmul(unit, head.prototypes_t);  // [T x 9]
  return g.softmax(g.mul(cos, head.tau));
}

}  // namespace vaest
