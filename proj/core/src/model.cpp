#include "vaest/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "binio.hpp"
#include "json.hpp"

namespace vaest {

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

void add_param(std::vector<std::pair<std::string, TensorPtr>>& out, const std::string& name,
               const TensorPtr& t) {
  if (!t) throw std::logic_error("named_parameters: missing tensor " + name);
  out.emplace_back(name, t);
}

void add_gru(std::vector<std::pair<std::string, TensorPtr>>& out, const std::string& prefix,
             const GruParams& p) {
  const std::pair<const char*, const GruDirection*> dirs[] = {{"fwd", &p.fwd}, {"bwd", &p.bwd}};
  for (const auto& [dname, d] : dirs) {
    const std::string base = prefix + "." + dname + ".";
    add_param(out, base + "w_z", d->w_z);
    add_param(out, base + "w_r", d->w_r);
    add_param(out, base + "w_n", d->w_n);
    add_param(out, base + "u_z", d->u_z);
    add_param(out, base + "u_r", d->u_r);
    add_param(out, base + "u_n", d->u_n);
    add_param(out, base + "b_z", d->b_z);
    add_param(out, base + "b_r", d->b_r);
    add_param(out, base + "b_n", d->b_n);
  }
}

void add_tcn(std::vector<std::pair<std::string, TensorPtr>>& out, const std::string& prefix,
             const TcnParams& p) {
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    const auto& b = p.blocks[i];
    const std::string base = prefix + ".block" + std::to_string(i) + ".";
    add_param(out, base + "w1", b.w1);
    add_param(out, base + "b1", b.b1);
    add_param(out, base + "w2", b.w2);
    add_param(out, base + "b2", b.b2);
    if (b.res_w) add_param(out, base + "res_w", b.res_w);
  }
}

PrototypeMatrix prototypes_from_raw(std::size_t dim, std::vector<float> raw,
                                    std::uint64_t digest) {
  PrototypeMatrix out;
  out.dim = dim;
  out.raw = std::move(raw);
  out.rows.resize(out.raw.size());
  for (std::size_t r = 0; r < 9; ++r) {
    double ss = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      const double v = out.raw[r * dim + j];
      ss += v * v;
    }
    if (!(ss > 0.0)) {
      throw std::runtime_error("checkpoint prototypes: row " + std::to_string(r) +
                               " has zero norm");
    }
    const double inv = 1.0 / std::sqrt(ss);
    for (std::size_t j = 0; j < dim; ++j) out.rows[r * dim + j] = out.raw[r * dim + j] * inv;
  }
  out.source_digest = digest;
  return out;
}

}  // namespace

const char* temporal_type_name(TemporalType type) {
  switch (type) {
    case TemporalType::gru:
      return "gru";
    case TemporalType::tcn:
      return "tcn";
  }
  throw std::logic_error("temporal_type_name: invalid enum value");
}

TemporalType parse_temporal_type(const std::string& name) {
  if (name == "gru") return TemporalType::gru;
  if (name == "tcn") return TemporalType::tcn;
  throw std::invalid_argument("unknown temporal type '" + name + "' (expected gru|tcn)");
}

const char* semantic_mode_name(SemanticMode mode) {
  switch (mode) {
    case SemanticMode::linear:
      return "linear";
    case SemanticMode::prototype:
      return "prototype";
  }
  throw std::logic_error("semantic_mode_name: invalid enum value");
}

SemanticMode parse_semantic_mode(const std::string& name) {
  if (name == "linear") return SemanticMode::linear;
  if (name == "prototype") return SemanticMode::prototype;
  throw std::invalid_argument("unknown semantic mode '" + name +
                              "' (expected linear|prototype)");
}

void ModelConfig::validate() const {
  if (visual_dim == 0 || audio_dim == 0) {
    throw std::invalid_argument("ModelConfig: feature dimensions must be positive");
  }
  if (hidden == 0 || hidden % 2 != 0) {
    throw std::invalid_argument("ModelConfig: hidden must be positive and even, got " +
                                std::to_string(hidden));
  }
  if (heads == 0 || hidden % heads != 0) {
    throw std::invalid_argument("ModelConfig: heads must divide hidden (" +
                                std::to_string(heads) + " vs " + std::to_string(hidden) + ")");
  }
}

Model Model::init(Rng& rng, const ModelConfig& config, std::optional<PrototypeMatrix> protos) {
  config.validate();
  Model m;
  m.config = config;
  m.proj_v = ProjectionParams::init(rng, config.visual_dim, config.hidden);
  m.proj_a = ProjectionParams::init(rng, config.audio_dim, config.hidden);
  if (config.temporal == TemporalType::gru) {
    m.gru_v = GruParams::init(rng, config.hidden, config.hidden);
    m.gru_a = GruParams::init(rng, config.hidden, config.hidden);
  } else {
    m.tcn_v = TcnParams::init(rng, config.hidden);
    m.tcn_a = TcnParams::init(rng, config.hidden);
  }
  m.fusion = FusionParams::init(rng, config.hidden, config.heads);
  m.head = HeadParams::init(rng, config.hidden);
  m.semantic = SemanticHead::init(rng, config.hidden, config.semantic, std::move(protos));
  return m;
}

ModelOutput Model::forward(Graph& g, const TensorPtr& visual, const TensorPtr& audio) const {
  auto encode = [&](const TensorPtr& seq, const ProjectionParams& proj, const GruParams& gru,
                    const TcnParams& tcn) {
    auto projected = project(g, seq, proj);
    return config.temporal == TemporalType::gru ? bigru_forward(g, projected, gru)
                                                : tcn_forward(g, projected, tcn);
  };
  auto h_v = encode(visual, proj_v, gru_v, tcn_v);
  auto h_a = encode(audio, proj_a, gru_a, tcn_a);
  auto fused = fuse(g, h_v, h_a, config.fusion, fusion);
  return {regress_va(g, fused, head), semantic_distribution(g, fused, semantic)};
}

std::vector<std::pair<std::string, TensorPtr>> Model::named_parameters() const {
  std::vector<std::pair<std::string, TensorPtr>> out;
  add_param(out, "proj_v.weight", proj_v.weight);
  add_param(out, "proj_v.bias", proj_v.bias);
  add_param(out, "proj_a.weight", proj_a.weight);
  add_param(out, "proj_a.bias", proj_a.bias);
  if (config.temporal == TemporalType::gru) {
    add_gru(out, "gru_v", gru_v);
    add_gru(out, "gru_a", gru_a);
  } else {
    add_tcn(out, "tcn_v", tcn_v);
    add_tcn(out, "tcn_a", tcn_a);
  }
  add_param(out, "fusion.attention.w_q", fusion.attention.w_q);
  add_param(out, "fusion.attention.b_q", fusion.attention.b_q);
  add_param(out, "fusion.attention.w_k", fusion.attention.w_k);
  add_param(out, "fusion.attention.b_k", fusion.attention.b_k);
  add_param(out, "fusion.attention.w_v", fusion.attention.w_v);
  add_param(out, "fusion.attention.b_v", fusion.attention.b_v);
  add_param(out, "fusion.gate.w", fusion.gate.w);
  add_param(out, "fusion.gate.b", fusion.gate.b);
  add_param(out, "head.w1", head.w1);
  add_param(out, "head.b1", head.b1);
  add_param(out, "head.w2", head.w2);
  add_param(out, "head.b2", head.b2);
  if (config.semantic == SemanticMode::linear) {
    add_param(out, "semantic.w", semantic.w);
    add_param(out, "semantic.b", semantic.b);
  } else {
    add_param(out, "semantic.proj_w", semantic.proj_w);
    add_param(out, "semantic.proj_b", semantic.proj_b);
    add_param(out, "semantic.tau", semantic.tau);
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model, std::uint64_t epoch,
                     std::uint64_t step) {
  const auto params = model.named_parameters();
  nlohmann::json header;
  header["config"] = {{"visual_dim", model.config.visual_dim},
                      {"audio_dim", model.config.audio_dim},
                      {"hidden", model.config.hidden},
                      {"heads", model.config.heads},
                      {"temporal", temporal_type_name(model.config.temporal)},
                      {"fusion", fusion_mode_name(model.config.fusion)},
                      {"semantic", semantic_mode_name(model.config.semantic)}};
  header["epoch"] = epoch;
  header["step"] = step;
  auto& tensors = header["tensors"] = nlohmann::json::array();
  for (const auto& [name, t] : params) {
    tensors.push_back({{"name", name}, {"shape", t->shape()}});
  }
  if (model.config.semantic == SemanticMode::prototype) {
    if (!model.semantic.prototypes) {
      throw std::logic_error("save_checkpoint: prototype mode without a prototype matrix");
    }
    header["prototypes"] = {{"dim", model.semantic.prototypes->dim},
                            {"digest", model.semantic.prototypes->source_digest}};
  }
  const std::string json_text = header.dump();

  const std::string p = path.string();
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error(p + ": cannot open for writing");
  os.write("VACK", 4);
  binio::write_u32(os, kCheckpointVersion);
  binio::write_u32(os, static_cast<std::uint32_t>(json_text.size()));
  os.write(json_text.data(), static_cast<std::streamsize>(json_text.size()));
  for (const auto& [name, t] : params) {
    const auto d = t->data();
    os.write(reinterpret_cast<const char*>(d.data()),
             static_cast<std::streamsize>(d.size() * sizeof(double)));
  }
  if (model.semantic.prototypes) {
    const auto& raw = model.semantic.prototypes->raw;
    os.write(reinterpret_cast<const char*>(raw.data()),
             static_cast<std::streamsize>(raw.size() * sizeof(float)));
  }
  if (!os) throw std::runtime_error(p + ": write failed");
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string p = path.string();
  std::ifstream is(p, std::ios::binary);
  if (!is) throw std::runtime_error(p + ": cannot open");
  binio::expect_magic(is, "VACK", p);
  const auto version = binio::read_u32(is, "version");
  if (version != kCheckpointVersion) {
    throw std::runtime_error(p + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto json_len = binio::read_u32(is, "header length");
  std::string json_text(json_len, '\0');
  if (!is.read(json_text.data(), static_cast<std::streamsize>(json_len))) {
    throw std::runtime_error(p + ": truncated checkpoint header");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(p + ": bad checkpoint header: " + e.what());
  }

  ModelConfig config;
  std::optional<PrototypeMatrix> protos;
  std::size_t proto_dim = 0;
  std::uint64_t proto_digest = 0;
  try {
    const auto& c = header.at("config");
    config.visual_dim = c.at("visual_dim").get<std::size_t>();
    config.audio_dim = c.at("audio_dim").get<std::size_t>();
    config.hidden = c.at("hidden").get<std::size_t>();
    config.heads = c.at("heads").get<std::size_t>();
    config.temporal = parse_temporal_type(c.at("temporal").get<std::string>());
    config.fusion = parse_fusion_mode(c.at("fusion").get<std::string>());
    config.semantic = parse_semantic_mode(c.at("semantic").get<std::string>());
    if (header.contains("prototypes")) {
      proto_dim = header.at("prototypes").at("dim").get<std::size_t>();
      proto_digest = header.at("prototypes").at("digest").get<std::uint64_t>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(p + ": bad checkpoint header: " + e.what());
  }
  if (config.semantic == SemanticMode::prototype) {
    if (proto_dim == 0) throw std::runtime_error(p + ": prototype mode without prototype data");
    // The raw payload sits after the tensor block; read it first by seeking.
    const auto tensor_start = is.tellg();
    std::uint64_t tensor_bytes = 0;
    for (const auto& t : header.at("tensors")) {
      std::uint64_t n = 1;
      for (const auto& d : t.at("shape")) n *= d.get<std::uint64_t>();
      tensor_bytes += n * sizeof(double);
    }
    is.seekg(static_cast<std::streamoff>(tensor_bytes), std::ios::cur);
    std::vector<float> raw(9 * proto_dim);
    if (!is.read(reinterpret_cast<char*>(raw.data()),
                 static_cast<std::streamsize>(raw.size() * sizeof(float)))) {
      throw std::runtime_error(p + ": truncated prototype payload");
    }
    protos = prototypes_from_raw(proto_dim, std::move(raw), proto_digest);
    is.seekg(tensor_start);
  }

  Rng rng(0);
  LoadedCheckpoint out{Model::init(rng, config, std::move(protos)),
                       header.value("epoch", std::uint64_t{0}),
                       header.value("step", std::uint64_t{0})};

  auto params = out.model.named_parameters();
  const auto& tensors = header.at("tensors");
  if (tensors.size() != params.size()) {
    throw std::runtime_error(p + ": checkpoint lists " + std::to_string(tensors.size()) +
                             " tensors, model has " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto name = tensors[i].at("name").get<std::string>();
    if (name != params[i].first) {
      throw std::runtime_error(p + ": tensor " + std::to_string(i) + " is '" + name +
                               "', expected '" + params[i].first + "'");
    }
    Shape shape;
    for (const auto& d : tensors[i].at("shape")) shape.push_back(d.get<std::size_t>());
    if (shape != params[i].second->shape()) {
      throw std::runtime_error(p + ": tensor '" + name + "' shape mismatch: file " +
                               shape_str(shape) + ", model " +
                               shape_str(params[i].second->shape()));
    }
    auto dst = params[i].second->mut_data();
    if (!is.read(reinterpret_cast<char*>(dst.data()),
                 static_cast<std::streamsize>(dst.size() * sizeof(double)))) {
      throw std::runtime_error(p + ": truncated payload at tensor '" + name + "'");
    }
  }
  return out;
}

}  // namespace vaest
