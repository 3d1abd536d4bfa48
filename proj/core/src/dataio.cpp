#include "vaest/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "binio.hpp"

namespace vaest {

namespace {

constexpr double kEps = 1e-9;

}  // namespace

void SequenceRecord::validate() const {
  if (visual.dim == 0 || visual.frames() == 0) {
    throw std::invalid_argument("sequence " + id + ": empty visual features");
  }
  if (audio.dim == 0 || audio.frames() == 0) {
    throw std::invalid_argument("sequence " + id + ": empty audio features");
  }
  if (!(visual.rate > 0.0) || !(audio.rate > 0.0)) {
    throw std::invalid_argument("sequence " + id + ": rates must be positive");
  }
  if (labels.size() != visual.frames()) {
    throw std::invalid_argument("sequence " + id + ": " + std::to_string(labels.size()) +
                                " labels for " + std::to_string(visual.frames()) +
                                " visual frames");
  }
  const double dv = visual.duration_sec(), da = audio.duration_sec();
  const double slack = 1.0 / std::min(visual.rate, audio.rate);
  if (std::fabs(dv - da) > slack + kEps) {
    throw std::invalid_argument("sequence " + id + ": modality durations disagree (" +
                                std::to_string(dv) + "s visual vs " + std::to_string(da) +
                                "s audio)");
  }
}

std::vector<std::size_t> sample_frames(std::size_t available, std::size_t count) {
  if (available == 0) throw std::invalid_argument("sample_frames: no frames available");
  if (count < 2) throw std::invalid_argument("sample_frames: count must be at least 2");
  std::vector<std::size_t> idx(count);
  const double span = static_cast<double>(available - 1);
  const double denom = static_cast<double>(count - 1);
  for (std::size_t i = 0; i < count; ++i) {
    idx[i] = static_cast<std::size_t>(std::llround(static_cast<double>(i) * span / denom));
  }
  return idx;
}

std::vector<WindowSample> slice_windows(const SequenceRecord& record, double window_sec,
                                        double stride_sec, const GridConfig* grid) {
  record.validate();
  if (!(window_sec > 0.0) || !(stride_sec > 0.0)) {
    throw std::invalid_argument("slice_windows: window and stride must be positive");
  }
  if (record.visual.rate * window_sec < static_cast<double>(kFramesPerWindow)) {
    throw std::invalid_argument("slice_windows: visual rate " +
                                std::to_string(record.visual.rate) +
                                " yields fewer than " + std::to_string(kFramesPerWindow) +
                                " frames per window");
  }
  if (grid) grid->validate();

  const double duration = record.duration_sec();
  std::vector<WindowSample> out;
  if (duration + kEps < window_sec) {
    std::cerr << "slice_windows: sequence " << record.id << " is " << duration
              << "s, shorter than one " << window_sec << "s window; skipping\n";
    return out;
  }

  const double r_v = record.visual.rate, r_a = record.audio.rate;
  const std::size_t t_v = record.visual.frames(), t_a = record.audio.frames();
  const std::size_t audio_rows = static_cast<std::size_t>(std::ceil(window_sec * r_a - kEps));
  const std::size_t d_v = record.visual.dim, d_a = record.audio.dim;

  for (std::size_t k = 0;; ++k) {
    const double start = static_cast<double>(k) * stride_sec;
    if (start + window_sec > duration + kEps) break;
    // Visual frames whose timestamp f/r_v lies in [start, start + window).
    const auto f0 = static_cast<std::size_t>(std::ceil(start * r_v - kEps));
    auto f1 = static_cast<std::size_t>(std::ceil((start + window_sec) * r_v - kEps));
    f1 = std::min(f1, t_v);  // exclusive
    const std::size_t avail = f1 - f0;

    WindowSample w;
    w.sequence_id = record.id;
    w.start_sec = start;
    w.frame_indices = sample_frames(avail, kFramesPerWindow);
    for (auto& f : w.frame_indices) f += f0;

    std::vector<float> vbuf(kFramesPerWindow * d_v);
    w.targets.reserve(kFramesPerWindow);
    for (std::size_t i = 0; i < kFramesPerWindow; ++i) {
      const std::size_t f = w.frame_indices[i];
      std::copy_n(record.visual.data.begin() + static_cast<std::ptrdiff_t>(f * d_v), d_v,
                  vbuf.begin() + static_cast<std::ptrdiff_t>(i * d_v));
      w.targets.push_back(record.labels[f]);
      if (grid) w.soft_targets.push_back(soft_label(record.labels[f], *grid));
    }
    w.visual = Tensor::widen(kFramesPerWindow, d_v, vbuf);

    // Audio rows covering [start, start + window); zero-padded past the tail.
    const auto a0 = static_cast<std::size_t>(std::floor(start * r_a + kEps));
    std::vector<float> abuf(audio_rows * d_a, 0.0f);
    for (std::size_t i = 0; i < audio_rows; ++i) {
      const std::size_t j = a0 + i;
      if (j >= t_a) break;
      std::copy_n(record.audio.data.begin() + static_cast<std::ptrdiff_t>(j * d_a), d_a,
                  abuf.begin() + static_cast<std::ptrdiff_t>(i * d_a));
    }
    w.audio = Tensor::widen(audio_rows, d_a, abuf);
    out.push_back(std::move(w));
  }
  return out;
}

FeatureSequence read_feature_file(const std::filesystem::path& path) {
  const std::string p = path.string();
  std::ifstream is(p, std::ios::binary);
  if (!is) throw std::runtime_error(p + ": cannot open");
  binio::expect_magic(is, "VAFS", p);
  const auto version = binio::read_u32(is, "version");
  if (version != 1) throw std::runtime_error(p + ": unsupported version " + std::to_string(version));
  const auto frames = binio::read_u32(is, "frame count");
  const auto dim = binio::read_u32(is, "dimension");
  const double rate = binio::read_f64(is, "rate");
  if (frames > 0 && dim == 0) throw std::runtime_error(p + ": zero dimension with nonzero frames");

  FeatureSequence seq;
  seq.rate = rate;
  seq.dim = dim;
  seq.data.resize(static_cast<std::size_t>(frames) * dim);
  const auto want = static_cast<std::streamsize>(seq.data.size() * sizeof(float));
  is.read(reinterpret_cast<char*>(seq.data.data()), want);
  if (is.gcount() != want) {
    throw std::runtime_error(p + ": truncated payload, expected " + std::to_string(want) +
                             " bytes after the 24-byte header, got " +
                             std::to_string(is.gcount()));
  }
  return seq;
}

void write_feature_file(const std::filesystem::path& path, const FeatureSequence& seq) {
  if (seq.dim == 0 && !seq.data.empty()) {
    throw std::invalid_argument(path.string() + ": zero dimension with nonempty data");
  }
  for (float v : seq.data) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument(path.string() + ": refusing to write non-finite feature");
    }
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error(path.string() + ": cannot open for writing");
  os.write("VAFS", 4);
  binio::write_u32(os, 1);
  binio::write_u32(os, static_cast<std::uint32_t>(seq.frames()));
  binio::write_u32(os, static_cast<std::uint32_t>(seq.dim));
  binio::write_f64(os, seq.rate);
  os.write(reinterpret_cast<const char*>(seq.data.data()),
           static_cast<std::streamsize>(seq.data.size() * sizeof(float)));
  if (!os) throw std::runtime_error(path.string() + ": write failed");
}

std::vector<VAPoint> read_labels_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error(path.string() + ": cannot open");
  std::vector<VAPoint> out;
  std::string line;
  bool header = true;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (header) {
      header = false;
      if (line.rfind("frame_index", 0) == 0) continue;  // header row optional
    }
    std::istringstream ss(line);
    std::string field;
    std::size_t idx = 0;
    VAPoint p;
    try {
      if (!std::getline(ss, field, ',')) throw std::invalid_argument("missing frame index");
      idx = std::stoul(field);
      if (!std::getline(ss, field, ',')) throw std::invalid_argument("missing valence");
      p.valence = std::stod(field);
      if (!std::getline(ss, field, ',')) throw std::invalid_argument("missing arousal");
      p.arousal = std::stod(field);
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": bad label row (" + e.what() + ")");
    }
    if (idx != out.size()) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": expected frame index " + std::to_string(out.size()) +
                               ", got " + std::to_string(idx));
    }
    out.push_back(p);
  }
  return out;
}

void write_labels_csv(const std::filesystem::path& path, std::span<const VAPoint> labels) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error(path.string() + ": cannot open for writing");
  os << "frame_index,valence,arousal\n";
  char buf[96];
  for (std::size_t i = 0; i < labels.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", i, labels[i].valence,
                  labels[i].arousal);
    os << buf;
  }
  if (!os) throw std::runtime_error(path.string() + ": write failed");
}

std::filesystem::path save_dataset(const std::filesystem::path& dir,
                                   std::span<const SequenceRecord> records) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest = nlohmann::json::array();
  for (const auto& rec : records) {
    rec.validate();
    const std::string v = rec.id + "_visual.vafs";
    const std::string a = rec.id + "_audio.vafs";
    const std::string l = rec.id + "_labels.csv";
    write_feature_file(dir / v, rec.visual);
    write_feature_file(dir / a, rec.audio);
    write_labels_csv(dir / l, rec.labels);
    manifest.push_back({{"id", rec.id}, {"visual", v}, {"audio", a}, {"labels", l}});
  }
  const auto manifest_path = dir / "manifest.json";
  std::ofstream os(manifest_path);
  if (!os) throw std::runtime_error(manifest_path.string() + ": cannot open for writing");
  os << manifest.dump(2) << "\n";
  return manifest_path;
}

std::vector<SequenceRecord> load_dataset(const std::filesystem::path& manifest_path) {
  std::ifstream is(manifest_path);
  if (!is) throw std::runtime_error(manifest_path.string() + ": cannot open");
  nlohmann::json manifest;
  try {
    is >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(manifest_path.string() + ": invalid manifest (" + e.what() + ")");
  }
  if (!manifest.is_array()) {
    throw std::runtime_error(manifest_path.string() + ": manifest must be a JSON array");
  }
  const auto base = manifest_path.parent_path();
  std::vector<SequenceRecord> out;
  for (const auto& entry : manifest) {
    SequenceRecord rec;
    try {
      rec.id = entry.at("id").get<std::string>();
      rec.visual = read_feature_file(base / entry.at("visual").get<std::string>());
      rec.audio = read_feature_file(base / entry.at("audio").get<std::string>());
      rec.labels = read_labels_csv(base / entry.at("labels").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(manifest_path.string() + ": bad manifest entry (" + e.what() +
                               ")");
    }
    rec.validate();
    out.push_back(std::move(rec));
  }
  return out;
}

void SynthConfig::validate() const {
  if (sequences == 0 || visual_dim == 0 || audio_dim == 0) {
    throw std::invalid_argument("synth: sequence count and dims must be positive");
  }
  if (!(duration_sec > 0.0) || !(visual_rate > 0.0) || !(audio_rate > 0.0)) {
    throw std::invalid_argument("synth: duration and rates must be positive");
  }
  if (!(theta >= 0.0) || !(eta >= 0.0) || !(feature_noise >= 0.0) || !(signal_scale >= 0.0)) {
    throw std::invalid_argument("synth: negative process parameter");
  }
}

std::vector<VAPoint> ou_trajectory(Rng& rng, std::size_t steps, double dt, double theta,
                                   double eta, VAPoint start) {
  std::vector<VAPoint> s(steps);
  const double sdt = std::sqrt(dt);
  VAPoint cur = start;
  for (std::size_t t = 0; t < steps; ++t) {
    s[t] = cur;
    cur.valence = std::clamp(cur.valence - theta * cur.valence * dt + eta * sdt * rng.normal(),
                             -1.0, 1.0);
    cur.arousal = std::clamp(cur.arousal - theta * cur.arousal * dt + eta * sdt * rng.normal(),
                             -1.0, 1.0);
  }
  return s;
}

std::vector<SequenceRecord> synth_generate(const SynthConfig& config) {
  config.validate();
  Rng rng(config.seed);

  // One fixed feature map per dataset, shared by all sequences.
  auto map_matrix = [&](std::size_t d) {
    std::vector<double> m(d * 2);
    for (auto& v : m) v = rng.uniform(-0.7, 0.7) * config.signal_scale;
    return m;
  };
  auto bias_vec = [&](std::size_t d) {
    std::vector<double> b(d);
    for (auto& v : b) v = rng.uniform(-0.1, 0.1);
    return b;
  };
  const auto a_v = map_matrix(config.visual_dim);
  const auto b_v = bias_vec(config.visual_dim);
  const auto a_a = map_matrix(config.audio_dim);
  const auto b_a = bias_vec(config.audio_dim);

  auto feature_row = [&](const std::vector<double>& a, const std::vector<double>& b,
                         std::size_t d, VAPoint s, std::vector<float>& out) {
    for (std::size_t i = 0; i < d; ++i) {
      const double clean = std::tanh(a[i * 2] * s.valence + a[i * 2 + 1] * s.arousal + b[i]);
      out.push_back(static_cast<float>(clean + config.feature_noise * rng.normal()));
    }
  };

  const auto t_v = static_cast<std::size_t>(std::floor(config.duration_sec * config.visual_rate + kEps));
  const auto t_a = static_cast<std::size_t>(std::floor(config.duration_sec * config.audio_rate + kEps));

  std::vector<SequenceRecord> out;
  out.reserve(config.sequences);
  for (std::size_t n = 0; n < config.sequences; ++n) {
    SequenceRecord rec;
    rec.id = "seq" + std::to_string(n);
    VAPoint start{rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)};
    auto traj = ou_trajectory(rng, t_v, 1.0 / config.visual_rate, config.theta, config.eta, start);

    rec.visual.rate = config.visual_rate;
    rec.visual.dim = config.visual_dim;
    rec.visual.data.reserve(t_v * config.visual_dim);
    for (const auto& s : traj) feature_row(a_v, b_v, config.visual_dim, s, rec.visual.data);

    rec.audio.rate = config.audio_rate;
    rec.audio.dim = config.audio_dim;
    rec.audio.data.reserve(t_a * config.audio_dim);
    for (std::size_t j = 0; j < t_a; ++j) {
      // Latent state at the audio timestamp, interpolated between visual frames.
      const double pos = (static_cast<double>(j) / config.audio_rate) * config.visual_rate;
      const auto i0 = std::min(static_cast<std::size_t>(pos), t_v - 1);
      const auto i1 = std::min(i0 + 1, t_v - 1);
      const double w = pos - static_cast<double>(i0);
      VAPoint s{(1.0 - w) * traj[i0].valence + w * traj[i1].valence,
                (1.0 - w) * traj[i0].arousal + w * traj[i1].arousal};
      feature_row(a_a, b_a, config.audio_dim, s, rec.audio.data);
    }

    rec.labels = std::move(traj);
    rec.validate();
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace vaest
