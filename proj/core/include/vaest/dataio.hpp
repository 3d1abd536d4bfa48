#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "vaest/label_space.hpp"
#include "vaest/rng.hpp"
#include "vaest/tensor.hpp"

namespace vaest {

// Raw per-modality features at a fixed rate. Stored in 32-bit precision so
// file round trips are bit-exact; widened to f64 tensors at use.
struct FeatureSequence {
  double rate = 0.0;      // rows per second
  std::size_t dim = 0;
  std::vector<float> data;  // frames x dim, row-major

  std::size_t frames() const { return dim == 0 ? 0 : data.size() / dim; }
  double duration_sec() const { return rate > 0.0 ? static_cast<double>(frames()) / rate : 0.0; }
};

struct SequenceRecord {
  std::string id;
  FeatureSequence visual;
  FeatureSequence audio;
  std::vector<VAPoint> labels;  // one per visual frame

  double duration_sec() const { return visual.duration_sec(); }
  void validate() const;  // throws std::invalid_argument on violation
};

struct WindowSample {
  std::string sequence_id;
  double start_sec = 0.0;
  std::vector<std::size_t> frame_indices;  // absolute visual frame, strictly increasing
  TensorPtr visual;                        // frames_per_window x D_v
  TensorPtr audio;                         // ceil(window * r_a) x D_a
  std::vector<VAPoint> targets;
  std::vector<SoftLabel> soft_targets;     // filled when a grid is supplied
};

inline constexpr std::size_t kFramesPerWindow = 20;

// Uniformly spaced indices into [0, available-1]: idx_i = round(i*(N-1)/(count-1)).
// Indices repeat when fewer frames are available than requested.
std::vector<std::size_t> sample_frames(std::size_t available, std::size_t count = kFramesPerWindow);

// Sliding windows at the given stride; windows never extend past the sequence.
// A sequence shorter than one window yields an empty list (with a warning on
// stderr). Soft labels are populated when `grid` is non-null.
std::vector<WindowSample> slice_windows(const SequenceRecord& record, double window_sec = 10.0,
                                        double stride_sec = 3.0,
                                        const GridConfig* grid = nullptr);

FeatureSequence read_feature_file(const std::filesystem::path& path);
void write_feature_file(const std::filesystem::path& path, const FeatureSequence& seq);

std::vector<VAPoint> read_labels_csv(const std::filesystem::path& path);
void write_labels_csv(const std::filesystem::path& path, std::span<const VAPoint> labels);

// Writes one VAFS file per modality, a labels CSV per sequence, and a
// manifest.json listing them; returns the manifest path.
std::filesystem::path save_dataset(const std::filesystem::path& dir,
                                   std::span<const SequenceRecord> records);
std::vector<SequenceRecord> load_dataset(const std::filesystem::path& manifest_path);

struct SynthConfig {
  std::size_t sequences = 4;
  double duration_sec = 30.0;
  double visual_rate = 6.0;
  double audio_rate = 10.0;
  std::size_t visual_dim = 512;
  std::size_t audio_dim = 768;
  double theta = 0.5;          // mean-reversion rate of the latent walk
  double eta = 0.5;            // diffusion scale of the latent walk
  double feature_noise = 0.05;
  double signal_scale = 1.0;   // 0 severs the feature-label link (noise control)
  std::uint64_t seed = 1;

  void validate() const;
};

// Mean-reverting latent walk toward the origin, clamped to [-1, 1]^2.
std::vector<VAPoint> ou_trajectory(Rng& rng, std::size_t steps, double dt, double theta,
                                   double eta, VAPoint start);

// Synthetic stand-in for frozen visual/audio backbones: features are a fixed
// seeded nonlinear map of the latent VA trajectory, labels are the trajectory.
std::vector<SequenceRecord> synth_generate(const SynthConfig& config);

}  // namespace vaest
