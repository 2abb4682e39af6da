#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <variant>
#include <vector>

#include "falsecl/numerics.hpp"

namespace falsecl {

using Rng = std::mt19937_64;

/// Deterministic 64-bit mixer used to derive independent stream seeds.
std::uint64_t splitmix64(std::uint64_t x);

struct RasterShape {
  int h = 0;
  int w = 0;
  int channels = 0;

  int flat_size() const { return h * w * channels; }
  bool operator==(const RasterShape&) const = default;
};

/// Gaussian blobs around class centers drawn uniformly on a sphere.
struct ClusterSpec {
  int n_per_class = 64;
  int classes = 8;
  int d_in = 32;
  double class_sep = 5.0;
  double intra_sigma = 1.0;

  bool operator==(const ClusterSpec&) const = default;
};

/// Procedural sinusoidal textures, one (frequency, phase) pattern per class
/// and channel, plus pixel noise.
struct RasterSpec {
  int n_per_class = 64;
  int classes = 8;
  RasterShape shape{8, 8, 1};
  double noise_sigma = 0.5;

  bool operator==(const RasterSpec&) const = default;
};

enum class DataMode { kVector, kRaster };

struct LabeledDataset {
  DataMode mode = DataMode::kVector;
  Matrix samples;                    // n x d_in
  std::vector<std::int32_t> labels;  // hidden from training; eval oracle only
  int classes = 0;
  std::uint64_t seed = 0;         // class structure (centers / textures)
  std::uint64_t sample_seed = 0;  // per-sample noise
  std::variant<ClusterSpec, RasterSpec> origin;

  Eigen::Index size() const { return samples.rows(); }
  Eigen::Index dim() const { return samples.cols(); }
  std::optional<RasterShape> raster() const;
};

/// Throws BadConfig. Class centers come from `seed`; sample noise from
/// `sample_seed` (defaults to `seed`). Two calls sharing `seed` but not
/// `sample_seed` give fresh draws from the same class distribution.
LabeledDataset generate_cluster_dataset(const ClusterSpec& spec, std::uint64_t seed,
                                        std::optional<std::uint64_t> sample_seed = std::nullopt);

LabeledDataset generate_raster_dataset(const RasterSpec& spec, std::uint64_t texture_seed,
                                       std::optional<std::uint64_t> sample_seed = std::nullopt);

/// Regenerates `ds` with the same class structure and new per-sample noise,
/// with `size_multiplier` times as many samples per class.
LabeledDataset regenerate_held_out(const LabeledDataset& ds, std::uint64_t sample_seed,
                                   int size_multiplier = 1);

struct AugmentConfig {
  double noise_sigma = 0.0;
  double scale_min = 1.0;
  double scale_max = 1.0;
  double mask_prob = 0.0;
  // Raster-only; ignored unless `raster` is set.
  double flip_prob = 0.0;
  double crop_fraction = 1.0;
  double channel_jitter_sigma = 0.0;
  std::optional<RasterShape> raster;

  /// Throws BadConfig when a field is out of range.
  void validate() const;

  /// Moderate augmentation for the synthetic datasets.
  static AugmentConfig toy_defaults(std::optional<RasterShape> raster = std::nullopt);
};

/// Two augmented views per source row. Views 2k and 2k+1 come from source k.
struct ViewBatch {
  Matrix views;
  std::vector<std::size_t> source_of;
  std::vector<std::size_t> positive_of;

  std::size_t n_views() const { return source_of.size(); }
};

/// Interleaved pairing maps for `n_sources` sources: positive_of = {0<->1, 2<->3, ...}.
std::vector<std::size_t> interleaved_positive_map(std::size_t n_sources);

ViewBatch augment_two_views(const Matrix& batch_samples, const AugmentConfig& cfg, Rng& rng);

/// Shuffled partition of [0, n_samples) into batches of `batch_size`; a
/// trailing batch with fewer than 2 samples is dropped.
std::vector<std::vector<std::size_t>> make_epoch_batches(std::size_t n_samples,
                                                         std::size_t batch_size, Rng& rng);

Matrix gather_rows(const Matrix& m, const std::vector<std::size_t>& rows);

/// FALSE-DS v1 file: "FALSE-DS v1\n", one-line JSON header, "\n", then
/// n*d_in little-endian float64 (row-major) and n little-endian int32 labels.
void save_dataset(const LabeledDataset& ds, const std::filesystem::path& path);
LabeledDataset load_dataset(const std::filesystem::path& path);

}  // namespace falsecl
