#ifndef DSPL_DATA_HPP_
#define DSPL_DATA_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dspl/tensor.hpp"

namespace dspl {

struct Sample {
  std::int64_t sample_id = 0;
  std::int64_t identity_id = 0;
  int camera_id = 0;
  Tensor payload;
  bool is_outlier = false;
};

struct Dataset {
  std::string name = "synthetic";
  Dims payload_dims;
  std::vector<Sample> samples;

  /// "vector" for rank-1 payloads, "image" otherwise.
  std::string mode() const { return payload_dims.size() == 1 ? "vector" : "image"; }
  std::vector<std::int64_t> identities() const;  // sorted, unique
  std::size_t outlier_count() const;
  /// Position of `sample_id` in `samples`, or npos.
  std::size_t find(std::int64_t sample_id) const;
  void validate() const;

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

struct SyntheticConfig {
  std::string name = "synthetic";
  std::size_t identities = 40;
  std::size_t samples_per_camera = 4;
  std::size_t latent_dim = 8;
  Dims payload_dims{32};
  std::array<std::uint64_t, 2> camera_seeds{101, 202};
  /// Size of the camera-specific part of each view transform.
  double view_shift = 0.5;
  double noise = 0.1;
  double outlier_fraction = 0.0;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Identity latents pushed through per-camera affine maps plus Gaussian noise.
/// Exactly floor(p * N) samples become outliers: their payload is drawn from
/// another identity's distribution with 5x the noise.
Dataset generate_synthetic(const SyntheticConfig& cfg);

struct Split {
  Dataset train;
  Dataset test;
};

/// Partitions identities (not samples) into train and test sets.
Split split_zero_shot(const Dataset& dataset, double train_fraction, std::uint64_t seed);

/// Indices into Dataset::samples.
struct Triplet {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;

  bool operator==(const Triplet&) const = default;
  auto operator<=>(const Triplet&) const = default;
};

struct TripletBatch {
  std::vector<Triplet> triplets;
  std::vector<double> weights;  // u, one per triplet
};

TripletBatch sample_triplets(const Dataset& train, std::size_t anchors_per_batch,
                             std::size_t triplets_per_anchor, std::uint64_t seed,
                             std::uint64_t batch_index);

bool is_valid_triplet(const Dataset& ds, const Triplet& t);
bool is_outlier_triplet(const Dataset& ds, const Triplet& t);

/// Directory with manifest.json and a pooled payloads.dspt.
void save_dataset(const std::filesystem::path& dir, const Dataset& ds);
void save_dataset_csv(const std::filesystem::path& file, const Dataset& ds);
/// Accepts a dataset directory or a vector-mode CSV file.
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace dspl

#endif  // DSPL_DATA_HPP_
