#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sdlab/linalg.hpp"
#include "sdlab/model.hpp"

namespace sdlab {

struct Dataset {
  Matrix samples;  // n x m, one sample per row
  Vec mean;        // column mean, length m
  std::string source;

  std::size_t n() const { return samples.rows; }
  std::size_t dim() const { return samples.cols; }
};

Vec column_mean(const Matrix& samples);

struct MnistData {
  Dataset data;
  std::vector<std::uint8_t> labels;
};

/// Big-endian IDX pair (image magic 2051, label magic 2049); pixels scaled to
/// [0, 1]. Labels are returned for stratified subsetting only.
MnistData load_mnist_idx(const std::filesystem::path& images_path,
                         const std::filesystem::path& labels_path);

enum class CoherenceMode { Orthogonal, Random, Block };

struct SyntheticSpec {
  std::size_t m = 16;
  std::size_t p_true = 32;
  std::size_t k_true = 3;
  std::size_t n = 1000;
  CoherenceMode mode = CoherenceMode::Random;
  std::size_t block_size = 0;
  double within_block_coherence = 0.0;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
};

struct SyntheticData {
  Dataset data;
  Matrix dict_true;   // m x p_true, unit-norm columns
  Matrix codes_true;  // n x p_true, k_true-sparse nonnegative rows
};

SyntheticData generate_synthetic(const SyntheticSpec& spec);

/// Activation container ("SDLACTS1", single array "X", f32 upcast to f64).
Dataset load_activation_matrix(const std::filesystem::path& path);
void save_activation_matrix(const Matrix& x, const std::filesystem::path& path);

struct RecoveryScore {
  double matched_fraction = 0.0;
  double mean_best_cosine = 0.0;
};

/// Greedy one-to-one matching on |cosine|, highest first; matched fraction is
/// the share of true atoms paired at |cosine| >= threshold.
RecoveryScore recovery_score(const Matrix& d_learned, const Matrix& d_true, double threshold);

}  // namespace sdlab
