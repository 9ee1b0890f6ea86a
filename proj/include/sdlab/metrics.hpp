#pragma once

#include <cstddef>
#include <vector>

#include "sdlab/encode.hpp"
#include "sdlab/linalg.hpp"
#include "sdlab/model.hpp"

namespace sdlab {

/// 1 - sum_i ||x_i - xhat_i||^2 / sum_i ||x_i - xbar||^2 with the batch mean
/// as baseline (global ratio, not per-sample averaged).
double r_squared(const Matrix& x, const Matrix& xhat);

/// max_{i != j} |D_i^T D_j| over unit-norm columns.
double mutual_coherence(const Matrix& d);

/// Babel function mu_1(r): per column j, sum of the r largest off-diagonal
/// |Gram| entries; max over j. Equals the subset-max definition.
double babel(const Matrix& d, std::size_t r);

struct BabelCurve {
  std::vector<std::size_t> orders;
  Vec values;
};

BabelCurve babel_curve(const Matrix& d, const std::vector<std::size_t>& orders);

struct CoactBabelSummary {
  double mean = 0.0;
  double max = 0.0;
  double q5 = 0.0, q25 = 0.0, q50 = 0.0, q75 = 0.0, q95 = 0.0;
  std::size_t used = 0;
  std::size_t skipped = 0;
};

/// Restricted Babel mu_1(r) of D[:, S] per sample (S = deduplicated active
/// set); samples with |S| <= r are skipped and counted.
CoactBabelSummary coactivation_babel(const std::vector<SparseCode>& codes, const Matrix& d,
                                     std::size_t r);

/// Same, but with per-sample order r = |S| - 1 (samples with |S| < 2 skipped).
CoactBabelSummary coactivation_babel_adaptive(const std::vector<SparseCode>& codes,
                                              const Matrix& d);

struct ActivationStats {
  Vec freq;                    // fraction of samples with atom in the active set
  Vec mean_value;              // E[z_j] over all samples (zeros included)
  Vec mean_value_when_active;  // E[z_j | active]; 0 when never active
  Vec mean_selection_step;     // mean 1-based selection step; NaN when never selected
};

/// selection_ordered: codes carry a real selection order (MP). Otherwise the
/// per-sample step is simulated by ranking active atoms by descending value.
ActivationStats activation_stats(const std::vector<SparseCode>& codes, std::size_t p,
                                 bool selection_ordered);

/// Mean ||x - xhat||^2 at inference sparsity k for k = 1..k_max.
/// MP prefixes come from a single T = k_max trace; ReLU/JumpReLU are constant.
Vec residual_curve(const Dictionary& dict, const EncoderConfig& cfg, const Matrix& x,
                   std::size_t k_max);

}  // namespace sdlab
