#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sdlab/linalg.hpp"
#include "sdlab/rng.hpp"

namespace sdlab {

enum class EncoderVariant { ReLU, JumpReLU, TopK, BatchTopK, MP };

const char* variant_name(EncoderVariant v);
std::optional<EncoderVariant> variant_from_name(std::string_view name);

/// True for the shallow variants, which carry an untied encoder (W, b).
bool variant_has_encoder(EncoderVariant v);

struct EncoderConfig {
  EncoderVariant variant = EncoderVariant::TopK;
  std::size_t k = 10;          // target sparsity (TopK / BatchTopK / MP)
  double lambda = 0.0;         // l1 weight (ReLU)
  double target_l0 = 0.0;      // expected-L0 penalty weight (JumpReLU)
  double aux_alpha = 0.0;      // dead-atom auxiliary loss weight
  std::size_t aux_k = 0;       // 0 -> min(2k, p/2) at use sites
  std::size_t dead_steps_threshold = 100;
  double ste_bandwidth = 1e-3;  // JumpReLU straight-through kernel width

  // Experiment knobs (not persisted in checkpoints).
  bool mp_abs_argmax = false;    // Algorithm-1 signed argmax by default
  bool detach_residual = false;  // MP backprop through the full unrolled graph by default
  bool freeze_b_pre = false;

  /// Per-variant defaults: lambda/target_l0/aux_alpha for a fresh config.
  static EncoderConfig defaults_for(EncoderVariant v, std::size_t k);

  std::size_t effective_aux_k(std::size_t p) const;
  void validate(std::size_t p) const;
};

struct Dictionary {
  std::size_t m = 0;  // input dimension
  std::size_t p = 0;  // atom count
  Matrix d;           // m x p, unit-norm columns when normalized
  Vec b_pre;          // m
  std::optional<Matrix> encoder_weights;  // m x p (shallow variants)
  std::optional<Vec> encoder_bias;        // p
  std::optional<Vec> thresholds;          // p, JumpReLU only, each >= 0
};

/// Columns i.i.d. standard normal then l2-normalized; b_pre = data_mean;
/// W = D and b = 0 for shallow variants; thresholds = 1e-3 for JumpReLU.
Dictionary init_dictionary(std::size_t m, std::size_t p, Rng& rng, const Vec& data_mean,
                           EncoderVariant variant);

struct RenormReport {
  Vec old_norms;                          // per-column norms before scaling
  std::vector<std::size_t> degenerate;    // columns re-drawn as unit basis vectors
};

/// Scale every column of d to unit norm. Columns with norm < 1e-12 are replaced
/// by e_{j mod m} and reported.
RenormReport renormalize_columns(Dictionary& dict);

/// Largest |column norm - 1| over d's columns.
double max_norm_deviation(const Dictionary& dict);

struct CheckpointMeta {
  std::uint64_t seed = 0;
};

void save_checkpoint(const Dictionary& dict, const EncoderConfig& cfg, const CheckpointMeta& meta,
                     const std::filesystem::path& path);

struct Checkpoint {
  Dictionary dict;
  EncoderConfig cfg;
  CheckpointMeta meta;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace sdlab
