#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "sdlab/linalg.hpp"
#include "sdlab/model.hpp"

namespace sdlab {

struct LossBreakdown {
  double recon = 0.0;             // (1/B) sum ||x - xhat||^2
  double sparsity_penalty = 0.0;  // lambda * R(z) term
  double aux = 0.0;               // alpha * L_aux term
  double total = 0.0;             // recon + sparsity_penalty + aux
  double l0 = 0.0;                // mean deduplicated active count
};

struct GradientSet {
  Matrix d_d;
  Vec d_b_pre;
  std::optional<Matrix> d_w;
  std::optional<Vec> d_b;
  std::optional<Vec> d_theta;
};

/// Forward pass + exact reverse-mode gradients of the total loss.
/// MP differentiates the full unrolled graph with frozen selection indices
/// (cfg.detach_residual switches to the decode-only cheap path). dead_atoms
/// feeds the auxiliary loss; empty -> aux = 0. Pass grads = nullptr for a
/// loss-only evaluation (the finite-difference oracle uses this).
LossBreakdown loss_and_gradients(const Dictionary& dict, const EncoderConfig& cfg,
                                 const Matrix& batch, GradientSet* grads,
                                 std::span<const std::size_t> dead_atoms = {});

struct LrSchedule {
  double lr_init = 5e-4;
  double lr_final = 1e-6;
  std::size_t warmup_steps = 0;
  std::size_t total_steps = 1;
};

/// Linear warmup 0 -> lr_init over warmup_steps, cosine to lr_final at
/// total_steps, clamped at lr_final beyond.
double lr_at(std::size_t step, const LrSchedule& schedule);

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainState {
  Matrix m_d, v_d;
  Vec m_b_pre, v_b_pre;
  std::optional<Matrix> m_w, v_w;
  std::optional<Vec> m_b, v_b;
  std::optional<Vec> m_theta, v_theta;
  std::size_t step = 0;
  std::vector<std::size_t> usage;  // steps since atom was last active
  LrSchedule schedule;

  static TrainState init(const Dictionary& dict, const LrSchedule& schedule);
  std::vector<std::size_t> dead_atoms(std::size_t threshold) const;
};

/// One Adam update with bias correction at lr_at(state.step + 1), then
/// decoder column renormalization and threshold clamping to >= 0.
void adam_step(TrainState& state, Dictionary& dict, const GradientSet& grads,
               const AdamHyper& hyper, bool freeze_b_pre = false);

struct TrainLogRow {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double lr = 0.0;
  LossBreakdown loss;
  std::size_t dead_atoms = 0;
};

struct TrainOptions {
  std::size_t epochs = 50;
  std::size_t batch_size = 256;
  std::uint64_t seed = 0;
  AdamHyper adam;
  // warmup/total default to one epoch / the whole run when left at 0.
  std::size_t warmup_steps = 0;
  std::size_t total_steps = 0;
  double lr_init = 5e-4;
  double lr_final = 1e-6;
  std::size_t log_every = 1;
  std::ostream* progress = nullptr;
};

std::vector<TrainLogRow> train(Dictionary& dict, const EncoderConfig& cfg, const Matrix& data,
                               const TrainOptions& opt);

void write_train_log_csv(const std::vector<TrainLogRow>& log, const std::filesystem::path& path);

}  // namespace sdlab
