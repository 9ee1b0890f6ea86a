#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "sdlab/linalg.hpp"
#include "sdlab/model.hpp"

namespace sdlab {

struct SparseCode {
  struct Entry {
    std::size_t atom;
    double value;
  };

  std::size_t p = 0;
  // For MP the vector order is the selection order and duplicate atoms are
  // permitted; shallow encoders emit entries in ascending atom order.
  std::vector<Entry> active;

  /// Length-p materialization; duplicate atoms sum.
  Vec dense() const;

  /// Deduplicated, ascending active indices.
  std::vector<std::size_t> support() const;
};

struct InferenceTrace {
  // residual_norms[0] = ||r^(0)||, then one entry per executed step.
  Vec residual_norms;
  // Optional: xhat^(0) .. xhat^(T).
  std::vector<Vec> partial_reconstructions;
};

SparseCode encode_relu(const Dictionary& dict, const Vec& x);
SparseCode encode_jumprelu(const Dictionary& dict, const Vec& x);
SparseCode encode_topk(const Dictionary& dict, const Vec& x, std::size_t k);

/// Batch-pooled TopK: the k*B largest strictly-positive post-ReLU
/// pre-activations across the whole batch (ties: lower sample, lower atom).
std::vector<SparseCode> encode_batchtopk(const Dictionary& dict, const Matrix& x_batch,
                                         std::size_t k);

struct MpOptions {
  bool abs_argmax = false;       // default: signed argmax
  bool record_partials = false;  // keep xhat^(0..T) in the trace
};

/// Matching-Pursuit inference: T greedy residual-peeling steps.
/// Early exit when ||r|| < 1e-12; remaining steps emit nothing.
std::pair<SparseCode, InferenceTrace> encode_mp(const Dictionary& dict, const Vec& x,
                                                std::size_t t_steps, const MpOptions& opt = {});

/// D * dense(z) + b_pre.
Vec decode(const Dictionary& dict, const SparseCode& z);

/// Dispatch on cfg.variant; BatchTopK sees the whole batch, the rest are per-sample.
std::vector<SparseCode> encode_batch(const Dictionary& dict, const EncoderConfig& cfg,
                                     const Matrix& x_batch);

}  // namespace sdlab
