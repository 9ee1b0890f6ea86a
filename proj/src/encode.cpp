#include "sdlab/encode.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "eigen_map.hpp"
#include "sdlab/errors.hpp"

namespace sdlab {

namespace {

constexpr double kEarlyExitNorm = 1e-12;

void check_input(const Dictionary& dict, const Vec& x) {
  if (x.size() != dict.m) {
    throw ValidationError("encode: input has length " + std::to_string(x.size()) +
                          ", dictionary expects " + std::to_string(dict.m));
  }
}

// u = W^T (x - b_pre) + b
Vec preactivations(const Dictionary& dict, const Vec& x) {
  if (!dict.encoder_weights || !dict.encoder_bias) {
    throw ValidationError("encode: variant requires encoder weights");
  }
  Vec centered(dict.m);
  for (std::size_t i = 0; i < dict.m; ++i) centered[i] = x[i] - dict.b_pre[i];
  Vec u(dict.p);
  emap(u).noalias() = emap(*dict.encoder_weights).transpose() * emap(centered);
  for (std::size_t j = 0; j < dict.p; ++j) u[j] += (*dict.encoder_bias)[j];
  return u;
}

}  // namespace

Vec SparseCode::dense() const {
  Vec z(p, 0.0);
  for (const auto& e : active) z[e.atom] += e.value;
  return z;
}

std::vector<std::size_t> SparseCode::support() const {
  std::vector<std::size_t> idx;
  idx.reserve(active.size());
  for (const auto& e : active) idx.push_back(e.atom);
  std::sort(idx.begin(), idx.end());
  idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
  return idx;
}

SparseCode encode_relu(const Dictionary& dict, const Vec& x) {
  check_input(dict, x);
  const Vec u = preactivations(dict, x);
  SparseCode code;
  code.p = dict.p;
  for (std::size_t j = 0; j < dict.p; ++j) {
    if (u[j] > 0.0) code.active.push_back({j, u[j]});
  }
  return code;
}

SparseCode encode_jumprelu(const Dictionary& dict, const Vec& x) {
  check_input(dict, x);
  if (!dict.thresholds) throw ValidationError("encode_jumprelu: missing thresholds");
  const Vec u = preactivations(dict, x);
  SparseCode code;
  code.p = dict.p;
  for (std::size_t j = 0; j < dict.p; ++j) {
    if (u[j] > (*dict.thresholds)[j]) code.active.push_back({j, u[j]});
  }
  return code;
}

SparseCode encode_topk(const Dictionary& dict, const Vec& x, std::size_t k) {
  check_input(dict, x);
  if (k < 1) throw ValidationError("encode_topk: k must be >= 1");
  const Vec u = preactivations(dict, x);
  std::vector<std::size_t> pos;
  for (std::size_t j = 0; j < dict.p; ++j) {
    if (u[j] > 0.0) pos.push_back(j);
  }
  // k largest positives; ties broken by lower index.
  const std::size_t keep = std::min(k, pos.size());
  std::partial_sort(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(keep), pos.end(),
                    [&u](std::size_t a, std::size_t b) {
                      if (u[a] != u[b]) return u[a] > u[b];
                      return a < b;
                    });
  pos.resize(keep);
  std::sort(pos.begin(), pos.end());
  SparseCode code;
  code.p = dict.p;
  for (std::size_t j : pos) code.active.push_back({j, u[j]});
  return code;
}

std::vector<SparseCode> encode_batchtopk(const Dictionary& dict, const Matrix& x_batch,
                                         std::size_t k) {
  if (x_batch.rows == 0) throw ValidationError("encode_batchtopk: empty batch");
  if (x_batch.cols != dict.m) {
    throw ValidationError("encode_batchtopk: batch dim " + std::to_string(x_batch.cols) +
                          " does not match dictionary m = " + std::to_string(dict.m));
  }
  if (k < 1) throw ValidationError("encode_batchtopk: k must be >= 1");

  const std::size_t b = x_batch.rows;
  struct Cand {
    double value;
    std::size_t sample;
    std::size_t atom;
  };
  std::vector<Cand> cands;
  std::vector<Vec> us(b);
  for (std::size_t i = 0; i < b; ++i) {
    Vec x(x_batch.row_ptr(i), x_batch.row_ptr(i) + x_batch.cols);
    us[i] = preactivations(dict, x);
    for (std::size_t j = 0; j < dict.p; ++j) {
      if (us[i][j] > 0.0) cands.push_back({us[i][j], i, j});
    }
  }
  const std::size_t budget = std::min(k * b, cands.size());
  std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(budget),
                    cands.end(), [](const Cand& a, const Cand& c) {
                      if (a.value != c.value) return a.value > c.value;
                      if (a.sample != c.sample) return a.sample < c.sample;
                      return a.atom < c.atom;
                    });
  cands.resize(budget);

  std::vector<SparseCode> codes(b);
  for (auto& code : codes) code.p = dict.p;
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& c) {
    if (a.sample != c.sample) return a.sample < c.sample;
    return a.atom < c.atom;
  });
  for (const auto& c : cands) codes[c.sample].active.push_back({c.atom, c.value});
  return codes;
}

std::pair<SparseCode, InferenceTrace> encode_mp(const Dictionary& dict, const Vec& x,
                                                std::size_t t_steps, const MpOptions& opt) {
  check_input(dict, x);

  Vec r(dict.m);
  for (std::size_t i = 0; i < dict.m; ++i) r[i] = x[i] - dict.b_pre[i];

  SparseCode code;
  code.p = dict.p;
  InferenceTrace trace;
  trace.residual_norms.push_back(norm2(r));
  Vec xhat;
  if (opt.record_partials) {
    xhat = dict.b_pre;
    trace.partial_reconstructions.push_back(xhat);
  }

  Vec corr(dict.p);
  auto dmap = emap(dict.d);
  for (std::size_t t = 0; t < t_steps; ++t) {
    if (trace.residual_norms.back() < kEarlyExitNorm) break;

    emap(corr).noalias() = dmap.transpose() * emap(r);
    std::size_t best = 0;
    double best_score = opt.abs_argmax ? std::abs(corr[0]) : corr[0];
    for (std::size_t j = 1; j < dict.p; ++j) {
      const double s = opt.abs_argmax ? std::abs(corr[j]) : corr[j];
      if (s > best_score) {  // strict: ties keep the lowest index
        best_score = s;
        best = j;
      }
    }
    const double z = corr[best];
    for (std::size_t i = 0; i < dict.m; ++i) r[i] -= z * dict.d(i, best);
    code.active.push_back({best, z});
    trace.residual_norms.push_back(norm2(r));
    if (opt.record_partials) {
      for (std::size_t i = 0; i < dict.m; ++i) xhat[i] += z * dict.d(i, best);
      trace.partial_reconstructions.push_back(xhat);
    }
  }
  return {std::move(code), std::move(trace)};
}

Vec decode(const Dictionary& dict, const SparseCode& z) {
  if (z.p != dict.p) {
    throw ValidationError("decode: code length " + std::to_string(z.p) +
                          " does not match dictionary p = " + std::to_string(dict.p));
  }
  Vec xhat = dict.b_pre;
  for (const auto& e : z.active) {
    for (std::size_t i = 0; i < dict.m; ++i) xhat[i] += e.value * dict.d(i, e.atom);
  }
  return xhat;
}

std::vector<SparseCode> encode_batch(const Dictionary& dict, const EncoderConfig& cfg,
                                     const Matrix& x_batch) {
  if (cfg.variant == EncoderVariant::BatchTopK) {
    return encode_batchtopk(dict, x_batch, cfg.k);
  }
  std::vector<SparseCode> codes;
  codes.reserve(x_batch.rows);
  MpOptions mp_opt{.abs_argmax = cfg.mp_abs_argmax, .record_partials = false};
  for (std::size_t i = 0; i < x_batch.rows; ++i) {
    Vec x(x_batch.row_ptr(i), x_batch.row_ptr(i) + x_batch.cols);
    switch (cfg.variant) {
      case EncoderVariant::ReLU: codes.push_back(encode_relu(dict, x)); break;
      case EncoderVariant::JumpReLU: codes.push_back(encode_jumprelu(dict, x)); break;
      case EncoderVariant::TopK: codes.push_back(encode_topk(dict, x, cfg.k)); break;
      case EncoderVariant::MP:
        codes.push_back(encode_mp(dict, x, cfg.k, mp_opt).first);
        break;
      case EncoderVariant::BatchTopK: break;  // handled above
    }
  }
  return codes;
}

}  // namespace sdlab
