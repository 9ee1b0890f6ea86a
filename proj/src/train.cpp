#include "sdlab/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>

#include "eigen_map.hpp"
#include "sdlab/encode.hpp"
#include "sdlab/errors.hpp"
#include "sdlab/rng.hpp"

namespace sdlab {

namespace {

constexpr double kEarlyExitNorm = 1e-12;

struct AuxPick {
  std::size_t atom;
  double coeff;
};

// Top aux_k dead atoms ranked by coefficient (ties: lower atom index).
std::vector<AuxPick> pick_aux_atoms(const Vec& scores, std::span<const std::size_t> dead,
                                    std::size_t aux_k, bool require_positive) {
  std::vector<AuxPick> picks;
  for (std::size_t j : dead) {
    const double c = scores[j];
    if (require_positive && !(c > 0.0)) continue;
    picks.push_back({j, c});
  }
  const std::size_t keep = std::min(aux_k, picks.size());
  std::partial_sort(picks.begin(), picks.begin() + static_cast<std::ptrdiff_t>(keep), picks.end(),
                    [](const AuxPick& a, const AuxPick& b) {
                      if (a.coeff != b.coeff) return a.coeff > b.coeff;
                      return a.atom < b.atom;
                    });
  picks.resize(keep);
  return picks;
}

GradientSet make_gradients(const Dictionary& dict) {
  GradientSet g;
  g.d_d = Matrix(dict.m, dict.p);
  g.d_b_pre = Vec(dict.m, 0.0);
  if (dict.encoder_weights) g.d_w = Matrix(dict.m, dict.p);
  if (dict.encoder_bias) g.d_b = Vec(dict.p, 0.0);
  if (dict.thresholds) g.d_theta = Vec(dict.p, 0.0);
  return g;
}

LossBreakdown shallow_loss_and_gradients(const Dictionary& dict, const EncoderConfig& cfg,
                                         const Matrix& batch, GradientSet* grads,
                                         std::span<const std::size_t> dead,
                                         std::vector<std::uint8_t>* atom_active) {
  const std::size_t b = batch.rows, m = dict.m, p = dict.p;
  const Matrix& w = *dict.encoder_weights;
  const Vec& bias = *dict.encoder_bias;

  // Xc = X - b_pre, U = Xc W + b
  Matrix xc(b, m);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t l = 0; l < m; ++l) xc(i, l) = batch(i, l) - dict.b_pre[l];
  }
  Matrix u(b, p);
  emap(u).noalias() = emap(xc) * emap(w);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < p; ++j) u(i, j) += bias[j];
  }

  // Active mask and kept coefficients per variant.
  std::vector<std::uint8_t> mask(b * p, 0);
  Matrix z(b, p);
  std::size_t active_count = 0;
  switch (cfg.variant) {
    case EncoderVariant::ReLU:
      for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < p; ++j) {
          if (u(i, j) > 0.0) {
            mask[i * p + j] = 1;
            z(i, j) = u(i, j);
            ++active_count;
          }
        }
      }
      break;
    case EncoderVariant::JumpReLU: {
      const Vec& theta = *dict.thresholds;
      for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < p; ++j) {
          if (u(i, j) > theta[j]) {
            mask[i * p + j] = 1;
            z(i, j) = u(i, j);
            ++active_count;
          }
        }
      }
      break;
    }
    case EncoderVariant::TopK: {
      std::vector<std::size_t> pos;
      for (std::size_t i = 0; i < b; ++i) {
        pos.clear();
        for (std::size_t j = 0; j < p; ++j) {
          if (u(i, j) > 0.0) pos.push_back(j);
        }
        const std::size_t keep = std::min(cfg.k, pos.size());
        std::partial_sort(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(keep), pos.end(),
                          [&](std::size_t a, std::size_t c) {
                            if (u(i, a) != u(i, c)) return u(i, a) > u(i, c);
                            return a < c;
                          });
        for (std::size_t s = 0; s < keep; ++s) {
          mask[i * p + pos[s]] = 1;
          z(i, pos[s]) = u(i, pos[s]);
          ++active_count;
        }
      }
      break;
    }
    case EncoderVariant::BatchTopK: {
      struct Cand {
        double value;
        std::size_t sample, atom;
      };
      std::vector<Cand> cands;
      for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < p; ++j) {
          if (u(i, j) > 0.0) cands.push_back({u(i, j), i, j});
        }
      }
      const std::size_t budget = std::min(cfg.k * b, cands.size());
      std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(budget),
                        cands.end(), [](const Cand& a, const Cand& c) {
                          if (a.value != c.value) return a.value > c.value;
                          if (a.sample != c.sample) return a.sample < c.sample;
                          return a.atom < c.atom;
                        });
      for (std::size_t s = 0; s < budget; ++s) {
        mask[cands[s].sample * p + cands[s].atom] = 1;
        z(cands[s].sample, cands[s].atom) = cands[s].value;
        ++active_count;
      }
      break;
    }
    case EncoderVariant::MP: break;  // not reached
  }

  // Xhat = Z D^T + b_pre, E = Xhat - X
  Matrix e(b, m);
  emap(e).noalias() = emap(z) * emap(dict.d).transpose();
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t l = 0; l < m; ++l) e(i, l) += dict.b_pre[l] - batch(i, l);
  }

  LossBreakdown loss;
  for (double v : e.data) loss.recon += v * v;
  loss.recon /= static_cast<double>(b);
  loss.l0 = static_cast<double>(active_count) / static_cast<double>(b);

  if (cfg.variant == EncoderVariant::ReLU && cfg.lambda > 0) {
    double l1 = 0.0;
    for (double v : z.data) l1 += v;  // kept coefficients are positive
    loss.sparsity_penalty = cfg.lambda * l1 / static_cast<double>(b);
  } else if (cfg.variant == EncoderVariant::JumpReLU && cfg.target_l0 > 0) {
    loss.sparsity_penalty =
        cfg.target_l0 * static_cast<double>(active_count) / static_cast<double>(b);
  }

  // Auxiliary dead-atom reconstruction: a_i = (x_i - xhat_i) - sum c D_j.
  const bool use_aux = cfg.aux_alpha > 0 && !dead.empty();
  std::vector<std::vector<AuxPick>> aux_picks;
  Matrix a;
  if (use_aux) {
    const std::size_t aux_k = cfg.effective_aux_k(p);
    aux_picks.resize(b);
    a = Matrix(b, m);
    for (std::size_t i = 0; i < b; ++i) {
      Vec scores(p, 0.0);
      for (std::size_t j : dead) scores[j] = u(i, j);
      aux_picks[i] = pick_aux_atoms(scores, dead, aux_k, /*require_positive=*/true);
      for (std::size_t l = 0; l < m; ++l) a(i, l) = -e(i, l);
      for (const auto& pk : aux_picks[i]) {
        for (std::size_t l = 0; l < m; ++l) a(i, l) -= pk.coeff * dict.d(l, pk.atom);
      }
    }
    double ss = 0.0;
    for (double v : a.data) ss += v * v;
    loss.aux = cfg.aux_alpha * ss / static_cast<double>(b);
  }
  loss.total = loss.recon + loss.sparsity_penalty + loss.aux;

  if (atom_active) {
    atom_active->assign(p, 0);
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t j = 0; j < p; ++j) {
        if (mask[i * p + j]) (*atom_active)[j] = 1;
      }
    }
  }

  if (!grads) return loss;
  *grads = make_gradients(dict);
  const double inv_b = 1.0 / static_cast<double>(b);

  // Ghat = dL/dXhat = (2/B) E - (2 alpha / B) A
  Matrix ghat(b, m);
  for (std::size_t i = 0; i < b * m; ++i) ghat.data[i] = 2.0 * inv_b * e.data[i];
  if (use_aux) {
    const double c = 2.0 * cfg.aux_alpha * inv_b;
    for (std::size_t i = 0; i < b * m; ++i) ghat.data[i] -= c * a.data[i];
  }

  // Decoder path.
  emap(grads->d_d).noalias() += emap(ghat).transpose() * emap(z);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t l = 0; l < m; ++l) grads->d_b_pre[l] += ghat(i, l);
  }

  // G_z, then the encoder path through kept coordinates.
  Matrix gz(b, p);
  emap(gz).noalias() = emap(ghat) * emap(dict.d);
  if (cfg.variant == EncoderVariant::ReLU && cfg.lambda > 0) {
    const double c = cfg.lambda * inv_b;
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t j = 0; j < p; ++j) {
        if (mask[i * p + j]) gz(i, j) += c;
      }
    }
  }
  Matrix gu(b, p);
  for (std::size_t i = 0; i < b * p; ++i) gu.data[i] = mask[i] ? gz.data[i] : 0.0;

  if (use_aux) {
    const double c = 2.0 * cfg.aux_alpha * inv_b;
    for (std::size_t i = 0; i < b; ++i) {
      for (const auto& pk : aux_picks[i]) {
        double ad = 0.0;
        for (std::size_t l = 0; l < m; ++l) {
          grads->d_d(l, pk.atom) += -c * a(i, l) * pk.coeff;
          ad += a(i, l) * dict.d(l, pk.atom);
        }
        gu(i, pk.atom) += -c * ad;  // coefficient path: c_ij = u_ij
      }
    }
  }

  emap(*grads->d_w).noalias() += emap(xc).transpose() * emap(gu);
  Vec gu_colsum(p, 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < p; ++j) gu_colsum[j] += gu(i, j);
  }
  for (std::size_t j = 0; j < p; ++j) (*grads->d_b)[j] += gu_colsum[j];
  // u = W^T (x - b_pre) + b  =>  d b_pre -= W gu_colsum
  Vec wg(m, 0.0);
  emap(wg).noalias() = emap(*dict.encoder_weights) * emap(gu_colsum);
  for (std::size_t l = 0; l < m; ++l) grads->d_b_pre[l] -= wg[l];

  // JumpReLU threshold pseudo-gradients (rectangular STE of width eps).
  if (cfg.variant == EncoderVariant::JumpReLU && cfg.ste_bandwidth > 0) {
    const Vec& theta = *dict.thresholds;
    const double eps = cfg.ste_bandwidth;
    Vec& gt = *grads->d_theta;
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t j = 0; j < p; ++j) {
        if (std::abs(u(i, j) - theta[j]) < 0.5 * eps) {
          gt[j] += gz(i, j) * (-theta[j] / eps);          // value path
          gt[j] += cfg.target_l0 * inv_b * (-1.0 / eps);  // expected-L0 path
        }
      }
    }
  }
  return loss;
}

LossBreakdown mp_loss_and_gradients(const Dictionary& dict, const EncoderConfig& cfg,
                                    const Matrix& batch, GradientSet* grads,
                                    std::span<const std::size_t> dead,
                                    std::vector<std::uint8_t>* atom_active) {
  const std::size_t b = batch.rows, m = dict.m, p = dict.p;
  const std::size_t t_steps = cfg.k;

  Matrix r(b, m);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t l = 0; l < m; ++l) r(i, l) = batch(i, l) - dict.b_pre[l];
  }

  struct Sel {
    std::size_t atom;
    double coeff;
  };
  std::vector<std::vector<Sel>> sels(b);
  // Residual snapshots r^(0..T) are only needed for the unrolled backward.
  std::vector<Matrix> snapshots;
  if (grads && !cfg.detach_residual) snapshots.push_back(r);
  std::vector<Matrix> prev_for_detach;  // r^(t-1) rows are enough when detached
  if (grads && cfg.detach_residual) prev_for_detach.reserve(t_steps);

  Matrix corr(b, p);
  std::vector<std::uint8_t> alive(b, 1);
  for (std::size_t i = 0; i < b; ++i) {
    double ss = 0.0;
    for (std::size_t l = 0; l < m; ++l) ss += r(i, l) * r(i, l);
    if (std::sqrt(ss) < kEarlyExitNorm) alive[i] = 0;
  }

  for (std::size_t t = 0; t < t_steps; ++t) {
    bool any_alive = false;
    for (std::size_t i = 0; i < b; ++i) any_alive |= (alive[i] != 0);
    if (!any_alive) break;
    if (grads && cfg.detach_residual) prev_for_detach.push_back(r);

    emap(corr).noalias() = emap(r) * emap(dict.d);
    for (std::size_t i = 0; i < b; ++i) {
      if (!alive[i]) continue;
      std::size_t best = 0;
      double best_score = cfg.mp_abs_argmax ? std::abs(corr(i, 0)) : corr(i, 0);
      for (std::size_t j = 1; j < p; ++j) {
        const double s = cfg.mp_abs_argmax ? std::abs(corr(i, j)) : corr(i, j);
        if (s > best_score) {
          best_score = s;
          best = j;
        }
      }
      const double zt = corr(i, best);
      double ss = 0.0;
      for (std::size_t l = 0; l < m; ++l) {
        r(i, l) -= zt * dict.d(l, best);
        ss += r(i, l) * r(i, l);
      }
      sels[i].push_back({best, zt});
      if (std::sqrt(ss) < kEarlyExitNorm) alive[i] = 0;
    }
    if (grads && !cfg.detach_residual) snapshots.push_back(r);
  }

  LossBreakdown loss;
  for (double v : r.data) loss.recon += v * v;
  loss.recon /= static_cast<double>(b);
  if (atom_active) atom_active->assign(p, 0);
  std::size_t support_total = 0;
  std::vector<std::uint8_t> seen(p);
  for (std::size_t i = 0; i < b; ++i) {
    std::fill(seen.begin(), seen.end(), 0);
    for (const auto& s : sels[i]) {
      if (!seen[s.atom]) {
        seen[s.atom] = 1;
        ++support_total;
        if (atom_active) (*atom_active)[s.atom] = 1;
      }
    }
  }
  loss.l0 = static_cast<double>(support_total) / static_cast<double>(b);

  const bool use_aux = cfg.aux_alpha > 0 && !dead.empty();
  std::vector<std::vector<AuxPick>> aux_picks;
  Matrix a;
  if (use_aux) {
    const std::size_t aux_k = cfg.effective_aux_k(p);
    aux_picks.resize(b);
    a = Matrix(b, m);
    Matrix final_corr(b, p);
    emap(final_corr).noalias() = emap(r) * emap(dict.d);
    for (std::size_t i = 0; i < b; ++i) {
      Vec scores(p, 0.0);
      for (std::size_t j : dead) {
        scores[j] = cfg.mp_abs_argmax ? std::abs(final_corr(i, j)) : final_corr(i, j);
      }
      auto picks = pick_aux_atoms(scores, dead, aux_k, /*require_positive=*/true);
      for (auto& pk : picks) pk.coeff = final_corr(i, pk.atom);  // signed coefficient
      aux_picks[i] = std::move(picks);
      for (std::size_t l = 0; l < m; ++l) a(i, l) = r(i, l);
      for (const auto& pk : aux_picks[i]) {
        for (std::size_t l = 0; l < m; ++l) a(i, l) -= pk.coeff * dict.d(l, pk.atom);
      }
    }
    double ss = 0.0;
    for (double v : a.data) ss += v * v;
    loss.aux = cfg.aux_alpha * ss / static_cast<double>(b);
  }
  loss.total = loss.recon + loss.sparsity_penalty + loss.aux;

  if (!grads) return loss;
  *grads = make_gradients(dict);
  const double inv_b = 1.0 / static_cast<double>(b);

  if (!cfg.detach_residual) {
    // Reverse sweep through the unrolled projections. Selection indices are
    // constants; everything else is differentiated.
    Vec g(m), dj(m), r_prev(m);
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t l = 0; l < m; ++l) g[l] = 2.0 * inv_b * r(i, l);
      if (use_aux) {
        const double c = 2.0 * cfg.aux_alpha * inv_b;
        for (std::size_t l = 0; l < m; ++l) g[l] += c * a(i, l);  // e-path, e = r^(T)
        for (const auto& pk : aux_picks[i]) {
          double ad = 0.0;
          for (std::size_t l = 0; l < m; ++l) ad += a(i, l) * dict.d(l, pk.atom);
          const double gc = -c * ad;  // d aux / d c_ij
          for (std::size_t l = 0; l < m; ++l) {
            grads->d_d(l, pk.atom) += -c * a(i, l) * pk.coeff;
            g[l] += gc * dict.d(l, pk.atom);  // c_ij = D_j . r^(T)
          }
        }
      }
      for (std::size_t t = sels[i].size(); t-- > 0;) {
        const auto [atom, zt] = sels[i][t];
        const Matrix& rp = snapshots[t];
        double ga = 0.0;
        for (std::size_t l = 0; l < m; ++l) ga += g[l] * dict.d(l, atom);
        for (std::size_t l = 0; l < m; ++l) {
          grads->d_d(l, atom) += -ga * rp(i, l) - zt * g[l];
          g[l] -= ga * dict.d(l, atom);
        }
      }
      for (std::size_t l = 0; l < m; ++l) grads->d_b_pre[l] -= g[l];
    }
  } else {
    // Cheap path: residual stream treated as constant; gradients flow through
    // each coefficient's direct D_j dependence and the final decode.
    for (std::size_t i = 0; i < b; ++i) {
      Vec ghat(m);
      for (std::size_t l = 0; l < m; ++l) ghat[l] = -2.0 * inv_b * r(i, l);
      for (std::size_t t = 0; t < sels[i].size(); ++t) {
        const auto [atom, zt] = sels[i][t];
        const Matrix& rp = prev_for_detach[t];
        double gz = 0.0;
        for (std::size_t l = 0; l < m; ++l) gz += ghat[l] * dict.d(l, atom);
        for (std::size_t l = 0; l < m; ++l) {
          grads->d_d(l, atom) += gz * rp(i, l) + zt * ghat[l];
        }
      }
      for (std::size_t l = 0; l < m; ++l) grads->d_b_pre[l] += ghat[l];
      if (use_aux) {
        const double c = 2.0 * cfg.aux_alpha * inv_b;
        for (const auto& pk : aux_picks[i]) {
          double ad = 0.0;
          for (std::size_t l = 0; l < m; ++l) ad += a(i, l) * dict.d(l, pk.atom);
          for (std::size_t l = 0; l < m; ++l) {
            grads->d_d(l, pk.atom) += -c * a(i, l) * pk.coeff - c * ad * r(i, l);
          }
        }
      }
    }
  }
  return loss;
}

}  // namespace

LossBreakdown loss_and_gradients(const Dictionary& dict, const EncoderConfig& cfg,
                                 const Matrix& batch, GradientSet* grads,
                                 std::span<const std::size_t> dead_atoms) {
  if (batch.rows == 0) throw ValidationError("loss_and_gradients: empty batch");
  if (batch.cols != dict.m) {
    throw ValidationError("loss_and_gradients: batch dim " + std::to_string(batch.cols) +
                          " does not match dictionary m = " + std::to_string(dict.m));
  }
  cfg.validate(dict.p);

  LossBreakdown loss;
  if (cfg.variant == EncoderVariant::MP) {
    loss = mp_loss_and_gradients(dict, cfg, batch, grads, dead_atoms, nullptr);
  } else {
    loss = shallow_loss_and_gradients(dict, cfg, batch, grads, dead_atoms, nullptr);
  }
  if (!std::isfinite(loss.total)) throw NumericError("loss_and_gradients: non-finite loss");
  return loss;
}

double lr_at(std::size_t step, const LrSchedule& s) {
  if (s.warmup_steps > 0 && step < s.warmup_steps) {
    return s.lr_init * static_cast<double>(step) / static_cast<double>(s.warmup_steps);
  }
  if (step >= s.total_steps) return s.lr_final;
  const double span = static_cast<double>(s.total_steps - s.warmup_steps);
  const double frac = static_cast<double>(step - s.warmup_steps) / span;
  return s.lr_final + 0.5 * (s.lr_init - s.lr_final) * (1.0 + std::cos(M_PI * frac));
}

TrainState TrainState::init(const Dictionary& dict, const LrSchedule& schedule) {
  TrainState st;
  st.m_d = Matrix(dict.m, dict.p);
  st.v_d = Matrix(dict.m, dict.p);
  st.m_b_pre = Vec(dict.m, 0.0);
  st.v_b_pre = Vec(dict.m, 0.0);
  if (dict.encoder_weights) {
    st.m_w = Matrix(dict.m, dict.p);
    st.v_w = Matrix(dict.m, dict.p);
  }
  if (dict.encoder_bias) {
    st.m_b = Vec(dict.p, 0.0);
    st.v_b = Vec(dict.p, 0.0);
  }
  if (dict.thresholds) {
    st.m_theta = Vec(dict.p, 0.0);
    st.v_theta = Vec(dict.p, 0.0);
  }
  st.usage.assign(dict.p, 0);
  st.schedule = schedule;
  return st;
}

std::vector<std::size_t> TrainState::dead_atoms(std::size_t threshold) const {
  std::vector<std::size_t> dead;
  for (std::size_t j = 0; j < usage.size(); ++j) {
    if (usage[j] > threshold) dead.push_back(j);
  }
  return dead;
}

namespace {

void adam_update(std::vector<double>& param, std::vector<double>& mom1, std::vector<double>& mom2,
                 const std::vector<double>& grad, double lr, const AdamHyper& h, double bc1,
                 double bc2) {
  for (std::size_t i = 0; i < param.size(); ++i) {
    mom1[i] = h.beta1 * mom1[i] + (1.0 - h.beta1) * grad[i];
    mom2[i] = h.beta2 * mom2[i] + (1.0 - h.beta2) * grad[i] * grad[i];
    const double mhat = mom1[i] / bc1;
    const double vhat = mom2[i] / bc2;
    param[i] -= lr * mhat / (std::sqrt(vhat) + h.eps);
  }
}

}  // namespace

void adam_step(TrainState& state, Dictionary& dict, const GradientSet& grads,
               const AdamHyper& hyper, bool freeze_b_pre) {
  if (grads.d_d.rows != dict.m || grads.d_d.cols != dict.p) {
    throw ValidationError("adam_step: gradient/parameter shape mismatch");
  }
  state.step += 1;
  const double lr = lr_at(state.step, state.schedule);
  const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));

  adam_update(dict.d.data, state.m_d.data, state.v_d.data, grads.d_d.data, lr, hyper, bc1, bc2);
  if (!freeze_b_pre) {
    adam_update(dict.b_pre, state.m_b_pre, state.v_b_pre, grads.d_b_pre, lr, hyper, bc1, bc2);
  }
  if (dict.encoder_weights && grads.d_w) {
    adam_update(dict.encoder_weights->data, state.m_w->data, state.v_w->data, grads.d_w->data, lr,
                hyper, bc1, bc2);
  }
  if (dict.encoder_bias && grads.d_b) {
    adam_update(*dict.encoder_bias, *state.m_b, *state.v_b, *grads.d_b, lr, hyper, bc1, bc2);
  }
  if (dict.thresholds && grads.d_theta) {
    adam_update(*dict.thresholds, *state.m_theta, *state.v_theta, *grads.d_theta, lr, hyper, bc1,
                bc2);
    for (double& t : *dict.thresholds) t = std::max(0.0, t);
  }
  renormalize_columns(dict);
}

std::vector<TrainLogRow> train(Dictionary& dict, const EncoderConfig& cfg, const Matrix& data,
                               const TrainOptions& opt) {
  if (data.rows == 0) throw ValidationError("train: empty dataset");
  if (data.cols != dict.m) {
    throw ValidationError("train: data dim " + std::to_string(data.cols) +
                          " does not match dictionary m = " + std::to_string(dict.m));
  }
  cfg.validate(dict.p);
  if (opt.batch_size == 0) throw ValidationError("train: batch_size must be >= 1");

  const std::size_t n = data.rows;
  const std::size_t steps_per_epoch = (n + opt.batch_size - 1) / opt.batch_size;
  LrSchedule schedule;
  schedule.lr_init = opt.lr_init;
  schedule.lr_final = opt.lr_final;
  schedule.warmup_steps = opt.warmup_steps > 0 ? opt.warmup_steps : steps_per_epoch;
  schedule.total_steps =
      opt.total_steps > 0 ? opt.total_steps : std::max<std::size_t>(1, opt.epochs * steps_per_epoch);

  TrainState state = TrainState::init(dict, schedule);
  Rng rng(opt.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  std::vector<TrainLogRow> log;
  std::vector<std::uint8_t> atom_active;
  GradientSet grads;

  for (std::size_t epoch = 1; epoch <= opt.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < n; start += opt.batch_size) {
      const std::size_t bsz = std::min(opt.batch_size, n - start);
      Matrix batch(bsz, data.cols);
      for (std::size_t i = 0; i < bsz; ++i) {
        const double* src = data.row_ptr(order[start + i]);
        std::copy(src, src + data.cols, batch.row_ptr(i));
      }

      const auto dead = state.dead_atoms(cfg.dead_steps_threshold);
      LossBreakdown loss;
      try {
        if (cfg.variant == EncoderVariant::MP) {
          loss = mp_loss_and_gradients(dict, cfg, batch, &grads, dead, &atom_active);
        } else {
          loss = shallow_loss_and_gradients(dict, cfg, batch, &grads, dead, &atom_active);
        }
        if (!std::isfinite(loss.total)) throw NumericError("non-finite loss");
      } catch (const NumericError& e) {
        throw NumericError("train: " + std::string(e.what()) + " at epoch " +
                           std::to_string(epoch) + ", batch " +
                           std::to_string(start / opt.batch_size));
      }
      adam_step(state, dict, grads, opt.adam, cfg.freeze_b_pre);
      for (std::size_t j = 0; j < dict.p; ++j) {
        if (atom_active[j]) {
          state.usage[j] = 0;
        } else {
          state.usage[j] += 1;
        }
      }

      if (state.step % opt.log_every == 0) {
        log.push_back({state.step, epoch, lr_at(state.step, schedule), loss, dead.size()});
      }
    }
    if (opt.progress) {
      const auto& last = log.empty() ? TrainLogRow{} : log.back();
      (*opt.progress) << "epoch " << epoch << "/" << opt.epochs << " total=" << last.loss.total
                      << " recon=" << last.loss.recon << " l0=" << last.loss.l0 << "\n";
    }
  }
  return log;
}

void write_train_log_csv(const std::vector<TrainLogRow>& log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "step,epoch,lr,recon,sparsity_penalty,aux,total,mean_l0,dead_atoms\n";
  out.precision(17);
  for (const auto& row : log) {
    out << row.step << ',' << row.epoch << ',' << row.lr << ',' << row.loss.recon << ','
        << row.loss.sparsity_penalty << ',' << row.loss.aux << ',' << row.loss.total << ','
        << row.loss.l0 << ',' << row.dead_atoms << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace sdlab
