#include "sdlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "eigen_map.hpp"
#include "sdlab/errors.hpp"

namespace sdlab {

namespace {

// Off-diagonal |Gram| column for atom j of D restricted to `subset` (empty ->
// all atoms). Returned values exclude the diagonal.
Vec abs_gram_column(const Matrix& d, std::size_t j, const std::vector<std::size_t>& subset) {
  Vec out;
  const std::size_t m = d.rows;
  if (subset.empty()) {
    out.reserve(d.cols - 1);
    for (std::size_t i = 0; i < d.cols; ++i) {
      if (i == j) continue;
      double g = 0.0;
      for (std::size_t l = 0; l < m; ++l) g += d(l, i) * d(l, j);
      out.push_back(std::abs(g));
    }
  } else {
    out.reserve(subset.size() - 1);
    for (std::size_t i : subset) {
      if (i == j) continue;
      double g = 0.0;
      for (std::size_t l = 0; l < m; ++l) g += d(l, i) * d(l, j);
      out.push_back(std::abs(g));
    }
  }
  return out;
}

// mu_1(r) over the sub-dictionary D[:, subset]; subset empty -> full D.
double babel_restricted(const Matrix& d, std::size_t r, const std::vector<std::size_t>& subset) {
  const std::size_t count = subset.empty() ? d.cols : subset.size();
  double worst = 0.0;
  for (std::size_t jj = 0; jj < count; ++jj) {
    const std::size_t j = subset.empty() ? jj : subset[jj];
    Vec g = abs_gram_column(d, j, subset);
    std::partial_sort(g.begin(), g.begin() + static_cast<std::ptrdiff_t>(r), g.end(),
                      std::greater<>());
    double s = 0.0;
    for (std::size_t t = 0; t < r; ++t) s += g[t];
    worst = std::max(worst, s);
  }
  return worst;
}

double quantile(Vec sorted, double q) {
  // Linear interpolation between order statistics (numpy default).
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

CoactBabelSummary summarize(Vec values, std::size_t skipped) {
  if (values.empty()) {
    throw ValidationError("coactivation_babel: no eligible samples (" + std::to_string(skipped) +
                          " skipped)");
  }
  CoactBabelSummary s;
  s.used = values.size();
  s.skipped = skipped;
  double total = 0.0;
  for (double v : values) total += v;
  s.mean = total / static_cast<double>(values.size());
  std::sort(values.begin(), values.end());
  s.max = values.back();
  s.q5 = quantile(values, 0.05);
  s.q25 = quantile(values, 0.25);
  s.q50 = quantile(values, 0.50);
  s.q75 = quantile(values, 0.75);
  s.q95 = quantile(values, 0.95);
  return s;
}

}  // namespace

double r_squared(const Matrix& x, const Matrix& xhat) {
  if (x.rows != xhat.rows || x.cols != xhat.cols) {
    throw ValidationError("r_squared: shape mismatch");
  }
  if (x.rows < 2) throw ValidationError("r_squared: need at least 2 samples");
  Vec mean(x.cols, 0.0);
  for (std::size_t i = 0; i < x.rows; ++i) {
    for (std::size_t l = 0; l < x.cols; ++l) mean[l] += x(i, l);
  }
  for (double& v : mean) v /= static_cast<double>(x.rows);
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < x.rows; ++i) {
    for (std::size_t l = 0; l < x.cols; ++l) {
      const double r = x(i, l) - xhat(i, l);
      const double c = x(i, l) - mean[l];
      ss_res += r * r;
      ss_tot += c * c;
    }
  }
  if (ss_tot == 0.0) throw ValidationError("r_squared: constant batch (zero variance)");
  return 1.0 - ss_res / ss_tot;
}

double mutual_coherence(const Matrix& d) {
  if (d.cols < 2) throw ValidationError("mutual_coherence: need at least 2 atoms");
  double worst = 0.0;
  for (std::size_t j = 1; j < d.cols; ++j) {
    for (std::size_t i = 0; i < j; ++i) {
      double g = 0.0;
      for (std::size_t l = 0; l < d.rows; ++l) g += d(l, i) * d(l, j);
      worst = std::max(worst, std::abs(g));
    }
  }
  return worst;
}

double babel(const Matrix& d, std::size_t r) {
  if (r < 1 || r > d.cols - 1) {
    throw ValidationError("babel: order r = " + std::to_string(r) + " out of range [1, " +
                          std::to_string(d.cols - 1) + "]");
  }
  return babel_restricted(d, r, {});
}

BabelCurve babel_curve(const Matrix& d, const std::vector<std::size_t>& orders) {
  BabelCurve curve;
  curve.orders = orders;
  for (std::size_t r : orders) curve.values.push_back(babel(d, r));
  return curve;
}

CoactBabelSummary coactivation_babel(const std::vector<SparseCode>& codes, const Matrix& d,
                                     std::size_t r) {
  if (r < 1) throw ValidationError("coactivation_babel: r must be >= 1");
  Vec values;
  std::size_t skipped = 0;
  for (const auto& code : codes) {
    const auto support = code.support();
    if (support.size() <= r) {
      ++skipped;
      continue;
    }
    values.push_back(babel_restricted(d, r, support));
  }
  return summarize(std::move(values), skipped);
}

CoactBabelSummary coactivation_babel_adaptive(const std::vector<SparseCode>& codes,
                                              const Matrix& d) {
  Vec values;
  std::size_t skipped = 0;
  for (const auto& code : codes) {
    const auto support = code.support();
    if (support.size() < 2) {
      ++skipped;
      continue;
    }
    values.push_back(babel_restricted(d, support.size() - 1, support));
  }
  return summarize(std::move(values), skipped);
}

ActivationStats activation_stats(const std::vector<SparseCode>& codes, std::size_t p,
                                 bool selection_ordered) {
  ActivationStats stats;
  stats.freq.assign(p, 0.0);
  stats.mean_value.assign(p, 0.0);
  stats.mean_value_when_active.assign(p, 0.0);
  stats.mean_selection_step.assign(p, std::numeric_limits<double>::quiet_NaN());

  Vec step_sum(p, 0.0);
  std::vector<std::size_t> step_count(p, 0);
  std::vector<std::size_t> active_count(p, 0);

  for (const auto& code : codes) {
    if (code.p != p) throw ValidationError("activation_stats: code length mismatch");
    const Vec z = code.dense();
    for (std::size_t j = 0; j < p; ++j) stats.mean_value[j] += z[j];
    for (std::size_t j : code.support()) {
      stats.freq[j] += 1.0;
      stats.mean_value_when_active[j] += z[j];
      ++active_count[j];
    }
    if (selection_ordered) {
      for (std::size_t t = 0; t < code.active.size(); ++t) {
        step_sum[code.active[t].atom] += static_cast<double>(t + 1);
        ++step_count[code.active[t].atom];
      }
    } else {
      // Figure-4(b)-style simulated sequence: rank active atoms by value.
      std::vector<const SparseCode::Entry*> order;
      order.reserve(code.active.size());
      for (const auto& e : code.active) order.push_back(&e);
      std::sort(order.begin(), order.end(),
                [](const SparseCode::Entry* a, const SparseCode::Entry* b) {
                  if (a->value != b->value) return a->value > b->value;
                  return a->atom < b->atom;
                });
      for (std::size_t t = 0; t < order.size(); ++t) {
        step_sum[order[t]->atom] += static_cast<double>(t + 1);
        ++step_count[order[t]->atom];
      }
    }
  }

  const double n = static_cast<double>(codes.size());
  for (std::size_t j = 0; j < p; ++j) {
    stats.mean_value[j] /= n;
    if (active_count[j] > 0) {
      stats.freq[j] /= n;
      stats.mean_value_when_active[j] /= static_cast<double>(active_count[j]);
    } else {
      stats.freq[j] = 0.0;
      stats.mean_value_when_active[j] = 0.0;
    }
    if (step_count[j] > 0) {
      stats.mean_selection_step[j] = step_sum[j] / static_cast<double>(step_count[j]);
    }
  }
  return stats;
}

Vec residual_curve(const Dictionary& dict, const EncoderConfig& cfg, const Matrix& x,
                   std::size_t k_max) {
  if (k_max < 1) throw ValidationError("residual_curve: k_max must be >= 1");
  if (x.cols != dict.m) throw ValidationError("residual_curve: dimension mismatch");
  const std::size_t b = x.rows;
  Vec curve(k_max, 0.0);

  switch (cfg.variant) {
    case EncoderVariant::MP: {
      // One T = k_max trace per sample; prefixes give every k.
      MpOptions opt{.abs_argmax = cfg.mp_abs_argmax, .record_partials = false};
      for (std::size_t i = 0; i < b; ++i) {
        Vec xi(x.row_ptr(i), x.row_ptr(i) + x.cols);
        const auto [code, trace] = encode_mp(dict, xi, k_max, opt);
        for (std::size_t k = 1; k <= k_max; ++k) {
          const std::size_t idx = std::min(k, trace.residual_norms.size() - 1);
          const double nrm = trace.residual_norms[idx];
          curve[k - 1] += nrm * nrm;
        }
      }
      break;
    }
    case EncoderVariant::TopK:
    case EncoderVariant::BatchTopK: {
      for (std::size_t k = 1; k <= k_max; ++k) {
        EncoderConfig at_k = cfg;
        at_k.k = std::min(k, dict.p);
        const auto codes = encode_batch(dict, at_k, x);
        for (std::size_t i = 0; i < b; ++i) {
          const Vec xhat = decode(dict, codes[i]);
          for (std::size_t l = 0; l < dict.m; ++l) {
            const double r = x(i, l) - xhat[l];
            curve[k - 1] += r * r;
          }
        }
      }
      break;
    }
    case EncoderVariant::ReLU:
    case EncoderVariant::JumpReLU: {
      // One-shot encoders do not depend on k; the curve is flat.
      double err = 0.0;
      const auto codes = encode_batch(dict, cfg, x);
      for (std::size_t i = 0; i < b; ++i) {
        const Vec xhat = decode(dict, codes[i]);
        for (std::size_t l = 0; l < dict.m; ++l) {
          const double r = x(i, l) - xhat[l];
          err += r * r;
        }
      }
      std::fill(curve.begin(), curve.end(), err);
      break;
    }
  }
  for (double& v : curve) v /= static_cast<double>(b);
  return curve;
}

}  // namespace sdlab
