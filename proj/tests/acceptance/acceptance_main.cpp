// Acceptance suite: ten criteria, one pass/fail line each. Exits nonzero if
// any criterion fails. Runtime is dominated by the desk-scale training runs
// behind A6-A8 (a few minutes on a laptop core).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "sdlab/cli.hpp"
#include "sdlab/data.hpp"
#include "sdlab/encode.hpp"
#include "sdlab/metrics.hpp"
#include "sdlab/model.hpp"
#include "sdlab/train.hpp"
#include "support/digits.hpp"
#include "support/oracles.hpp"

using namespace sdlab;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(const std::string& id, bool ok, const std::string& detail) {
  std::printf("[%s] %s — %s\n", ok ? "PASS" : "FAIL", id.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(5);
  ss << v;
  return ss.str();
}

Dictionary random_mp_dict(std::size_t m, std::size_t p, Rng& rng) {
  Dictionary dict;
  dict.m = m;
  dict.p = p;
  dict.d = oracle::random_dictionary(m, p, rng);
  dict.b_pre = Vec(m, 0.0);
  return dict;
}

// --------------------------------------------------------------- A1 + A2

void run_a1_a2() {
  Timer timer;
  Rng rng(101);
  const int runs = 1000;
  double worst_ortho = 0.0;
  double worst_energy = 0.0;
  bool monotone = true;

  for (int run = 0; run < runs; ++run) {
    const std::size_t m = 4 + rng.uniform_below(29);        // 4..32
    const std::size_t p = 4 + rng.uniform_below(45);        // 4..48
    const std::size_t t_steps = 1 + rng.uniform_below(20);  // 1..20
    const Dictionary dict = random_mp_dict(m, p, rng);
    Vec x(m);
    for (double& v : x) v = rng.normal();

    const auto [code, trace] = encode_mp(dict, x, t_steps);
    Vec r(m);
    for (std::size_t i = 0; i < m; ++i) r[i] = x[i] - dict.b_pre[i];
    for (std::size_t t = 0; t < code.active.size(); ++t) {
      const auto [atom, coeff] = code.active[t];
      for (std::size_t i = 0; i < m; ++i) r[i] -= coeff * dict.d(i, atom);
      double ip = 0.0;
      for (std::size_t i = 0; i < m; ++i) ip += r[i] * dict.d(i, atom);
      worst_ortho = std::max(worst_ortho, std::abs(ip));

      const double prev = trace.residual_norms[t] * trace.residual_norms[t];
      const double cur = trace.residual_norms[t + 1] * trace.residual_norms[t + 1];
      const double rel = std::abs(cur + coeff * coeff - prev) / std::max(prev, 1e-30);
      worst_energy = std::max(worst_energy, rel);
      if (trace.residual_norms[t + 1] > trace.residual_norms[t]) monotone = false;
    }
  }
  report("A1", worst_ortho < 1e-10,
         "stepwise orthogonality over 1000 runs: max |D_j.r| = " + fmt(worst_ortho) + " (" +
             fmt(timer.seconds()) + "s)");
  report("A2", worst_energy < 1e-9 && monotone,
         "energy identity rel err = " + fmt(worst_energy) +
             (monotone ? ", norms non-increasing" : ", MONOTONICITY VIOLATED"));
}

// --------------------------------------------------------------- A3

void run_a3() {
  Timer timer;
  // Classical |.| selection: the regime of the cited convergence theorem. The
  // signed default provably converges to the atoms' polar cone instead.
  const MpOptions classical{.abs_argmax = true};
  Rng rng(303);
  double worst_rel = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = 4 + rng.uniform_below(13);  // 4..16
    const std::size_t p = m + rng.uniform_below(m + 1);
    const Dictionary dict = random_mp_dict(m, p, rng);
    Vec x(m);
    for (double& v : x) v = rng.normal();
    const auto [code, trace] = encode_mp(dict, x, 2000, classical);
    worst_rel = std::max(worst_rel, trace.residual_norms.back() / trace.residual_norms.front());
  }

  double worst_proj = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 8 + rng.uniform_below(9);
    const std::size_t rank = 2 + rng.uniform_below(m / 2);
    const std::size_t p = m + rng.uniform_below(m);
    const Matrix basis = oracle::random_dictionary(m, rank, rng);
    Dictionary dict;
    dict.m = m;
    dict.p = p;
    dict.d = Matrix(m, p);
    dict.b_pre = Vec(m, 0.0);
    for (std::size_t j = 0; j < p; ++j) {
      Vec atom(m, 0.0);
      for (std::size_t r = 0; r < rank; ++r) {
        const double w = rng.normal();
        for (std::size_t i = 0; i < m; ++i) atom[i] += w * basis(i, r);
      }
      const double nrm = norm2(atom);
      for (std::size_t i = 0; i < m; ++i) dict.d(i, j) = atom[i] / nrm;
    }
    Vec x(m);
    for (double& v : x) v = rng.normal();
    const auto [code, trace] = encode_mp(dict, x, 2000, classical);
    Vec r = x;
    for (const auto& e : code.active) {
      for (std::size_t i = 0; i < m; ++i) r[i] -= e.value * dict.d(i, e.atom);
    }
    const Matrix proj = oracle::orthogonal_projector(dict.d);
    for (std::size_t i = 0; i < m; ++i) {
      double off_span = x[i];
      for (std::size_t l = 0; l < m; ++l) off_span -= proj(i, l) * x[l];
      worst_proj = std::max(worst_proj, std::abs(r[i] - off_span));
    }
  }
  report("A3", worst_rel < 1e-3 && worst_proj < 1e-6,
         "T=2000 convergence: full-rank max rel residual = " + fmt(worst_rel) +
             ", rank-deficient max |r - (I-P)x| = " + fmt(worst_proj) + " (" +
             fmt(timer.seconds()) + "s)");
}

// --------------------------------------------------------------- A4

void run_a4() {
  Timer timer;
  bool ok = true;
  std::string detail;
  for (EncoderVariant variant : {EncoderVariant::ReLU, EncoderVariant::JumpReLU,
                                 EncoderVariant::TopK, EncoderVariant::BatchTopK,
                                 EncoderVariant::MP}) {
    Rng rng(404 + static_cast<std::uint64_t>(variant));
    int checked = 0, attempts = 0;
    double worst = 0.0;
    while (checked < 50 && attempts < 5000) {
      ++attempts;
      auto inst = oracle::make_gradcheck_instance(variant, rng, 1e-3);
      if (!inst) continue;
      worst = std::max(worst, oracle::gradcheck_max_rel_error(*inst, 1e-5));
      ++checked;
    }
    const bool variant_ok = checked == 50 && worst < 1e-4;
    ok = ok && variant_ok;
    detail += std::string(variant_name(variant)) + "=" + fmt(worst) + " ";
  }
  report("A4", ok, "gradient vs finite differences, 50 instances/variant, max rel err: " +
                       detail + "(" + fmt(timer.seconds()) + "s)");
}

// --------------------------------------------------------------- A5

void run_a5() {
  Timer timer;
  Rng rng(505);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = 2 + rng.uniform_below(9);
    const std::size_t p = 2 + rng.uniform_below(7);  // 2..8
    const Matrix d = oracle::random_dictionary(m, p, rng);
    for (std::size_t r = 1; r < p; ++r) {
      worst = std::max(worst, std::abs(babel(d, r) - oracle::brute_force_babel(d, r)));
    }
  }
  report("A5", worst <= 1e-12,
         "closed-form vs subset enumeration over 100 dictionaries: max |diff| = " + fmt(worst) +
             " (" + fmt(timer.seconds()) + "s)");
}

// --------------------------------------------------------------- A6 / A7 / A8

struct SeedModels {
  Dictionary mp;
  EncoderConfig mp_cfg;
  Dictionary topk;
  EncoderConfig topk_cfg;
};

SeedModels train_pair(const Matrix& data, std::uint64_t seed) {
  const std::size_t p = 256, k = 10;
  SeedModels out;
  const Vec mean = column_mean(data);

  out.mp_cfg = EncoderConfig::defaults_for(EncoderVariant::MP, k);
  Rng rng_mp(seed);
  out.mp = init_dictionary(data.cols, p, rng_mp, mean, EncoderVariant::MP);
  TrainOptions opt;
  opt.epochs = 10;
  opt.batch_size = 256;
  opt.seed = seed;
  train(out.mp, out.mp_cfg, data, opt);

  out.topk_cfg = EncoderConfig::defaults_for(EncoderVariant::TopK, k);
  Rng rng_topk(seed);
  out.topk = init_dictionary(data.cols, p, rng_topk, mean, EncoderVariant::TopK);
  train(out.topk, out.topk_cfg, data, opt);
  return out;
}

double eval_r2(const Dictionary& dict, const EncoderConfig& cfg, const Matrix& x,
               std::size_t k) {
  EncoderConfig at_k = cfg;
  at_k.k = k;
  Matrix xhat(x.rows, x.cols);
  for (std::size_t start = 0; start < x.rows; start += 256) {
    const std::size_t bsz = std::min<std::size_t>(256, x.rows - start);
    Matrix batch(bsz, x.cols);
    std::copy(x.row_ptr(start), x.row_ptr(start) + bsz * x.cols, batch.data.begin());
    const auto codes = encode_batch(dict, at_k, batch);
    for (std::size_t i = 0; i < bsz; ++i) {
      const Vec row = decode(dict, codes[i]);
      std::copy(row.begin(), row.end(), xhat.row_ptr(start + i));
    }
  }
  return r_squared(x, xhat);
}

double mean_err_at_k(const Dictionary& dict, const EncoderConfig& cfg, const Matrix& x,
                     std::size_t k) {
  EncoderConfig at_k = cfg;
  at_k.k = k;
  double err = 0.0;
  for (std::size_t start = 0; start < x.rows; start += 256) {
    const std::size_t bsz = std::min<std::size_t>(256, x.rows - start);
    Matrix batch(bsz, x.cols);
    std::copy(x.row_ptr(start), x.row_ptr(start) + bsz * x.cols, batch.data.begin());
    const auto codes = encode_batch(dict, at_k, batch);
    for (std::size_t i = 0; i < bsz; ++i) {
      const Vec xhat = decode(dict, codes[i]);
      for (std::size_t l = 0; l < x.cols; ++l) {
        const double r = batch(i, l) - xhat[l];
        err += r * r;
      }
    }
  }
  return err / static_cast<double>(x.rows);
}

void run_a6_a7_a8() {
  Timer timer;
  const auto dataset = testsupport::load_acceptance_dataset();
  std::printf("       A6-A8 dataset: %s\n", dataset.label.c_str());
  std::fflush(stdout);

  std::vector<SeedModels> models;
  std::vector<double> r2_mp, r2_topk;
  for (std::uint64_t seed : {0ULL, 1ULL, 2ULL}) {
    Timer seed_timer;
    models.push_back(train_pair(dataset.train, seed));
    r2_mp.push_back(eval_r2(models.back().mp, models.back().mp_cfg, dataset.eval, 10));
    r2_topk.push_back(eval_r2(models.back().topk, models.back().topk_cfg, dataset.eval, 10));
    std::printf("       seed %llu: R2(mp)=%s R2(topk)=%s (%.0fs)\n",
                static_cast<unsigned long long>(seed), fmt(r2_mp.back()).c_str(),
                fmt(r2_topk.back()).c_str(), seed_timer.seconds());
    std::fflush(stdout);
  }

  const double mean_mp = (r2_mp[0] + r2_mp[1] + r2_mp[2]) / 3.0;
  const double mean_topk = (r2_topk[0] + r2_topk[1] + r2_topk[2]) / 3.0;
  report("A6", mean_mp > mean_topk,
         "seed-averaged eval R2: mp = " + fmt(mean_mp) + " vs topk = " + fmt(mean_topk) +
             " [" + dataset.label + "] (" + fmt(timer.seconds()) + "s)");

  // A7: dictionary Babel mu1(10) higher for MP; co-activated Babel at
  // r = |S|-1 lower for MP; both on >= 2 of 3 seeds.
  Timer t7;
  int a7_hits = 0;
  std::string a7_detail;
  for (std::size_t s = 0; s < models.size(); ++s) {
    const double babel_mp = babel(models[s].mp.d, 10);
    const double babel_topk = babel(models[s].topk.d, 10);

    auto coact_mean = [&](const Dictionary& dict, const EncoderConfig& cfg) {
      std::vector<SparseCode> codes;
      for (std::size_t start = 0; start < dataset.eval.rows; start += 256) {
        const std::size_t bsz = std::min<std::size_t>(256, dataset.eval.rows - start);
        Matrix batch(bsz, dataset.eval.cols);
        std::copy(dataset.eval.row_ptr(start), dataset.eval.row_ptr(start) + bsz * dataset.eval.cols,
                  batch.data.begin());
        auto part = encode_batch(dict, cfg, batch);
        for (auto& c : part) codes.push_back(std::move(c));
      }
      return coactivation_babel_adaptive(codes, dict.d).mean;
    };
    const double coact_mp = coact_mean(models[s].mp, models[s].mp_cfg);
    const double coact_topk = coact_mean(models[s].topk, models[s].topk_cfg);

    const bool hit = babel_mp > babel_topk && coact_mp < coact_topk;
    a7_hits += hit;
    a7_detail += "seed" + std::to_string(s) + ": mu1(10) " + fmt(babel_mp) + ">" +
                 fmt(babel_topk) + " coact " + fmt(coact_mp) + "<" + fmt(coact_topk) +
                 (hit ? " ok; " : " MISS; ");
  }
  report("A7", a7_hits >= 2, a7_detail + "(" + fmt(t7.seconds()) + "s)");

  // A8: MP error curve non-increasing over k = 1..128; TopK degrades at 8x
  // its training sparsity on >= 2 of 3 seeds.
  Timer t8;
  bool mp_monotone = true;
  int topk_degrades = 0;
  std::string a8_detail;
  for (std::size_t s = 0; s < models.size(); ++s) {
    const Vec curve = residual_curve(models[s].mp, models[s].mp_cfg, dataset.eval, 128);
    for (std::size_t k = 1; k < curve.size(); ++k) {
      if (curve[k] > curve[k - 1] + 1e-12) mp_monotone = false;
    }
    const double err_at_k = mean_err_at_k(models[s].topk, models[s].topk_cfg, dataset.eval, 10);
    const double err_at_8k = mean_err_at_k(models[s].topk, models[s].topk_cfg, dataset.eval, 80);
    topk_degrades += err_at_8k >= err_at_k;
    a8_detail += "seed" + std::to_string(s) + ": topk err@80 " + fmt(err_at_8k) + " vs @10 " +
                 fmt(err_at_k) + "; ";
  }
  report("A8", mp_monotone && topk_degrades >= 2,
         std::string(mp_monotone ? "mp curve non-increasing over k=1..128; "
                                 : "MP CURVE INCREASED; ") +
             a8_detail + "(" + fmt(t8.seconds()) + "s)");
}

// --------------------------------------------------------------- A9

void run_a9() {
  Timer timer;
  SyntheticSpec spec;
  spec.m = 64;
  spec.p_true = 64;
  spec.k_true = 3;
  spec.n = 20000;
  spec.mode = CoherenceMode::Orthogonal;
  spec.noise_sigma = 0.01;
  spec.seed = 1;
  const SyntheticData synth = generate_synthetic(spec);

  EncoderConfig cfg = EncoderConfig::defaults_for(EncoderVariant::MP, 3);
  Rng rng(1);
  Dictionary dict = init_dictionary(64, 64, rng, synth.data.mean, EncoderVariant::MP);
  TrainOptions opt;
  opt.epochs = 20;
  opt.batch_size = 256;
  opt.seed = 1;
  train(dict, cfg, synth.data.samples, opt);

  const RecoveryScore score = recovery_score(dict.d, synth.dict_true, 0.9);
  report("A9", score.matched_fraction >= 0.9,
         "orthogonal ground-truth recovery: matched fraction = " + fmt(score.matched_fraction) +
             ", mean |cosine| = " + fmt(score.mean_best_cosine) + " (" + fmt(timer.seconds()) +
             "s)");
}

// --------------------------------------------------------------- A10

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli_vec(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"sdlab"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

void run_a10() {
  Timer timer;
  const fs::path base = fs::temp_directory_path() / "sdlab_acceptance_a10";
  fs::remove_all(base);
  fs::create_directories(base);

  if (run_cli_vec({"gen-synthetic", "--m", "64", "--p-true", "64", "--k-true", "3", "--n",
                   "2000", "--mode", "random", "--noise-sigma", "0.01", "--seed", "5",
                   "--out-dir", (base / "data").string()}) != 0) {
    report("A10", false, "gen-synthetic failed");
    return;
  }
  const std::string data = (base / "data" / "data.sdla").string();
  bool ok = true;
  for (const char* run_name : {"run_a", "run_b"}) {
    ok = ok && run_cli_vec({"train", "--variant", "mp", "--k", "3", "--p", "64", "--epochs",
                            "2", "--batch", "128", "--seed", "17", "--activations", data,
                            "--out-dir", (base / run_name).string(), "--quiet"}) == 0;
  }
  const bool ckpt_same =
      ok && slurp(base / "run_a" / "checkpoint.sdlc") == slurp(base / "run_b" / "checkpoint.sdlc");
  const bool log_same =
      ok && slurp(base / "run_a" / "train_log.csv") == slurp(base / "run_b" / "train_log.csv");
  report("A10", ok && ckpt_same && log_same,
         std::string("repeated cmd_train: checkpoints ") +
             (ckpt_same ? "byte-identical" : "DIFFER") + ", logs " +
             (log_same ? "byte-identical" : "DIFFER") + " (" + fmt(timer.seconds()) + "s)");
}

}  // namespace

int main() {
  Timer total;
  run_a1_a2();
  run_a3();
  run_a4();
  run_a5();
  run_a6_a7_a8();
  run_a9();
  run_a10();
  std::printf("acceptance: %d criterion(s) failed, total %.0fs\n", g_failures, total.seconds());
  return g_failures == 0 ? 0 : 1;
}
