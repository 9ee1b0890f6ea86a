#include "sdlab/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sdlab/data.hpp"
#include "sdlab/encode.hpp"
#include "sdlab/errors.hpp"
#include "sdlab/metrics.hpp"
#include "sdlab/model.hpp"
#include "sdlab/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace sdlab {

namespace {

// ---------------------------------------------------------------- helpers

std::vector<std::size_t> parse_index_list(const std::string& text) {
  // "a..b" (inclusive) or comma-separated values.
  std::vector<std::size_t> out;
  const auto dots = text.find("..");
  if (dots != std::string::npos) {
    const std::size_t lo = std::stoull(text.substr(0, dots));
    const std::size_t hi = std::stoull(text.substr(dots + 2));
    if (hi < lo) throw ValidationError("bad range: " + text);
    for (std::size_t v = lo; v <= hi; ++v) out.push_back(v);
    return out;
  }
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stoull(item));
  }
  if (out.empty()) throw ValidationError("empty list: '" + text + "'");
  return out;
}

void ensure_out_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create out dir " + dir.string() + ": " + ec.message());
}

void write_json_file(const json& j, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << j.dump(2) << "\n";
}

std::ofstream open_csv(const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.precision(17);
  return out;
}

// 8-bit P5 PGM.
void write_pgm(const fs::path& path, std::size_t width, std::size_t height,
               const std::vector<std::uint8_t>& pixels) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "P5\n" << width << " " << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()),
            static_cast<std::streamsize>(pixels.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

std::uint8_t clamp01_byte(double v) {
  const double c = std::min(1.0, std::max(0.0, v));
  return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

// Min-max per tile; constant tiles render mid-gray.
std::vector<std::uint8_t> minmax_tile(const double* v, std::size_t len) {
  double lo = v[0], hi = v[0];
  for (std::size_t i = 1; i < len; ++i) {
    lo = std::min(lo, v[i]);
    hi = std::max(hi, v[i]);
  }
  std::vector<std::uint8_t> out(len);
  if (hi - lo < 1e-12) {
    std::fill(out.begin(), out.end(), std::uint8_t{128});
  } else {
    for (std::size_t i = 0; i < len; ++i) {
      out[i] = static_cast<std::uint8_t>(std::lround((v[i] - lo) / (hi - lo) * 255.0));
    }
  }
  return out;
}

std::size_t perfect_square_side(std::size_t m) {
  const auto side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(m))));
  return side * side == m ? side : 0;
}

// ---------------------------------------------------------------- data flags

struct DataFlags {
  std::string images, labels, activations;
  std::size_t limit = 0;   // 0 -> all samples
  std::size_t offset = 0;  // skip this many samples first
};

void add_data_flags(CLI::App* cmd, DataFlags& flags) {
  cmd->add_option("--images", flags.images, "MNIST IDX image file");
  cmd->add_option("--labels", flags.labels, "MNIST IDX label file");
  cmd->add_option("--activations", flags.activations, "activation container (.sdla)");
  cmd->add_option("--limit", flags.limit, "use only the first N samples (after --offset)");
  cmd->add_option("--offset", flags.offset, "skip the first N samples");
}

Dataset load_dataset(const DataFlags& flags) {
  Dataset ds;
  if (!flags.activations.empty()) {
    if (!flags.images.empty()) {
      throw ValidationError("--images and --activations are mutually exclusive");
    }
    ds = load_activation_matrix(flags.activations);
  } else if (!flags.images.empty()) {
    if (flags.labels.empty()) throw ValidationError("--images requires --labels");
    ds = load_mnist_idx(flags.images, flags.labels).data;
  } else {
    throw ValidationError("no dataset: pass --images/--labels or --activations");
  }
  if (flags.offset > 0 || flags.limit > 0) {
    if (flags.offset >= ds.n()) throw ValidationError("--offset beyond dataset size");
    const std::size_t count =
        flags.limit > 0 ? std::min(flags.limit, ds.n() - flags.offset) : ds.n() - flags.offset;
    Matrix sub(count, ds.dim());
    std::copy(ds.samples.row_ptr(flags.offset), ds.samples.row_ptr(flags.offset + count),
              sub.data.begin());
    ds.samples = std::move(sub);
    ds.mean = column_mean(ds.samples);
  }
  return ds;
}

json data_flags_json(const DataFlags& f) {
  return {{"images", f.images},
          {"labels", f.labels},
          {"activations", f.activations},
          {"limit", f.limit},
          {"offset", f.offset}};
}

// ---------------------------------------------------------------- config file

// Precedence: flags > config file > defaults. The JSON config is applied as
// new defaults before CLI11 re-parses the command line.
json maybe_load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("bad config JSON: " + std::string(e.what()));
  }
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  return j;
}

template <typename T>
void overlay(const json& cfg, const char* key, T& value) {
  if (cfg.contains(key)) value = cfg.at(key).get<T>();
}

// ---------------------------------------------------------------- train

struct TrainFlags {
  std::string variant = "topk";
  std::size_t k = 10;
  std::size_t p = 256;
  double lambda = -1.0;     // <0 -> variant default
  double target_l0 = -1.0;  // <0 -> variant default
  double aux_alpha = -1.0;  // <0 -> variant default
  std::size_t aux_k = 0;
  std::size_t dead_steps = 100;
  double ste_bandwidth = 1e-3;
  bool mp_abs_argmax = false;
  bool detach_residual = false;
  bool freeze_b_pre = false;
  std::size_t epochs = 50;
  std::size_t batch = 256;
  double lr_init = 5e-4;
  double lr_final = 1e-6;
  std::size_t warmup_steps = 0;
  std::size_t log_every = 1;
  std::uint64_t seed = 0;
  std::string out_dir = "run";
  bool quiet = false;
  DataFlags data;
};

EncoderConfig config_from_flags(const TrainFlags& f) {
  const auto variant = variant_from_name(f.variant);
  if (!variant) throw ValidationError("unknown variant '" + f.variant + "'");
  EncoderConfig cfg = EncoderConfig::defaults_for(*variant, f.k);
  if (f.lambda >= 0) cfg.lambda = f.lambda;
  if (f.target_l0 >= 0) cfg.target_l0 = f.target_l0;
  if (f.aux_alpha >= 0) cfg.aux_alpha = f.aux_alpha;
  cfg.aux_k = f.aux_k;
  cfg.dead_steps_threshold = f.dead_steps;
  cfg.ste_bandwidth = f.ste_bandwidth;
  cfg.mp_abs_argmax = f.mp_abs_argmax;
  cfg.detach_residual = f.detach_residual;
  cfg.freeze_b_pre = f.freeze_b_pre;
  return cfg;
}

json train_flags_json(const TrainFlags& f) {
  return {{"variant", f.variant},
          {"k", f.k},
          {"p", f.p},
          {"lambda", f.lambda},
          {"target_l0", f.target_l0},
          {"aux_alpha", f.aux_alpha},
          {"aux_k", f.aux_k},
          {"dead_steps", f.dead_steps},
          {"ste_bandwidth", f.ste_bandwidth},
          {"mp_abs_argmax", f.mp_abs_argmax},
          {"detach_residual", f.detach_residual},
          {"freeze_b_pre", f.freeze_b_pre},
          {"epochs", f.epochs},
          {"batch", f.batch},
          {"lr_init", f.lr_init},
          {"lr_final", f.lr_final},
          {"warmup_steps", f.warmup_steps},
          {"log_every", f.log_every},
          {"seed", f.seed},
          {"out_dir", f.out_dir},
          {"data", data_flags_json(f.data)}};
}

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--variant", f.variant, "relu|jumprelu|topk|batchtopk|mp");
  cmd->add_option("--k", f.k, "target sparsity");
  cmd->add_option("--p", f.p, "atom count");
  cmd->add_option("--lambda", f.lambda, "l1 weight (ReLU)");
  cmd->add_option("--target-l0", f.target_l0, "expected-L0 weight (JumpReLU)");
  cmd->add_option("--aux-alpha", f.aux_alpha, "auxiliary loss weight");
  cmd->add_option("--aux-k", f.aux_k, "dead atoms used by the aux loss (0 = auto)");
  cmd->add_option("--dead-steps", f.dead_steps, "steps without activation before an atom is dead");
  cmd->add_option("--ste-bandwidth", f.ste_bandwidth, "JumpReLU straight-through kernel width");
  cmd->add_flag("--mp-abs-argmax", f.mp_abs_argmax, "use |correlation| argmax in MP");
  cmd->add_flag("--detach-residual", f.detach_residual, "cheap MP backprop (detached residuals)");
  cmd->add_flag("--freeze-b-pre", f.freeze_b_pre, "do not train b_pre");
  cmd->add_option("--epochs", f.epochs, "training epochs");
  cmd->add_option("--batch", f.batch, "batch size");
  cmd->add_option("--lr-init", f.lr_init, "peak learning rate");
  cmd->add_option("--lr-final", f.lr_final, "final learning rate");
  cmd->add_option("--warmup-steps", f.warmup_steps, "warmup steps (0 = one epoch)");
  cmd->add_option("--log-every", f.log_every, "log every N steps");
  cmd->add_option("--seed", f.seed, "run seed");
  cmd->add_option("--out-dir", f.out_dir, "output directory");
  cmd->add_flag("--quiet", f.quiet, "suppress progress output");
  add_data_flags(cmd, f.data);
}

void apply_config_train(const json& cfg, TrainFlags& f) {
  overlay(cfg, "variant", f.variant);
  overlay(cfg, "k", f.k);
  overlay(cfg, "p", f.p);
  overlay(cfg, "lambda", f.lambda);
  overlay(cfg, "target_l0", f.target_l0);
  overlay(cfg, "aux_alpha", f.aux_alpha);
  overlay(cfg, "aux_k", f.aux_k);
  overlay(cfg, "dead_steps", f.dead_steps);
  overlay(cfg, "ste_bandwidth", f.ste_bandwidth);
  overlay(cfg, "mp_abs_argmax", f.mp_abs_argmax);
  overlay(cfg, "detach_residual", f.detach_residual);
  overlay(cfg, "freeze_b_pre", f.freeze_b_pre);
  overlay(cfg, "epochs", f.epochs);
  overlay(cfg, "batch", f.batch);
  overlay(cfg, "lr_init", f.lr_init);
  overlay(cfg, "lr_final", f.lr_final);
  overlay(cfg, "warmup_steps", f.warmup_steps);
  overlay(cfg, "log_every", f.log_every);
  overlay(cfg, "seed", f.seed);
  overlay(cfg, "out_dir", f.out_dir);
}

LossBreakdown evaluate_loss(const Dictionary& dict, const EncoderConfig& cfg, const Matrix& data,
                            std::size_t batch_size) {
  LossBreakdown total;
  std::size_t n = 0;
  for (std::size_t start = 0; start < data.rows; start += batch_size) {
    const std::size_t bsz = std::min(batch_size, data.rows - start);
    Matrix batch(bsz, data.cols);
    std::copy(data.row_ptr(start), data.row_ptr(start) + bsz * data.cols, batch.data.begin());
    const LossBreakdown part = loss_and_gradients(dict, cfg, batch, nullptr);
    const double w = static_cast<double>(bsz);
    total.recon += part.recon * w;
    total.sparsity_penalty += part.sparsity_penalty * w;
    total.aux += part.aux * w;
    total.l0 += part.l0 * w;
    n += bsz;
  }
  const double inv = 1.0 / static_cast<double>(n);
  total.recon *= inv;
  total.sparsity_penalty *= inv;
  total.aux *= inv;
  total.l0 *= inv;
  total.total = total.recon + total.sparsity_penalty + total.aux;
  return total;
}

int cmd_train(const TrainFlags& f) {
  const Dataset ds = load_dataset(f.data);
  EncoderConfig cfg = config_from_flags(f);
  cfg.validate(f.p);

  Rng rng(f.seed);
  Dictionary dict = init_dictionary(ds.dim(), f.p, rng, ds.mean, cfg.variant);

  TrainOptions opt;
  opt.epochs = f.epochs;
  opt.batch_size = f.batch;
  opt.seed = f.seed;
  opt.lr_init = f.lr_init;
  opt.lr_final = f.lr_final;
  opt.warmup_steps = f.warmup_steps;
  opt.log_every = f.log_every;
  opt.progress = f.quiet ? nullptr : &std::cerr;

  const auto log = train(dict, cfg, ds.samples, opt);

  ensure_out_dir(f.out_dir);
  const fs::path out(f.out_dir);
  write_json_file(train_flags_json(f), out / "run_config.json");
  write_train_log_csv(log, out / "train_log.csv");
  save_checkpoint(dict, cfg, CheckpointMeta{f.seed}, out / "checkpoint.sdlc");

  const LossBreakdown final_loss = evaluate_loss(dict, cfg, ds.samples, f.batch);
  std::cout.precision(10);
  std::cout << "final: recon=" << final_loss.recon
            << " sparsity_penalty=" << final_loss.sparsity_penalty << " aux=" << final_loss.aux
            << " total=" << final_loss.total << " mean_l0=" << final_loss.l0 << "\n";
  std::cout << "checkpoint: " << (out / "checkpoint.sdlc").string() << "\n";
  return 0;
}

// ---------------------------------------------------------------- eval

struct EvalFlags {
  std::string checkpoint;
  std::string k_sweep;
  std::string babel_r = "1..20";
  std::string coact_r = "1,2,4,8";
  std::size_t batch = 256;
  std::uint64_t seed = 0;
  std::string out_dir = "eval";
  DataFlags data;
};

std::vector<SparseCode> encode_in_chunks(const Dictionary& dict, const EncoderConfig& cfg,
                                         const Matrix& x, std::size_t chunk) {
  std::vector<SparseCode> codes;
  codes.reserve(x.rows);
  for (std::size_t start = 0; start < x.rows; start += chunk) {
    const std::size_t bsz = std::min(chunk, x.rows - start);
    Matrix batch(bsz, x.cols);
    std::copy(x.row_ptr(start), x.row_ptr(start) + bsz * x.cols, batch.data.begin());
    auto part = encode_batch(dict, cfg, batch);
    for (auto& c : part) codes.push_back(std::move(c));
  }
  return codes;
}

double r2_at_k(const Dictionary& dict, const EncoderConfig& cfg, const Matrix& x, std::size_t k,
               std::size_t chunk) {
  EncoderConfig at_k = cfg;
  if (cfg.variant == EncoderVariant::TopK || cfg.variant == EncoderVariant::BatchTopK ||
      cfg.variant == EncoderVariant::MP) {
    at_k.k = std::min(k, dict.p);
  }
  const auto codes = encode_in_chunks(dict, at_k, x, chunk);
  Matrix xhat(x.rows, x.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    const Vec row = decode(dict, codes[i]);
    std::copy(row.begin(), row.end(), xhat.row_ptr(i));
  }
  return r_squared(x, xhat);
}

void write_coact_row(std::ofstream& out, long long r, const CoactBabelSummary& s) {
  out << r << ',' << s.mean << ',' << s.max << ',' << s.q5 << ',' << s.q25 << ',' << s.q50 << ','
      << s.q75 << ',' << s.q95 << ',' << s.used << ',' << s.skipped << '\n';
}

int cmd_eval(const EvalFlags& f) {
  const Checkpoint ckpt = load_checkpoint(f.checkpoint);
  const Dataset ds = load_dataset(f.data);
  if (ds.dim() != ckpt.dict.m) {
    throw ValidationError("dataset dim " + std::to_string(ds.dim()) +
                          " does not match checkpoint m = " + std::to_string(ckpt.dict.m));
  }
  ensure_out_dir(f.out_dir);
  const fs::path out(f.out_dir);

  std::vector<std::size_t> ks;
  if (!f.k_sweep.empty()) {
    ks = parse_index_list(f.k_sweep);
  } else {
    ks = {std::max<std::size_t>(1, ckpt.cfg.k)};
  }
  for (std::size_t k : ks) {
    if (k < 1) throw ValidationError("--k-sweep entries must be >= 1");
  }

  {
    auto csv = open_csv(out / "r2.csv");
    csv << "k,r2\n";
    if (ckpt.cfg.variant == EncoderVariant::MP) {
      // One long trace per sample covers every requested k.
      const std::size_t k_max = *std::max_element(ks.begin(), ks.end());
      Vec ss_res_at_k(k_max + 1, 0.0);
      double ss_tot = 0.0;
      const Vec mean = column_mean(ds.samples);
      MpOptions opt{.abs_argmax = ckpt.cfg.mp_abs_argmax, .record_partials = false};
      for (std::size_t i = 0; i < ds.n(); ++i) {
        Vec xi(ds.samples.row_ptr(i), ds.samples.row_ptr(i) + ds.dim());
        const auto [code, trace] = encode_mp(ckpt.dict, xi, k_max, opt);
        for (std::size_t k = 0; k <= k_max; ++k) {
          const std::size_t idx = std::min(k, trace.residual_norms.size() - 1);
          ss_res_at_k[k] += trace.residual_norms[idx] * trace.residual_norms[idx];
        }
        for (std::size_t l = 0; l < ds.dim(); ++l) {
          const double c = xi[l] - mean[l];
          ss_tot += c * c;
        }
      }
      if (ss_tot == 0.0) throw ValidationError("r_squared: constant batch (zero variance)");
      for (std::size_t k : ks) csv << k << ',' << 1.0 - ss_res_at_k[k] / ss_tot << '\n';
    } else {
      for (std::size_t k : ks) {
        csv << k << ',' << r2_at_k(ckpt.dict, ckpt.cfg, ds.samples, k, f.batch) << '\n';
      }
    }
  }

  {
    auto csv = open_csv(out / "babel_dict.csv");
    csv << "r,mu1\n";
    for (std::size_t r : parse_index_list(f.babel_r)) {
      if (r < 1 || r > ckpt.dict.p - 1) continue;
      csv << r << ',' << babel(ckpt.dict.d, r) << '\n';
    }
  }

  const auto codes = encode_in_chunks(ckpt.dict, ckpt.cfg, ds.samples, f.batch);

  {
    auto csv = open_csv(out / "babel_coact.csv");
    csv << "r,mean,max,p5,p25,p50,p75,p95,used,skipped\n";
    for (std::size_t r : parse_index_list(f.coact_r)) {
      if (r < 1) continue;
      try {
        write_coact_row(csv, static_cast<long long>(r), coactivation_babel(codes, ckpt.dict.d, r));
      } catch (const ValidationError&) {
        // every sample skipped at this order; leave the row out
      }
    }
    // r = -1: adaptive per-sample order |S| - 1.
    try {
      write_coact_row(csv, -1, coactivation_babel_adaptive(codes, ckpt.dict.d));
    } catch (const ValidationError&) {
    }
  }

  {
    const bool ordered = ckpt.cfg.variant == EncoderVariant::MP;
    const ActivationStats stats = activation_stats(codes, ckpt.dict.p, ordered);
    auto csv = open_csv(out / "activation_stats.csv");
    csv << "atom,freq,mean_value,mean_value_active,mean_selection_step\n";
    for (std::size_t j = 0; j < ckpt.dict.p; ++j) {
      csv << j << ',' << stats.freq[j] << ',' << stats.mean_value[j] << ','
          << stats.mean_value_when_active[j] << ',';
      if (std::isnan(stats.mean_selection_step[j])) {
        csv << '\n';  // never selected: empty field
      } else {
        csv << stats.mean_selection_step[j] << '\n';
      }
    }
  }

  {
    const std::size_t k_max = *std::max_element(ks.begin(), ks.end());
    const Vec curve = residual_curve(ckpt.dict, ckpt.cfg, ds.samples, k_max);
    auto csv = open_csv(out / "residual_curve.csv");
    csv << "k,mean_err\n";
    for (std::size_t k = 1; k <= k_max; ++k) csv << k << ',' << curve[k - 1] << '\n';
  }

  write_json_file(json{{"checkpoint", f.checkpoint},
                       {"k_sweep", f.k_sweep},
                       {"babel_r", f.babel_r},
                       {"coact_r", f.coact_r},
                       {"batch", f.batch},
                       {"seed", f.seed},
                       {"out_dir", f.out_dir},
                       {"data", data_flags_json(f.data)}},
                  out / "run_config.json");
  std::cout << "eval written to " << out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------- sweep

struct SweepFlags {
  std::string variants = "mp,topk";
  std::string k_grid = "10";
  std::string p_grid = "256";
  std::string seeds = "0";
  std::size_t epochs = 10;
  std::size_t batch = 256;
  double lr_init = 5e-4;
  double lr_final = 1e-6;
  std::string out_dir = "sweep";
  bool quiet = false;
  DataFlags data;
};

std::vector<std::string> split_csv(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int cmd_sweep(const SweepFlags& f) {
  const Dataset ds = load_dataset(f.data);
  const auto variants = split_csv(f.variants);
  const auto ks = parse_index_list(f.k_grid);
  const auto ps = parse_index_list(f.p_grid);
  const auto seeds = parse_index_list(f.seeds);
  if (variants.empty()) throw ValidationError("--variants is empty");

  ensure_out_dir(f.out_dir);
  const fs::path out(f.out_dir);
  auto csv = open_csv(out / "sweep.csv");
  csv << "variant,k,p,seed,r2\n";

  for (const auto& vname : variants) {
    const auto variant = variant_from_name(vname);
    if (!variant) throw ValidationError("unknown variant '" + vname + "'");
    for (std::size_t p : ps) {
      for (std::size_t k : ks) {
        for (std::size_t seed : seeds) {
          EncoderConfig cfg = EncoderConfig::defaults_for(*variant, k);
          cfg.validate(p);
          Rng rng(seed);
          Dictionary dict = init_dictionary(ds.dim(), p, rng, ds.mean, cfg.variant);
          TrainOptions opt;
          opt.epochs = f.epochs;
          opt.batch_size = f.batch;
          opt.seed = seed;
          opt.lr_init = f.lr_init;
          opt.lr_final = f.lr_final;
          train(dict, cfg, ds.samples, opt);
          const double r2 = r2_at_k(dict, cfg, ds.samples, k, f.batch);
          csv << vname << ',' << k << ',' << p << ',' << seed << ',' << r2 << '\n';
          csv.flush();
          if (!f.quiet) {
            std::cerr << "cell " << vname << " k=" << k << " p=" << p << " seed=" << seed
                      << " r2=" << r2 << "\n";
          }
        }
      }
    }
  }
  write_json_file(json{{"variants", f.variants},
                       {"k_grid", f.k_grid},
                       {"p_grid", f.p_grid},
                       {"seeds", f.seeds},
                       {"epochs", f.epochs},
                       {"batch", f.batch},
                       {"out_dir", f.out_dir},
                       {"data", data_flags_json(f.data)}},
                  out / "run_config.json");
  std::cout << "sweep written to " << (out / "sweep.csv").string() << "\n";
  return 0;
}

// ---------------------------------------------------------------- inspect

struct InspectFlags {
  std::string checkpoint;
  std::string indices = "0";
  std::size_t steps = 0;  // 0 -> checkpoint k
  std::string out_dir = "inspect";
  std::uint64_t seed = 0;
  DataFlags data;
};

int cmd_inspect(const InspectFlags& f) {
  const Checkpoint ckpt = load_checkpoint(f.checkpoint);
  const Dataset ds = load_dataset(f.data);
  if (ds.dim() != ckpt.dict.m) {
    throw ValidationError("dataset dim does not match checkpoint m");
  }
  ensure_out_dir(f.out_dir);
  const fs::path out(f.out_dir);
  const std::size_t t_steps = f.steps > 0 ? f.steps : std::max<std::size_t>(1, ckpt.cfg.k);
  const std::size_t side = perfect_square_side(ckpt.dict.m);

  for (std::size_t idx : parse_index_list(f.indices)) {
    if (idx >= ds.n()) {
      throw ValidationError("sample index " + std::to_string(idx) + " out of range (n = " +
                            std::to_string(ds.n()) + ")");
    }
    Vec x(ds.samples.row_ptr(idx), ds.samples.row_ptr(idx) + ds.dim());

    // Selection sequence: real for MP, simulated (descending coefficient) for
    // the shallow variants.
    std::vector<SparseCode::Entry> seq;
    if (ckpt.cfg.variant == EncoderVariant::MP) {
      MpOptions opt{.abs_argmax = ckpt.cfg.mp_abs_argmax, .record_partials = false};
      seq = encode_mp(ckpt.dict, x, t_steps, opt).first.active;
    } else {
      Matrix one(1, ds.dim());
      std::copy(x.begin(), x.end(), one.data.begin());
      seq = encode_batch(ckpt.dict, ckpt.cfg, one)[0].active;
      std::sort(seq.begin(), seq.end(), [](const auto& a, const auto& b) {
        if (a.value != b.value) return a.value > b.value;
        return a.atom < b.atom;
      });
    }

    // Replay the sequence: xhat^(0) = b_pre, one atom per step.
    std::vector<Vec> partials{ckpt.dict.b_pre};
    Vec residual = x;
    for (std::size_t l = 0; l < x.size(); ++l) residual[l] -= ckpt.dict.b_pre[l];
    Vec res_norms{norm2(residual)};
    Vec xhat = ckpt.dict.b_pre;
    for (const auto& e : seq) {
      for (std::size_t l = 0; l < x.size(); ++l) {
        xhat[l] += e.value * ckpt.dict.d(l, e.atom);
        residual[l] -= e.value * ckpt.dict.d(l, e.atom);
      }
      partials.push_back(xhat);
      res_norms.push_back(norm2(residual));
    }

    const std::string stem = "sample_" + std::to_string(idx);
    auto csv = open_csv(out / (stem + "_trace.csv"));
    csv << "step,atom,coeff,residual_norm\n";
    csv << 0 << ",,," << res_norms[0] << '\n';
    for (std::size_t t = 0; t < seq.size(); ++t) {
      csv << (t + 1) << ',' << seq[t].atom << ',' << seq[t].value << ',' << res_norms[t + 1]
          << '\n';
    }

    if (side > 0) {
      // Horizontal strip xhat^(0..T); clamp-to-[0,1] data-space rendering.
      const std::size_t tiles = partials.size();
      std::vector<std::uint8_t> strip(side * side * tiles);
      for (std::size_t t = 0; t < tiles; ++t) {
        for (std::size_t rr = 0; rr < side; ++rr) {
          for (std::size_t cc = 0; cc < side; ++cc) {
            strip[rr * (side * tiles) + t * side + cc] = clamp01_byte(partials[t][rr * side + cc]);
          }
        }
      }
      write_pgm(out / (stem + "_strip.pgm"), side * tiles, side, strip);
    }
  }

  write_json_file(json{{"checkpoint", f.checkpoint},
                       {"indices", f.indices},
                       {"steps", f.steps},
                       {"out_dir", f.out_dir},
                       {"data", data_flags_json(f.data)}},
                  out / "run_config.json");
  std::cout << "inspect written to " << out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------- export-atoms

struct ExportAtomsFlags {
  std::string checkpoint;
  std::size_t n = 25;
  std::size_t batch = 256;
  std::string out_dir = "atoms";
  std::uint64_t seed = 0;
  DataFlags data;
};

int cmd_export_atoms(const ExportAtomsFlags& f) {
  const Checkpoint ckpt = load_checkpoint(f.checkpoint);
  if (f.n > ckpt.dict.p) {
    throw ValidationError("--n = " + std::to_string(f.n) + " exceeds atom count p = " +
                          std::to_string(ckpt.dict.p));
  }
  const Dataset ds = load_dataset(f.data);
  if (ds.dim() != ckpt.dict.m) throw ValidationError("dataset dim does not match checkpoint m");
  ensure_out_dir(f.out_dir);
  const fs::path out(f.out_dir);

  const auto codes = encode_in_chunks(ckpt.dict, ckpt.cfg, ds.samples, f.batch);
  const ActivationStats stats =
      activation_stats(codes, ckpt.dict.p, ckpt.cfg.variant == EncoderVariant::MP);

  auto ranked = [&](const Vec& score) {
    std::vector<std::size_t> order(ckpt.dict.p);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (score[a] != score[b]) return score[a] > score[b];
      return a < b;
    });
    order.resize(f.n);
    return order;
  };
  const auto by_freq = ranked(stats.freq);
  const auto by_value = ranked(stats.mean_value);

  auto write_ranking = [&](const std::vector<std::size_t>& order, const std::string& name) {
    auto csv = open_csv(out / (name + ".csv"));
    csv << "rank,atom,freq,mean_value\n";
    for (std::size_t r = 0; r < order.size(); ++r) {
      csv << r << ',' << order[r] << ',' << stats.freq[order[r]] << ','
          << stats.mean_value[order[r]] << '\n';
    }
  };
  write_ranking(by_freq, "atoms_by_freq");
  write_ranking(by_value, "atoms_by_value");

  const std::size_t side = perfect_square_side(ckpt.dict.m);
  if (side > 0) {
    const std::size_t grid = static_cast<std::size_t>(
        std::ceil(std::sqrt(static_cast<double>(f.n))));
    auto write_grid = [&](const std::vector<std::size_t>& order, const std::string& name) {
      std::vector<std::uint8_t> img(grid * side * grid * side, 0);
      for (std::size_t t = 0; t < order.size(); ++t) {
        const Vec atom = column(ckpt.dict.d, order[t]);
        const auto tile = minmax_tile(atom.data(), atom.size());
        const std::size_t gr = t / grid, gc = t % grid;
        for (std::size_t rr = 0; rr < side; ++rr) {
          for (std::size_t cc = 0; cc < side; ++cc) {
            img[(gr * side + rr) * (grid * side) + gc * side + cc] = tile[rr * side + cc];
          }
        }
      }
      write_pgm(out / (name + ".pgm"), grid * side, grid * side, img);
    };
    write_grid(by_freq, "atoms_by_freq");
    write_grid(by_value, "atoms_by_value");
  } else {
    // Non-image dims: raw atom vectors, one row per ranked atom.
    auto write_vectors = [&](const std::vector<std::size_t>& order, const std::string& name) {
      auto csv = open_csv(out / (name + "_vectors.csv"));
      csv << "atom";
      for (std::size_t l = 0; l < ckpt.dict.m; ++l) csv << ",v" << l;
      csv << '\n';
      for (std::size_t j : order) {
        csv << j;
        for (std::size_t l = 0; l < ckpt.dict.m; ++l) csv << ',' << ckpt.dict.d(l, j);
        csv << '\n';
      }
    };
    write_vectors(by_freq, "atoms_by_freq");
    write_vectors(by_value, "atoms_by_value");
  }

  write_json_file(json{{"checkpoint", f.checkpoint},
                       {"n", f.n},
                       {"out_dir", f.out_dir},
                       {"data", data_flags_json(f.data)}},
                  out / "run_config.json");
  std::cout << "atom exports written to " << out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------- gen-synthetic

struct GenSyntheticFlags {
  std::size_t m = 64;
  std::size_t p_true = 64;
  std::size_t k_true = 3;
  std::size_t n = 20000;
  std::string mode = "orthogonal";
  std::size_t block_size = 4;
  double coherence = 0.8;
  double noise_sigma = 0.01;
  std::uint64_t seed = 0;
  std::string out_dir = "synthetic";
};

int cmd_gen_synthetic(const GenSyntheticFlags& f) {
  SyntheticSpec spec;
  spec.m = f.m;
  spec.p_true = f.p_true;
  spec.k_true = f.k_true;
  spec.n = f.n;
  spec.block_size = f.block_size;
  spec.within_block_coherence = f.coherence;
  spec.noise_sigma = f.noise_sigma;
  spec.seed = f.seed;
  if (f.mode == "orthogonal") {
    spec.mode = CoherenceMode::Orthogonal;
  } else if (f.mode == "random") {
    spec.mode = CoherenceMode::Random;
  } else if (f.mode == "block") {
    spec.mode = CoherenceMode::Block;
  } else {
    throw ValidationError("unknown mode '" + f.mode + "' (orthogonal|random|block)");
  }

  const SyntheticData data = generate_synthetic(spec);
  ensure_out_dir(f.out_dir);
  const fs::path out(f.out_dir);
  save_activation_matrix(data.data.samples, out / "data.sdla");
  save_activation_matrix(data.codes_true, out / "codes_true.sdla");

  // Ground-truth dictionary stored in the checkpoint container (variant mp,
  // no encoder weights) so recovery-score can read it back.
  Dictionary dict_true;
  dict_true.m = spec.m;
  dict_true.p = spec.p_true;
  dict_true.d = data.dict_true;
  dict_true.b_pre = Vec(spec.m, 0.0);
  EncoderConfig cfg = EncoderConfig::defaults_for(EncoderVariant::MP, spec.k_true);
  save_checkpoint(dict_true, cfg, CheckpointMeta{f.seed}, out / "dict_true.sdlc");

  write_json_file(json{{"m", f.m},
                       {"p_true", f.p_true},
                       {"k_true", f.k_true},
                       {"n", f.n},
                       {"mode", f.mode},
                       {"block_size", f.block_size},
                       {"coherence", f.coherence},
                       {"noise_sigma", f.noise_sigma},
                       {"seed", f.seed},
                       {"out_dir", f.out_dir}},
                  out / "run_config.json");
  std::cout << "synthetic dataset written to " << out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------- recovery-score

struct RecoveryFlags {
  std::string learned;
  std::string truth;
  double threshold = 0.9;
  std::string out_dir;
};

int cmd_recovery_score(const RecoveryFlags& f) {
  const Checkpoint learned = load_checkpoint(f.learned);
  const Checkpoint truth = load_checkpoint(f.truth);
  const RecoveryScore score = recovery_score(learned.dict.d, truth.dict.d, f.threshold);
  std::cout.precision(10);
  std::cout << "matched_fraction=" << score.matched_fraction
            << " mean_best_cosine=" << score.mean_best_cosine << " threshold=" << f.threshold
            << "\n";
  if (!f.out_dir.empty()) {
    ensure_out_dir(f.out_dir);
    auto csv = open_csv(fs::path(f.out_dir) / "recovery.csv");
    csv << "threshold,matched_fraction,mean_best_cosine\n";
    csv << f.threshold << ',' << score.matched_fraction << ',' << score.mean_best_cosine << '\n';
  }
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"sparse dictionary-learning workbench"};
  app.require_subcommand(1);

  // --config pre-scan: config values become defaults, flags still win.
  std::string config_path;
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--config") config_path = argv[i + 1];
  }

  TrainFlags train_flags;
  EvalFlags eval_flags;
  SweepFlags sweep_flags;
  InspectFlags inspect_flags;
  ExportAtomsFlags atoms_flags;
  GenSyntheticFlags synth_flags;
  RecoveryFlags recovery_flags;
  std::string config_sink;

  try {
    const json cfg = maybe_load_config(config_path);

    auto* train_cmd = app.add_subcommand("train", "train an SAE variant");
    apply_config_train(cfg, train_flags);
    add_train_flags(train_cmd, train_flags);
    train_cmd->add_option("--config", config_sink, "JSON config file");

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    overlay(cfg, "checkpoint", eval_flags.checkpoint);
    overlay(cfg, "k_sweep", eval_flags.k_sweep);
    overlay(cfg, "out_dir", eval_flags.out_dir);
    eval_cmd->add_option("--checkpoint", eval_flags.checkpoint, "checkpoint file")->required();
    eval_cmd->add_option("--k-sweep", eval_flags.k_sweep, "inference sparsities, e.g. 1..50");
    eval_cmd->add_option("--babel-r", eval_flags.babel_r, "dictionary Babel orders");
    eval_cmd->add_option("--coact-r", eval_flags.coact_r, "co-activation Babel orders");
    eval_cmd->add_option("--batch", eval_flags.batch, "evaluation batch size");
    eval_cmd->add_option("--seed", eval_flags.seed, "seed (reserved)");
    eval_cmd->add_option("--out-dir", eval_flags.out_dir, "output directory");
    eval_cmd->add_option("--config", config_sink, "JSON config file");
    add_data_flags(eval_cmd, eval_flags.data);

    auto* sweep_cmd = app.add_subcommand("sweep", "train a (variant, k, p, seed) grid");
    sweep_cmd->add_option("--variants", sweep_flags.variants, "comma-separated variants");
    sweep_cmd->add_option("--k-grid", sweep_flags.k_grid, "k values");
    sweep_cmd->add_option("--p-grid", sweep_flags.p_grid, "p values");
    sweep_cmd->add_option("--seeds", sweep_flags.seeds, "seeds");
    sweep_cmd->add_option("--epochs", sweep_flags.epochs, "epochs per cell");
    sweep_cmd->add_option("--batch", sweep_flags.batch, "batch size");
    sweep_cmd->add_option("--lr-init", sweep_flags.lr_init, "peak learning rate");
    sweep_cmd->add_option("--lr-final", sweep_flags.lr_final, "final learning rate");
    sweep_cmd->add_option("--out-dir", sweep_flags.out_dir, "output directory");
    sweep_cmd->add_flag("--quiet", sweep_flags.quiet, "suppress progress output");
    sweep_cmd->add_option("--config", config_sink, "JSON config file");
    add_data_flags(sweep_cmd, sweep_flags.data);

    auto* inspect_cmd = app.add_subcommand("inspect", "sequential reconstruction traces");
    inspect_cmd->add_option("--checkpoint", inspect_flags.checkpoint, "checkpoint file")
        ->required();
    inspect_cmd->add_option("--indices", inspect_flags.indices, "sample indices, e.g. 0,5,7");
    inspect_cmd->add_option("--steps", inspect_flags.steps, "MP steps (0 = checkpoint k)");
    inspect_cmd->add_option("--out-dir", inspect_flags.out_dir, "output directory");
    inspect_cmd->add_option("--seed", inspect_flags.seed, "seed (reserved)");
    inspect_cmd->add_option("--config", config_sink, "JSON config file");
    add_data_flags(inspect_cmd, inspect_flags.data);

    auto* atoms_cmd = app.add_subcommand("export-atoms", "top-N atom grids under both rankings");
    atoms_cmd->add_option("--checkpoint", atoms_flags.checkpoint, "checkpoint file")->required();
    atoms_cmd->add_option("--n", atoms_flags.n, "atoms per ranking");
    atoms_cmd->add_option("--batch", atoms_flags.batch, "encode batch size");
    atoms_cmd->add_option("--out-dir", atoms_flags.out_dir, "output directory");
    atoms_cmd->add_option("--seed", atoms_flags.seed, "seed (reserved)");
    atoms_cmd->add_option("--config", config_sink, "JSON config file");
    add_data_flags(atoms_cmd, atoms_flags.data);

    auto* synth_cmd = app.add_subcommand("gen-synthetic", "ground-truth dictionary dataset");
    synth_cmd->add_option("--m", synth_flags.m, "input dimension");
    synth_cmd->add_option("--p-true", synth_flags.p_true, "true atom count");
    synth_cmd->add_option("--k-true", synth_flags.k_true, "true sparsity");
    synth_cmd->add_option("--n", synth_flags.n, "sample count");
    synth_cmd->add_option("--mode", synth_flags.mode, "orthogonal|random|block");
    synth_cmd->add_option("--block-size", synth_flags.block_size, "block size (block mode)");
    synth_cmd->add_option("--coherence", synth_flags.coherence, "within-block coherence");
    synth_cmd->add_option("--noise-sigma", synth_flags.noise_sigma, "additive noise sigma");
    synth_cmd->add_option("--seed", synth_flags.seed, "generator seed");
    synth_cmd->add_option("--out-dir", synth_flags.out_dir, "output directory");
    synth_cmd->add_option("--config", config_sink, "JSON config file");

    auto* recovery_cmd = app.add_subcommand("recovery-score", "match learned atoms to ground truth");
    recovery_cmd->add_option("--learned", recovery_flags.learned, "learned checkpoint")
        ->required();
    recovery_cmd->add_option("--truth", recovery_flags.truth, "ground-truth checkpoint")
        ->required();
    recovery_cmd->add_option("--threshold", recovery_flags.threshold, "|cosine| match threshold");
    recovery_cmd->add_option("--out-dir", recovery_flags.out_dir, "optional output directory");
    recovery_cmd->add_option("--config", config_sink, "JSON config file");

    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e);
      return code == 0 ? 0 : 2;
    }

    if (train_cmd->parsed()) return cmd_train(train_flags);
    if (eval_cmd->parsed()) return cmd_eval(eval_flags);
    if (sweep_cmd->parsed()) return cmd_sweep(sweep_flags);
    if (inspect_cmd->parsed()) return cmd_inspect(inspect_flags);
    if (atoms_cmd->parsed()) return cmd_export_atoms(atoms_flags);
    if (synth_cmd->parsed()) return cmd_gen_synthetic(synth_flags);
    if (recovery_cmd->parsed()) return cmd_recovery_score(recovery_flags);
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace sdlab
