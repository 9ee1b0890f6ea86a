#include "sdlab/model.hpp"

#include <cmath>
#include <fstream>

#include "container.hpp"
#include "sdlab/errors.hpp"

namespace sdlab {

const char* variant_name(EncoderVariant v) {
  switch (v) {
    case EncoderVariant::ReLU: return "relu";
    case EncoderVariant::JumpReLU: return "jumprelu";
    case EncoderVariant::TopK: return "topk";
    case EncoderVariant::BatchTopK: return "batchtopk";
    case EncoderVariant::MP: return "mp";
  }
  return "?";
}

std::optional<EncoderVariant> variant_from_name(std::string_view name) {
  if (name == "relu") return EncoderVariant::ReLU;
  if (name == "jumprelu") return EncoderVariant::JumpReLU;
  if (name == "topk") return EncoderVariant::TopK;
  if (name == "batchtopk") return EncoderVariant::BatchTopK;
  if (name == "mp") return EncoderVariant::MP;
  return std::nullopt;
}

bool variant_has_encoder(EncoderVariant v) { return v != EncoderVariant::MP; }

EncoderConfig EncoderConfig::defaults_for(EncoderVariant v, std::size_t k) {
  EncoderConfig cfg;
  cfg.variant = v;
  cfg.k = k;
  switch (v) {
    case EncoderVariant::ReLU:
      cfg.lambda = 1e-2;
      break;
    case EncoderVariant::JumpReLU:
      cfg.target_l0 = 1e-3;
      cfg.aux_alpha = 1.0 / 32.0;
      break;
    case EncoderVariant::TopK:
    case EncoderVariant::BatchTopK:
      cfg.aux_alpha = 1.0 / 32.0;
      break;
    case EncoderVariant::MP:
      break;
  }
  return cfg;
}

std::size_t EncoderConfig::effective_aux_k(std::size_t p) const {
  if (aux_k > 0) return aux_k;
  const std::size_t half = p / 2;
  const std::size_t twice = 2 * k;
  return std::max<std::size_t>(1, std::min(twice, half));
}

void EncoderConfig::validate(std::size_t p) const {
  const bool needs_k = variant == EncoderVariant::TopK || variant == EncoderVariant::BatchTopK ||
                       variant == EncoderVariant::MP;
  if (needs_k) {
    if (k < 1) throw ValidationError("k must be >= 1 for " + std::string(variant_name(variant)));
    if (p > 0 && k > p) {
      throw ValidationError("k = " + std::to_string(k) + " exceeds atom count p = " +
                            std::to_string(p));
    }
  }
  if (lambda < 0) throw ValidationError("lambda must be >= 0");
  if (target_l0 < 0) throw ValidationError("target_l0 must be >= 0");
  if (aux_alpha < 0) throw ValidationError("aux_alpha must be >= 0");
  if (ste_bandwidth < 0) throw ValidationError("ste_bandwidth must be >= 0");
}

Dictionary init_dictionary(std::size_t m, std::size_t p, Rng& rng, const Vec& data_mean,
                           EncoderVariant variant) {
  if (m == 0 || p == 0) throw ValidationError("init_dictionary: m and p must be >= 1");
  if (data_mean.size() != m) {
    throw ValidationError("init_dictionary: data_mean has length " +
                          std::to_string(data_mean.size()) + ", expected " + std::to_string(m));
  }
  Dictionary dict;
  dict.m = m;
  dict.p = p;
  dict.d = Matrix(m, p);
  // Column-by-column draw order so equal seeds give bit-identical dictionaries.
  for (std::size_t j = 0; j < p; ++j) {
    double ss = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double g = rng.normal();
      dict.d(i, j) = g;
      ss += g * g;
    }
    const double nrm = std::sqrt(ss);
    if (nrm < 1e-12) {
      for (std::size_t i = 0; i < m; ++i) dict.d(i, j) = (i == j % m) ? 1.0 : 0.0;
    } else {
      for (std::size_t i = 0; i < m; ++i) dict.d(i, j) /= nrm;
    }
  }
  dict.b_pre = data_mean;
  if (variant_has_encoder(variant)) {
    dict.encoder_weights = dict.d;  // W = D at init
    dict.encoder_bias = Vec(p, 0.0);
  }
  if (variant == EncoderVariant::JumpReLU) dict.thresholds = Vec(p, 1e-3);
  return dict;
}

RenormReport renormalize_columns(Dictionary& dict) {
  RenormReport report;
  report.old_norms.resize(dict.p);
  for (std::size_t j = 0; j < dict.p; ++j) {
    double ss = 0.0;
    for (std::size_t i = 0; i < dict.m; ++i) ss += dict.d(i, j) * dict.d(i, j);
    const double nrm = std::sqrt(ss);
    report.old_norms[j] = nrm;
    if (nrm < 1e-12) {
      for (std::size_t i = 0; i < dict.m; ++i) dict.d(i, j) = (i == j % dict.m) ? 1.0 : 0.0;
      report.degenerate.push_back(j);
    } else if (std::abs(nrm - 1.0) >= 1e-14) {
      // Columns already at unit norm stay untouched so a zero-gradient
      // optimizer step is the exact identity.
      for (std::size_t i = 0; i < dict.m; ++i) dict.d(i, j) /= nrm;
    }
  }
  return report;
}

double max_norm_deviation(const Dictionary& dict) {
  double worst = 0.0;
  for (std::size_t j = 0; j < dict.p; ++j) {
    double ss = 0.0;
    for (std::size_t i = 0; i < dict.m; ++i) ss += dict.d(i, j) * dict.d(i, j);
    worst = std::max(worst, std::abs(std::sqrt(ss) - 1.0));
  }
  return worst;
}

namespace {

constexpr char kCheckpointMagic[9] = "SDLCKPT1";

Matrix vec_as_row(const Vec& v) {
  Matrix m(1, v.size());
  m.data = v;
  return m;
}

void validate_pairing(const Dictionary& dict, const EncoderConfig& cfg) {
  if (dict.p < 1 || dict.m < 1) throw ValidationError("dictionary must have m >= 1 and p >= 1");
  const bool shallow = variant_has_encoder(cfg.variant);
  if (shallow && !dict.encoder_weights) {
    throw ValidationError(std::string(variant_name(cfg.variant)) +
                          " checkpoint requires encoder weights");
  }
  if (!shallow && dict.encoder_weights) {
    throw ValidationError("mp checkpoint must not carry encoder weights");
  }
  if (cfg.variant == EncoderVariant::JumpReLU && !dict.thresholds) {
    throw ValidationError("jumprelu checkpoint requires thresholds");
  }
  if (dict.b_pre.size() != dict.m) throw ValidationError("b_pre length mismatch");
  if (dict.d.rows != dict.m || dict.d.cols != dict.p) throw ValidationError("D shape mismatch");
  if (dict.encoder_weights &&
      (dict.encoder_weights->rows != dict.m || dict.encoder_weights->cols != dict.p)) {
    throw ValidationError("W shape mismatch");
  }
  if (dict.encoder_bias && dict.encoder_bias->size() != dict.p) {
    throw ValidationError("b length mismatch");
  }
  if (dict.thresholds) {
    if (dict.thresholds->size() != dict.p) throw ValidationError("theta length mismatch");
    for (double t : *dict.thresholds) {
      if (t < 0) throw ValidationError("thresholds must be >= 0");
    }
  }
}

}  // namespace

void save_checkpoint(const Dictionary& dict, const EncoderConfig& cfg, const CheckpointMeta& meta,
                     const std::filesystem::path& path) {
  validate_pairing(dict, cfg);
  const double dev = max_norm_deviation(dict);
  if (dev >= 1e-8) {
    throw ValidationError("refusing to save unnormalized dictionary: max |col norm - 1| = " +
                          std::to_string(dev));
  }

  nlohmann::json header{
      {"format_version", 1},
      {"m", dict.m},
      {"p", dict.p},
      {"variant", variant_name(cfg.variant)},
      {"k", cfg.k},
      {"lambda", cfg.lambda},
      {"target_l0", cfg.target_l0},
      {"aux_alpha", cfg.aux_alpha},
      {"aux_k", cfg.aux_k},
      {"ste_bandwidth", cfg.ste_bandwidth},
      {"seed", meta.seed},
  };

  std::vector<std::string> names{"D", "b_pre"};
  Matrix b_pre_row = vec_as_row(dict.b_pre);
  std::vector<Matrix> extra;
  extra.reserve(3);
  std::vector<const Matrix*> payloads{&dict.d, &b_pre_row};
  if (dict.encoder_weights) {
    names.push_back("W");
    payloads.push_back(&*dict.encoder_weights);
  }
  if (dict.encoder_bias) {
    names.push_back("b");
    extra.push_back(vec_as_row(*dict.encoder_bias));
    payloads.push_back(&extra.back());
  }
  if (dict.thresholds) {
    names.push_back("theta");
    extra.push_back(vec_as_row(*dict.thresholds));
    payloads.push_back(&extra.back());
  }
  std::vector<std::string> dtypes(names.size(), "f64");
  container::write_file(path, kCheckpointMagic, std::move(header), names, payloads, dtypes);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  auto layout = container::read_header(in, path, kCheckpointMagic);
  const auto& h = layout.header;

  if (h.value("format_version", 0) != 1) {
    throw IoError(path.string() + ": unsupported format_version");
  }

  Checkpoint ckpt;
  ckpt.dict.m = h.at("m").get<std::size_t>();
  ckpt.dict.p = h.at("p").get<std::size_t>();
  if (ckpt.dict.m < 1 || ckpt.dict.p < 1) {
    throw IoError(path.string() + ": invariant violation: m and p must be >= 1");
  }
  const auto variant = variant_from_name(h.at("variant").get<std::string>());
  if (!variant) {
    throw IoError(path.string() + ": unknown variant '" + h.at("variant").get<std::string>() +
                  "'");
  }
  ckpt.cfg = EncoderConfig{};
  ckpt.cfg.variant = *variant;
  ckpt.cfg.k = h.at("k").get<std::size_t>();
  ckpt.cfg.lambda = h.at("lambda").get<double>();
  ckpt.cfg.target_l0 = h.at("target_l0").get<double>();
  ckpt.cfg.aux_alpha = h.at("aux_alpha").get<double>();
  ckpt.cfg.aux_k = h.at("aux_k").get<std::size_t>();
  ckpt.cfg.ste_bandwidth = h.at("ste_bandwidth").get<double>();
  ckpt.meta.seed = h.at("seed").get<std::uint64_t>();

  for (const auto& entry : layout.arrays) {
    Matrix arr = container::read_array(in, path, entry);
    if (entry.dtype != "f64") {
      throw IoError(path.string() + ": checkpoint arrays must be f64");
    }
    if (entry.name == "D") {
      if (arr.rows != ckpt.dict.m || arr.cols != ckpt.dict.p) {
        throw IoError(path.string() + ": D shape does not match header");
      }
      ckpt.dict.d = std::move(arr);
    } else if (entry.name == "b_pre") {
      if (arr.rows * arr.cols != ckpt.dict.m) {
        throw IoError(path.string() + ": b_pre length does not match header");
      }
      ckpt.dict.b_pre = std::move(arr.data);
    } else if (entry.name == "W") {
      if (arr.rows != ckpt.dict.m || arr.cols != ckpt.dict.p) {
        throw IoError(path.string() + ": W shape does not match header");
      }
      ckpt.dict.encoder_weights = std::move(arr);
    } else if (entry.name == "b") {
      if (arr.rows * arr.cols != ckpt.dict.p) {
        throw IoError(path.string() + ": b length does not match header");
      }
      ckpt.dict.encoder_bias = std::move(arr.data);
    } else if (entry.name == "theta") {
      if (arr.rows * arr.cols != ckpt.dict.p) {
        throw IoError(path.string() + ": theta length does not match header");
      }
      ckpt.dict.thresholds = std::move(arr.data);
    } else {
      throw IoError(path.string() + ": unknown array '" + entry.name + "'");
    }
  }

  if (ckpt.dict.d.data.empty() || ckpt.dict.b_pre.empty()) {
    throw IoError(path.string() + ": missing required arrays D/b_pre");
  }
  try {
    validate_pairing(ckpt.dict, ckpt.cfg);
  } catch (const ValidationError& e) {
    throw IoError(path.string() + ": invariant violation: " + e.what());
  }
  return ckpt;
}

}  // namespace sdlab
