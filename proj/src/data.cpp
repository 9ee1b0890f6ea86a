#include "sdlab/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "container.hpp"
#include "sdlab/errors.hpp"
#include "sdlab/rng.hpp"

namespace sdlab {

Vec column_mean(const Matrix& samples) {
  Vec mean(samples.cols, 0.0);
  for (std::size_t i = 0; i < samples.rows; ++i) {
    for (std::size_t j = 0; j < samples.cols; ++j) mean[j] += samples(i, j);
  }
  for (double& v : mean) v /= static_cast<double>(std::max<std::size_t>(1, samples.rows));
  return mean;
}

namespace {

std::uint32_t read_be_u32(std::ifstream& in, const std::filesystem::path& path) {
  unsigned char buf[4];
  if (!in.read(reinterpret_cast<char*>(buf), 4)) {
    throw IoError(path.string() + ": truncated header");
  }
  return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
         (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}

}  // namespace

MnistData load_mnist_idx(const std::filesystem::path& images_path,
                         const std::filesystem::path& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw IoError("cannot open: " + images_path.string());
  const std::uint32_t img_magic = read_be_u32(img, images_path);
  if (img_magic != 2051) {
    throw IoError(images_path.string() + ": bad magic " + std::to_string(img_magic) +
                  " (expected 2051)");
  }
  const std::uint32_t n = read_be_u32(img, images_path);
  const std::uint32_t rows = read_be_u32(img, images_path);
  const std::uint32_t cols = read_be_u32(img, images_path);
  const std::size_t dim = std::size_t(rows) * cols;

  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw IoError("cannot open: " + labels_path.string());
  const std::uint32_t lab_magic = read_be_u32(lab, labels_path);
  if (lab_magic != 2049) {
    throw IoError(labels_path.string() + ": bad magic " + std::to_string(lab_magic) +
                  " (expected 2049)");
  }
  const std::uint32_t n_lab = read_be_u32(lab, labels_path);
  if (n_lab != n) {
    throw IoError("image/label count mismatch: " + std::to_string(n) + " vs " +
                  std::to_string(n_lab));
  }

  MnistData out;
  out.data.samples = Matrix(n, dim);
  out.data.source = "mnist";
  std::vector<unsigned char> rowbuf(dim);
  for (std::uint32_t i = 0; i < n; ++i) {
    if (!img.read(reinterpret_cast<char*>(rowbuf.data()), static_cast<std::streamsize>(dim))) {
      throw IoError(images_path.string() + ": truncated payload at image " + std::to_string(i));
    }
    double* dst = out.data.samples.row_ptr(i);
    for (std::size_t j = 0; j < dim; ++j) dst[j] = static_cast<double>(rowbuf[j]) / 255.0;
  }
  out.labels.resize(n);
  if (n > 0 && !lab.read(reinterpret_cast<char*>(out.labels.data()), n)) {
    throw IoError(labels_path.string() + ": truncated payload");
  }
  out.data.mean = column_mean(out.data.samples);
  return out;
}

namespace {

// Gram-Schmidt of `count` Gaussian draws; returns unit columns in an m x count matrix.
Matrix random_orthonormal(std::size_t m, std::size_t count, Rng& rng) {
  Matrix q(m, count);
  Vec v(m);
  for (std::size_t j = 0; j < count; ++j) {
    double nrm = 0.0;
    for (int attempt = 0; attempt < 64; ++attempt) {
      for (std::size_t i = 0; i < m; ++i) v[i] = rng.normal();
      for (std::size_t jj = 0; jj < j; ++jj) {
        double proj = 0.0;
        for (std::size_t i = 0; i < m; ++i) proj += v[i] * q(i, jj);
        for (std::size_t i = 0; i < m; ++i) v[i] -= proj * q(i, jj);
      }
      // Second orthogonalization pass for numerical safety.
      for (std::size_t jj = 0; jj < j; ++jj) {
        double proj = 0.0;
        for (std::size_t i = 0; i < m; ++i) proj += v[i] * q(i, jj);
        for (std::size_t i = 0; i < m; ++i) v[i] -= proj * q(i, jj);
      }
      nrm = 0.0;
      for (std::size_t i = 0; i < m; ++i) nrm += v[i] * v[i];
      nrm = std::sqrt(nrm);
      if (nrm > 1e-8) break;
    }
    if (nrm <= 1e-8) throw NumericError("random_orthonormal: degenerate draw");
    for (std::size_t i = 0; i < m; ++i) q(i, j) = v[i] / nrm;
  }
  return q;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  if (spec.m == 0 || spec.p_true == 0 || spec.n == 0) {
    throw ValidationError("generate_synthetic: m, p_true, n must be >= 1");
  }
  if (spec.k_true == 0 || spec.k_true > spec.p_true) {
    throw ValidationError("generate_synthetic: need 1 <= k_true <= p_true");
  }
  Rng rng(spec.seed);

  Matrix d_true(spec.m, spec.p_true);
  switch (spec.mode) {
    case CoherenceMode::Orthogonal: {
      if (spec.p_true > spec.m) {
        throw ValidationError("orthogonal mode needs p_true <= m");
      }
      d_true = random_orthonormal(spec.m, spec.p_true, rng);
      break;
    }
    case CoherenceMode::Random: {
      for (std::size_t j = 0; j < spec.p_true; ++j) {
        double ss = 0.0;
        for (std::size_t i = 0; i < spec.m; ++i) {
          d_true(i, j) = rng.normal();
          ss += d_true(i, j) * d_true(i, j);
        }
        const double nrm = std::sqrt(ss);
        for (std::size_t i = 0; i < spec.m; ++i) d_true(i, j) /= nrm;
      }
      break;
    }
    case CoherenceMode::Block: {
      const double rho = spec.within_block_coherence;
      if (!(rho >= 0.0 && rho < 1.0)) {
        throw ValidationError("block mode needs 0 <= within_block_coherence < 1");
      }
      if (spec.block_size == 0 || spec.p_true % spec.block_size != 0) {
        throw ValidationError("block_size must divide p_true");
      }
      if (spec.m < spec.block_size + 1) {
        throw ValidationError("block mode needs m >= block_size + 1");
      }
      // Atom = sqrt(rho) * shared base + sqrt(1-rho) * per-atom orthogonal
      // direction; within-block |Gram| is exactly rho by construction.
      const std::size_t blocks = spec.p_true / spec.block_size;
      for (std::size_t blk = 0; blk < blocks; ++blk) {
        Matrix basis = random_orthonormal(spec.m, spec.block_size + 1, rng);
        for (std::size_t s = 0; s < spec.block_size; ++s) {
          const std::size_t j = blk * spec.block_size + s;
          for (std::size_t i = 0; i < spec.m; ++i) {
            d_true(i, j) = std::sqrt(rho) * basis(i, 0) + std::sqrt(1.0 - rho) * basis(i, s + 1);
          }
        }
      }
      break;
    }
  }

  SyntheticData out;
  out.dict_true = d_true;
  out.codes_true = Matrix(spec.n, spec.p_true);
  out.data.samples = Matrix(spec.n, spec.m);
  out.data.source = "synthetic";

  std::vector<std::size_t> atoms(spec.p_true);
  std::iota(atoms.begin(), atoms.end(), 0);
  for (std::size_t i = 0; i < spec.n; ++i) {
    // Uniform k_true-subset via partial Fisher-Yates on the index pool.
    for (std::size_t t = 0; t < spec.k_true; ++t) {
      const std::size_t j = t + rng.uniform_below(spec.p_true - t);
      std::swap(atoms[t], atoms[j]);
    }
    for (std::size_t t = 0; t < spec.k_true; ++t) {
      out.codes_true(i, atoms[t]) = std::abs(rng.normal()) + 0.1;
    }
    double* x = out.data.samples.row_ptr(i);
    for (std::size_t t = 0; t < spec.k_true; ++t) {
      const double c = out.codes_true(i, atoms[t]);
      for (std::size_t l = 0; l < spec.m; ++l) x[l] += c * d_true(l, atoms[t]);
    }
    if (spec.noise_sigma > 0.0) {
      for (std::size_t l = 0; l < spec.m; ++l) x[l] += spec.noise_sigma * rng.normal();
    }
  }
  out.data.mean = column_mean(out.data.samples);
  return out;
}

namespace {
constexpr char kActivationMagic[9] = "SDLACTS1";
}

Dataset load_activation_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  auto layout = container::read_header(in, path, kActivationMagic);
  const container::ArrayEntry* x_entry = nullptr;
  for (const auto& e : layout.arrays) {
    if (e.name == "X") x_entry = &e;
  }
  if (!x_entry) throw IoError(path.string() + ": missing array X");
  if (x_entry->rows == 0) throw IoError(path.string() + ": empty dataset");
  Dataset out;
  out.samples = container::read_array(in, path, *x_entry);
  out.mean = column_mean(out.samples);
  out.source = "activations";
  return out;
}

void save_activation_matrix(const Matrix& x, const std::filesystem::path& path) {
  nlohmann::json header{{"format_version", 1}};
  container::write_file(path, kActivationMagic, std::move(header), {"X"}, {&x}, {"f64"});
}

RecoveryScore recovery_score(const Matrix& d_learned, const Matrix& d_true, double threshold) {
  if (d_learned.rows != d_true.rows) {
    throw ValidationError("recovery_score: input dimensions differ");
  }
  const std::size_t pl = d_learned.cols, pt = d_true.cols;
  Matrix cos(pl, pt);
  for (std::size_t a = 0; a < pl; ++a) {
    for (std::size_t b = 0; b < pt; ++b) {
      double g = 0.0;
      for (std::size_t l = 0; l < d_learned.rows; ++l) g += d_learned(l, a) * d_true(l, b);
      cos(a, b) = std::abs(g);
    }
  }

  struct Pair {
    double c;
    std::size_t a, b;
  };
  std::vector<Pair> pairs;
  pairs.reserve(pl * pt);
  for (std::size_t a = 0; a < pl; ++a) {
    for (std::size_t b = 0; b < pt; ++b) pairs.push_back({cos(a, b), a, b});
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& x, const Pair& y) {
    if (x.c != y.c) return x.c > y.c;
    if (x.a != y.a) return x.a < y.a;
    return x.b < y.b;
  });

  std::vector<std::uint8_t> used_a(pl, 0), used_b(pt, 0);
  std::size_t matched = 0;
  double cosine_sum = 0.0;
  std::size_t assigned = 0;
  for (const auto& pr : pairs) {
    if (used_a[pr.a] || used_b[pr.b]) continue;
    used_a[pr.a] = 1;
    used_b[pr.b] = 1;
    ++assigned;
    cosine_sum += pr.c;
    if (pr.c >= threshold) ++matched;
    if (assigned == std::min(pl, pt)) break;
  }
  RecoveryScore score;
  score.matched_fraction = static_cast<double>(matched) / static_cast<double>(pt);
  score.mean_best_cosine = cosine_sum / static_cast<double>(pt);
  return score;
}

}  // namespace sdlab
