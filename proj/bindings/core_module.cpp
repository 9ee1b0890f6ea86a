#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "sdlab/data.hpp"
#include "sdlab/encode.hpp"
#include "sdlab/errors.hpp"
#include "sdlab/metrics.hpp"
#include "sdlab/model.hpp"
#include "sdlab/rng.hpp"
#include "sdlab/train.hpp"

namespace py = pybind11;
using namespace sdlab;

namespace {

Matrix matrix_from_numpy(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw ValidationError("expected a 2-D array");
  Matrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), m.data.begin());
  return m;
}

py::array_t<double> matrix_to_numpy(const Matrix& m) {
  py::array_t<double> a({m.rows, m.cols});
  std::copy(m.data.begin(), m.data.end(), a.mutable_data());
  return a;
}

Vec vec_from_numpy(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 1) throw ValidationError("expected a 1-D array");
  return Vec(a.data(), a.data() + a.size());
}

py::array_t<double> vec_to_numpy(const Vec& v) {
  py::array_t<double> a(v.size());
  std::copy(v.begin(), v.end(), a.mutable_data());
  return a;
}

EncoderConfig build_config(const std::string& variant, std::size_t k, double lambda,
                           double target_l0, double aux_alpha, bool mp_abs_argmax,
                           bool detach_residual) {
  const auto v = variant_from_name(variant);
  if (!v) throw ValidationError("unknown variant '" + variant + "'");
  EncoderConfig cfg = EncoderConfig::defaults_for(*v, k);
  if (lambda >= 0) cfg.lambda = lambda;
  if (target_l0 >= 0) cfg.target_l0 = target_l0;
  if (aux_alpha >= 0) cfg.aux_alpha = aux_alpha;
  cfg.mp_abs_argmax = mp_abs_argmax;
  cfg.detach_residual = detach_residual;
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "sparse dictionary-learning workbench core";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_IOError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  py::class_<SparseCode>(m, "SparseCode")
      .def_property_readonly("p", [](const SparseCode& c) { return c.p; })
      .def_property_readonly("atoms",
                             [](const SparseCode& c) {
                               std::vector<std::size_t> idx;
                               for (const auto& e : c.active) idx.push_back(e.atom);
                               return idx;
                             })
      .def_property_readonly("values",
                             [](const SparseCode& c) {
                               Vec v;
                               for (const auto& e : c.active) v.push_back(e.value);
                               return vec_to_numpy(v);
                             })
      .def("dense", [](const SparseCode& c) { return vec_to_numpy(c.dense()); })
      .def("support", &SparseCode::support)
      .def("__len__", [](const SparseCode& c) { return c.active.size(); });

  py::class_<Dictionary>(m, "Dictionary")
      .def_property_readonly("m", [](const Dictionary& d) { return d.m; })
      .def_property_readonly("p", [](const Dictionary& d) { return d.p; })
      .def_property_readonly("d", [](const Dictionary& d) { return matrix_to_numpy(d.d); })
      .def_property_readonly("b_pre", [](const Dictionary& d) { return vec_to_numpy(d.b_pre); })
      .def_property_readonly("encoder_weights",
                             [](const Dictionary& d) -> py::object {
                               if (!d.encoder_weights) return py::none();
                               return matrix_to_numpy(*d.encoder_weights);
                             })
      .def_property_readonly("thresholds", [](const Dictionary& d) -> py::object {
        if (!d.thresholds) return py::none();
        return vec_to_numpy(*d.thresholds);
      });

  m.def(
      "init_dictionary",
      [](std::size_t m_dim, std::size_t p, std::uint64_t seed, const py::array_t<double>& mean,
         const std::string& variant) {
        const auto v = variant_from_name(variant);
        if (!v) throw ValidationError("unknown variant '" + variant + "'");
        Rng rng(seed);
        return init_dictionary(m_dim, p, rng, vec_from_numpy(mean), *v);
      },
      py::arg("m"), py::arg("p"), py::arg("seed"), py::arg("data_mean"), py::arg("variant"));

  m.def("save_checkpoint",
        [](const Dictionary& dict, const std::string& variant, std::size_t k, std::uint64_t seed,
           const std::filesystem::path& path) {
          const auto v = variant_from_name(variant);
          if (!v) throw ValidationError("unknown variant '" + variant + "'");
          save_checkpoint(dict, EncoderConfig::defaults_for(*v, k), CheckpointMeta{seed}, path);
        },
        py::arg("dict"), py::arg("variant"), py::arg("k"), py::arg("seed"), py::arg("path"));

  m.def("load_checkpoint", [](const std::filesystem::path& path) {
    Checkpoint ckpt = load_checkpoint(path);
    return py::make_tuple(std::move(ckpt.dict), std::string(variant_name(ckpt.cfg.variant)),
                          ckpt.cfg.k, ckpt.meta.seed);
  });

  m.def("encode_relu",
        [](const Dictionary& d, const py::array_t<double>& x) {
          return encode_relu(d, vec_from_numpy(x));
        });
  m.def("encode_jumprelu",
        [](const Dictionary& d, const py::array_t<double>& x) {
          return encode_jumprelu(d, vec_from_numpy(x));
        });
  m.def("encode_topk",
        [](const Dictionary& d, const py::array_t<double>& x, std::size_t k) {
          return encode_topk(d, vec_from_numpy(x), k);
        },
        py::arg("dict"), py::arg("x"), py::arg("k"));
  m.def("encode_batchtopk",
        [](const Dictionary& d, const py::array_t<double>& x, std::size_t k) {
          return encode_batchtopk(d, matrix_from_numpy(x), k);
        },
        py::arg("dict"), py::arg("x_batch"), py::arg("k"));
  m.def(
      "encode_mp",
      [](const Dictionary& d, const py::array_t<double>& x, std::size_t t, bool abs_argmax) {
        auto [code, trace] = encode_mp(d, vec_from_numpy(x), t,
                                       MpOptions{.abs_argmax = abs_argmax});
        return py::make_tuple(std::move(code), vec_to_numpy(trace.residual_norms));
      },
      py::arg("dict"), py::arg("x"), py::arg("t"), py::arg("abs_argmax") = false);
  m.def("decode", [](const Dictionary& d, const SparseCode& z) {
    return vec_to_numpy(decode(d, z));
  });

  m.def(
      "train_sae",
      [](const py::array_t<double>& data, const std::string& variant, std::size_t k,
         std::size_t p, std::size_t epochs, std::size_t batch, std::uint64_t seed, double lambda,
         double target_l0, double aux_alpha, double lr_init, double lr_final, bool mp_abs_argmax,
         bool detach_residual) {
        const Matrix samples = matrix_from_numpy(data);
        EncoderConfig cfg = build_config(variant, k, lambda, target_l0, aux_alpha, mp_abs_argmax,
                                         detach_residual);
        cfg.validate(p);
        Rng rng(seed);
        Dictionary dict = init_dictionary(samples.cols, p, rng, column_mean(samples), cfg.variant);
        TrainOptions opt;
        opt.epochs = epochs;
        opt.batch_size = batch;
        opt.seed = seed;
        opt.lr_init = lr_init;
        opt.lr_final = lr_final;
        const auto log = train(dict, cfg, samples, opt);
        py::list rows;
        for (const auto& r : log) {
          rows.append(py::dict(py::arg("step") = r.step, py::arg("epoch") = r.epoch,
                               py::arg("lr") = r.lr, py::arg("recon") = r.loss.recon,
                               py::arg("sparsity_penalty") = r.loss.sparsity_penalty,
                               py::arg("aux") = r.loss.aux, py::arg("total") = r.loss.total,
                               py::arg("mean_l0") = r.loss.l0,
                               py::arg("dead_atoms") = r.dead_atoms));
        }
        return py::make_tuple(std::move(dict), rows);
      },
      py::arg("data"), py::arg("variant"), py::arg("k"), py::arg("p"), py::arg("epochs") = 10,
      py::arg("batch") = 256, py::arg("seed") = 0, py::arg("lambda_") = -1.0,
      py::arg("target_l0") = -1.0, py::arg("aux_alpha") = -1.0, py::arg("lr_init") = 5e-4,
      py::arg("lr_final") = 1e-6, py::arg("mp_abs_argmax") = false,
      py::arg("detach_residual") = false);

  m.def("r_squared", [](const py::array_t<double>& x, const py::array_t<double>& xhat) {
    return r_squared(matrix_from_numpy(x), matrix_from_numpy(xhat));
  });
  m.def("mutual_coherence",
        [](const py::array_t<double>& d) { return mutual_coherence(matrix_from_numpy(d)); });
  m.def("babel", [](const py::array_t<double>& d, std::size_t r) {
    return babel(matrix_from_numpy(d), r);
  });
  m.def("coactivation_babel",
        [](const std::vector<SparseCode>& codes, const py::array_t<double>& d, std::size_t r) {
          const auto s = coactivation_babel(codes, matrix_from_numpy(d), r);
          return py::dict(py::arg("mean") = s.mean, py::arg("max") = s.max, py::arg("q5") = s.q5,
                          py::arg("q25") = s.q25, py::arg("q50") = s.q50, py::arg("q75") = s.q75,
                          py::arg("q95") = s.q95, py::arg("used") = s.used,
                          py::arg("skipped") = s.skipped);
        });
  m.def("activation_stats",
        [](const std::vector<SparseCode>& codes, std::size_t p, bool selection_ordered) {
          const auto s = activation_stats(codes, p, selection_ordered);
          return py::dict(py::arg("freq") = vec_to_numpy(s.freq),
                          py::arg("mean_value") = vec_to_numpy(s.mean_value),
                          py::arg("mean_value_when_active") = vec_to_numpy(s.mean_value_when_active),
                          py::arg("mean_selection_step") = vec_to_numpy(s.mean_selection_step));
        },
        py::arg("codes"), py::arg("p"), py::arg("selection_ordered") = false);

  m.def(
      "generate_synthetic",
      [](std::size_t m_dim, std::size_t p_true, std::size_t k_true, std::size_t n,
         const std::string& mode, std::size_t block_size, double coherence, double noise_sigma,
         std::uint64_t seed) {
        SyntheticSpec spec;
        spec.m = m_dim;
        spec.p_true = p_true;
        spec.k_true = k_true;
        spec.n = n;
        spec.block_size = block_size;
        spec.within_block_coherence = coherence;
        spec.noise_sigma = noise_sigma;
        spec.seed = seed;
        if (mode == "orthogonal") spec.mode = CoherenceMode::Orthogonal;
        else if (mode == "random") spec.mode = CoherenceMode::Random;
        else if (mode == "block") spec.mode = CoherenceMode::Block;
        else throw ValidationError("unknown mode '" + mode + "'");
        const SyntheticData out = generate_synthetic(spec);
        return py::make_tuple(matrix_to_numpy(out.data.samples), matrix_to_numpy(out.dict_true),
                              matrix_to_numpy(out.codes_true));
      },
      py::arg("m"), py::arg("p_true"), py::arg("k_true"), py::arg("n"),
      py::arg("mode") = "random", py::arg("block_size") = 0, py::arg("coherence") = 0.0,
      py::arg("noise_sigma") = 0.0, py::arg("seed") = 0);

  m.def("recovery_score",
        [](const py::array_t<double>& learned, const py::array_t<double>& truth,
           double threshold) {
          const auto s = recovery_score(matrix_from_numpy(learned), matrix_from_numpy(truth),
                                        threshold);
          return py::make_tuple(s.matched_fraction, s.mean_best_cosine);
        },
        py::arg("d_learned"), py::arg("d_true"), py::arg("threshold") = 0.9);

  m.def("load_activation_matrix", [](const std::filesystem::path& path) {
    return matrix_to_numpy(load_activation_matrix(path).samples);
  });
  m.def("save_activation_matrix",
        [](const py::array_t<double>& x, const std::filesystem::path& path) {
          save_activation_matrix(matrix_from_numpy(x), path);
        });
  m.def("load_mnist_idx",
        [](const std::filesystem::path& images, const std::filesystem::path& labels) {
          MnistData data = load_mnist_idx(images, labels);
          return py::make_tuple(matrix_to_numpy(data.data.samples), data.labels);
        });
}
