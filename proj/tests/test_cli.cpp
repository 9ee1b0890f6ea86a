#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "sdlab/cli.hpp"
#include "sdlab/data.hpp"
#include "sdlab/model.hpp"

using namespace sdlab;
namespace fs = std::filesystem;

namespace {

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"sdlab"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

fs::path fresh_dir(const std::string& name) {
  static int counter = 0;
  const fs::path dir =
      fs::temp_directory_path() / ("sdlab_cli_" + name + "_" + std::to_string(counter++));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.push_back("");
    rows.push_back(std::move(fields));
  }
  return rows;
}

// Shared tiny corpus: synthetic activations on disk.
struct Corpus {
  fs::path dir;
  fs::path data;
  fs::path dict_true;
};

Corpus make_corpus() {
  Corpus c;
  c.dir = fresh_dir("corpus");
  REQUIRE(run({"gen-synthetic", "--m", "16", "--p-true", "16", "--k-true", "2", "--n", "400",
               "--mode", "orthogonal", "--noise-sigma", "0.01", "--seed", "7", "--out-dir",
               c.dir.string()}) == 0);
  c.data = c.dir / "data.sdla";
  c.dict_true = c.dir / "dict_true.sdlc";
  return c;
}

}  // namespace

TEST_CASE("gen-synthetic writes loadable artifacts") {
  const Corpus c = make_corpus();
  CHECK(fs::exists(c.dir / "run_config.json"));
  const Dataset ds = load_activation_matrix(c.data);
  CHECK(ds.n() == 400);
  CHECK(ds.dim() == 16);
  const Checkpoint truth = load_checkpoint(c.dict_true);
  CHECK(truth.dict.p == 16);
}

TEST_CASE("train / eval / inspect / export-atoms round trip") {
  const Corpus c = make_corpus();
  const fs::path run_dir = fresh_dir("train");

  REQUIRE(run({"train", "--variant", "mp", "--k", "2", "--p", "24", "--epochs", "2", "--batch",
               "64", "--seed", "3", "--activations", c.data.string(), "--out-dir",
               run_dir.string(), "--quiet"}) == 0);
  const fs::path ckpt = run_dir / "checkpoint.sdlc";
  REQUIRE(fs::exists(ckpt));
  REQUIRE(fs::exists(run_dir / "train_log.csv"));
  REQUIRE(fs::exists(run_dir / "run_config.json"));

  const Checkpoint loaded = load_checkpoint(ckpt);
  CHECK(loaded.cfg.variant == EncoderVariant::MP);
  CHECK(loaded.dict.p == 24);
  CHECK(loaded.meta.seed == 3);

  SUBCASE("train log parses under its schema") {
    const auto rows = read_csv(run_dir / "train_log.csv");
    REQUIRE(rows.size() >= 2);
    CHECK(rows[0] == std::vector<std::string>{"step", "epoch", "lr", "recon", "sparsity_penalty",
                                              "aux", "total", "mean_l0", "dead_atoms"});
    for (std::size_t i = 1; i < rows.size(); ++i) REQUIRE(rows[i].size() == 9);
  }

  SUBCASE("eval emits the CSV bundle") {
    const fs::path eval_dir = fresh_dir("eval");
    REQUIRE(run({"eval", "--checkpoint", ckpt.string(), "--activations", c.data.string(),
                 "--k-sweep", "1..8", "--coact-r", "1", "--out-dir", eval_dir.string()}) == 0);
    for (const char* name : {"r2.csv", "babel_dict.csv", "babel_coact.csv",
                             "activation_stats.csv", "residual_curve.csv", "run_config.json"}) {
      CAPTURE(name);
      CHECK(fs::exists(eval_dir / name));
    }
    const auto r2 = read_csv(eval_dir / "r2.csv");
    CHECK(r2[0] == std::vector<std::string>{"k", "r2"});
    CHECK(r2.size() == 9);  // header + 8 rows

    // Proposition 2 surfaced end to end: the MP curve never increases.
    const auto curve = read_csv(eval_dir / "residual_curve.csv");
    REQUIRE(curve.size() == 9);
    double prev = std::stod(curve[1][1]);
    for (std::size_t i = 2; i < curve.size(); ++i) {
      const double v = std::stod(curve[i][1]);
      CHECK(v <= prev + 1e-12);
      prev = v;
    }

    const auto stats = read_csv(eval_dir / "activation_stats.csv");
    CHECK(stats[0] == std::vector<std::string>{"atom", "freq", "mean_value", "mean_value_active",
                                               "mean_selection_step"});
    CHECK(stats.size() == 25);  // header + 24 atoms
  }

  SUBCASE("inspect writes the trace CSV and the PGM strip") {
    const fs::path inspect_dir = fresh_dir("inspect");
    REQUIRE(run({"inspect", "--checkpoint", ckpt.string(), "--activations", c.data.string(),
                 "--indices", "0,3", "--out-dir", inspect_dir.string()}) == 0);
    REQUIRE(fs::exists(inspect_dir / "sample_0_trace.csv"));
    REQUIRE(fs::exists(inspect_dir / "sample_0_strip.pgm"));  // m = 16 renders as 4x4

    const auto trace = read_csv(inspect_dir / "sample_0_trace.csv");
    CHECK(trace[0] == std::vector<std::string>{"step", "atom", "coeff", "residual_norm"});
    // row 0 carries only the initial residual norm
    CHECK(trace[1][0] == "0");
    CHECK(trace[1][1].empty());
    // residual norms never increase down an MP trace
    double prev = std::stod(trace[1][3]);
    for (std::size_t i = 2; i < trace.size(); ++i) {
      const double v = std::stod(trace[i][3]);
      CHECK(v <= prev + 1e-12);
      prev = v;
    }

    // Strip row 0: first tile equals b_pre under the clamp-to-[0,1] rendering.
    const std::string pgm = slurp(inspect_dir / "sample_0_strip.pgm");
    const auto header_end = pgm.find("255\n");
    REQUIRE(header_end != std::string::npos);
    const std::size_t pixels_at = header_end + 4;
    const Checkpoint ck = load_checkpoint(ckpt);
    const std::size_t tiles = trace.size() - 1;  // steps + initial
    for (std::size_t i = 0; i < 4; ++i) {  // first row of the first tile
      const double v = std::min(1.0, std::max(0.0, ck.dict.b_pre[i]));
      const auto want = static_cast<unsigned char>(std::lround(v * 255.0));
      CHECK(static_cast<unsigned char>(pgm[pixels_at + i]) == want);
    }
    CHECK(pgm.find("P5\n" + std::to_string(4 * tiles) + " 4\n") == 0);
  }

  SUBCASE("export-atoms writes both rankings") {
    const fs::path atoms_dir = fresh_dir("atoms");
    REQUIRE(run({"export-atoms", "--checkpoint", ckpt.string(), "--activations", c.data.string(),
                 "--n", "9", "--out-dir", atoms_dir.string()}) == 0);
    CHECK(fs::exists(atoms_dir / "atoms_by_freq.csv"));
    CHECK(fs::exists(atoms_dir / "atoms_by_value.csv"));
    CHECK(fs::exists(atoms_dir / "atoms_by_freq.pgm"));
    CHECK(fs::exists(atoms_dir / "atoms_by_value.pgm"));
    // 9 tiles of side 4 -> 3x3 grid, 12x12 image
    CHECK(slurp(atoms_dir / "atoms_by_freq.pgm").find("P5\n12 12\n") == 0);

    CHECK(run({"export-atoms", "--checkpoint", ckpt.string(), "--activations", c.data.string(),
               "--n", "99", "--out-dir", atoms_dir.string()}) == 2);
  }
}

TEST_CASE("cmd_train with --epochs 0 reproduces the seeded initialization") {
  const Corpus c = make_corpus();
  const fs::path run_dir = fresh_dir("epochs0");
  REQUIRE(run({"train", "--variant", "topk", "--k", "2", "--p", "8", "--epochs", "0",
               "--seed", "11", "--activations", c.data.string(), "--out-dir", run_dir.string(),
               "--quiet"}) == 0);
  const Checkpoint ckpt = load_checkpoint(run_dir / "checkpoint.sdlc");

  const Dataset ds = load_activation_matrix(c.data);
  Rng rng(11);
  const Dictionary want = init_dictionary(16, 8, rng, ds.mean, EncoderVariant::TopK);
  CHECK(ckpt.dict.d.data == want.d.data);
  CHECK(ckpt.dict.b_pre == want.b_pre);
}

TEST_CASE("identical seeds give byte-identical outputs") {
  const Corpus c = make_corpus();
  const fs::path a = fresh_dir("det_a");
  const fs::path b = fresh_dir("det_b");
  for (const auto& dir : {a, b}) {
    REQUIRE(run({"train", "--variant", "topk", "--k", "3", "--p", "20", "--epochs", "2",
                 "--batch", "64", "--seed", "21", "--activations", c.data.string(), "--out-dir",
                 dir.string(), "--quiet"}) == 0);
  }
  CHECK(slurp(a / "checkpoint.sdlc") == slurp(b / "checkpoint.sdlc"));
  CHECK(slurp(a / "train_log.csv") == slurp(b / "train_log.csv"));
}

TEST_CASE("sweep writes one row per cell and repeats deterministically") {
  const Corpus c = make_corpus();
  const fs::path a = fresh_dir("sweep_a");
  const fs::path b = fresh_dir("sweep_b");
  for (const auto& dir : {a, b}) {
    REQUIRE(run({"sweep", "--variants", "mp", "--k-grid", "2", "--p-grid", "12", "--seeds", "0",
                 "--epochs", "1", "--batch", "64", "--activations", c.data.string(), "--out-dir",
                 dir.string(), "--quiet"}) == 0);
  }
  const auto rows = read_csv(a / "sweep.csv");
  REQUIRE(rows.size() == 2);
  CHECK(rows[0] == std::vector<std::string>{"variant", "k", "p", "seed", "r2"});
  CHECK(rows[1][0] == "mp");
  CHECK(slurp(a / "sweep.csv") == slurp(b / "sweep.csv"));
}

TEST_CASE("recovery-score against the ground-truth checkpoint") {
  const Corpus c = make_corpus();
  CHECK(run({"recovery-score", "--learned", c.dict_true.string(), "--truth",
             c.dict_true.string(), "--threshold", "0.9"}) == 0);
}

TEST_CASE("config file values act as defaults under flags") {
  const Corpus c = make_corpus();
  const fs::path dir = fresh_dir("config");
  const fs::path cfg_path = dir / "cfg.json";
  {
    std::ofstream cfg(cfg_path);
    cfg << R"({"variant":"mp","k":2,"p":12,"epochs":0,"seed":5,"out_dir":")"
        << (dir / "from_config").string() << R"("})";
  }
  REQUIRE(run({"train", "--config", cfg_path.string(), "--activations", c.data.string(),
               "--quiet"}) == 0);
  const Checkpoint from_cfg = load_checkpoint(dir / "from_config" / "checkpoint.sdlc");
  CHECK(from_cfg.cfg.variant == EncoderVariant::MP);
  CHECK(from_cfg.dict.p == 12);

  // A flag overrides the config value.
  REQUIRE(run({"train", "--config", cfg_path.string(), "--p", "16", "--out-dir",
               (dir / "flag_wins").string(), "--activations", c.data.string(), "--quiet"}) == 0);
  CHECK(load_checkpoint(dir / "flag_wins" / "checkpoint.sdlc").dict.p == 16);
}

TEST_CASE("validation failures exit with code 2") {
  const Corpus c = make_corpus();
  CHECK(run({"train", "--variant", "topk", "--k", "0", "--p", "8", "--activations",
             c.data.string(), "--quiet", "--out-dir", fresh_dir("bad").string()}) == 2);
  CHECK(run({"train", "--variant", "nosuch", "--activations", c.data.string(), "--quiet",
             "--out-dir", fresh_dir("bad2").string()}) == 2);
  CHECK(run({"nosuchcommand"}) == 2);
  CHECK(run({"train", "--variant", "mp", "--k", "2", "--p", "8", "--quiet", "--out-dir",
             fresh_dir("bad3").string()}) == 2);  // no dataset
}

TEST_CASE("missing files exit with code 4") {
  CHECK(run({"eval", "--checkpoint", "/nonexistent/ckpt.sdlc", "--activations",
             "/nonexistent/data.sdla", "--out-dir", fresh_dir("io").string()}) == 4);
}
