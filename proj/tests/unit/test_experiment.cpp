#include <doctest.h>

#include <fstream>
#include <map>
#include <sstream>

#include "dfd/error.hpp"
#include "dfd/experiment.hpp"
#include "dfd/metrics.hpp"
#include "helpers.hpp"

using namespace dfd;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny(const std::string& name) {
  auto cfg = ExperimentConfig::desk();
  cfg.per_class = 30;
  cfg.fractions = {0.2};
  cfg.seeds = {1};
  cfg.train.iterations = 40;
  cfg.train.batch = 16;
  cfg.train.lr_step = 20;
  cfg.cnn_filters = 8;
  cfg.cnn_fc_units = 16;
  cfg.precision = Precision::f64;
  cfg.out_dir = testutil::scratch(name);
  return cfg;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST_CASE("config overrides") {
  auto cfg = ExperimentConfig::desk();
  const auto kv = KeyValueConfig::parse(
      "# comment\n"
      "experiment.fractions = 0.1, 0.2\n"
      "experiment.seeds = 7\n"
      "train.iterations = 12\n"
      "svm.kernel = linear\n"
      "transfer.candidates = Fre-Mea+Fre-Var; Tim-Rms\n"
      "cnn_input.hop = 16\n"
      "cnn.precision = f64\n");
  cfg.apply(kv);
  CHECK(cfg.fractions == std::vector<double>{0.1, 0.2});
  CHECK(cfg.seeds == std::vector<std::uint64_t>{7});
  CHECK(cfg.train.iterations == 12);
  CHECK(cfg.svm.kernel == KernelKind::linear);
  REQUIRE(cfg.candidates.size() == 2);
  CHECK(cfg.candidates[0] == std::vector<FeatureId>{FeatureId::fre_mea, FeatureId::fre_var});
  CHECK(cfg.cnn_stft.hop == 16u);
  CHECK(!cfg.cnn_stft.frames);
  CHECK(cfg.precision == Precision::f64);
  cfg.validate();

  CHECK_THROWS_AS(cfg.apply(KeyValueConfig::parse("train.bogus = 1\n")), ConfigError);
  CHECK_THROWS_AS(cfg.apply(KeyValueConfig::parse("train.iterations = many\n")), ConfigError);
  CHECK_THROWS_AS(KeyValueConfig::parse("no equals sign\n"), ConfigError);
  auto rig = ExperimentConfig::desk();
  rig.apply(KeyValueConfig::parse("preset = rig\n"));
  CHECK(rig.synthetic.n_channels == 8);
  CHECK(rig.train.iterations == 10000);
  CHECK(rig.train.batch == 256);
  auto bad = ExperimentConfig::desk();
  bad.fractions = {0.0};
  CHECK_THROWS_AS(bad.validate(), InvalidFraction);
}

TEST_CASE("pipeline output contract and self-consistency") {
  const auto cfg = tiny("contract");
  const auto data = prepare_data(cfg);
  const auto cells = sweep_volumes(cfg, data);
  REQUIRE(cells.size() == 1);
  const auto& c = cells[0];
  REQUIRE(c.ok());
  CHECK(fs::exists(cfg.out_dir / "svm_table.csv"));
  CHECK(fs::exists(cfg.out_dir / "cnn_table.csv"));
  const auto dir = cfg.out_dir / "cells" / "v0.2_s1";
  for (const char* f : {"pool_manifest.txt", "cnn_t.dfdn", "cnn_vanilla.dfdn", "predictions.csv",
                        "quasi_labels.csv", "train_log_cnn_t.csv", "train_log_cnn_vanilla.csv"}) {
    CHECK_MESSAGE(fs::exists(dir / f), f);
  }
  CHECK(c.ats == c.unlabeled + c.train);
  CHECK(c.labeled == c.train + c.val);
  CHECK(c.svm.size() == 15);
  CHECK(c.pool_models.size() == 2);

  // reported accuracies recomputed from the per-sample predictions
  const auto rows = read_csv(dir / "predictions.csv");
  REQUIRE(rows.size() == c.test + 1);
  std::vector<int> truth, best, fusion, cnn_t, vanilla;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    truth.push_back(std::stoi(rows[i][1]));
    best.push_back(std::stoi(rows[i][2]));
    fusion.push_back(std::stoi(rows[i][3]));
    cnn_t.push_back(std::stoi(rows[i][4]));
    vanilla.push_back(std::stoi(rows[i][5]));
  }
  CHECK(accuracy(best, truth) == c.best_svm_test());
  CHECK(accuracy(fusion, truth) == c.fusion_test);
  CHECK(accuracy(cnn_t, truth) == c.cnn_t_test);
  CHECK(accuracy(vanilla, truth) == c.cnn_vanilla_test);

  const auto cnn_rows = read_csv(cfg.out_dir / "cnn_table.csv");
  const auto& header = cnn_rows[0];
  CHECK(std::find(header.begin(), header.end(), "cnn_vanilla_test") != header.end());
  CHECK(std::find(header.begin(), header.end(), "cnn_t_test") != header.end());
  CHECK(cnn_rows.size() == 3);  // header, one cell, Ave. (no Std. with one seed)
  CHECK(cnn_rows[2][1] == "Ave.");
}

TEST_CASE("a starved volume fails only its own cell") {
  auto cfg = tiny("starved");
  cfg.fractions = {0.01, 0.2};
  const auto data = prepare_data(cfg);
  const auto cells = sweep_volumes(cfg, data);
  REQUIRE(cells.size() == 2);
  CHECK(!cells[0].ok());
  CHECK(*cells[0].error_stage == "split");
  CHECK(cells[0].error.find("ClassStarved") != std::string::npos);
  CHECK(cells[1].ok());
  const auto errors = read_csv(cfg.out_dir / "errors.csv");
  CHECK(errors.size() == 2);
}

TEST_CASE("table grid arithmetic and ordering") {
  auto cfg = tiny("grid");
  cfg.fractions = {0.3, 0.2};
  cfg.seeds = {2, 1};
  cfg.train.iterations = 5;
  const auto data = prepare_data(cfg);
  sweep_volumes(cfg, data);
  const auto rows = read_csv(cfg.out_dir / "svm_table.csv");
  std::map<std::string, int> per_model;
  std::vector<std::pair<double, int>> order;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i][1] == "Ave." || rows[i][1] == "Std.") continue;
    ++per_model[rows[i][2]];
    if (rows[i][2] == "Tim-Abm") order.emplace_back(std::stod(rows[i][0]), std::stoi(rows[i][1]));
  }
  CHECK(per_model.size() == 15);
  for (const auto& [model, n] : per_model) CHECK(n == 4);
  CHECK(std::is_sorted(order.begin(), order.end()));
  const auto cnn = read_csv(cfg.out_dir / "cnn_table.csv");
  int std_rows = 0;
  for (const auto& r : cnn) std_rows += r.size() > 1 && r[1] == "Std.";
  CHECK(std_rows == 2);
}

TEST_CASE("fusion weight identities") {
  auto cfg = tiny("fusion");
  cfg.train.iterations = 10;
  const auto data = prepare_data(cfg);
  CellOptions w1;
  w1.weights = std::vector<double>{1.0, 0.0};
  const auto fused = run_cell(cfg, data, 0.2, 3, w1);
  REQUIRE(fused.ok());

  auto single = cfg;
  single.k = 1;
  const auto best = run_cell(single, data, 0.2, 3);
  REQUIRE(best.ok());
  CHECK(fused.fusion_test == best.fusion_test);
  CHECK(fused.fusion_test == fused.best_svm_test());
  CHECK(fused.cnn_t_test == best.cnn_t_test);

  CellOptions w0;
  w0.weights = std::vector<double>{0.0, 1.0};
  const auto other = run_cell(cfg, data, 0.2, 3, w0);
  auto second = single;
  second.candidates = {parse_feature_list(fused.pool_models[1])};
  const auto second_run = run_cell(second, data, 0.2, 3);
  REQUIRE(other.ok());
  REQUIRE(second_run.ok());
  CHECK(other.fusion_test == second_run.fusion_test);
  CHECK(other.cnn_t_test == second_run.cnn_t_test);

  auto sweep = cfg;
  sweep.fusion_grid = {0.0, 0.5, 1.0};
  const auto rows = sweep_fusion_weights(sweep, data);
  CHECK(rows.size() == 3);
  auto three = cfg;
  three.k = 3;
  CHECK_THROWS_AS(sweep_fusion_weights(three, data), ShapeError);
}

TEST_CASE("noise experiment changes only the logged labels") {
  auto cfg = tiny("noise");
  cfg.noise_volume = 0.3;
  cfg.train.iterations = 5;
  const auto data = prepare_data(cfg);
  const auto cells = noise_experiment(cfg, data, 0.125);
  REQUIRE(cells.size() == 2);
  CHECK(cells[0].noisy_ids.empty());
  CHECK(cells[1].noisy_ids.size() == static_cast<std::size_t>(cells[1].labeled / 8.0 + 0.5));
  CHECK(fs::exists(cfg.out_dir / "noise_table.csv"));
  const auto rows = read_csv(cfg.out_dir / "noise_table.csv");
  CHECK(rows.back()[0] == "drop");
}

TEST_CASE("sweeps are byte-identical across runs in 64-bit mode") {
  auto a = tiny("det_a");
  a.seeds = {1, 2};
  auto b = a;
  b.out_dir = testutil::scratch("det_b");
  sweep_volumes(a, prepare_data(a));
  sweep_volumes(b, prepare_data(b));
  for (const char* f : {"svm_table.csv", "cnn_table.csv", "errors.csv"}) {
    CHECK_MESSAGE(testutil::slurp(a.out_dir / f) == testutil::slurp(b.out_dir / f), f);
  }
  CHECK(testutil::slurp(a.out_dir / "cells/v0.2_s2/predictions.csv") ==
        testutil::slurp(b.out_dir / "cells/v0.2_s2/predictions.csv"));
}

TEST_CASE("inference benchmark rows") {
  const auto m = init_network(CnnArch::standard({8, 16, 2}, 3, 4, 8, 2, 4), 1);
  const auto rows = bench_inference(m, {1, 1024}, 3, 1);
  REQUIRE(rows.size() == 2);
  for (const auto& r : rows) {
    CHECK(r.per_sample_s > 0.0);
    CHECK(r.std_s >= 0.0);
  }
  CHECK(rows[1].batch == 1024);
  const auto dir = testutil::scratch("bench");
  write_bench_csv(dir / "b.csv", rows);
  const auto csv = read_csv(dir / "b.csv");
  CHECK(csv.size() == 3);
  CHECK(csv[0] == std::vector<std::string>{"batch", "total_s", "per_sample_s", "std_s"});
  CHECK_THROWS_AS(bench_inference(m, {0}), SpecError);
}
