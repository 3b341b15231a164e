#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "dfd/error.hpp"
#include "dfd/experiment.hpp"
#include "dfd/metrics.hpp"
#include "dfd/random.hpp"
#include "dfd/transfer.hpp"

namespace fs = std::filesystem;
using namespace dfd;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  bool f64 = false;
};

ExperimentConfig load_config(const Globals& g) {
  auto cfg = ExperimentConfig::desk();
  if (!g.config.empty()) cfg.apply(KeyValueConfig::load(g.config));
  if (g.seed) cfg.seeds = {*g.seed};
  if (g.out) cfg.out_dir = *g.out;
  if (g.f64) cfg.precision = Precision::f64;
  return cfg;
}

std::uint64_t base_seed(const Globals& g, const ExperimentConfig& cfg) { return g.seed.value_or(cfg.data_seed); }

fs::path out_dir(const ExperimentConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  return cfg.out_dir;
}

std::vector<SpectroTensor> tensors_for(const LabeledDataset& ds, const StftConfig& cfg) {
  std::vector<SpectroTensor> out;
  out.reserve(ds.size());
  for (const auto& s : ds.samples) out.push_back(spectro_tensor(s, cfg));
  return out;
}

void print_cells(const std::vector<CellResult>& cells) {
  for (const auto& c : cells) {
    if (!c.ok()) {
      std::printf("volume %g seed %llu %s: failed at %s: %s\n", c.fraction, static_cast<unsigned long long>(c.seed),
                  c.condition.c_str(), c.error_stage->c_str(), c.error.c_str());
      continue;
    }
    std::printf("volume %g seed %llu %s: best svm %.4f  fusion %.4f  vanilla %.4f  cnn-t %.4f\n", c.fraction,
                static_cast<unsigned long long>(c.seed), c.condition.c_str(), c.best_svm_test(), c.fusion_test,
                c.cnn_vanilla_test, c.cnn_t_test);
  }
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingData("missing " + path.string());
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line[0] != '#') out.push_back(line);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep fault diagnosis: spectral features, SVM pools, pseudo-label transfer and a small CNN"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "key = value settings file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "seed (sweeps: run this single seed)");
  app.add_option("--out", g.out, "output directory");
  app.add_flag("--f64", g.f64, "64-bit CNN compute mode");
  app.fallthrough();

  std::function<void()> action;

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic labeled dataset");
  std::size_t per_class = 0;
  std::string id_prefix;
  synth->add_option("--per-class", per_class, "samples per class (default from config)");
  synth->add_option("--prefix", id_prefix, "prepended to every sample id (keeps ids unique across runs)");
  synth->callback([&] {
    action = [&] {
      const auto cfg = load_config(g);
      const auto n = per_class ? per_class : cfg.per_class;
      auto ds = generate_synthetic(cfg.synthetic, n, base_seed(g, cfg));
      for (auto& s : ds.samples) s.id = id_prefix + s.id;
      const auto manifest = save_dataset(ds, out_dir(cfg));
      std::printf("wrote %zu samples to %s\n", ds.size(), manifest.string().c_str());
    };
  });

  // convert-csv
  auto* conv = app.add_subcommand("convert-csv", "convert per-channel CSV recordings into a manifest dataset");
  std::vector<std::string> csv_files, csv_labels;
  std::string csv_classes;
  double csv_rate = 0.0;
  conv->add_option("--csv", csv_files, "CSV files, one recording each (rows = points, columns = channels)")
      ->required()
      ->check(CLI::ExistingFile);
  conv->add_option("--labels", csv_labels, "class name per file, '-' for unlabeled");
  conv->add_option("--classes", csv_classes, "comma-separated class names")->required();
  conv->add_option("--sample-rate", csv_rate, "sampling rate in Hz")->required();
  conv->callback([&] {
    action = [&] {
      const auto cfg = load_config(g);
      if (!csv_labels.empty() && csv_labels.size() != csv_files.size()) {
        throw ShapeError("--labels needs one entry per --csv file");
      }
      LabeledDataset ds;
      std::istringstream names(csv_classes);
      for (std::string n; std::getline(names, n, ',');) ds.class_names.push_back(n);
      for (std::size_t i = 0; i < csv_files.size(); ++i) {
        std::optional<int> label;
        if (!csv_labels.empty() && csv_labels[i] != "-") {
          const auto it = std::find(ds.class_names.begin(), ds.class_names.end(), csv_labels[i]);
          if (it == ds.class_names.end()) throw SchemaError("unknown class '" + csv_labels[i] + "'");
          label = static_cast<int>(it - ds.class_names.begin());
        }
        ds.samples.push_back(sample_from_csv(csv_files[i], csv_rate, fs::path(csv_files[i]).stem().string(), label));
      }
      const auto manifest = save_dataset(ds, out_dir(cfg));
      std::printf("wrote %zu samples to %s\n", ds.size(), manifest.string().c_str());
    };
  });

  // features
  auto* feat = app.add_subcommand("features", "extract the 15-statistic feature pool per sample");
  std::string feat_manifest;
  feat->add_option("--manifest", feat_manifest, "dataset manifest")->required();
  feat->callback([&] {
    action = [&] {
      const auto cfg = load_config(g);
      const auto ds = load_dataset(feat_manifest);
      const auto pools = extract_feature_pools(ds, cfg.feature_stft, cfg.feature_options);
      const auto path = out_dir(cfg) / "features.csv";
      write_feature_csv(path, ds, pools);
      std::printf("wrote %s\n", path.string().c_str());
    };
  });

  // train-svm
  auto* tsvm = app.add_subcommand("train-svm", "train one one-vs-rest SVM per candidate feature set");
  std::string tsvm_manifest;
  std::vector<std::string> tsvm_sets;
  tsvm->add_option("--manifest", tsvm_manifest, "labeled training manifest")->required();
  tsvm->add_option("--features", tsvm_sets, "feature sets such as Fre-Kur+Tim-Rms (default: config candidates)");
  tsvm->callback([&] {
    action = [&] {
      const auto cfg = load_config(g);
      const auto ds = load_dataset(tsvm_manifest);
      const auto pools = extract_feature_pools(ds, cfg.feature_stft, cfg.feature_options);
      const auto y = ds.labels();
      std::vector<std::vector<FeatureId>> sets;
      for (const auto& s : tsvm_sets) sets.push_back(parse_feature_list(s));
      if (sets.empty()) sets = cfg.candidate_sets();
      const auto dir = out_dir(cfg);
      std::ofstream list(dir / "svm_models.txt");
      for (std::size_t i = 0; i < sets.size(); ++i) {
        const auto m = train_svm(feature_matrix(pools, sets[i]), y, ds.num_classes(), cfg.svm, sets[i]);
        char name[32];
        std::snprintf(name, sizeof name, "svm_%02zu.dfds", i);
        save_svm(dir / name, m);
        list << (dir / name).string() << '\n';
        std::printf("%-24s train %.4f%s -> %s\n", feature_list_name(sets[i]).c_str(), m.train_accuracy,
                    m.converged ? "" : " (not converged)", name);
      }
    };
  });

  // select
  auto* sel = app.add_subcommand("select", "rank candidate SVMs on a validation set and keep the top k");
  std::string sel_manifest, sel_list;
  std::vector<std::string> sel_models;
  std::size_t sel_k = 0;
  sel->add_option("--manifest", sel_manifest, "labeled validation manifest")->required();
  sel->add_option("--models", sel_models, "candidate .dfds files");
  sel->add_option("--model-list", sel_list, "file listing candidate .dfds paths");
  sel->add_option("-k", sel_k, "pool size (default from config)");
  sel->callback([&] {
    action = [&] {
      const auto cfg = load_config(g);
      auto paths = sel_models;
      if (!sel_list.empty()) {
        for (auto& p : read_lines(sel_list)) paths.push_back(p);
      }
      if (paths.empty()) throw EmptyPool("no candidate models given");
      std::vector<SvmModel> models;
      for (const auto& p : paths) models.push_back(load_svm(p));
      const auto ds = load_dataset(sel_manifest);
      const auto pools = extract_feature_pools(ds, cfg.feature_stft, cfg.feature_options);
      const auto pool = rank_and_select(std::move(models), pools, ds.labels(), sel_k ? sel_k : cfg.k);
      const auto dir = out_dir(cfg);
      write_pool_manifest(dir / "pool_manifest.txt", pool);
      std::ofstream list(dir / "pool_models.txt");
      for (const auto& e : pool.entries) {
        list << paths[e.original_index] << '\n';
        std::printf("%-24s val %.4f  %s\n", feature_list_name(e.feature_ids()).c_str(), e.val_accuracy,
                    paths[e.original_index].c_str());
      }
    };
  });

  // pseudo-label
  auto* pl = app.add_subcommand("pseudo-label", "label unlabeled data with the fused pool and build the ATS");
  std::string pl_pool, pl_unlabeled, pl_train;
  pl->add_option("--pool", pl_pool, "file listing pool .dfds paths in rank order")->required();
  pl->add_option("--unlabeled", pl_unlabeled, "manifest of the unlabeled samples")->required();
  pl->add_option("--train", pl_train, "labeled training manifest (D_T)")->required();
  pl->callback([&] {
    action = [&] {
      const auto cfg = load_config(g);
      ModelPool pool;
      for (const auto& p : read_lines(pl_pool)) pool.entries.push_back({load_svm(p), 0.0, pool.entries.size()});
      const auto weights =
          cfg.fusion_weights.empty() ? FusionWeights::uniform(pool.size()) : FusionWeights(cfg.fusion_weights);
      auto unlabeled = load_dataset(pl_unlabeled);
      const auto pools = extract_feature_pools(unlabeled, cfg.feature_stft, cfg.feature_options);
      const auto quasi = pseudo_label(pool, weights, unlabeled, pools, cfg.min_confidence);
      const auto ats = build_ats(quasi, load_dataset(pl_train));
      const auto dir = out_dir(cfg);
      write_quasi_csv(dir / "quasi_labels.csv", quasi);
      const auto manifest = save_dataset(ats, dir / "ats");
      std::printf("quasi-labeled %zu samples; ATS of %zu written to %s\n", quasi.data.size(), ats.size(),
                  manifest.string().c_str());
    };
  });

  // train-cnn
  auto* tc = app.add_subcommand("train-cnn", "train the CNN on a labeled manifest (e.g. the ATS)");
  std::string tc_manifest;
  tc->add_option("--manifest", tc_manifest, "labeled training manifest")->required();
  tc->callback([&] {
    action = [&] {
      const auto cfg = load_config(g);
      const auto ds = load_dataset(tc_manifest);
      auto tensors = tensors_for(ds, cfg.cnn_stft);
      const auto stats = channel_stats(tensors);
      for (auto& t : tensors) normalize(t, stats);
      const auto& t0 = tensors.front();
      const auto arch = CnnArch::standard({t0.frames, t0.bins, t0.channels}, ds.num_classes(), cfg.cnn_filters,
                                          cfg.cnn_fc_units, cfg.cnn_pool_h, cfg.cnn_pool_w);
      std::printf("%s", arch.describe().c_str());
      auto train = cfg.train;
      const auto seed = base_seed(g, cfg);
      train.seed = Rng::mix(seed, 1);
      const auto result = train_cnn(init_network(arch, seed, cfg.precision), tensors, ds.labels(), train,
                                    [](const TrainLogRow& r) {
                                      std::printf("it %6zu  lr %.5g  loss %.5f  acc %.4f\n", r.iteration, r.lr,
                                                  r.loss, r.train_accuracy);
                                    });
      const auto dir = out_dir(cfg);
      save_cnn(dir / "cnn.dfdn", result.model);
      save_channel_stats(dir / "cnn.dfdn", stats);
      write_train_log(dir / "train_log.csv", result.log);
      std::printf("wrote %s\n", (dir / "cnn.dfdn").string().c_str());
    };
  });

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "score a CNN (.dfdn) or SVM (.dfds) on a labeled manifest");
  std::string ev_model, ev_manifest;
  ev->add_option("--model", ev_model, "checkpoint")->required()->check(CLI::ExistingFile);
  ev->add_option("--manifest", ev_manifest, "labeled test manifest")->required();
  ev->callback([&] {
    action = [&] {
      const auto cfg = load_config(g);
      const auto ds = load_dataset(ev_manifest);
      std::vector<int> pred;
      if (fs::path(ev_model).extension() == ".dfds") {
        const auto m = load_svm(ev_model);
        const auto pools = extract_feature_pools(ds, cfg.feature_stft, cfg.feature_options);
        pred = svm_predict_all(m, feature_matrix(pools, m.feature_ids));
      } else {
        const auto m = load_cnn(ev_model);
        const auto stats = load_channel_stats(ev_model);
        auto tensors = tensors_for(ds, cfg.cnn_stft);
        for (auto& t : tensors) normalize(t, stats);
        pred = predict(m, tensors);
      }
      const auto y = ds.labels();
      const auto path = out_dir(cfg) / "predictions.csv";
      std::ofstream out(path);
      out << "id,truth,prediction\n";
      for (std::size_t i = 0; i < ds.size(); ++i) out << ds.samples[i].id << ',' << y[i] << ',' << pred[i] << '\n';
      std::printf("accuracy %.6f on %zu samples; predictions in %s\n", accuracy(pred, y), ds.size(),
                  path.string().c_str());
    };
  });

  // sweeps
  auto* sv = app.add_subcommand("sweep-volumes", "run the pipeline per labeled volume and seed");
  sv->callback([&] {
    action = [&] {
      const auto cfg = load_config(g);
      const auto data = prepare_data(cfg);
      print_cells(sweep_volumes(cfg, data));
      std::printf("tables in %s\n", cfg.out_dir.string().c_str());
    };
  });

  auto* sf = app.add_subcommand("sweep-fusion", "vary the two-model fusion weight");
  sf->callback([&] {
    action = [&] {
      const auto cfg = load_config(g);
      const auto data = prepare_data(cfg);
      for (const auto& r : sweep_fusion_weights(cfg, data)) {
        std::printf("w %.2f seed %llu: fusion %.4f  cnn-t %.4f\n", r.weight, static_cast<unsigned long long>(r.seed),
                    r.svm_fusion_test, r.cnn_t_test);
      }
      std::printf("table in %s\n", (cfg.out_dir / "fusion_table.csv").string().c_str());
    };
  });

  auto* ne = app.add_subcommand("noise-exp", "compare clean and noisy labels at one volume");
  double noise = 0.125;
  ne->add_option("--noise", noise, "fraction of labeled samples whose label is redrawn");
  ne->callback([&] {
    action = [&] {
      const auto cfg = load_config(g);
      const auto data = prepare_data(cfg);
      print_cells(noise_experiment(cfg, data, noise));
      std::printf("table in %s\n", (cfg.out_dir / "noise_table.csv").string().c_str());
    };
  });

  // bench
  auto* bench = app.add_subcommand("bench", "time CNN inference over batch sizes");
  std::string bench_model;
  std::vector<std::size_t> batches;
  std::size_t reps = 10, warmup = 2;
  bench->add_option("--model", bench_model, "checkpoint (default: untrained network of the configured shape)");
  bench->add_option("--batches", batches, "batch sizes (default 1,2,4,...,1024)")->delimiter(',');
  bench->add_option("--reps", reps, "timed repetitions")->check(CLI::PositiveNumber);
  bench->add_option("--warmup", warmup, "untimed warm-up runs");
  bench->callback([&] {
    action = [&] {
      const auto cfg = load_config(g);
      CnnModel model;
      if (!bench_model.empty()) {
        model = load_cnn(bench_model);
      } else {
        const auto& st = cfg.cnn_stft;
        const std::size_t frames = st.frames_for(cfg.synthetic.n_points);
        const int n_classes = static_cast<int>(cfg.synthetic.classes.size());
        model = init_network(CnnArch::standard({frames, st.retained_bins, cfg.synthetic.n_channels}, n_classes,
                                               cfg.cnn_filters, cfg.cnn_fc_units, cfg.cnn_pool_h, cfg.cnn_pool_w),
                             base_seed(g, cfg), cfg.precision);
      }
      if (batches.empty()) {
        for (std::size_t b = 1; b <= 1024; b *= 2) batches.push_back(b);
      }
      const auto rows = bench_inference(model, batches, reps, warmup, base_seed(g, cfg));
      const auto path = out_dir(cfg) / "bench.csv";
      write_bench_csv(path, rows);
      for (const auto& r : rows) {
        std::printf("batch %5zu  total %.6fs  per-sample %.3es  std %.3es\n", r.batch, r.total_s, r.per_sample_s,
                    r.std_s);
      }
      std::printf("wrote %s\n", path.string().c_str());
    };
  });

  CLI11_PARSE(app, argc, argv);
  try {
    action();
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());  // what() carries the kind prefix
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
