#include "dfd/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "dfd/error.hpp"
#include "dfd/metrics.hpp"
#include "dfd/random.hpp"
#include "dfd/transfer.hpp"

namespace dfd {

namespace fs = std::filesystem;

namespace {

// Independent streams per pipeline step.
enum Salt : std::uint64_t { kTestSplit = 1, kLabeled, kNoise, kValSplit, kCnnInit, kCnnShuffle };

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string volume_tag(double f) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", f);
  return buf;
}

WindowKind parse_window(const std::string& key, const std::string& v) {
  if (v == "hamming") return WindowKind::hamming;
  if (v == "rectangular") return WindowKind::rectangular;
  throw ConfigError(key + ": expected hamming|rectangular");
}

MagnitudeMode parse_magnitude(const std::string& key, const std::string& v) {
  if (v == "abs") return MagnitudeMode::abs;
  if (v == "log1p_abs") return MagnitudeMode::log1p_abs;
  throw ConfigError(key + ": expected abs|log1p_abs");
}

std::size_t as_count(const std::string& key, const std::string& v) {
  const auto n = parse_int(key, v);
  if (n < 0) throw ConfigError(key + ": must be non-negative");
  return static_cast<std::size_t>(n);
}

// Applies one stft.* style key to a config; returns false if the suffix is unknown.
bool apply_stft(StftConfig& c, const std::string& key, const std::string& suffix, const std::string& v) {
  if (suffix == "window") {
    c.window_len = as_count(key, v);
  } else if (suffix == "frames") {
    c.frames = as_count(key, v);
    c.hop.reset();
  } else if (suffix == "hop") {
    c.hop = as_count(key, v);
    c.frames.reset();
  } else if (suffix == "bins") {
    c.retained_bins = as_count(key, v);
  } else if (suffix == "window_kind") {
    c.window = parse_window(key, v);
  } else if (suffix == "magnitude") {
    c.magnitude = parse_magnitude(key, v);
  } else {
    return false;
  }
  return true;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(worker_threads(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

std::vector<SpectroTensor> gather_tensors(const PreparedData& data, const LabeledDataset& ds) {
  std::vector<SpectroTensor> out;
  out.reserve(ds.size());
  for (const auto& s : ds.samples) out.push_back(data.tensors[data.index_of.at(s.id)]);
  return out;
}

std::vector<FeaturePool> gather_pools(const PreparedData& data, const LabeledDataset& ds) {
  std::vector<FeaturePool> out;
  out.reserve(ds.size());
  for (const auto& s : ds.samples) out.push_back(data.pools[data.index_of.at(s.id)]);
  return out;
}

struct TrainedCnn {
  CnnModel model;
  ChannelStats stats;
  std::vector<TrainLogRow> log;
  double train_accuracy = 0.0;
};

TrainedCnn fit_cnn(const ExperimentConfig& cfg, const PreparedData& data, const LabeledDataset& train_set,
                   std::uint64_t seed) {
  auto tensors = gather_tensors(data, train_set);
  TrainedCnn out;
  out.stats = channel_stats(tensors);
  for (auto& t : tensors) normalize(t, out.stats);
  const auto labels = train_set.labels();
  const auto& t0 = tensors.front();
  const auto arch = CnnArch::standard({t0.frames, t0.bins, t0.channels}, train_set.num_classes(), cfg.cnn_filters,
                                      cfg.cnn_fc_units, cfg.cnn_pool_h, cfg.cnn_pool_w);
  TrainConfig tc = cfg.train;
  tc.seed = Rng::mix(seed, kCnnShuffle);
  auto result = train_cnn(init_network(arch, Rng::mix(seed, kCnnInit), cfg.precision), tensors, labels, tc);
  out.model = std::move(result.model);
  out.log = std::move(result.log);
  out.train_accuracy = accuracy(predict(out.model, tensors), labels);
  return out;
}

std::vector<int> cnn_predict(const TrainedCnn& net, const PreparedData& data, const LabeledDataset& ds) {
  auto tensors = gather_tensors(data, ds);
  for (auto& t : tensors) normalize(t, net.stats);
  return predict(net.model, tensors);
}

// Rows "Ave." and (with more than one value) "Std." for a set of columns;
// `after` goes between the row tag and the values.
void write_aggregates(std::ostream& out, const std::string& before, const std::string& after,
                      const std::vector<std::vector<double>>& columns) {
  if (columns.empty() || columns[0].empty()) return;
  out << before << "Ave." << after;
  for (const auto& c : columns) out << ',' << num(mean(c));
  out << '\n';
  if (columns[0].size() > 1) {
    out << before << "Std." << after;
    for (const auto& c : columns) out << ',' << num(stddev(c));
    out << '\n';
  }
}

void write_errors(const fs::path& path, const std::vector<CellResult>& cells) {
  std::ofstream out(path);
  out << "volume,seed,condition,stage,error\n";
  for (const auto& c : cells) {
    if (c.ok()) continue;
    std::string msg = c.error;
    std::replace(msg.begin(), msg.end(), ',', ';');
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    out << volume_tag(c.fraction) << ',' << c.seed << ',' << c.condition << ',' << *c.error_stage << ',' << msg
        << '\n';
  }
}

std::string cell_name(double fraction, std::uint64_t seed, const std::string& condition) {
  return "v" + volume_tag(fraction) + "_s" + std::to_string(seed) + (condition == "clean" ? "" : "_" + condition);
}

}  // namespace

// ---- configuration -----------------------------------------------------------

ExperimentConfig ExperimentConfig::desk() { return {}; }

ExperimentConfig ExperimentConfig::rig() {
  ExperimentConfig c;
  c.synthetic = rig_signature_spec();
  c.feature_stft = StftConfig::fit_frames(256, 32, 128);
  c.cnn_stft = StftConfig::fit_frames(256, 32, 128);
  c.cnn_stft.magnitude = MagnitudeMode::log1p_abs;
  c.train = TrainConfig{};
  return c;
}

void ExperimentConfig::apply(const KeyValueConfig& kv) {
  if (auto p = kv.get("preset")) {
    const auto keep_out = out_dir;
    if (*p == "rig") {
      *this = rig();
    } else if (*p == "desk") {
      *this = desk();
    } else {
      throw ConfigError("preset: expected desk|rig");
    }
    out_dir = keep_out;
  }
  for (const auto& [key, v] : kv.values()) {
    const auto dot = key.find('.');
    const std::string section = dot == std::string::npos ? "" : key.substr(0, dot);
    const std::string name = dot == std::string::npos ? key : key.substr(dot + 1);
    bool known = true;
    if (key == "preset") {
    } else if (section == "data") {
      if (name == "manifest") manifest = v;
      else if (name == "per_class") per_class = as_count(key, v);
      else if (name == "seed") data_seed = static_cast<std::uint64_t>(parse_int(key, v));
      else if (name == "channels") synthetic.n_channels = as_count(key, v);
      else if (name == "points") synthetic.n_points = as_count(key, v);
      else if (name == "sample_rate") synthetic.sample_rate = parse_double(key, v);
      else if (name == "rotation_hz") synthetic.rotation_hz = parse_double(key, v);
      else if (name == "noise_std") synthetic.noise_std = parse_double(key, v);
      else if (name == "speed_jitter") synthetic.speed_jitter = parse_double(key, v);
      else if (name == "amplitude_jitter") synthetic.amplitude_jitter = parse_double(key, v);
      else known = false;
    } else if (section == "split") {
      if (name == "test_fraction") test_fraction = parse_double(key, v);
      else if (name == "val_fraction") val_fraction = parse_double(key, v);
      else known = false;
    } else if (section == "experiment") {
      if (name == "fractions") fractions = parse_double_list(key, v);
      else if (name == "seeds") {
        seeds.clear();
        for (double s : parse_double_list(key, v)) seeds.push_back(static_cast<std::uint64_t>(s));
      } else if (name == "noise_fraction") noise_fraction = parse_double(key, v);
      else if (name == "noise_volume") noise_volume = parse_double(key, v);
      else if (name == "fusion_grid") fusion_grid = parse_double_list(key, v);
      else if (name == "out") out_dir = v;
      else if (name == "checkpoints") write_checkpoints = v == "true" || v == "1";
      else known = false;
    } else if (section == "features") {
      if (name == "frequency_source") {
        if (v == "spectrogram_mean") feature_options.frequency = FrequencySource::spectrogram_mean;
        else if (v == "whole_fft") feature_options.frequency = FrequencySource::whole_fft;
        else throw ConfigError(key + ": expected spectrogram_mean|whole_fft");
      } else if (name == "time_source") {
        if (v == "waveform") feature_options.time = TimeSource::waveform;
        else if (v == "spectrogram_time") feature_options.time = TimeSource::spectrogram_time;
        else throw ConfigError(key + ": expected waveform|spectrogram_time");
      } else {
        known = apply_stft(feature_stft, key, name, v);
      }
    } else if (section == "cnn_input") {
      known = apply_stft(cnn_stft, key, name, v);
    } else if (section == "svm") {
      if (name == "kernel") {
        if (v == "linear") svm.kernel = KernelKind::linear;
        else if (v == "rbf") svm.kernel = KernelKind::rbf;
        else throw ConfigError(key + ": expected linear|rbf");
      } else if (name == "gamma") {
        if (v == "auto") svm.gamma.reset(); else svm.gamma = parse_double(key, v);
      } else if (name == "c") svm.c_reg = parse_double(key, v);
      else if (name == "tol") svm.tol = parse_double(key, v);
      else if (name == "max_passes") svm.max_passes = as_count(key, v);
      else if (name == "seed") svm.seed = static_cast<std::uint64_t>(parse_int(key, v));
      else known = false;
    } else if (section == "transfer") {
      if (name == "k") k = as_count(key, v);
      else if (name == "weights") fusion_weights = parse_double_list(key, v);
      else if (name == "min_confidence") {
        if (v == "off") min_confidence.reset(); else min_confidence = parse_double(key, v);
      } else if (name == "candidates") {
        candidates.clear();
        if (v != "singles") {
          std::istringstream in(v);
          std::string set;
          while (std::getline(in, set, ';')) {
            if (set.find_first_not_of(" \t") != std::string::npos) candidates.push_back(parse_feature_list(set));
          }
        }
      } else known = false;
    } else if (section == "cnn") {
      if (name == "filters") cnn_filters = as_count(key, v);
      else if (name == "fc_units") cnn_fc_units = as_count(key, v);
      else if (name == "pool_h") cnn_pool_h = as_count(key, v);
      else if (name == "pool_w") cnn_pool_w = as_count(key, v);
      else if (name == "precision") {
        if (v == "f32") precision = Precision::f32;
        else if (v == "f64") precision = Precision::f64;
        else throw ConfigError(key + ": expected f32|f64");
      } else known = false;
    } else if (section == "train") {
      if (name == "lr0") train.lr0 = parse_double(key, v);
      else if (name == "lr_step") train.lr_step = as_count(key, v);
      else if (name == "lr_factor") train.lr_factor = parse_double(key, v);
      else if (name == "momentum") train.momentum = parse_double(key, v);
      else if (name == "weight_decay") train.weight_decay = parse_double(key, v);
      else if (name == "batch") train.batch = as_count(key, v);
      else if (name == "iterations") train.iterations = as_count(key, v);
      else if (name == "log_every") train.log_every = as_count(key, v);
      else known = false;
    } else {
      known = false;
    }
    if (!known) throw ConfigError("unknown key '" + key + "'");
  }
}

void ExperimentConfig::validate() const {
  if (fractions.empty()) throw ConfigError("experiment.fractions is empty");
  for (double f : fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw InvalidFraction("labeled fraction " + std::to_string(f) + " outside (0, 1]");
  }
  if (seeds.empty()) throw ConfigError("experiment.seeds is empty");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw InvalidFraction("split.test_fraction outside (0, 1)");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw InvalidFraction("split.val_fraction outside (0, 1)");
  if (k < 1) throw InvalidK("transfer.k must be >= 1");
  if (!fusion_weights.empty() && fusion_weights.size() != k) {
    throw ShapeError("transfer.weights needs exactly k entries");
  }
  feature_stft.validate();
  cnn_stft.validate();
  train.validate();
  if (!manifest) synthetic.validate();
}

std::vector<std::vector<FeatureId>> ExperimentConfig::candidate_sets() const {
  if (!candidates.empty()) return candidates;
  std::vector<std::vector<FeatureId>> out;
  for (auto id : all_features()) out.push_back({id});
  return out;
}

double CellResult::best_svm_test() const {
  if (pool_models.empty()) return 0.0;
  for (const auto& r : svm) {
    if (r.model == pool_models.front()) return r.test_accuracy;
  }
  return 0.0;
}

std::size_t worker_threads() {
  if (const char* env = std::getenv("DFD_THREADS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n >= 1) return static_cast<std::size_t>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// ---- pipeline ----------------------------------------------------------------

PreparedData prepare_data(const ExperimentConfig& cfg) {
  cfg.validate();
  PreparedData d;
  d.dataset = cfg.manifest ? load_dataset(*cfg.manifest) : generate_synthetic(cfg.synthetic, cfg.per_class, cfg.data_seed);
  d.dataset.validate();
  const std::size_t n = d.dataset.size();
  d.pools.resize(n);
  d.tensors.resize(n);
  parallel_for(n, [&](std::size_t i) {
    d.pools[i] = extract_feature_pool(d.dataset.samples[i], cfg.feature_stft, cfg.feature_options);
    d.tensors[i] = spectro_tensor(d.dataset.samples[i], cfg.cnn_stft);
  });
  for (std::size_t i = 0; i < n; ++i) d.index_of.emplace(d.dataset.samples[i].id, i);
  return d;
}

CellResult run_cell(const ExperimentConfig& cfg, const PreparedData& data, double fraction, std::uint64_t seed,
                    const CellOptions& opts) {
  CellResult r;
  r.fraction = fraction;
  r.seed = seed;
  r.condition = opts.condition;
  std::string stage = "split";
  try {
    const auto& full = data.dataset;
    // Held-out test split, then the labeled subset out of the remainder.
    auto outer = split_labeled(full, cfg.test_fraction, Rng::mix(seed, kTestSplit));
    const LabeledDataset& rest = outer.train;
    const LabeledDataset& test = outer.val;
    const auto counts = full.class_counts();
    const auto min_count = *std::min_element(counts.begin(), counts.end());
    const auto per_class =
        static_cast<std::size_t>(std::floor(fraction * static_cast<double>(min_count) + 1e-9));
    if (per_class < 1) {
      throw ClassStarved("volume " + volume_tag(fraction) + " leaves no labeled sample per class");
    }
    LabeledDataset labeled = stratified_take(rest, per_class, Rng::mix(seed, kLabeled));
    LabeledDataset unlabeled = difference(rest, labeled);
    if (opts.noise_fraction > 0.0) {
      stage = "noise";
      labeled = inject_label_noise(labeled, opts.noise_fraction, Rng::mix(seed, kNoise), &r.noisy_ids);
    }
    const std::vector<int> unlabeled_truth = unlabeled.labels();
    for (auto& s : unlabeled.samples) s.label.reset();

    stage = "split";
    auto inner = split_labeled(labeled, cfg.val_fraction, Rng::mix(seed, kValSplit));
    const LabeledDataset& train = inner.train;
    const LabeledDataset& val = inner.val;
    r.labeled = labeled.size();
    r.train = train.size();
    r.val = val.size();
    r.unlabeled = unlabeled.size();
    r.test = test.size();

    stage = "features";
    const auto train_pools = gather_pools(data, train);
    const auto val_pools = gather_pools(data, val);
    const auto test_pools = gather_pools(data, test);
    const auto unlabeled_pools = gather_pools(data, unlabeled);
    const auto train_y = train.labels();
    const auto val_y = val.labels();
    const auto test_y = test.labels();

    stage = "svm";
    std::vector<SvmModel> models;
    for (const auto& ids : cfg.candidate_sets()) {
      auto m = train_svm(feature_matrix(train_pools, ids), train_y, full.num_classes(), cfg.svm, ids);
      SvmRow row;
      row.model = feature_list_name(ids);
      row.train_accuracy = m.train_accuracy;
      row.val_accuracy = accuracy(svm_predict_all(m, feature_matrix(val_pools, ids)), val_y);
      row.test_accuracy = accuracy(svm_predict_all(m, feature_matrix(test_pools, ids)), test_y);
      r.svm.push_back(row);
      models.push_back(std::move(m));
    }

    stage = "select";
    const ModelPool pool = rank_and_select(std::move(models), val_pools, val_y, cfg.k);
    for (const auto& e : pool.entries) r.pool_models.push_back(feature_list_name(e.feature_ids()));
    const auto& wv = opts.weights ? *opts.weights : cfg.fusion_weights;
    const FusionWeights weights = wv.empty() ? FusionWeights::uniform(pool.size()) : FusionWeights(wv);
    if (weights.size() != pool.size()) throw ShapeError("fusion weights do not match the pool size");

    std::vector<int> fusion_pred;
    for (const auto& p : test_pools) fusion_pred.push_back(fuse(pool, weights, p).label);
    r.fusion_test = accuracy(fusion_pred, test_y);

    stage = "pseudo-label";
    const auto quasi = pseudo_label(pool, weights, unlabeled, unlabeled_pools, cfg.min_confidence);
    if (!quasi.data.empty()) {
      std::vector<int> truth;
      for (const auto& s : quasi.data.samples) {
        const auto it = std::find_if(unlabeled.samples.begin(), unlabeled.samples.end(),
                                     [&](const SignalSample& u) { return u.id == s.id; });
        truth.push_back(unlabeled_truth[static_cast<std::size_t>(it - unlabeled.samples.begin())]);
      }
      r.quasi_accuracy = accuracy(quasi.data.labels(), truth);
    }

    stage = "ats";
    const LabeledDataset ats = build_ats(quasi, train);
    r.ats = ats.size();

    stage = "cnn-t";
    const TrainedCnn cnn_t = fit_cnn(cfg, data, ats, seed);
    r.cnn_t_train = cnn_t.train_accuracy;
    const auto cnn_t_pred = cnn_predict(cnn_t, data, test);
    r.cnn_t_test = accuracy(cnn_t_pred, test_y);

    std::optional<TrainedCnn> vanilla;
    std::vector<int> vanilla_pred;
    if (opts.train_vanilla) {
      stage = "cnn-vanilla";
      vanilla = fit_cnn(cfg, data, train, seed);
      r.cnn_vanilla_train = vanilla->train_accuracy;
      vanilla_pred = cnn_predict(*vanilla, data, test);
      r.cnn_vanilla_test = accuracy(vanilla_pred, test_y);
    }

    if (opts.cell_dir) {
      stage = "write";
      const fs::path dir = *opts.cell_dir;
      fs::create_directories(dir);
      write_pool_manifest(dir / "pool_manifest.txt", pool);
      write_quasi_csv(dir / "quasi_labels.csv", quasi);
      {
        std::ofstream out(dir / "predictions.csv");
        out << "id,truth,best_svm,svm_fusion,cnn_t" << (opts.train_vanilla ? ",cnn_vanilla" : "") << '\n';
        const auto best_pred =
            svm_predict_all(pool.entries.front().model, feature_matrix(test_pools, pool.entries.front().feature_ids()));
        for (std::size_t i = 0; i < test.size(); ++i) {
          out << test.samples[i].id << ',' << test_y[i] << ',' << best_pred[i] << ',' << fusion_pred[i] << ','
              << cnn_t_pred[i];
          if (opts.train_vanilla) out << ',' << vanilla_pred[i];
          out << '\n';
        }
      }
      {
        std::ofstream out(dir / "noisy_ids.txt");
        for (const auto& id : r.noisy_ids) out << id << '\n';
      }
      write_train_log(dir / "train_log_cnn_t.csv", cnn_t.log);
      if (cfg.write_checkpoints) {
        save_cnn(dir / "cnn_t.dfdn", cnn_t.model);
        save_channel_stats(dir / "cnn_t.dfdn", cnn_t.stats);
      }
      if (vanilla) {
        write_train_log(dir / "train_log_cnn_vanilla.csv", vanilla->log);
        if (cfg.write_checkpoints) {
          save_cnn(dir / "cnn_vanilla.dfdn", vanilla->model);
          save_channel_stats(dir / "cnn_vanilla.dfdn", vanilla->stats);
        }
      }
    }
  } catch (const std::exception& e) {
    r.error_stage = stage;
    r.error = e.what();
  }
  return r;
}

std::vector<CellResult> sweep_volumes(const ExperimentConfig& cfg, const PreparedData& data) {
  cfg.validate();
  std::vector<std::pair<double, std::uint64_t>> grid;
  auto fractions = cfg.fractions;
  auto seeds = cfg.seeds;
  std::sort(fractions.begin(), fractions.end());
  std::sort(seeds.begin(), seeds.end());
  for (double f : fractions) {
    for (auto s : seeds) grid.emplace_back(f, s);
  }
  std::vector<CellResult> cells(grid.size());
  fs::create_directories(cfg.out_dir);
  parallel_for(grid.size(), [&](std::size_t i) {
    CellOptions opts;
    opts.noise_fraction = cfg.noise_fraction;
    opts.condition = cfg.noise_fraction > 0.0 ? "noisy" : "clean";
    opts.cell_dir = cfg.out_dir / "cells" / cell_name(grid[i].first, grid[i].second, opts.condition);
    cells[i] = run_cell(cfg, data, grid[i].first, grid[i].second, opts);
  });

  {
    std::ofstream out(cfg.out_dir / "svm_table.csv");
    out << "volume,seed,model,train_acc,val_acc,test_acc\n";
    for (double f : fractions) {
      std::map<std::string, std::vector<std::vector<double>>> agg;
      std::vector<std::string> order;
      for (const auto& c : cells) {
        if (c.fraction != f || !c.ok()) continue;
        for (const auto& row : c.svm) {
          out << volume_tag(f) << ',' << c.seed << ',' << row.model << ',' << num(row.train_accuracy) << ','
              << num(row.val_accuracy) << ',' << num(row.test_accuracy) << '\n';
          auto& a = agg[row.model];
          if (a.empty()) {
            a.resize(3);
            order.push_back(row.model);
          }
          a[0].push_back(row.train_accuracy);
          a[1].push_back(row.val_accuracy);
          a[2].push_back(row.test_accuracy);
        }
      }
      for (const auto& m : order) write_aggregates(out, volume_tag(f) + ",", "," + m, agg[m]);
    }
  }
  {
    std::ofstream out(cfg.out_dir / "cnn_table.csv");
    out << "volume,seed,labeled,train,val,unlabeled,ats,test,pool,quasi_acc,best_svm_test,svm_fusion_test,"
           "cnn_vanilla_train,cnn_vanilla_test,cnn_t_train,cnn_t_test\n";
    for (double f : fractions) {
      std::vector<std::vector<double>> cols(7);
      for (const auto& c : cells) {
        if (c.fraction != f || !c.ok()) continue;
        std::string pool;
        for (const auto& m : c.pool_models) pool += (pool.empty() ? "" : "|") + m;
        out << volume_tag(f) << ',' << c.seed << ',' << c.labeled << ',' << c.train << ',' << c.val << ','
            << c.unlabeled << ',' << c.ats << ',' << c.test << ',' << pool << ',' << num(c.quasi_accuracy) << ','
            << num(c.best_svm_test()) << ',' << num(c.fusion_test) << ',' << num(c.cnn_vanilla_train) << ','
            << num(c.cnn_vanilla_test) << ',' << num(c.cnn_t_train) << ',' << num(c.cnn_t_test) << '\n';
        const double vals[7] = {c.quasi_accuracy,   c.best_svm_test(),  c.fusion_test, c.cnn_vanilla_train,
                                c.cnn_vanilla_test, c.cnn_t_train, c.cnn_t_test};
        for (int k = 0; k < 7; ++k) cols[static_cast<std::size_t>(k)].push_back(vals[k]);
      }
      write_aggregates(out, volume_tag(f) + ",", ",,,,,,,", cols);
    }
  }
  write_errors(cfg.out_dir / "errors.csv", cells);
  return cells;
}

std::vector<FusionRow> sweep_fusion_weights(const ExperimentConfig& cfg, const PreparedData& data) {
  cfg.validate();
  if (cfg.k != 2) throw ShapeError("the fusion sweep needs a two-model pool (transfer.k = 2)");
  const double fraction = cfg.fractions.front();
  auto seeds = cfg.seeds;
  std::sort(seeds.begin(), seeds.end());
  std::vector<std::pair<double, std::uint64_t>> grid;
  for (double w : cfg.fusion_grid) {
    for (auto s : seeds) grid.emplace_back(w, s);
  }
  std::vector<CellResult> cells(grid.size());
  parallel_for(grid.size(), [&](std::size_t i) {
    CellOptions opts;
    opts.weights = std::vector<double>{grid[i].first, 1.0 - grid[i].first};
    opts.train_vanilla = false;
    cells[i] = run_cell(cfg, data, fraction, grid[i].second, opts);
  });

  std::vector<FusionRow> rows;
  fs::create_directories(cfg.out_dir);
  std::ofstream out(cfg.out_dir / "fusion_table.csv");
  out << "weight,seed,svm_fusion_test,cnn_t_test\n";
  for (double w : cfg.fusion_grid) {
    std::vector<std::vector<double>> cols(2);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (grid[i].first != w || !cells[i].ok()) continue;
      FusionRow row{w, grid[i].second, cells[i].fusion_test, cells[i].cnn_t_test};
      rows.push_back(row);
      out << num(w) << ',' << row.seed << ',' << num(row.svm_fusion_test) << ',' << num(row.cnn_t_test) << '\n';
      cols[0].push_back(row.svm_fusion_test);
      cols[1].push_back(row.cnn_t_test);
    }
    write_aggregates(out, num(w) + ",", "", cols);
  }
  write_errors(cfg.out_dir / "errors.csv", cells);
  return rows;
}

std::vector<CellResult> noise_experiment(const ExperimentConfig& cfg, const PreparedData& data, double noise_fraction) {
  cfg.validate();
  auto seeds = cfg.seeds;
  std::sort(seeds.begin(), seeds.end());
  std::vector<std::pair<bool, std::uint64_t>> grid;
  for (bool noisy : {false, true}) {
    for (auto s : seeds) grid.emplace_back(noisy, s);
  }
  std::vector<CellResult> cells(grid.size());
  fs::create_directories(cfg.out_dir);
  parallel_for(grid.size(), [&](std::size_t i) {
    CellOptions opts;
    opts.noise_fraction = grid[i].first ? noise_fraction : 0.0;
    opts.condition = grid[i].first ? "noisy" : "clean";
    opts.cell_dir = cfg.out_dir / "cells" / cell_name(cfg.noise_volume, grid[i].second, opts.condition);
    cells[i] = run_cell(cfg, data, cfg.noise_volume, grid[i].second, opts);
  });

  std::ofstream out(cfg.out_dir / "noise_table.csv");
  out << "condition,seed,svm_fusion_test,cnn_vanilla_test,cnn_t_test\n";
  std::map<std::string, std::vector<std::vector<double>>> agg;
  for (const char* cond : {"clean", "noisy"}) {
    auto& cols = agg[cond];
    cols.resize(3);
    for (const auto& c : cells) {
      if (c.condition != cond || !c.ok()) continue;
      out << cond << ',' << c.seed << ',' << num(c.fusion_test) << ',' << num(c.cnn_vanilla_test) << ','
          << num(c.cnn_t_test) << '\n';
      cols[0].push_back(c.fusion_test);
      cols[1].push_back(c.cnn_vanilla_test);
      cols[2].push_back(c.cnn_t_test);
    }
    write_aggregates(out, std::string(cond) + ",", "", cols);
  }
  if (!agg["clean"][0].empty() && !agg["noisy"][0].empty()) {
    out << "drop,Ave.";
    for (std::size_t k = 0; k < 3; ++k) out << ',' << num(mean(agg["clean"][k]) - mean(agg["noisy"][k]));
    out << '\n';
  }
  write_errors(cfg.out_dir / "errors.csv", cells);
  return cells;
}

// ---- timing ------------------------------------------------------------------

std::vector<BenchRow> bench_inference(const CnnModel& model, const std::vector<std::size_t>& batch_sizes,
                                      std::size_t repetitions, std::size_t warmup, std::uint64_t seed) {
  model.arch.validate();
  if (repetitions < 1) throw SpecError("need at least one repetition");
  const auto& in = model.arch.input;
  Rng rng(seed);
  std::vector<BenchRow> rows;
  for (auto b : batch_sizes) {
    if (b < 1) throw SpecError("batch sizes must be >= 1");
    std::vector<SpectroTensor> batch(b);
    for (auto& t : batch) {
      t.frames = in.h;
      t.bins = in.w;
      t.channels = in.c;
      t.values.resize(in.size());
      for (auto& v : t.values) v = static_cast<float>(rng.normal());
    }
    std::vector<double> times;
    for (std::size_t r = 0; r < warmup + repetitions; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto probs = forward(model, batch);
      const auto t1 = std::chrono::steady_clock::now();
      if (probs.size() != b) throw ShapeError("forward returned the wrong batch size");
      if (r >= warmup) times.push_back(std::chrono::duration<double>(t1 - t0).count());
    }
    const double total = mean(times);
    rows.push_back({b, total, total / static_cast<double>(b), stddev(times)});
  }
  return rows;
}

void write_bench_csv(const fs::path& path, const std::vector<BenchRow>& rows) {
  std::ofstream out(path);
  if (!out) throw MissingData("cannot write " + path.string());
  out << "batch,total_s,per_sample_s,std_s\n";
  for (const auto& r : rows) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g\n", r.batch, r.total_s, r.per_sample_s, r.std_s);
    out << buf;
  }
}

}  // namespace dfd
