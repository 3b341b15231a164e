#include "dfd/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <unordered_set>

#include "dfd/error.hpp"
#include "dfd/metrics.hpp"

namespace dfd {

FusionWeights::FusionWeights(std::vector<double> w) : w_(std::move(w)) {
  if (w_.empty()) throw ShapeError("fusion weights are empty");
  double sum = 0.0;
  for (double x : w_) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw ShapeError("fusion weights must be finite and >= 0");
    sum += x;
  }
  if (!(sum > 0.0)) throw ShapeError("fusion weights sum to zero");
  if (sum != 1.0) {
    for (auto& x : w_) x /= sum;
  }
}

FusionWeights FusionWeights::uniform(std::size_t n) { return FusionWeights(std::vector<double>(n, 1.0)); }

FusionWeights FusionWeights::pair(double w) { return FusionWeights({w, 1.0 - w}); }

std::vector<std::size_t> rank_by_accuracy(std::span<const double> accuracies, std::size_t k) {
  if (k < 1 || k > accuracies.size()) {
    throw InvalidK("k = " + std::to_string(k) + " outside [1, " + std::to_string(accuracies.size()) + "]");
  }
  std::vector<std::size_t> idx(accuracies.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return accuracies[a] > accuracies[b]; });
  idx.resize(k);
  return idx;
}

ModelPool rank_and_select(std::vector<SvmModel> models, std::span<const FeaturePool> val_pools,
                          std::span<const int> val_labels, std::size_t k) {
  if (val_pools.empty()) throw EmptyInput("validation set is empty");
  if (val_pools.size() != val_labels.size()) throw ShapeError("validation pools and labels differ in count");
  std::vector<double> acc;
  acc.reserve(models.size());
  for (const auto& m : models) {
    const auto x = feature_matrix(val_pools, m.feature_ids);
    acc.push_back(accuracy(svm_predict_all(m, x), val_labels));
  }
  ModelPool pool;
  for (auto i : rank_by_accuracy(acc, k)) pool.entries.push_back({std::move(models[i]), acc[i], i});
  return pool;
}

FusionResult fuse_probabilities(std::span<const std::vector<double>> per_model, const FusionWeights& w) {
  if (per_model.empty()) throw EmptyPool("nothing to fuse");
  if (per_model.size() != w.size()) {
    throw ShapeError("fusion needs one weight per model (" + std::to_string(per_model.size()) + " models, " +
                     std::to_string(w.size()) + " weights)");
  }
  FusionResult r;
  r.probabilities.assign(per_model[0].size(), 0.0);
  for (std::size_t m = 0; m < per_model.size(); ++m) {
    if (per_model[m].size() != r.probabilities.size()) throw ShapeError("probability vectors differ in length");
    const double wm = w.values()[m];
    for (std::size_t c = 0; c < r.probabilities.size(); ++c) r.probabilities[c] += wm * per_model[m][c];
  }
  r.label = static_cast<int>(argmax(r.probabilities));
  return r;
}

FusionResult fuse(const ModelPool& pool, const FusionWeights& w, const FeaturePool& x) {
  if (pool.empty()) throw EmptyPool("model pool is empty");
  if (w.size() != pool.size()) throw ShapeError("fusion weight count does not match pool size");
  std::vector<std::vector<double>> probs;
  probs.reserve(pool.size());
  for (const auto& e : pool.entries) {
    probs.push_back(svm_predict_proba(e.model, combine_features(x, e.feature_ids()).values));
  }
  return fuse_probabilities(probs, w);
}

QuasiLabeledDataset pseudo_label(const ModelPool& pool, const FusionWeights& w, const LabeledDataset& unlabeled,
                                 std::span<const FeaturePool> unlabeled_pools, std::optional<double> min_confidence) {
  if (pool.empty()) throw EmptyPool("model pool is empty");
  if (unlabeled_pools.size() != unlabeled.size()) throw ShapeError("one feature pool per unlabeled sample expected");
  QuasiLabeledDataset q;
  q.data = unlabeled.like();
  q.data.provenance = Provenance::quasi;
  for (std::size_t i = 0; i < unlabeled.size(); ++i) {
    auto r = fuse(pool, w, unlabeled_pools[i]);
    if (min_confidence && r.probabilities[static_cast<std::size_t>(r.label)] < *min_confidence) continue;
    SignalSample s = unlabeled.samples[i];
    s.label = r.label;
    s.provenance = Provenance::quasi;
    q.data.samples.push_back(std::move(s));
    q.probabilities.push_back(std::move(r.probabilities));
  }
  return q;
}

LabeledDataset build_ats(const QuasiLabeledDataset& quasi, const LabeledDataset& train) {
  const auto& qd = quasi.data;
  if (!qd.class_names.empty() && qd.class_names != train.class_names) {
    throw SchemaError("quasi-labeled and training sets use different class names");
  }
  if (!qd.empty() && !train.empty()) {
    const auto& a = qd.samples.front();
    const auto& b = train.samples.front();
    if (a.n_channels != b.n_channels || a.n_points != b.n_points || a.sample_rate != b.sample_rate) {
      throw SchemaError("quasi-labeled and training samples differ in shape");
    }
  }
  LabeledDataset ats = train.like();
  ats.samples.reserve(qd.size() + train.size());
  std::unordered_set<std::string> ids;
  for (const auto* part : {&qd, &train}) {
    for (const auto& s : part->samples) {
      if (!ids.insert(s.id).second) throw SchemaError("sample id '" + s.id + "' appears twice in the ATS");
      ats.samples.push_back(s);
    }
  }
  return ats;
}

void write_pool_manifest(const std::filesystem::path& path, const ModelPool& pool) {
  std::ofstream out(path);
  if (!out) throw MissingData("cannot write " + path.string());
  out << "rank\tfeatures\tval_accuracy\tcandidate_index\n" << std::setprecision(17);
  for (std::size_t r = 0; r < pool.size(); ++r) {
    const auto& e = pool.entries[r];
    out << r << '\t' << feature_list_name(e.feature_ids()) << '\t' << e.val_accuracy << '\t' << e.original_index
        << '\n';
  }
}

void write_quasi_csv(const std::filesystem::path& path, const QuasiLabeledDataset& quasi) {
  std::ofstream out(path);
  if (!out) throw MissingData("cannot write " + path.string());
  out << "id,label";
  for (const auto& c : quasi.data.class_names) out << ",p_" << c;
  out << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < quasi.data.size(); ++i) {
    out << quasi.data.samples[i].id << ',' << *quasi.data.samples[i].label;
    for (double p : quasi.probabilities[i]) out << ',' << p;
    out << '\n';
  }
}

}  // namespace dfd
