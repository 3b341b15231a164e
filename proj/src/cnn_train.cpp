#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>

#include "dfd/cnn.hpp"
#include "dfd/error.hpp"
#include "dfd/random.hpp"

namespace dfd {

TrainConfig TrainConfig::desk() {
  TrainConfig cfg;
  cfg.iterations = 2000;
  cfg.batch = 64;
  cfg.lr_step = 500;
  return cfg;
}

double TrainConfig::lr_at(std::size_t iteration) const {
  return lr0 * std::pow(lr_factor, static_cast<double>(iteration / lr_step));
}

void TrainConfig::validate() const {
  if (!(lr0 > 0.0) || !(lr_factor > 0.0) || lr_step == 0 || batch == 0 || iterations == 0 || log_every == 0) {
    throw SpecError("training rate, schedule, batch, iteration and log settings must be positive");
  }
  if (momentum < 0.0 || weight_decay < 0.0) throw SpecError("momentum and weight decay must be >= 0");
}

TrainResult train_cnn(CnnModel model, std::span<const SpectroTensor> tensors, std::span<const int> labels,
                      const TrainConfig& cfg, const std::function<void(const TrainLogRow&)>& on_log) {
  cfg.validate();
  if (tensors.empty()) throw EmptyDataset("augmented training set is empty");
  if (tensors.size() != labels.size()) throw ShapeError("one label per tensor expected");

  const auto blocks = param_blocks(model.arch);
  const std::size_t n = tensors.size();
  const bool with_replacement = n < cfg.batch;
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = n;  // forces a shuffle before the first batch

  OptimizerState state;
  std::vector<const SpectroTensor*> batch(cfg.batch);
  std::vector<int> batch_labels(cfg.batch);

  TrainResult result;
  double window_loss = 0.0;
  std::size_t window_hits = 0, window_seen = 0, window_iters = 0;

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      std::size_t idx;
      if (with_replacement) {
        idx = rng.below(n);
      } else {
        if (cursor == n) {
          rng.shuffle(std::span(order));
          cursor = 0;
        }
        idx = order[cursor++];
      }
      batch[b] = &tensors[idx];
      batch_labels[b] = labels[idx];
    }
    const auto lg = loss_and_grad(model, std::span<const SpectroTensor* const>(batch), batch_labels);
    if (!std::isfinite(lg.loss)) throw NonFinite("training loss diverged at iteration " + std::to_string(it));
    const double lr = cfg.lr_at(it);
    sgd_momentum_step(model.params, lg.grads, state, lr, cfg.momentum, cfg.weight_decay, blocks);
    if (model.precision == Precision::f32) {
      for (auto& p : model.params) p = static_cast<float>(p);
    }

    window_loss += lg.loss;
    window_hits += lg.correct;
    window_seen += cfg.batch;
    ++window_iters;
    if (it % cfg.log_every == 0 || it + 1 == cfg.iterations) {
      TrainLogRow row{it, lr, window_loss / static_cast<double>(window_iters),
                      static_cast<double>(window_hits) / static_cast<double>(window_seen)};
      result.log.push_back(row);
      if (on_log) on_log(row);
      window_loss = 0.0;
      window_hits = window_seen = window_iters = 0;
    }
  }
  result.model = std::move(model);
  return result;
}

void write_train_log(const std::filesystem::path& path, std::span<const TrainLogRow> log) {
  std::ofstream out(path);
  if (!out) throw MissingData("cannot write " + path.string());
  out << "# loss is the batch mean of the cross-entropy, not the dataset sum\n";
  out << "iteration,lr,loss,train_acc\n" << std::setprecision(10);
  for (const auto& r : log) out << r.iteration << ',' << r.lr << ',' << r.loss << ',' << r.train_accuracy << '\n';
}

}  // namespace dfd
