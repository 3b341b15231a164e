#include "dfd/svm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "dfd/binary_io.hpp"
#include "dfd/error.hpp"
#include "dfd/metrics.hpp"
#include "dfd/random.hpp"

namespace dfd {

namespace {

constexpr double kTau = 1e-12;
constexpr std::uint32_t kSvmVersion = 1;

}  // namespace

double kernel_value(KernelKind kind, double gamma, std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  if (kind == KernelKind::linear) {
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
  }
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return std::exp(-gamma * acc);
}

BinarySolution solve_smo(std::span<const double> gram, std::span<const int> y, double c_reg, double tol,
                         std::size_t max_iterations, std::uint64_t seed) {
  const std::size_t n = y.size();
  if (gram.size() != n * n) throw ShapeError("gram matrix must be n x n");
  auto K = [&](std::size_t i, std::size_t j) { return gram[i * n + j]; };
  auto yd = [&](std::size_t i) { return static_cast<double>(y[i]); };

  BinarySolution sol;
  sol.alpha.assign(n, 0.0);
  auto& a = sol.alpha;
  std::vector<double> grad(n, -1.0);  // G = Q alpha - 1

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  if (seed != 0) {
    Rng rng(seed);
    rng.shuffle(std::span(order));
  }

  auto in_up = [&](std::size_t t) { return (y[t] == 1 && a[t] < c_reg) || (y[t] == -1 && a[t] > 0.0); };
  auto in_low = [&](std::size_t t) { return (y[t] == 1 && a[t] > 0.0) || (y[t] == -1 && a[t] < c_reg); };

  while (sol.iterations < max_iterations) {
    // i: maximal violator from the "up" set.
    double gmax = -std::numeric_limits<double>::infinity();
    std::size_t i = n;
    for (auto t : order) {
      if (in_up(t) && -yd(t) * grad[t] >= gmax) {
        gmax = -yd(t) * grad[t];
        i = t;
      }
    }
    // j: best second-order gain from the "low" set.
    double gmax2 = -std::numeric_limits<double>::infinity();
    double best_obj = std::numeric_limits<double>::infinity();
    std::size_t j = n;
    for (auto t : order) {
      if (!in_low(t)) continue;
      const double v = yd(t) * grad[t];
      gmax2 = std::max(gmax2, v);
      if (i == n) continue;
      const double diff = gmax + v;
      if (diff > 0.0) {
        double quad = K(i, i) + K(t, t) - 2.0 * K(i, t);
        if (quad <= 0.0) quad = kTau;
        const double obj = -(diff * diff) / quad;
        if (obj <= best_obj) {
          best_obj = obj;
          j = t;
        }
      }
    }
    if (i == n || j == n || gmax + gmax2 < tol) {
      sol.converged = true;
      break;
    }

    const double old_ai = a[i], old_aj = a[j];
    const double qij = yd(i) * yd(j) * K(i, j);
    if (y[i] != y[j]) {
      double quad = K(i, i) + K(j, j) + 2.0 * qij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = a[i] - a[j];
      a[i] += delta;
      a[j] += delta;
      if (diff > 0.0) {
        if (a[j] < 0.0) { a[j] = 0.0; a[i] = diff; }
      } else {
        if (a[i] < 0.0) { a[i] = 0.0; a[j] = -diff; }
      }
      if (diff > 0.0) {
        if (a[i] > c_reg) { a[i] = c_reg; a[j] = c_reg - diff; }
      } else {
        if (a[j] > c_reg) { a[j] = c_reg; a[i] = c_reg + diff; }
      }
    } else {
      double quad = K(i, i) + K(j, j) - 2.0 * qij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = a[i] + a[j];
      a[i] -= delta;
      a[j] += delta;
      if (sum > c_reg) {
        if (a[i] > c_reg) { a[i] = c_reg; a[j] = sum - c_reg; }
      } else {
        if (a[j] < 0.0) { a[j] = 0.0; a[i] = sum; }
      }
      if (sum > c_reg) {
        if (a[j] > c_reg) { a[j] = c_reg; a[i] = sum - c_reg; }
      } else {
        if (a[i] < 0.0) { a[i] = 0.0; a[j] = sum; }
      }
    }
    const double dai = a[i] - old_ai, daj = a[j] - old_aj;
    for (std::size_t k = 0; k < n; ++k) {
      grad[k] += yd(k) * (yd(i) * K(i, k) * dai + yd(j) * K(j, k) * daj);
    }
    ++sol.iterations;
  }

  // Bias: mean of -y G over free vectors, else the midpoint of the feasible interval.
  double ub = std::numeric_limits<double>::infinity(), lb = -ub, sum_free = 0.0;
  std::size_t n_free = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = yd(t) * grad[t];
    if (a[t] >= c_reg) {
      if (y[t] == -1) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else if (a[t] <= 0.0) {
      if (y[t] == 1) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  double rho = 0.0;
  if (n_free > 0) {
    rho = sum_free / static_cast<double>(n_free);
  } else if (std::isfinite(ub) && std::isfinite(lb)) {
    rho = (ub + lb) / 2.0;
  } else if (std::isfinite(ub)) {
    rho = ub;
  } else if (std::isfinite(lb)) {
    rho = lb;
  }
  sol.bias = -rho;
  return sol;
}

double BinarySvm::decision(KernelKind kind, double gamma, std::span<const double> z) const {
  double f = bias;
  for (std::size_t i = 0; i < support.size(); ++i) f += coef[i] * kernel_value(kind, gamma, support[i], z);
  return f;
}

std::vector<double> SvmModel::standardize(std::span<const double> x) const {
  if (x.size() != width()) {
    throw ShapeError("feature width " + std::to_string(x.size()) + " does not match model width " +
                     std::to_string(width()));
  }
  std::vector<double> z(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) z[i] = (x[i] - mean[i]) / scale[i];
  return z;
}

std::vector<double> SvmModel::decision_values(std::span<const double> x) const {
  const auto z = standardize(x);
  std::vector<double> out;
  out.reserve(machines.size());
  for (const auto& m : machines) out.push_back(m.decision(hp.kernel, gamma, z));
  return out;
}

SvmModel train_svm(const FeatureMatrix& x, std::span<const int> y, int n_classes, const SvmHyperParams& hp,
                   std::vector<FeatureId> feature_ids) {
  if (x.size() != y.size()) throw ShapeError("feature rows and labels differ in count");
  if (x.empty()) throw EmptyInput("no training samples");
  if (!(hp.c_reg > 0.0) || !(hp.tol > 0.0)) throw SpecError("C and tol must be positive");
  if (hp.gamma && !(*hp.gamma > 0.0)) throw SpecError("gamma must be positive");
  const std::size_t n = x.size(), d = x[0].size();
  if (d == 0) throw ShapeError("zero-width features");
  std::vector<int> seen(static_cast<std::size_t>(std::max(n_classes, 0)), 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (x[i].size() != d) throw ShapeError("ragged feature matrix");
    for (double v : x[i]) {
      if (!std::isfinite(v)) throw NonFinite("non-finite feature value");
    }
    if (y[i] < 0 || y[i] >= n_classes) throw ShapeError("label out of range");
    seen[static_cast<std::size_t>(y[i])] = 1;
  }
  if (std::accumulate(seen.begin(), seen.end(), 0) < 2) throw DegenerateLabels("need at least two classes");

  SvmModel model;
  model.hp = hp;
  model.n_classes = n_classes;
  model.feature_ids = std::move(feature_ids);
  model.mean.assign(d, 0.0);
  model.scale.assign(d, 0.0);
  for (const auto& row : x) {
    for (std::size_t k = 0; k < d; ++k) model.mean[k] += row[k];
  }
  for (auto& m : model.mean) m /= static_cast<double>(n);
  for (const auto& row : x) {
    for (std::size_t k = 0; k < d; ++k) model.scale[k] += (row[k] - model.mean[k]) * (row[k] - model.mean[k]);
  }
  double var_sum = 0.0;
  for (auto& s : model.scale) {
    s = std::sqrt(s / static_cast<double>(n));
    var_sum += s > 0.0 ? 1.0 : 0.0;  // standardized variance is 1, or 0 for constant columns
    if (!(s > 0.0)) s = 1.0;
  }
  if (hp.gamma) {
    model.gamma = *hp.gamma;
  } else {
    const double mean_var = var_sum / static_cast<double>(d);
    model.gamma = mean_var > 0.0 ? 1.0 / (static_cast<double>(d) * mean_var) : 1.0 / static_cast<double>(d);
  }

  std::vector<std::vector<double>> z;
  z.reserve(n);
  for (const auto& row : x) z.push_back(model.standardize(row));
  std::vector<double> gram(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      gram[i * n + j] = gram[j * n + i] = kernel_value(hp.kernel, model.gamma, z[i], z[j]);
    }
  }

  const std::size_t max_iter = hp.max_passes * std::max<std::size_t>(n, 100);
  std::vector<int> yb(n);
  for (int c = 0; c < n_classes; ++c) {
    BinarySvm machine;
    if (!seen[static_cast<std::size_t>(c)]) {
      machine.bias = -1.0;
      model.machines.push_back(std::move(machine));
      continue;
    }
    for (std::size_t i = 0; i < n; ++i) yb[i] = y[i] == c ? 1 : -1;
    const auto sol = solve_smo(gram, yb, hp.c_reg, hp.tol, max_iter, hp.seed ? Rng::mix(hp.seed, static_cast<std::uint64_t>(c)) : 0);
    model.converged = model.converged && sol.converged;
    machine.bias = sol.bias;
    for (std::size_t i = 0; i < n; ++i) {
      if (sol.alpha[i] > 0.0) {
        machine.support.push_back(z[i]);
        machine.coef.push_back(sol.alpha[i] * yb[i]);
      }
    }
    model.machines.push_back(std::move(machine));
  }

  const auto preds = svm_predict_all(model, x);
  model.train_accuracy = accuracy(preds, y);
  return model;
}

std::vector<double> svm_predict_proba(const SvmModel& model, std::span<const double> x) {
  return softmax(model.decision_values(x));
}

int svm_predict(const SvmModel& model, std::span<const double> x) {
  const auto dv = model.decision_values(x);
  return static_cast<int>(argmax(dv));
}

std::vector<int> svm_predict_all(const SvmModel& model, const FeatureMatrix& x) {
  std::vector<int> out;
  out.reserve(x.size());
  for (const auto& row : x) out.push_back(svm_predict(model, row));
  return out;
}

void save_svm(const std::filesystem::path& path, const SvmModel& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw MissingData("cannot write " + path.string());
  io::Writer w(out);
  w.magic("DFDS");
  w.u32(kSvmVersion);
  w.u32(m.hp.kernel == KernelKind::linear ? 0 : 1);
  w.u32(m.hp.gamma ? 1 : 0);
  w.f64(m.hp.gamma.value_or(0.0));
  w.f64(m.hp.c_reg);
  w.f64(m.hp.tol);
  w.u64(m.hp.max_passes);
  w.u64(m.hp.seed);
  w.f64(m.gamma);
  w.u32(static_cast<std::uint32_t>(m.n_classes));
  w.u32(static_cast<std::uint32_t>(m.feature_ids.size()));
  for (auto id : m.feature_ids) w.u32(static_cast<std::uint32_t>(id));
  w.u32(static_cast<std::uint32_t>(m.width()));
  w.f64s(m.mean);
  w.f64s(m.scale);
  w.f64(m.train_accuracy);
  w.u32(m.converged ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(m.machines.size()));
  for (const auto& b : m.machines) {
    w.f64(b.bias);
    w.u32(static_cast<std::uint32_t>(b.support.size()));
    for (std::size_t i = 0; i < b.support.size(); ++i) {
      w.f64(b.coef[i]);
      w.f64s(b.support[i]);
    }
  }
}

SvmModel load_svm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingData("missing model " + path.string());
  io::Reader r(in, path.string());
  r.expect_magic("DFDS");
  if (r.u32() != kSvmVersion) throw FormatError(path.string() + ": unsupported version");
  SvmModel m;
  m.hp.kernel = r.u32() == 0 ? KernelKind::linear : KernelKind::rbf;
  const bool has_gamma = r.u32() != 0;
  const double g = r.f64();
  if (has_gamma) m.hp.gamma = g;
  m.hp.c_reg = r.f64();
  m.hp.tol = r.f64();
  m.hp.max_passes = r.u64();
  m.hp.seed = r.u64();
  m.gamma = r.f64();
  m.n_classes = static_cast<int>(r.u32());
  const auto n_ids = r.u32();
  for (std::uint32_t i = 0; i < n_ids; ++i) {
    const auto id = r.u32();
    if (id >= kNumFeatures) throw FormatError(path.string() + ": bad feature id");
    m.feature_ids.push_back(static_cast<FeatureId>(id));
  }
  const auto d = r.u32();
  m.mean = r.f64s(d);
  m.scale = r.f64s(d);
  m.train_accuracy = r.f64();
  m.converged = r.u32() != 0;
  const auto n_machines = r.u32();
  for (std::uint32_t c = 0; c < n_machines; ++c) {
    BinarySvm b;
    b.bias = r.f64();
    const auto n_sv = r.u32();
    for (std::uint32_t i = 0; i < n_sv; ++i) {
      b.coef.push_back(r.f64());
      b.support.push_back(r.f64s(d));
    }
    m.machines.push_back(std::move(b));
  }
  return m;
}

}  // namespace dfd
