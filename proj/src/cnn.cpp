#include "dfd/cnn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "dfd/binary_io.hpp"
#include "dfd/error.hpp"
#include "dfd/random.hpp"

namespace dfd {

namespace {

constexpr std::uint32_t kCnnVersion = 1;

bool has_params(LayerKind k) { return k == LayerKind::conv || k == LayerKind::fully_connected; }

struct LayerParams {
  std::size_t weight_offset = 0, weight_size = 0;
  std::size_t bias_offset = 0, bias_size = 0;
  std::size_t fan_in = 0;
};

std::vector<LayerParams> layer_params(const CnnArch& arch, const std::vector<Shape3>& shapes) {
  std::vector<LayerParams> out(arch.layers.size());
  std::size_t offset = 0;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const auto& l = arch.layers[i];
    const Shape3 in = i == 0 ? arch.input : shapes[i - 1];
    auto& p = out[i];
    if (l.kind == LayerKind::conv) {
      p.fan_in = l.kh * l.kw * in.c;
      p.weight_size = p.fan_in * l.units;
    } else if (l.kind == LayerKind::fully_connected) {
      p.fan_in = in.size();
      p.weight_size = p.fan_in * l.units;
    } else {
      continue;
    }
    p.bias_size = l.units;
    p.weight_offset = offset;
    offset += p.weight_size;
    p.bias_offset = offset;
    offset += p.bias_size;
  }
  return out;
}

// Forward/backward for one sample at a time, in scalar type T.
template <typename T>
class Engine {
 public:
  Engine(const CnnArch& arch, std::span<const double> params)
      : arch_(arch),
        shapes_(arch.output_shapes()),
        lp_(layer_params(arch, shapes_)),
        params_(params.begin(), params.end()) {
    acts_.resize(arch.layers.size() + 1);
    acts_[0].resize(arch.input.size());
    for (std::size_t i = 0; i < shapes_.size(); ++i) acts_[i + 1].resize(shapes_[i].size());
    argmax_.resize(arch.layers.size());
    for (std::size_t i = 0; i < arch.layers.size(); ++i) {
      if (arch.layers[i].kind == LayerKind::max_pool) argmax_[i].resize(shapes_[i].size());
    }
    deltas_ = acts_;
  }

  std::size_t n_params() const { return params_.size(); }

  /// Runs every layer; returns the probability row.
  std::span<const T> forward(const SpectroTensor& x) {
    if (x.frames != arch_.input.h || x.bins != arch_.input.w || x.channels != arch_.input.c) {
      throw ShapeError("input " + Shape3{x.frames, x.bins, x.channels}.str() + " does not match network input " +
                       arch_.input.str());
    }
    std::copy(x.values.begin(), x.values.end(), acts_[0].begin());
    for (std::size_t i = 0; i < arch_.layers.size(); ++i) {
      const Shape3 in = i == 0 ? arch_.input : shapes_[i - 1];
      const auto& l = arch_.layers[i];
      auto& src = acts_[i];
      auto& dst = acts_[i + 1];
      switch (l.kind) {
        case LayerKind::conv: conv_forward(l, lp_[i], in, shapes_[i], src, dst); break;
        case LayerKind::relu:
          for (std::size_t k = 0; k < src.size(); ++k) dst[k] = src[k] > T(0) ? src[k] : T(0);
          break;
        case LayerKind::max_pool: pool_forward(l, in, shapes_[i], src, dst, argmax_[i]); break;
        case LayerKind::fully_connected: fc_forward(lp_[i], src, dst); break;
        case LayerKind::softmax: {
          const T top = *std::max_element(src.begin(), src.end());
          T sum = 0;
          for (std::size_t k = 0; k < src.size(); ++k) {
            dst[k] = std::exp(src[k] - top);
            sum += dst[k];
          }
          for (auto& v : dst) v /= sum;
          break;
        }
      }
    }
    return acts_.back();
  }

  std::span<const T> logits() const { return acts_[acts_.size() - 2]; }

  /// Back-propagates d(loss)/d(logits), accumulating parameter gradients into `grad`.
  void backward(std::span<const T> dlogits, std::vector<T>& grad) {
    const std::size_t last = arch_.layers.size() - 1;  // softmax
    std::copy(dlogits.begin(), dlogits.end(), deltas_[last].begin());
    for (std::size_t i = last; i-- > 0;) {
      const Shape3 in = i == 0 ? arch_.input : shapes_[i - 1];
      const auto& l = arch_.layers[i];
      auto& dout = deltas_[i + 1];
      auto& din = deltas_[i];
      const bool need_din = i > 0;
      switch (l.kind) {
        case LayerKind::conv: conv_backward(l, lp_[i], in, shapes_[i], acts_[i], dout, din, grad, need_din); break;
        case LayerKind::relu:
          for (std::size_t k = 0; k < din.size(); ++k) din[k] = acts_[i + 1][k] > T(0) ? dout[k] : T(0);
          break;
        case LayerKind::max_pool:
          std::fill(din.begin(), din.end(), T(0));
          for (std::size_t k = 0; k < dout.size(); ++k) din[argmax_[i][k]] += dout[k];
          break;
        case LayerKind::fully_connected: fc_backward(lp_[i], acts_[i], dout, din, grad, need_din); break;
        case LayerKind::softmax: throw ArchError("softmax must be the final layer");
      }
    }
  }

 private:
  void conv_forward(const LayerSpec& l, const LayerParams& p, Shape3 in, Shape3 out, const std::vector<T>& src,
                    std::vector<T>& dst) const {
    const T* w = params_.data() + p.weight_offset;
    const T* b = params_.data() + p.bias_offset;
    const std::size_t oc_n = out.c, ic_n = in.c;
    for (std::size_t oh = 0; oh < out.h; ++oh) {
      for (std::size_t ow = 0; ow < out.w; ++ow) {
        T* acc = dst.data() + (oh * out.w + ow) * oc_n;
        std::copy(b, b + oc_n, acc);
        for (std::size_t kh = 0; kh < l.kh; ++kh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * l.sh + kh) - static_cast<std::ptrdiff_t>(l.pad);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(in.h)) continue;
          for (std::size_t kw = 0; kw < l.kw; ++kw) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * l.sw + kw) - static_cast<std::ptrdiff_t>(l.pad);
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(in.w)) continue;
            const T* xin = src.data() + (static_cast<std::size_t>(ih) * in.w + static_cast<std::size_t>(iw)) * ic_n;
            const T* wk = w + (kh * l.kw + kw) * ic_n * oc_n;
            for (std::size_t ic = 0; ic < ic_n; ++ic) {
              const T v = xin[ic];
              const T* wr = wk + ic * oc_n;
              for (std::size_t oc = 0; oc < oc_n; ++oc) acc[oc] += v * wr[oc];
            }
          }
        }
      }
    }
  }

  void conv_backward(const LayerSpec& l, const LayerParams& p, Shape3 in, Shape3 out, const std::vector<T>& src,
                     const std::vector<T>& dout, std::vector<T>& din, std::vector<T>& grad, bool need_din) const {
    const T* w = params_.data() + p.weight_offset;
    T* gw = grad.data() + p.weight_offset;
    T* gb = grad.data() + p.bias_offset;
    const std::size_t oc_n = out.c, ic_n = in.c;
    if (need_din) std::fill(din.begin(), din.end(), T(0));
    for (std::size_t oh = 0; oh < out.h; ++oh) {
      for (std::size_t ow = 0; ow < out.w; ++ow) {
        const T* d = dout.data() + (oh * out.w + ow) * oc_n;
        for (std::size_t oc = 0; oc < oc_n; ++oc) gb[oc] += d[oc];
        for (std::size_t kh = 0; kh < l.kh; ++kh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * l.sh + kh) - static_cast<std::ptrdiff_t>(l.pad);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(in.h)) continue;
          for (std::size_t kw = 0; kw < l.kw; ++kw) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * l.sw + kw) - static_cast<std::ptrdiff_t>(l.pad);
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(in.w)) continue;
            const std::size_t pos = (static_cast<std::size_t>(ih) * in.w + static_cast<std::size_t>(iw)) * ic_n;
            const T* xin = src.data() + pos;
            const std::size_t wbase = (kh * l.kw + kw) * ic_n * oc_n;
            for (std::size_t ic = 0; ic < ic_n; ++ic) {
              const T v = xin[ic];
              T* gr = gw + wbase + ic * oc_n;
              for (std::size_t oc = 0; oc < oc_n; ++oc) gr[oc] += v * d[oc];
            }
            if (need_din) {
              T* dx = din.data() + pos;
              for (std::size_t ic = 0; ic < ic_n; ++ic) {
                const T* wr = w + wbase + ic * oc_n;
                T s = 0;
                for (std::size_t oc = 0; oc < oc_n; ++oc) s += wr[oc] * d[oc];
                dx[ic] += s;
              }
            }
          }
        }
      }
    }
  }

  static void pool_forward(const LayerSpec& l, Shape3 in, Shape3 out, const std::vector<T>& src, std::vector<T>& dst,
                           std::vector<std::size_t>& arg) {
    for (std::size_t oh = 0; oh < out.h; ++oh) {
      const std::size_t h0 = oh * l.sh, h1 = std::min(h0 + l.kh, in.h);
      for (std::size_t ow = 0; ow < out.w; ++ow) {
        const std::size_t w0 = ow * l.sw, w1 = std::min(w0 + l.kw, in.w);
        for (std::size_t c = 0; c < out.c; ++c) {
          std::size_t best = (h0 * in.w + w0) * in.c + c;
          for (std::size_t h = h0; h < h1; ++h) {
            for (std::size_t w = w0; w < w1; ++w) {
              const std::size_t k = (h * in.w + w) * in.c + c;
              if (src[k] > src[best]) best = k;
            }
          }
          const std::size_t o = (oh * out.w + ow) * out.c + c;
          dst[o] = src[best];
          arg[o] = best;
        }
      }
    }
  }

  void fc_forward(const LayerParams& p, const std::vector<T>& src, std::vector<T>& dst) const {
    const T* w = params_.data() + p.weight_offset;
    const T* b = params_.data() + p.bias_offset;
    const std::size_t n_in = src.size();
    for (std::size_t o = 0; o < dst.size(); ++o) {
      const T* wr = w + o * n_in;
      T s = 0;
      for (std::size_t i = 0; i < n_in; ++i) s += wr[i] * src[i];
      dst[o] = s + b[o];
    }
  }

  void fc_backward(const LayerParams& p, const std::vector<T>& src, const std::vector<T>& dout, std::vector<T>& din,
                   std::vector<T>& grad, bool need_din) const {
    const T* w = params_.data() + p.weight_offset;
    T* gw = grad.data() + p.weight_offset;
    T* gb = grad.data() + p.bias_offset;
    const std::size_t n_in = src.size();
    if (need_din) std::fill(din.begin(), din.end(), T(0));
    for (std::size_t o = 0; o < dout.size(); ++o) {
      const T d = dout[o];
      gb[o] += d;
      T* gr = gw + o * n_in;
      for (std::size_t i = 0; i < n_in; ++i) gr[i] += d * src[i];
      if (need_din) {
        const T* wr = w + o * n_in;
        for (std::size_t i = 0; i < n_in; ++i) din[i] += wr[i] * d;
      }
    }
  }

  const CnnArch& arch_;
  std::vector<Shape3> shapes_;
  std::vector<LayerParams> lp_;
  std::vector<T> params_;
  std::vector<std::vector<T>> acts_;
  std::vector<std::vector<T>> deltas_;
  std::vector<std::vector<std::size_t>> argmax_;
};

template <typename T>
std::vector<std::vector<double>> forward_impl(const CnnModel& model, std::span<const SpectroTensor> batch) {
  Engine<T> eng(model.arch, model.params);
  std::vector<std::vector<double>> out;
  out.reserve(batch.size());
  for (const auto& x : batch) {
    const auto p = eng.forward(x);
    out.emplace_back(p.begin(), p.end());
  }
  return out;
}

template <typename T>
LossGrad loss_grad_impl(const CnnModel& model, std::span<const SpectroTensor* const> batch,
                        std::span<const int> labels) {
  Engine<T> eng(model.arch, model.params);
  std::vector<T> grad(eng.n_params(), T(0));
  const auto n_classes = static_cast<std::size_t>(model.arch.n_classes);
  const T inv_b = T(1) / static_cast<T>(batch.size());
  std::vector<T> dlogits(n_classes);
  LossGrad r;
  double loss = 0.0;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    const auto label = static_cast<std::size_t>(labels[s]);
    const auto probs = eng.forward(*batch[s]);
    const auto z = eng.logits();
    // -log softmax(z)[label] via log-sum-exp, so a saturated softmax cannot produce log(0).
    const T top = *std::max_element(z.begin(), z.end());
    T sum = 0;
    for (auto v : z) sum += std::exp(v - top);
    loss += static_cast<double>(top + std::log(sum) - z[label]);
    std::size_t best = 0;
    for (std::size_t c = 1; c < n_classes; ++c) {
      if (probs[c] > probs[best]) best = c;
    }
    if (best == label) ++r.correct;
    for (std::size_t c = 0; c < n_classes; ++c) dlogits[c] = (probs[c] - (c == label ? T(1) : T(0))) * inv_b;
    eng.backward(dlogits, grad);
  }
  r.loss = loss / static_cast<double>(batch.size());
  r.grads.assign(grad.begin(), grad.end());
  return r;
}

void check_labels(const CnnModel& model, std::size_t n, std::span<const int> labels) {
  if (labels.size() != n) throw ShapeError("one label per tensor expected");
  if (n == 0) throw EmptyDataset("empty batch");
  for (int y : labels) {
    if (y < 0 || y >= model.arch.n_classes) throw ShapeError("label " + std::to_string(y) + " out of range");
  }
}

}  // namespace

std::string Shape3::str() const {
  return std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(c);
}

LayerSpec LayerSpec::conv(std::size_t filters, std::size_t k, std::size_t pad, std::size_t stride) {
  return {LayerKind::conv, filters, k, k, pad, stride, stride};
}
LayerSpec LayerSpec::relu() { return {LayerKind::relu}; }
LayerSpec LayerSpec::max_pool(std::size_t kh, std::size_t kw, std::size_t sh, std::size_t sw) {
  return {LayerKind::max_pool, 0, kh, kw, 0, sh, sw};
}
LayerSpec LayerSpec::fully_connected(std::size_t units) { return {LayerKind::fully_connected, units}; }
LayerSpec LayerSpec::softmax() { return {LayerKind::softmax}; }

CnnArch CnnArch::standard(Shape3 input, int n_classes, std::size_t filters, std::size_t fc_units,
                          std::size_t pool_h, std::size_t pool_w) {
  CnnArch a;
  a.input = input;
  a.n_classes = n_classes;
  a.layers = {
      LayerSpec::conv(filters, 3),
      LayerSpec::relu(),
      LayerSpec::max_pool(pool_h, pool_w, pool_h, pool_w),
      LayerSpec::conv(filters, 3),
      LayerSpec::relu(),
      LayerSpec::max_pool(pool_h, pool_w, pool_h, pool_w),
      LayerSpec::fully_connected(fc_units),
      LayerSpec::relu(),
      LayerSpec::fully_connected(static_cast<std::size_t>(n_classes)),
      LayerSpec::softmax(),
  };
  return a;
}

std::size_t pooled_extent(std::size_t in, std::size_t k, std::size_t s) {
  if (in <= k) return 1;
  return (in - k + s - 1) / s + 1;
}

std::vector<Shape3> CnnArch::output_shapes() const {
  if (input.size() == 0) throw ArchError("input shape " + input.str() + " is empty");
  if (n_classes < 2) throw ArchError("need at least 2 classes");
  if (layers.empty() || layers.back().kind != LayerKind::softmax) throw ArchError("last layer must be softmax");
  if (layers.size() < 2 || layers[layers.size() - 2].kind != LayerKind::fully_connected ||
      layers[layers.size() - 2].units != static_cast<std::size_t>(n_classes)) {
    throw ArchError("softmax must follow a fully-connected layer with one unit per class");
  }
  std::vector<Shape3> out;
  Shape3 s = input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    switch (l.kind) {
      case LayerKind::conv: {
        if (l.units == 0 || l.kh == 0 || l.kw == 0 || l.sh == 0 || l.sw == 0) throw ArchError("bad conv layer");
        if (s.h + 2 * l.pad < l.kh || s.w + 2 * l.pad < l.kw) {
          throw ArchError("conv kernel larger than padded input " + s.str());
        }
        s = {(s.h + 2 * l.pad - l.kh) / l.sh + 1, (s.w + 2 * l.pad - l.kw) / l.sw + 1, l.units};
        break;
      }
      case LayerKind::relu: break;
      case LayerKind::max_pool:
        if (l.kh == 0 || l.kw == 0 || l.sh == 0 || l.sw == 0) throw ArchError("bad pool layer");
        s = {pooled_extent(s.h, l.kh, l.sh), pooled_extent(s.w, l.kw, l.sw), s.c};
        break;
      case LayerKind::fully_connected:
        if (l.units == 0) throw ArchError("fully-connected layer with no units");
        s = {1, 1, l.units};
        break;
      case LayerKind::softmax:
        if (i + 1 != layers.size()) throw ArchError("softmax must be the final layer");
        break;
    }
    out.push_back(s);
  }
  return out;
}

void CnnArch::validate() const { (void)output_shapes(); }

std::string CnnArch::describe() const {
  const auto shapes = output_shapes();
  std::ostringstream os;
  os << "input " << input.str() << '\n';
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    switch (l.kind) {
      case LayerKind::conv: os << "conv " << l.units << ' ' << l.kh << 'x' << l.kw << " pad " << l.pad; break;
      case LayerKind::relu: os << "relu"; break;
      case LayerKind::max_pool: os << "maxpool " << l.kh << 'x' << l.kw << " stride (" << l.sh << ',' << l.sw << ')'; break;
      case LayerKind::fully_connected: os << "fc " << l.units; break;
      case LayerKind::softmax: os << "softmax"; break;
    }
    os << " -> " << shapes[i].str() << '\n';
  }
  return os.str();
}

std::size_t count_params(const CnnArch& arch, bool include_biases) {
  const auto shapes = arch.output_shapes();
  std::size_t n = 0;
  for (const auto& p : layer_params(arch, shapes)) n += p.weight_size + (include_biases ? p.bias_size : 0);
  return n;
}

std::size_t conv_flops(const CnnArch& arch) {
  const auto shapes = arch.output_shapes();
  std::size_t flops = 0;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const auto& l = arch.layers[i];
    if (l.kind != LayerKind::conv) continue;
    const Shape3 in = i == 0 ? arch.input : shapes[i - 1];
    flops += shapes[i].size() * l.kh * l.kw * in.c;
  }
  return flops;
}

std::vector<ParamBlock> param_blocks(const CnnArch& arch) {
  const auto shapes = arch.output_shapes();
  const auto lp = layer_params(arch, shapes);
  std::vector<ParamBlock> out;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    if (!has_params(arch.layers[i].kind)) continue;
    out.push_back({i, lp[i].weight_offset, lp[i].weight_size, false});
    out.push_back({i, lp[i].bias_offset, lp[i].bias_size, true});
  }
  return out;
}

CnnModel init_network(const CnnArch& arch, std::uint64_t seed, Precision precision) {
  const auto shapes = arch.output_shapes();
  const auto lp = layer_params(arch, shapes);
  CnnModel m;
  m.arch = arch;
  m.precision = precision;
  m.seed = seed;
  m.params.assign(count_params(arch, true), 0.0);
  Rng rng(seed);
  for (const auto& p : lp) {
    if (p.weight_size == 0) continue;
    // 1/sqrt(fan_in): with two max-pool stages the wider sqrt(6/fan_in) bound
    // starts at a loss of 5-19 nats and sometimes diverges.
    const double bound = 1.0 / std::sqrt(static_cast<double>(p.fan_in));
    for (std::size_t k = 0; k < p.weight_size; ++k) {
      double v = rng.uniform(-bound, bound);
      if (precision == Precision::f32) v = static_cast<float>(v);
      m.params[p.weight_offset + k] = v;
    }
  }
  return m;
}

std::vector<std::vector<double>> forward(const CnnModel& model, std::span<const SpectroTensor> batch) {
  return model.precision == Precision::f64 ? forward_impl<double>(model, batch) : forward_impl<float>(model, batch);
}

std::vector<int> predict(const CnnModel& model, std::span<const SpectroTensor> batch) {
  std::vector<int> out;
  out.reserve(batch.size());
  for (const auto& row : forward(model, batch)) {
    out.push_back(static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()));
  }
  return out;
}

LossGrad loss_and_grad(const CnnModel& model, std::span<const SpectroTensor* const> batch,
                       std::span<const int> labels) {
  check_labels(model, batch.size(), labels);
  return model.precision == Precision::f64 ? loss_grad_impl<double>(model, batch, labels)
                                           : loss_grad_impl<float>(model, batch, labels);
}

LossGrad loss_and_grad(const CnnModel& model, std::span<const SpectroTensor> batch, std::span<const int> labels) {
  std::vector<const SpectroTensor*> ptrs;
  ptrs.reserve(batch.size());
  for (const auto& t : batch) ptrs.push_back(&t);
  return loss_and_grad(model, std::span<const SpectroTensor* const>(ptrs), labels);
}

void sgd_momentum_step(std::span<double> params, std::span<const double> grads, OptimizerState& state, double lr,
                       double momentum, double decay, std::span<const ParamBlock> blocks) {
  if (grads.size() != params.size()) throw ShapeError("gradient and parameter sizes differ");
  if (state.velocity.empty()) state.velocity.assign(params.size(), 0.0);
  if (state.velocity.size() != params.size()) throw ShapeError("optimizer state does not match parameters");
  auto update = [&](std::size_t begin, std::size_t end, double wd) {
    for (std::size_t k = begin; k < end; ++k) {
      const double g = grads[k] + wd * params[k];
      state.velocity[k] = momentum * state.velocity[k] + g;
      params[k] -= lr * state.velocity[k];
    }
  };
  if (blocks.empty()) {
    update(0, params.size(), decay);
  } else {
    for (const auto& b : blocks) {
      if (b.offset + b.size > params.size()) throw ShapeError("parameter block out of range");
      update(b.offset, b.offset + b.size, b.is_bias ? 0.0 : decay);
    }
  }
  ++state.iteration;
}

void save_cnn(const std::filesystem::path& path, const CnnModel& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw MissingData("cannot write " + path.string());
  io::Writer w(out);
  w.magic("DFDN");
  w.u32(kCnnVersion);
  w.u32(m.precision == Precision::f64 ? 1 : 0);
  w.u64(m.seed);
  w.u32(static_cast<std::uint32_t>(m.arch.input.h));
  w.u32(static_cast<std::uint32_t>(m.arch.input.w));
  w.u32(static_cast<std::uint32_t>(m.arch.input.c));
  w.u32(static_cast<std::uint32_t>(m.arch.n_classes));
  w.u32(static_cast<std::uint32_t>(m.arch.layers.size()));
  for (const auto& l : m.arch.layers) {
    w.u32(static_cast<std::uint32_t>(l.kind));
    for (auto v : {l.units, l.kh, l.kw, l.pad, l.sh, l.sw}) w.u32(static_cast<std::uint32_t>(v));
  }
  w.u64(m.params.size());
  for (double p : m.params) w.f32(static_cast<float>(p));
}

CnnModel load_cnn(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingData("missing checkpoint " + path.string());
  io::Reader r(in, path.string());
  r.expect_magic("DFDN");
  if (r.u32() != kCnnVersion) throw FormatError(path.string() + ": unsupported version");
  CnnModel m;
  m.precision = r.u32() == 1 ? Precision::f64 : Precision::f32;
  m.seed = r.u64();
  m.arch.input.h = r.u32();
  m.arch.input.w = r.u32();
  m.arch.input.c = r.u32();
  m.arch.n_classes = static_cast<int>(r.u32());
  const auto n_layers = r.u32();
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    LayerSpec l;
    const auto kind = r.u32();
    if (kind > static_cast<std::uint32_t>(LayerKind::softmax)) throw FormatError(path.string() + ": bad layer kind");
    l.kind = static_cast<LayerKind>(kind);
    l.units = r.u32();
    l.kh = r.u32();
    l.kw = r.u32();
    l.pad = r.u32();
    l.sh = r.u32();
    l.sw = r.u32();
    m.arch.layers.push_back(l);
  }
  try {
    m.arch.validate();
  } catch (const ArchError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  const auto n = r.u64();
  if (n != count_params(m.arch, true)) throw FormatError(path.string() + ": parameter count mismatch");
  m.params.resize(n);
  for (auto& p : m.params) p = r.f32();
  return m;
}

}  // namespace dfd
