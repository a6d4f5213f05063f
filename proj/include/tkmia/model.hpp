#pragma once

// Small differentiable multi-label scorers with exact input gradients and a
// binary cross-entropy trainer.

#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "tkmia/metrics.hpp"

namespace tkmia {

struct Instance {
  std::vector<double> x;
  Labels y;
};

using Dataset = std::vector<Instance>;

enum class Activation { identity, relu, tanh, sigmoid };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
  }
  return "?";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::identity;
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "sigmoid") return Activation::sigmoid;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// Dense layer: out = act(W in + b), W row-major (out x in).
struct Layer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weights;
  std::vector<double> bias;
  Activation activation = Activation::identity;
};

namespace detail {

inline double activate(Activation a, double z) {
  switch (a) {
    case Activation::identity: return z;
    case Activation::relu: return z > 0.0 ? z : 0.0;
    case Activation::tanh: return std::tanh(z);
    case Activation::sigmoid: return sigmoid(z);
  }
  return z;
}

// Derivative expressed through the pre-activation z and the output a.
inline double activate_grad(Activation a, double z, double out) {
  switch (a) {
    case Activation::identity: return 1.0;
    case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::tanh: return 1.0 - out * out;
    case Activation::sigmoid: return out * (1.0 - out);
  }
  return 1.0;
}

struct ForwardCache {
  std::vector<std::vector<double>> pre;   // z_l
  std::vector<std::vector<double>> post;  // a_l, post[0] = input
};

inline ForwardCache forward(std::span<const Layer> layers, std::span<const double> x) {
  ForwardCache cache;
  cache.post.emplace_back(x.begin(), x.end());
  for (const auto& layer : layers) {
    const auto& in = cache.post.back();
    std::vector<double> z(layer.out), a(layer.out);
    for (std::size_t r = 0; r < layer.out; ++r) {
      double acc = layer.bias[r];
      const double* w = layer.weights.data() + r * layer.in;
      for (std::size_t col = 0; col < layer.in; ++col) acc += w[col] * in[col];
      z[r] = acc;
      a[r] = activate(layer.activation, acc);
    }
    cache.pre.push_back(std::move(z));
    cache.post.push_back(std::move(a));
  }
  return cache;
}

// Reverse pass from d(out)/d(a_L) = cotangent. Returns d/dx; when
// `param_grads` is non-null, accumulates weight/bias gradients into it.
inline std::vector<double> backward(std::span<const Layer> layers, const ForwardCache& cache,
                                    std::vector<double> upstream,
                                    std::vector<Layer>* param_grads = nullptr) {
  for (std::size_t l = layers.size(); l-- > 0;) {
    const auto& layer = layers[l];
    const auto& z = cache.pre[l];
    const auto& a = cache.post[l + 1];
    const auto& in = cache.post[l];
    std::vector<double> delta(layer.out);
    for (std::size_t r = 0; r < layer.out; ++r)
      delta[r] = upstream[r] * activate_grad(layer.activation, z[r], a[r]);
    if (param_grads) {
      auto& g = (*param_grads)[l];
      for (std::size_t r = 0; r < layer.out; ++r) {
        g.bias[r] += delta[r];
        double* gw = g.weights.data() + r * layer.in;
        for (std::size_t col = 0; col < layer.in; ++col) gw[col] += delta[r] * in[col];
      }
    }
    std::vector<double> down(layer.in, 0.0);
    for (std::size_t r = 0; r < layer.out; ++r) {
      const double* w = layer.weights.data() + r * layer.in;
      for (std::size_t col = 0; col < layer.in; ++col) down[col] += w[col] * delta[r];
    }
    upstream = std::move(down);
  }
  return upstream;
}

inline Layer zero_like(const Layer& l) {
  return {l.in, l.out, std::vector<double>(l.weights.size(), 0.0),
          std::vector<double>(l.bias.size(), 0.0), l.activation};
}

}  // namespace detail

/// Multi-label scorer F(x) -> (0,1)^c. Immutable once built.
class Scorer {
 public:
  Scorer(std::string architecture, std::vector<Layer> layers)
      : architecture_(std::move(architecture)), layers_(std::move(layers)) {
    if (architecture_ != "affine" && architecture_ != "mlp")
      throw std::invalid_argument("unknown architecture '" + architecture_ + "'");
    if (layers_.empty()) throw std::invalid_argument("scorer needs at least one layer");
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& layer = layers_[l];
      if (layer.in == 0 || layer.out == 0 || layer.weights.size() != layer.in * layer.out ||
          layer.bias.size() != layer.out)
        throw std::invalid_argument("layer " + std::to_string(l) + " has inconsistent shape");
      if (l > 0 && layer.in != layers_[l - 1].out)
        throw std::invalid_argument("layer " + std::to_string(l) + " input does not chain");
      for (double w : layer.weights)
        if (!std::isfinite(w)) throw std::invalid_argument("non-finite weight");
      for (double b : layer.bias)
        if (!std::isfinite(b)) throw std::invalid_argument("non-finite bias");
    }
  }

  /// Affine scorer sigmoid(W x + b) with seeded uniform(-1/sqrt(d), 1/sqrt(d)) init.
  static Scorer affine(std::size_t input_dim, std::size_t classes, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return Scorer("affine", {random_layer(input_dim, classes, Activation::sigmoid, rng)});
  }

  static Scorer mlp(std::size_t input_dim, std::size_t hidden, std::size_t classes,
                    std::uint64_t seed, Activation hidden_activation = Activation::tanh) {
    std::mt19937_64 rng(seed);
    auto first = random_layer(input_dim, hidden, hidden_activation, rng);
    auto second = random_layer(hidden, classes, Activation::sigmoid, rng);
    return Scorer("mlp", {std::move(first), std::move(second)});
  }

  const std::string& architecture() const { return architecture_; }
  std::span<const Layer> layers() const { return layers_; }
  std::size_t input_dim() const { return layers_.front().in; }
  std::size_t output_dim() const { return layers_.back().out; }

  /// Copy with the terminal sigmoid replaced by the identity. Only meant for
  /// tests that need an objective which is linear in the input.
  Scorer without_output_sigmoid() const {
    auto layers = layers_;
    layers.back().activation = Activation::identity;
    return Scorer(architecture_, std::move(layers));
  }

  std::vector<double> score(std::span<const double> x) const {
    check_input(x);
    return std::move(detail::forward(layers_, x).post.back());
  }

  /// Vector-Jacobian product: d(cotangent . F(x)) / dx.
  std::vector<double> input_gradient(std::span<const double> x,
                                     std::span<const double> cotangent) const {
    check_input(x);
    if (cotangent.size() != output_dim())
      throw std::invalid_argument("cotangent length does not match class count");
    detail::check_finite(cotangent, "input_gradient");
    auto cache = detail::forward(layers_, x);
    return detail::backward(layers_, cache, {cotangent.begin(), cotangent.end()});
  }

  bool operator==(const Scorer& other) const {
    if (architecture_ != other.architecture_ || layers_.size() != other.layers_.size())
      return false;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto &a = layers_[l], &b = other.layers_[l];
      if (a.in != b.in || a.out != b.out || a.activation != b.activation ||
          a.weights != b.weights || a.bias != b.bias)
        return false;
    }
    return true;
  }

 private:
  static Layer random_layer(std::size_t in, std::size_t out, Activation act,
                            std::mt19937_64& rng) {
    const double s = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-s, s);
    Layer layer{in, out, std::vector<double>(in * out), std::vector<double>(out), act};
    for (auto& w : layer.weights) w = u(rng);
    for (auto& b : layer.bias) b = u(rng);
    return layer;
  }

  void check_input(std::span<const double> x) const {
    if (x.size() != input_dim())
      throw std::invalid_argument("input has dimension " + std::to_string(x.size()) +
                                  ", scorer expects " + std::to_string(input_dim()));
    detail::check_finite(x, "score");
  }

  std::string architecture_;
  std::vector<Layer> layers_;
};

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  std::string architecture = "affine";
  std::size_t hidden = 32;
  Activation hidden_activation = Activation::tanh;
  int epochs = 100;
  double learning_rate = 0.5;
  double momentum = 0.9;
  std::size_t batch_size = 32;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
};

inline Scorer init_scorer(const TrainConfig& cfg, std::size_t input_dim, std::size_t classes) {
  if (cfg.architecture == "affine") return Scorer::affine(input_dim, classes, cfg.seed);
  if (cfg.architecture == "mlp")
    return Scorer::mlp(input_dim, cfg.hidden, classes, cfg.seed, cfg.hidden_activation);
  throw std::invalid_argument("unknown architecture '" + cfg.architecture + "'");
}

/// Mean binary cross-entropy over instances and classes.
inline double bce_loss(const Scorer& model, std::span<const Instance> data) {
  double total = 0.0;
  for (const auto& inst : data) {
    auto cache = detail::forward(model.layers(), inst.x);
    const auto& z = cache.pre.back();
    for (std::size_t j = 0; j < z.size(); ++j) {
      // log(1 + e^z) - y z, computed without overflow.
      const double softplus = z[j] > 0 ? z[j] + std::log1p(std::exp(-z[j])) : std::log1p(std::exp(z[j]));
      total += softplus - (inst.y[j] != 0 ? z[j] : 0.0);
    }
  }
  return total / static_cast<double>(data.size() * model.output_dim());
}

/// Mini-batch SGD with momentum on mean BCE. `on_epoch` receives the full
/// dataset loss after every epoch.
inline Scorer train_bce(std::span<const Instance> data, const TrainConfig& cfg,
                        const std::function<void(int, double)>& on_epoch = {}) {
  if (data.empty()) throw std::invalid_argument("train_bce: empty dataset");
  if (cfg.epochs < 0 || cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) ||
      !(cfg.momentum >= 0.0 && cfg.momentum < 1.0))
    throw std::invalid_argument("train_bce: invalid config");
  const std::size_t d = data.front().x.size(), c = data.front().y.size();
  for (const auto& inst : data)
    if (inst.x.size() != d || inst.y.size() != c)
      throw std::invalid_argument("train_bce: inconsistent instance dimensions");

  Scorer init = init_scorer(cfg, d, c);
  if (init.layers().back().activation != Activation::sigmoid)
    throw std::invalid_argument("train_bce: scorer must end in a sigmoid");
  std::vector<Layer> params(init.layers().begin(), init.layers().end());
  std::vector<Layer> velocity;
  for (const auto& l : params) velocity.push_back(detail::zero_like(l));

  std::mt19937_64 rng(cfg.seed ^ 0x5eed5eedULL);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      std::vector<Layer> grads;
      for (const auto& l : params) grads.push_back(detail::zero_like(l));
      const double scale = 1.0 / static_cast<double>((stop - start) * c);
      for (std::size_t b = start; b < stop; ++b) {
        const auto& inst = data[order[b]];
        auto cache = detail::forward(params, inst.x);
        const auto& out = cache.post.back();
        // With a sigmoid output, dBCE/dz = sigma - y; feed it in as a
        // cotangent on the output and undo the sigmoid derivative.
        std::vector<double> dz(c);
        for (std::size_t j = 0; j < c; ++j) dz[j] = (out[j] - (inst.y[j] != 0 ? 1.0 : 0.0)) * scale;
        auto last = params.size() - 1;
        auto& gl = grads[last];
        const auto& layer = params[last];
        const auto& in = cache.post[last];
        std::vector<double> down(layer.in, 0.0);
        for (std::size_t r = 0; r < layer.out; ++r) {
          gl.bias[r] += dz[r];
          const double* w = layer.weights.data() + r * layer.in;
          double* gw = gl.weights.data() + r * layer.in;
          for (std::size_t col = 0; col < layer.in; ++col) {
            gw[col] += dz[r] * in[col];
            down[col] += w[col] * dz[r];
          }
        }
        if (last > 0) {
          detail::backward(std::span<const Layer>(params).first(last), cache, std::move(down),
                           &grads);
        }
      }
      for (std::size_t l = 0; l < params.size(); ++l) {
        auto step = [&](std::vector<double>& p, std::vector<double>& v,
                        const std::vector<double>& g, bool decay) {
          for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = g[i] + (decay ? cfg.weight_decay * p[i] : 0.0);
            v[i] = cfg.momentum * v[i] + gi;
            p[i] -= cfg.learning_rate * v[i];
          }
        };
        step(params[l].weights, velocity[l].weights, grads[l].weights, true);
        step(params[l].bias, velocity[l].bias, grads[l].bias, false);
      }
    }
    if (on_epoch) on_epoch(epoch, bce_loss(Scorer(cfg.architecture, params), data));
  }
  return Scorer(cfg.architecture, std::move(params));
}

// ---------------------------------------------------------------------------
// Gradient check

struct GradCheck {
  bool pass = false;
  double max_rel_error = 0.0;
};

/// Input-gradient routine under test: (x, cotangent) -> d(cot . F)/dx.
using InputGradientFn =
    std::function<std::vector<double>(std::span<const double>, std::span<const double>)>;

/// Compares the full input Jacobian from `gradient` (defaults to the
/// scorer's own) with central differences of step 1e-5. Relative error is
/// |a - n| / max(|a|, |n|, 1e-6) per Jacobian entry.
inline GradCheck finite_diff_check(const Scorer& model, std::span<const double> x,
                                   double tolerance, const InputGradientFn& gradient = {}) {
  constexpr double h = 1e-5;
  const std::size_t d = model.input_dim(), c = model.output_dim();
  std::vector<std::vector<double>> numeric(d);
  std::vector<double> probe(x.begin(), x.end());
  for (std::size_t j = 0; j < d; ++j) {
    const double keep = probe[j];
    probe[j] = keep + h;
    auto up = model.score(probe);
    probe[j] = keep - h;
    auto down = model.score(probe);
    probe[j] = keep;
    numeric[j].resize(c);
    for (std::size_t i = 0; i < c; ++i) numeric[j][i] = (up[i] - down[i]) / (2 * h);
  }
  GradCheck result;
  std::vector<double> cot(c, 0.0);
  for (std::size_t i = 0; i < c; ++i) {
    cot.assign(c, 0.0);
    cot[i] = 1.0;
    auto row = gradient ? gradient(x, cot) : model.input_gradient(x, cot);
    if (row.size() != d) return {false, INFINITY};
    for (std::size_t j = 0; j < d; ++j) {
      const double a = row[j], n = numeric[j][i];
      const double err = std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6});
      result.max_rel_error = std::max(result.max_rel_error, err);
    }
  }
  result.pass = result.max_rel_error <= tolerance;
  return result;
}

// ---------------------------------------------------------------------------
// Serialization: line 1 is a header, then one line per layer.

inline constexpr const char* kScorerFormat = "tkmia-scorer/1";

inline void write_scorer(std::ostream& os, const Scorer& model) {
  nlohmann::json header = {{"format", kScorerFormat},
                           {"architecture", model.architecture()},
                           {"input_dim", model.input_dim()},
                           {"output_dim", model.output_dim()},
                           {"layers", model.layers().size()}};
  os << header.dump() << '\n';
  for (const auto& l : model.layers()) {
    nlohmann::json line = {{"in", l.in},
                           {"out", l.out},
                           {"activation", to_string(l.activation)},
                           {"weights", l.weights},
                           {"bias", l.bias}};
    os << line.dump() << '\n';
  }
}

inline Scorer read_scorer(std::istream& is) {
  std::string text;
  if (!std::getline(is, text)) throw std::runtime_error("scorer file is empty");
  auto header = nlohmann::json::parse(text);
  if (header.value("format", "") != kScorerFormat)
    throw std::runtime_error("unsupported scorer format '" + header.value("format", "") + "'");
  const auto count = header.at("layers").get<std::size_t>();
  std::vector<Layer> layers;
  for (std::size_t l = 0; l < count; ++l) {
    if (!std::getline(is, text)) throw std::runtime_error("scorer file truncated");
    auto j = nlohmann::json::parse(text);
    layers.push_back({j.at("in").get<std::size_t>(), j.at("out").get<std::size_t>(),
                      j.at("weights").get<std::vector<double>>(),
                      j.at("bias").get<std::vector<double>>(),
                      activation_from_string(j.at("activation").get<std::string>())});
  }
  return Scorer(header.at("architecture").get<std::string>(), std::move(layers));
}

}  // namespace tkmia
