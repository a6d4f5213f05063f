#pragma once

// Top-k measure-imperceptible attack: the relaxed objective over
// (epsilon, lambda1, lambda2), its iterative optimizer, the success test and
// the two ways of choosing the specified label set.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "tkmia/core.hpp"
#include "tkmia/metrics.hpp"
#include "tkmia/model.hpp"

namespace tkmia {

enum class StopMode {
  c1_only,  // every specified label ranked below position k
  strict,   // c1, and the top-k is filled by the remaining relevant labels
};

inline const char* to_string(StopMode m) { return m == StopMode::strict ? "strict" : "c1_only"; }

inline StopMode stop_mode_from_string(const std::string& s) {
  if (s == "c1_only") return StopMode::c1_only;
  if (s == "strict") return StopMode::strict;
  throw std::invalid_argument("unknown stop mode '" + s + "'");
}

struct AttackConfig {
  std::size_t k = 3;
  double alpha = 1e-4;
  double eta = 1e-3;
  double momentum = 0.9;
  int max_iter = 300;
  StopMode stop = StopMode::c1_only;
  /// Baselines succeed once this many specified labels are expelled;
  /// 0 means |S|.
  std::size_t delta_threshold = 0;
  double clip_lo = -1.0;
  double clip_hi = 1.0;
};

struct AttackOutcome {
  std::string method;
  std::size_t instance = 0;
  std::size_t k = 0;
  IndexSet specified;
  IndexSet residual;  // S': specified labels still inside the top-k
  bool success = false;
  int iterations_used = 0;
  std::vector<double> epsilon;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  /// c2 gap f_[k] - min_{Yp\S} f after the attack (0 when not applicable).
  double c2_gap = 0.0;
  std::vector<double> trace;
  std::vector<double> scores_before;
  std::vector<double> scores_after;

  Expulsion expulsion() const { return {specified.size(), residual.size()}; }
};

/// Objective value with gradients in epsilon and both lambdas.
struct ObjectiveValue {
  double value = 0.0;
  std::vector<double> grad_epsilon;
  double grad_lambda1 = 0.0;
  double grad_lambda2 = 0.0;
};

namespace detail {

inline void check_sets(std::size_t c, const IndexSet& relevant, const IndexSet& specified,
                       const char* who) {
  if (specified.empty()) throw std::invalid_argument(std::string(who) + ": empty specified set");
  for (auto s : specified) check_index(s, c, who);
  for (auto y : relevant) check_index(y, c, who);
  for (auto s : specified)
    if (std::find(relevant.begin(), relevant.end(), s) == relevant.end())
      throw std::invalid_argument(std::string(who) + ": specified label " + std::to_string(s) +
                                  " is not relevant");
}

inline std::vector<double> add(std::span<const double> a, std::span<const double> b) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

inline double squared_norm(std::span<const double> v) {
  double s = 0.0;
  for (double e : v) s += e * e;
  return s;
}

// Smallest-index argmax / argmin over a subset of classes.
inline std::size_t argmax_over(std::span<const double> f, const IndexSet& subset) {
  std::size_t best = subset.front();
  for (auto i : subset)
    if (f[i] > f[best] || (f[i] == f[best] && i < best)) best = i;
  return best;
}

inline std::size_t argmin_over(std::span<const double> f, const IndexSet& subset) {
  std::size_t best = subset.front();
  for (auto i : subset)
    if (f[i] < f[best] || (f[i] == f[best] && i < best)) best = i;
  return best;
}

}  // namespace detail

/// lambda1 + lambda2 + alpha/2 |eps|^2
///   + 1/(c-k) sum_i [max_S f - f_i - lambda1]_+
///   + 1/k     sum_j [f_j - min_{Yp\S} f - lambda2]_+
/// evaluated at x + eps. Max/min subgradients flow through the single
/// smallest-index argmax/argmin. No ranking is computed here.
inline ObjectiveValue tkmia_objective(const Scorer& model, std::span<const double> x,
                                      std::span<const double> epsilon, double lambda1,
                                      double lambda2, const IndexSet& specified,
                                      const IndexSet& relevant, const AttackConfig& cfg) {
  const std::size_t c = model.output_dim(), k = cfg.k;
  if (k < 1 || k >= c) throw std::out_of_range("tkmia_objective: k must lie in [1, c)");
  if (epsilon.size() != x.size()) throw std::invalid_argument("tkmia_objective: epsilon size");
  detail::check_sets(c, relevant, specified, "tkmia_objective");
  auto rest = remaining_relevant(relevant, specified);
  if (rest.empty()) throw std::invalid_argument("tkmia_objective: Yp \\ S is empty");

  const auto xe = detail::add(x, epsilon);
  const auto f = model.score(xe);
  const std::size_t top_s = detail::argmax_over(f, specified);
  const std::size_t low_y = detail::argmin_over(f, rest);
  const double w1 = 1.0 / static_cast<double>(c - k);
  const double w2 = 1.0 / static_cast<double>(k);

  ObjectiveValue out;
  out.value = lambda1 + lambda2 + 0.5 * cfg.alpha * detail::squared_norm(epsilon);
  out.grad_lambda1 = 1.0;
  out.grad_lambda2 = 1.0;
  std::vector<double> cot(c, 0.0);
  for (std::size_t i = 0; i < c; ++i) {
    const double a = f[top_s] - f[i] - lambda1;
    if (a > 0.0) {
      out.value += w1 * a;
      cot[top_s] += w1;
      cot[i] -= w1;
      out.grad_lambda1 -= w1;
    }
  }
  for (std::size_t j = 0; j < c; ++j) {
    const double b = f[j] - f[low_y] - lambda2;
    if (b > 0.0) {
      out.value += w2 * b;
      cot[j] += w2;
      cot[low_y] -= w2;
      out.grad_lambda2 -= w2;
    }
  }
  out.grad_epsilon = model.input_gradient(xe, cot);
  for (std::size_t d = 0; d < out.grad_epsilon.size(); ++d)
    out.grad_epsilon[d] += cfg.alpha * epsilon[d];
  return out;
}

/// Specified labels still ranked within the top-k.
inline IndexSet residual_set(std::span<const double> scores, const IndexSet& specified,
                             std::size_t k) {
  auto r = ranks(scores);
  IndexSet out;
  for (auto s : specified)
    if (r[s] <= k) out.push_back(s);
  return out;
}

/// c1_only: every s in S has rank > k. strict: additionally the top-k holds
/// only labels from Yp\S (or contains all of Yp\S when it has fewer than k
/// members). Ranks use the library's index tie-break.
inline bool success_check(std::span<const double> scores, const IndexSet& specified,
                          const IndexSet& relevant, std::size_t k, StopMode mode) {
  const std::size_t c = scores.size();
  if (k < 1 || k >= c) throw std::out_of_range("success_check: k must lie in [1, c)");
  detail::check_sets(c, relevant, specified, "success_check");
  auto r = ranks(scores);
  for (auto s : specified)
    if (r[s] <= k) return false;
  if (mode == StopMode::c1_only) return true;
  auto rest = remaining_relevant(relevant, specified);
  std::size_t inside = 0;
  for (auto y : rest) inside += (r[y] <= k);
  return inside == std::min(k, rest.size());
}

/// Keeps the instances with |Yp| >= k + s_size; returns their indices.
inline std::vector<std::size_t> filter_instances(std::span<const Instance> data, std::size_t k,
                                                 std::size_t s_size) {
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (relevant_indices(data[i].y).size() >= k + s_size) kept.push_back(i);
  return kept;
}

struct Selection {
  std::size_t instance = 0;
  IndexSet specified;
};

/// Global selection: S = Yp intersected with `categories`; instances with an
/// empty intersection are dropped.
inline std::vector<Selection> select_global(std::span<const Instance> data,
                                            const IndexSet& categories) {
  if (categories.empty()) throw std::invalid_argument("select_global: no categories");
  IndexSet cats = categories;
  std::sort(cats.begin(), cats.end());
  cats.erase(std::unique(cats.begin(), cats.end()), cats.end());
  std::vector<Selection> out;
  for (std::size_t i = 0; i < data.size(); ++i) {
    IndexSet s;
    for (auto j : cats)
      if (j < data[i].y.size() && data[i].y[j] != 0) s.push_back(j);
    if (!s.empty()) out.push_back({i, std::move(s)});
  }
  return out;
}

/// Random selection: m relevant labels drawn uniformly without replacement.
inline IndexSet select_random(const Instance& instance, std::size_t m, std::uint64_t seed) {
  auto relevant = relevant_indices(instance.y);
  if (m == 0 || m > relevant.size())
    throw std::invalid_argument("select_random: m=" + std::to_string(m) + " outside [1, |Yp|=" +
                                std::to_string(relevant.size()) + "]");
  std::mt19937_64 rng(seed);
  IndexSet out;
  std::sample(relevant.begin(), relevant.end(), std::back_inserter(out), m, rng);
  return out;
}

/// Loss evaluated by the shared engine: (x + eps already projected) -> value
/// and gradients.
using LossFn = std::function<ObjectiveValue(std::span<const double> x,
                                            std::span<const double> epsilon, double lambda1,
                                            double lambda2)>;
using SuccessFn = std::function<bool(std::span<const double> scores)>;

namespace detail {

inline void validate_attack(const Scorer& model, const Instance& inst, const IndexSet& specified,
                            const AttackConfig& cfg, const char* who) {
  const std::size_t c = model.output_dim();
  if (inst.x.size() != model.input_dim() || inst.y.size() != c)
    throw std::invalid_argument(std::string(who) + ": instance does not match the scorer");
  if (cfg.k < 1 || cfg.k >= c) throw std::out_of_range(std::string(who) + ": k must lie in [1, c)");
  auto relevant = relevant_indices(inst.y);
  check_sets(c, relevant, specified, who);
  if (relevant.size() < cfg.k + specified.size())
    throw std::invalid_argument(std::string(who) + ": instance fails |Yp| >= k + |S|");
  if (cfg.delta_threshold > specified.size())
    throw std::invalid_argument(std::string(who) + ": delta threshold exceeds |S|");
  if (cfg.max_iter < 0 || !(cfg.eta > 0.0) || !(cfg.alpha >= 0.0) ||
      !(cfg.momentum >= 0.0 && cfg.momentum < 1.0) || !(cfg.clip_lo < cfg.clip_hi))
    throw std::invalid_argument(std::string(who) + ": invalid attack config");
}

inline bool all_finite(const ObjectiveValue& v) {
  if (!std::isfinite(v.value) || !std::isfinite(v.grad_lambda1) || !std::isfinite(v.grad_lambda2))
    return false;
  for (double g : v.grad_epsilon)
    if (!std::isfinite(g)) return false;
  return true;
}

/// Shared iterative loop: plain projected steps on the lambdas (when
/// `use_lambda`), heavy-ball momentum on epsilon, x + eps clipped to the
/// box after every step, stop as soon as `done` holds.
inline AttackOutcome run_engine(const Scorer& model, const Instance& inst,
                                const IndexSet& specified, const AttackConfig& cfg,
                                std::string method, const LossFn& loss, const SuccessFn& done,
                                bool use_lambda) {
  const std::size_t d = inst.x.size();
  AttackOutcome out;
  out.method = std::move(method);
  out.k = cfg.k;
  out.specified = specified;
  out.epsilon.assign(d, 0.0);
  out.scores_before = model.score(inst.x);

  std::vector<double> velocity(d, 0.0), xe(inst.x);
  auto scores = out.scores_before;
  bool success = done(scores);
  for (int it = 0; it < cfg.max_iter && !success; ++it) {
    auto obj = loss(inst.x, out.epsilon, out.lambda1, out.lambda2);
    if (!all_finite(obj)) throw NumericError("non-finite objective or gradient", it);
    out.trace.push_back(obj.value);
    if (use_lambda) {
      out.lambda1 = std::clamp(out.lambda1 - cfg.eta * obj.grad_lambda1, 0.0, 1.0);
      out.lambda2 = std::clamp(out.lambda2 - cfg.eta * obj.grad_lambda2, 0.0, 1.0);
    }
    for (std::size_t i = 0; i < d; ++i) {
      velocity[i] = cfg.momentum * velocity[i] + obj.grad_epsilon[i];
      const double moved = inst.x[i] + out.epsilon[i] - cfg.eta * velocity[i];
      xe[i] = std::clamp(moved, cfg.clip_lo, cfg.clip_hi);
      out.epsilon[i] = xe[i] - inst.x[i];
    }
    scores = model.score(xe);
    out.iterations_used = it + 1;
    success = done(scores);
  }
  out.success = success;
  out.scores_after = std::move(scores);
  out.residual = residual_set(out.scores_after, specified, cfg.k);
  auto rest = remaining_relevant(relevant_indices(inst.y), specified);
  if (!rest.empty()) {
    double low = INFINITY;
    for (auto y : rest) low = std::min(low, out.scores_after[y]);
    out.c2_gap = kth_largest(out.scores_after, cfg.k) - low;
  }
  return out;
}

}  // namespace detail

/// Runs the measure-imperceptible attack on one instance. epsilon and both
/// lambdas start at 0.
inline AttackOutcome tkmia_attack(const Scorer& model, const Instance& inst,
                                  const IndexSet& specified, const AttackConfig& cfg,
                                  std::size_t instance_id = 0) {
  detail::validate_attack(model, inst, specified, cfg, "tkmia_attack");
  const auto relevant = relevant_indices(inst.y);
  LossFn loss = [&](std::span<const double> x, std::span<const double> eps, double l1, double l2) {
    return tkmia_objective(model, x, eps, l1, l2, specified, relevant, cfg);
  };
  SuccessFn done = [&](std::span<const double> scores) {
    return success_check(scores, specified, relevant, cfg.k, cfg.stop);
  };
  auto out = detail::run_engine(model, inst, specified, cfg, "tkmia", loss, done, true);
  out.instance = instance_id;
  return out;
}

inline nlohmann::json to_json(const AttackOutcome& o) {
  return {{"method", o.method},
          {"instance", o.instance},
          {"k", o.k},
          {"specified", o.specified},
          {"residual", o.residual},
          {"success", o.success},
          {"iterations", o.iterations_used},
          {"epsilon", o.epsilon},
          {"epsilon_norm", l2_norm(o.epsilon)},
          {"lambda1", o.lambda1},
          {"lambda2", o.lambda2},
          {"c2_gap", o.c2_gap},
          {"trace", o.trace},
          {"scores_before", o.scores_before},
          {"scores_after", o.scores_after}};
}

inline AttackOutcome outcome_from_json(const nlohmann::json& j) {
  AttackOutcome o;
  o.method = j.at("method").get<std::string>();
  o.instance = j.at("instance").get<std::size_t>();
  o.k = j.at("k").get<std::size_t>();
  o.specified = j.at("specified").get<IndexSet>();
  o.residual = j.at("residual").get<IndexSet>();
  o.success = j.at("success").get<bool>();
  o.iterations_used = j.at("iterations").get<int>();
  o.epsilon = j.at("epsilon").get<std::vector<double>>();
  o.lambda1 = j.at("lambda1").get<double>();
  o.lambda2 = j.at("lambda2").get<double>();
  o.c2_gap = j.at("c2_gap").get<double>();
  o.trace = j.at("trace").get<std::vector<double>>();
  o.scores_before = j.at("scores_before").get<std::vector<double>>();
  o.scores_after = j.at("scores_after").get<std::vector<double>>();
  return o;
}

}  // namespace tkmia
