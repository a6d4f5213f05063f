#pragma once

// Quick property suites behind `tkmia check`: the variational top-k identity,
// the nested-hinge identity, objective gradients against central
// differences, and a few hand-computed metric values.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "tkmia/attack.hpp"
#include "tkmia/baselines.hpp"
#include "tkmia/core.hpp"
#include "tkmia/metrics.hpp"
#include "tkmia/model.hpp"

namespace tkmia {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

namespace detail {

inline std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

inline double grid_min_variational(std::span<const double> f, std::size_t k) {
  double best = INFINITY;
  for (int i = 0; i <= 1000; ++i) best = std::min(best, variational_top_k_sum(f, k, i * 1e-3));
  return best;
}

inline CheckResult check_variational(std::mt19937_64& rng, int trials) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> cdist(2, 20);
  double worst_floor = 0.0, worst_exact = 0.0;
  for (int t = 0; t < trials; ++t) {
    const auto c = static_cast<std::size_t>(cdist(rng));
    std::vector<double> f(c);
    for (auto& v : f) v = u(rng);
    const auto k = std::uniform_int_distribution<std::size_t>(1, c - 1)(rng);
    const double target = static_cast<double>(k) * avg_top_k(f, k);
    worst_floor = std::max(worst_floor, target - grid_min_variational(f, k));
    worst_exact =
        std::max(worst_exact, std::abs(variational_top_k_sum(f, k, kth_largest(f, k)) - target));
  }
  const bool ok = worst_floor <= 1e-6 && worst_exact <= 1e-9;
  return {"variational top-k sum", ok,
          "max grid undershoot " + sci(worst_floor) + ", max |value at f_[k] - sum| " +
              sci(worst_exact)};
}

inline CheckResult check_nested_hinge(std::mt19937_64& rng, int trials) {
  std::uniform_real_distribution<double> pos(1e-6, 5.0), any(-5.0, 5.0);
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    const double a = pos(rng), b = pos(rng), x = any(rng);
    worst = std::max(worst, std::abs(hinge(hinge(a - x) - b) - hinge(a - x - b)));
  }
  return {"nested hinge identity", worst <= 1e-12, "max deviation " + sci(worst)};
}

inline Scorer scaled(const Scorer& s, double factor) {
  std::vector<Layer> layers(s.layers().begin(), s.layers().end());
  for (auto& l : layers)
    for (auto& w : l.weights) w *= factor;
  return Scorer(s.architecture(), std::move(layers));
}

inline CheckResult check_objective_gradient(std::mt19937_64& rng, int points) {
  const std::size_t d = 8, c = 6;
  const Scorer victims[] = {scaled(Scorer::affine(d, c, rng()), 4.0),
                            scaled(Scorer::mlp(d, 10, c, rng()), 3.0)};
  std::uniform_real_distribution<double> ux(-0.8, 0.8), ul(0.01, 0.1);
  AttackConfig cfg;
  cfg.k = 2;
  cfg.alpha = 1e-3;
  const IndexSet relevant{0, 1, 2, 3}, specified{1};
  double worst = 0.0;
  int checked = 0;
  for (const auto& model : victims) {
    for (int p = 0; p < points; ++p) {
      std::vector<double> x(d), eps(d, 0.0);
      for (auto& v : x) v = ux(rng);
      for (auto& v : eps) v = 0.1 * ux(rng);
      const double l1 = ul(rng), l2 = ul(rng);
      auto obj = tkmia_objective(model, x, eps, l1, l2, specified, relevant, cfg);
      auto value = [&](std::vector<double> e, double a, double b) {
        return tkmia_objective(model, x, e, a, b, specified, relevant, cfg).value;
      };
      constexpr double h = 1e-6;
      double num = 0.0, den = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        auto up = eps, dn = eps;
        up[i] += h;
        dn[i] -= h;
        const double g = (value(up, l1, l2) - value(dn, l1, l2)) / (2 * h);
        num += (g - obj.grad_epsilon[i]) * (g - obj.grad_epsilon[i]);
        den = std::max(den, std::abs(g));
      }
      const double g1 = (value(eps, l1 + h, l2) - value(eps, l1 - h, l2)) / (2 * h);
      const double g2 = (value(eps, l1, l2 + h) - value(eps, l1, l2 - h)) / (2 * h);
      num += (g1 - obj.grad_lambda1) * (g1 - obj.grad_lambda1) +
             (g2 - obj.grad_lambda2) * (g2 - obj.grad_lambda2);
      den = std::max({den, std::abs(g1), std::abs(g2), 1e-8});
      worst = std::max(worst, std::sqrt(num) / den);
      ++checked;
    }
  }
  return {"objective gradient vs finite differences", worst <= 1e-4,
          std::to_string(checked) + " points, max relative error " + sci(worst)};
}

inline CheckResult check_metric_cases() {
  // ranked relevance (1,0,1) with |Yp| = 2
  const std::vector<double> f{0.9, 0.8, 0.7, 0.1};
  const Labels y{1, 0, 1, 0};
  const double ndcg = ndcg_at_k(f, y, 3), ap = ap_at_k(f, y, 3), p = precision_at_k(f, y, 3);
  const double ndcg_ref = 1.5 / (1.0 + 1.0 / std::log2(3.0));
  const bool ok = std::abs(ndcg - ndcg_ref) < 1e-12 && std::abs(ap - 5.0 / 6.0) < 1e-12 &&
                  std::abs(p - 2.0 / 3.0) < 1e-12 && tk_acc(f, y, 3) == 1;
  return {"metric hand cases", ok,
          "NDCG@3 " + std::to_string(ndcg) + ", AP@3 " + std::to_string(ap)};
}

}  // namespace detail

inline std::vector<CheckResult> run_self_checks(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return {detail::check_variational(rng, 1000), detail::check_nested_hinge(rng, 100000),
          detail::check_objective_gradient(rng, 50), detail::check_metric_cases()};
}

}  // namespace tkmia
