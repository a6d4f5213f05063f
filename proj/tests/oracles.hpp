#pragma once

// Reference implementations used only by the tests. They are written from
// the definitions with no shared code paths: ranks by pairwise counting,
// metrics by rank lookups, top-k sums by pairwise ranks, gradients by
// central differences.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <vector>

namespace oracle {

/// 1-based rank: one plus the number of classes that beat i (higher score,
/// or equal score with a smaller index).
inline std::vector<std::size_t> ranks(const std::vector<double>& f) {
  std::vector<std::size_t> r(f.size(), 1);
  for (std::size_t i = 0; i < f.size(); ++i)
    for (std::size_t j = 0; j < f.size(); ++j)
      if (f[j] > f[i] || (f[j] == f[i] && j < i)) ++r[i];
  return r;
}

inline std::size_t n_relevant(const std::vector<int>& y) {
  std::size_t n = 0;
  for (int v : y) n += v != 0;
  return n;
}

inline int tk_acc(const std::vector<double>& f, const std::vector<int>& y, std::size_t k) {
  auto r = ranks(f);
  for (std::size_t i = 0; i < f.size(); ++i)
    if (y[i] && r[i] > k) return 0;
  return 1;
}

inline double precision(const std::vector<double>& f, const std::vector<int>& y, std::size_t k) {
  auto r = ranks(f);
  double hits = 0;
  for (std::size_t i = 0; i < f.size(); ++i) hits += (y[i] && r[i] <= k);
  return hits / static_cast<double>(k);
}

inline double average_precision(const std::vector<double>& f, const std::vector<int>& y,
                                std::size_t k) {
  auto r = ranks(f);
  double sum = 0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (!y[i] || r[i] > k) continue;
    double above = 0;
    for (std::size_t j = 0; j < f.size(); ++j) above += (y[j] && r[j] <= r[i]);
    sum += above / static_cast<double>(r[i]);
  }
  return sum / static_cast<double>(std::min(k, n_relevant(y)));
}

inline double ndcg(const std::vector<double>& f, const std::vector<int>& y, std::size_t k) {
  auto r = ranks(f);
  double dcg = 0, ideal = 0;
  for (std::size_t i = 0; i < f.size(); ++i)
    if (y[i] && r[i] <= k) dcg += 1.0 / std::log2(static_cast<double>(r[i]) + 1.0);
  for (std::size_t p = 1; p <= std::min(k, n_relevant(y)); ++p)
    ideal += 1.0 / std::log2(static_cast<double>(p) + 1.0);
  return dcg / ideal;
}

inline double top_k_sum(const std::vector<double>& f, std::size_t k) {
  auto r = ranks(f);
  double s = 0;
  for (std::size_t i = 0; i < f.size(); ++i)
    if (r[i] <= k) s += f[i];
  return s;
}

/// Minimum of a convex function of one variable on [0,1]: dense grid of
/// step 1e-3, then ternary search inside the bracket around the best node.
inline double convex_min_01(const std::function<double(double)>& g) {
  int best = 0;
  double best_v = g(0.0);
  for (int i = 1; i <= 1000; ++i) {
    const double v = g(i * 1e-3);
    if (v < best_v) best_v = v, best = i;
  }
  double lo = std::max(0, best - 1) * 1e-3, hi = std::min(1000, best + 1) * 1e-3;
  for (int it = 0; it < 200; ++it) {
    const double a = lo + (hi - lo) / 3, b = hi - (hi - lo) / 3;
    if (g(a) <= g(b)) hi = b;
    else lo = a;
  }
  return std::min(best_v, g(0.5 * (lo + hi)));
}

/// Central-difference gradient of g at x.
inline std::vector<double> central_gradient(const std::function<double(const std::vector<double>&)>& g,
                                            std::vector<double> x, double h) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = g(x);
    x[i] = keep - h;
    const double dn = g(x);
    x[i] = keep;
    out[i] = (up - dn) / (2 * h);
  }
  return out;
}

/// |a - b|_2 / max(|b|_inf, floor).
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b,
                             double floor = 1e-8) {
  double num = 0, den = floor;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den = std::max(den, std::abs(b[i]));
  }
  return std::sqrt(num) / den;
}

inline std::vector<double> uniform_vector(std::mt19937_64& rng, std::size_t n, double lo,
                                          double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& e : v) e = u(rng);
  return v;
}

/// Random binary labels with at least `min_relevant` ones.
inline std::vector<int> random_labels(std::mt19937_64& rng, std::size_t c,
                                      std::size_t min_relevant = 1) {
  std::bernoulli_distribution coin(0.4);
  std::vector<int> y(c);
  for (;;) {
    for (auto& v : y) v = coin(rng);
    if (n_relevant(y) >= min_relevant) return y;
  }
}

}  // namespace oracle
