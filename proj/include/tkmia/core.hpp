#pragma once

// Ranking primitives and the average top-k variational machinery.
//
// Scores are plain `std::span<const double>` views; a class index is a
// `std::size_t`. Ordering is by descending score with ties broken by the
// smaller class index, so every ranking in the library is reproducible.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tkmia {

using IndexSet = std::vector<std::size_t>;

/// Raised when a metric is not defined for its input (no relevant labels).
class UndefinedMetric : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised by iterative routines that hit a non-finite value.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, int iteration)
      : std::runtime_error(what + " (iteration " + std::to_string(iteration) + ")"),
        iteration_(iteration) {}
  int iteration() const noexcept { return iteration_; }

 private:
  int iteration_;
};

inline double hinge(double a) { return a > 0.0 ? a : 0.0; }

namespace detail {

inline void check_k(std::size_t k, std::size_t c, const char* who) {
  if (k < 1 || k > c)
    throw std::out_of_range(std::string(who) + ": k=" + std::to_string(k) +
                            " outside [1, " + std::to_string(c) + "]");
}

inline void check_finite(std::span<const double> v, const char* who) {
  for (double e : v)
    if (!std::isfinite(e)) throw std::invalid_argument(std::string(who) + ": non-finite entry");
}

inline void check_index(std::size_t i, std::size_t c, const char* who) {
  if (i >= c)
    throw std::out_of_range(std::string(who) + ": class index " + std::to_string(i) +
                            " outside [0, " + std::to_string(c) + ")");
}

}  // namespace detail

/// Throws unless `scores` is a valid relevancy vector: c >= 2, finite, in [0,1].
inline void check_scores(std::span<const double> scores) {
  if (scores.size() < 2) throw std::invalid_argument("score vector needs at least 2 classes");
  for (double s : scores)
    if (!std::isfinite(s) || s < 0.0 || s > 1.0)
      throw std::invalid_argument("score entries must be finite and within [0,1]");
}

/// Class indices ordered by descending score, ties by smaller index.
inline IndexSet ranking(std::span<const double> scores) {
  IndexSet order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

/// 1-based rank of every class under `ranking`.
inline std::vector<std::size_t> ranks(std::span<const double> scores) {
  auto order = ranking(scores);
  std::vector<std::size_t> r(scores.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos) r[order[pos]] = pos + 1;
  return r;
}

inline IndexSet top_k_indices(std::span<const double> scores, std::size_t k) {
  detail::check_k(k, scores.size(), "top_k_indices");
  IndexSet order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto before = [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    before);
  order.resize(k);
  return order;
}

/// The k-th largest score, f_[k].
inline double kth_largest(std::span<const double> scores, std::size_t k) {
  detail::check_k(k, scores.size(), "kth_largest");
  std::vector<double> v(scores.begin(), scores.end());
  auto nth = v.begin() + static_cast<std::ptrdiff_t>(k - 1);
  std::nth_element(v.begin(), nth, v.end(), std::greater<>());
  return *nth;
}

/// Mean of the k largest scores.
inline double avg_top_k(std::span<const double> scores, std::size_t k) {
  detail::check_k(k, scores.size(), "avg_top_k");
  std::vector<double> v(scores.begin(), scores.end());
  std::sort(v.begin(), v.end(), std::greater<>());
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) sum += v[i];
  return sum / static_cast<double>(k);
}

/// k*lambda + sum_i [f_i - lambda]_+ ; its minimum over lambda in [0,1] is
/// the top-k sum, attained at lambda = f_[k].
inline double variational_top_k_sum(std::span<const double> scores, std::size_t k,
                                    double lambda) {
  detail::check_k(k, scores.size(), "variational_top_k_sum");
  check_scores(scores);
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw std::out_of_range("variational_top_k_sum: lambda outside [0,1]");
  double sum = static_cast<double>(k) * lambda;
  for (double f : scores) sum += hinge(f - lambda);
  return sum;
}

/// Delta_i = [max_{s in S} f_s - f_i]_+ for every class i (unsorted).
inline std::vector<double> delta_terms(std::span<const double> scores, const IndexSet& specified) {
  if (specified.empty()) throw std::invalid_argument("delta_terms: empty specified set");
  double top = -INFINITY;
  for (auto s : specified) {
    detail::check_index(s, scores.size(), "delta_terms");
    top = std::max(top, scores[s]);
  }
  std::vector<double> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = hinge(top - scores[i]);
  return out;
}

/// Relevant labels that are not specified: Yp \ S, in ascending order.
inline IndexSet remaining_relevant(const IndexSet& relevant, const IndexSet& specified) {
  IndexSet a = relevant, b = specified, out;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

/// Delta~_j = [f_j - min_{y in Yp\S} f_y]_+ for every class j (unsorted).
inline std::vector<double> delta_tilde_terms(std::span<const double> scores,
                                             const IndexSet& relevant, const IndexSet& specified) {
  auto rest = remaining_relevant(relevant, specified);
  if (rest.empty()) throw std::invalid_argument("delta_tilde_terms: Yp \\ S is empty");
  double floor = INFINITY;
  for (auto y : rest) {
    detail::check_index(y, scores.size(), "delta_tilde_terms");
    floor = std::min(floor, scores[y]);
  }
  std::vector<double> out(scores.size());
  for (std::size_t j = 0; j < scores.size(); ++j) out[j] = hinge(scores[j] - floor);
  return out;
}

}  // namespace tkmia
