#pragma once

// Ranking measures for top-k multi-label prediction and the clean-vs-perturbed
// delta report.

#include <cmath>
#include <cstdio>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tkmia/core.hpp"

namespace tkmia {

/// Binary relevance vector, 1 = relevant.
using Labels = std::vector<int>;

inline IndexSet relevant_indices(std::span<const int> labels) {
  IndexSet out;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] != 0) out.push_back(i);
  return out;
}

namespace detail {

inline void check_pair(std::span<const double> scores, std::span<const int> labels,
                       std::size_t k, const char* who) {
  if (scores.size() != labels.size())
    throw std::invalid_argument(std::string(who) + ": scores/labels length mismatch");
  check_k(k, scores.size(), who);
}

inline std::size_t count_relevant(std::span<const int> labels) {
  std::size_t n = 0;
  for (int y : labels) n += (y != 0);
  return n;
}

}  // namespace detail

/// 1 iff every relevant label is inside the top-k.
inline int tk_acc(std::span<const double> scores, std::span<const int> labels, std::size_t k) {
  detail::check_pair(scores, labels, k, "tk_acc");
  auto top = top_k_indices(scores, k);
  std::size_t hits = 0;
  for (auto i : top) hits += (labels[i] != 0);
  return hits == detail::count_relevant(labels) ? 1 : 0;
}

inline double precision_at_k(std::span<const double> scores, std::span<const int> labels,
                             std::size_t k) {
  detail::check_pair(scores, labels, k, "precision_at_k");
  auto top = top_k_indices(scores, k);
  double hits = 0.0;
  for (auto i : top) hits += (labels[i] != 0);
  return hits / static_cast<double>(k);
}

/// AP@k with the prefix reading: sum over relevant positions i <= k of P@i,
/// normalised by min(k, |Yp|).
inline double ap_at_k(std::span<const double> scores, std::span<const int> labels,
                      std::size_t k) {
  detail::check_pair(scores, labels, k, "ap_at_k");
  const std::size_t relevant = detail::count_relevant(labels);
  if (relevant == 0) throw UndefinedMetric("ap_at_k: no relevant labels");
  auto top = top_k_indices(scores, k);
  double hits = 0.0, sum = 0.0;
  for (std::size_t pos = 0; pos < k; ++pos) {
    if (labels[top[pos]] != 0) {
      hits += 1.0;
      sum += hits / static_cast<double>(pos + 1);
    }
  }
  return sum / static_cast<double>(std::min(k, relevant));
}

inline double ndcg_at_k(std::span<const double> scores, std::span<const int> labels,
                        std::size_t k) {
  detail::check_pair(scores, labels, k, "ndcg_at_k");
  const std::size_t relevant = detail::count_relevant(labels);
  if (relevant == 0) throw UndefinedMetric("ndcg_at_k: no relevant labels");
  auto top = top_k_indices(scores, k);
  double dcg = 0.0, idcg = 0.0;
  for (std::size_t pos = 0; pos < k; ++pos)
    if (labels[top[pos]] != 0) dcg += 1.0 / std::log2(static_cast<double>(pos) + 2.0);
  for (std::size_t pos = 0; pos < std::min(k, relevant); ++pos)
    idcg += 1.0 / std::log2(static_cast<double>(pos) + 2.0);
  return dcg / idcg;
}

struct ScoredSample {
  std::vector<double> scores;
  Labels labels;
};

/// Sample-mean of AP@k. This is the value reported as mAP@k.
inline double map_at_k(std::span<const ScoredSample> samples, std::size_t k) {
  if (samples.empty()) throw std::invalid_argument("map_at_k: no samples");
  double sum = 0.0;
  for (const auto& s : samples) sum += ap_at_k(s.scores, s.labels, k);
  return sum / static_cast<double>(samples.size());
}

/// Dataset-level variant: for each category j, rank the samples by their
/// class-j score and take AP@k against y_j; average over categories that have
/// at least one relevant sample.
inline double map_at_k_per_category(std::span<const ScoredSample> samples, std::size_t k) {
  if (samples.empty()) throw std::invalid_argument("map_at_k_per_category: no samples");
  const std::size_t c = samples.front().scores.size();
  if (k < 1 || k > samples.size())
    throw std::out_of_range("map_at_k_per_category: k outside [1, n]");
  double sum = 0.0;
  std::size_t used = 0;
  std::vector<double> column(samples.size());
  std::vector<int> relevance(samples.size());
  for (std::size_t j = 0; j < c; ++j) {
    for (std::size_t n = 0; n < samples.size(); ++n) {
      if (samples[n].scores.size() != c || samples[n].labels.size() != c)
        throw std::invalid_argument("map_at_k_per_category: ragged samples");
      column[n] = samples[n].scores[j];
      relevance[n] = samples[n].labels[j];
    }
    if (detail::count_relevant(relevance) == 0) continue;
    // Columns are arbitrary reals here, so rank directly rather than via
    // the [0,1]-checked helpers.
    sum += ap_at_k(column, relevance, k);
    ++used;
  }
  if (used == 0) throw UndefinedMetric("map_at_k_per_category: no category has a relevant sample");
  return sum / static_cast<double>(used);
}

/// |S| and |S'| of one attacked instance.
struct Expulsion {
  std::size_t specified = 0;
  std::size_t residual = 0;
};

/// Mean number of specified labels pushed out of the top-k.
inline double delta_l(std::span<const Expulsion> outcomes) {
  if (outcomes.empty()) throw std::invalid_argument("delta_l: no outcomes");
  double sum = 0.0;
  for (const auto& e : outcomes) {
    if (e.residual > e.specified) throw std::invalid_argument("delta_l: |S'| > |S|");
    sum += static_cast<double>(e.specified - e.residual);
  }
  return sum / static_cast<double>(outcomes.size());
}

inline double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double e : v) s += e * e;
  return std::sqrt(s);
}

/// Mean L2 norm of successful perturbations; nullopt when there are none.
inline std::optional<double> aper(std::span<const std::vector<double>> perturbations) {
  if (perturbations.empty()) return std::nullopt;
  double sum = 0.0;
  for (const auto& e : perturbations) sum += l2_norm(e);
  return sum / static_cast<double>(perturbations.size());
}

struct MetricsRecord {
  std::size_t instance = 0;
  std::size_t k = 0;
  int tk_acc = 0;
  double p_at_k = 0.0;
  double ap_at_k = 0.0;
  double ndcg_at_k = 0.0;
};

inline MetricsRecord evaluate(std::span<const double> scores, std::span<const int> labels,
                              std::size_t k, std::size_t instance = 0) {
  return {instance,
          k,
          tkmia::tk_acc(scores, labels, k),
          precision_at_k(scores, labels, k),
          tkmia::ap_at_k(scores, labels, k),
          tkmia::ndcg_at_k(scores, labels, k)};
}

struct MetricMeans {
  double tk_acc = 0.0;
  double p_at_k = 0.0;
  double map_at_k = 0.0;
  double ndcg_at_k = 0.0;
};

inline MetricMeans mean_metrics(std::span<const MetricsRecord> records) {
  MetricMeans m;
  if (records.empty()) return m;
  for (const auto& r : records) {
    m.tk_acc += r.tk_acc;
    m.p_at_k += r.p_at_k;
    m.map_at_k += r.ap_at_k;
    m.ndcg_at_k += r.ndcg_at_k;
  }
  const double n = static_cast<double>(records.size());
  m.tk_acc /= n;
  m.p_at_k /= n;
  m.map_at_k /= n;
  m.ndcg_at_k /= n;
  return m;
}

/// One table row: clean means, perturbed means and their differences
/// (clean - perturbed), plus delta-l and APer.
struct AggregateReport {
  std::size_t k = 0;
  std::size_t s_size = 0;
  std::string method;
  std::size_t n = 0;
  MetricMeans clean;
  MetricMeans perturbed;
  MetricMeans delta;
  double delta_l = 0.0;
  std::optional<double> aper;
};

inline AggregateReport delta_report(std::span<const MetricsRecord> clean,
                                    std::span<const MetricsRecord> perturbed,
                                    std::span<const Expulsion> expulsions,
                                    std::span<const std::vector<double>> successful_perturbations) {
  if (clean.size() != perturbed.size() || clean.size() != expulsions.size())
    throw std::invalid_argument("delta_report: clean/perturbed/outcome counts differ");
  for (std::size_t i = 0; i < clean.size(); ++i)
    if (clean[i].instance != perturbed[i].instance || clean[i].k != perturbed[i].k)
      throw std::invalid_argument("delta_report: instance sets do not match");
  AggregateReport r;
  r.n = clean.size();
  r.k = clean.empty() ? 0 : clean.front().k;
  r.clean = mean_metrics(clean);
  r.perturbed = mean_metrics(perturbed);
  r.delta = {r.clean.tk_acc - r.perturbed.tk_acc, r.clean.p_at_k - r.perturbed.p_at_k,
             r.clean.map_at_k - r.perturbed.map_at_k, r.clean.ndcg_at_k - r.perturbed.ndcg_at_k};
  r.delta_l = expulsions.empty() ? 0.0 : delta_l(expulsions);
  r.aper = aper(successful_perturbations);
  return r;
}

inline constexpr const char* kReportCsvHeader =
    "k,|S|,method,dTkAcc,dP@k,dmAP@k,dNDCG@k,dl,APer,n";

namespace detail {
inline std::string fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10f", v);
  return buf;
}
}  // namespace detail

/// CSV row in the fixed column order. Undefined values print as NA; an
/// empty cell prints NA for every metric column.
inline std::string to_csv_row(const AggregateReport& r) {
  std::string row = std::to_string(r.k) + "," + std::to_string(r.s_size) + "," + r.method + ",";
  if (r.n == 0) {
    row += "NA,NA,NA,NA,NA,NA,0";
    return row;
  }
  row += detail::fixed(r.delta.tk_acc) + "," + detail::fixed(r.delta.p_at_k) + "," +
         detail::fixed(r.delta.map_at_k) + "," + detail::fixed(r.delta.ndcg_at_k) + "," +
         detail::fixed(r.delta_l) + "," + (r.aper ? detail::fixed(*r.aper) : std::string("NA")) +
         "," + std::to_string(r.n);
  return row;
}

}  // namespace tkmia
