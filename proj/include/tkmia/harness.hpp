#pragma once

// Synthetic multi-label data, dataset/config I/O and the experiment runner
// that produces the per-cell delta table and per-instance outcome records.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <json.hpp>

#include "tkmia/attack.hpp"
#include "tkmia/baselines.hpp"
#include "tkmia/metrics.hpp"
#include "tkmia/model.hpp"

namespace tkmia {

struct SyntheticSpec {
  std::size_t n = 2000;
  std::size_t d = 32;
  std::size_t c = 10;
  double mean_relevant = 4.0;
  /// Strength of the shared latent factor behind all labels, in [0,1].
  double correlation = 0.0;
  /// Per-coordinate Gaussian noise added to the prototype mixture.
  double noise = 0.5;
  std::uint64_t seed = 0;
};

/// Labels come from a Gaussian latent model z_j = sqrt(rho) g + sqrt(1-rho) e_j
/// thresholded so that P(y_j = 1) = mean_relevant / c. Features are the sum of
/// the relevant classes' prototypes plus noise, rescaled by the dataset-wide
/// max-abs value into [-1, 1].
inline Dataset gen_synthetic(const SyntheticSpec& spec) {
  if (spec.n == 0 || spec.d == 0 || spec.c < 2)
    throw std::invalid_argument("gen_synthetic: n, d must be positive and c >= 2");
  if (!(spec.mean_relevant > 0.0) || spec.mean_relevant > static_cast<double>(spec.c))
    throw std::invalid_argument("gen_synthetic: mean relevant labels must lie in (0, c]");
  if (!(spec.correlation >= 0.0 && spec.correlation <= 1.0))
    throw std::invalid_argument("gen_synthetic: correlation must lie in [0,1]");
  if (!(spec.noise >= 0.0)) throw std::invalid_argument("gen_synthetic: negative noise");

  const double p = spec.mean_relevant / static_cast<double>(spec.c);
  const double threshold =
      p >= 1.0 ? -std::numeric_limits<double>::infinity()
               : boost::math::quantile(boost::math::normal_distribution<double>(), 1.0 - p);
  const double shared = std::sqrt(spec.correlation), own = std::sqrt(1.0 - spec.correlation);

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<std::vector<double>> prototypes(spec.c, std::vector<double>(spec.d));
  for (auto& proto : prototypes)
    for (auto& v : proto) v = gauss(rng);

  Dataset data(spec.n);
  double max_abs = 0.0;
  for (auto& inst : data) {
    const double g = gauss(rng);
    inst.y.assign(spec.c, 0);
    for (std::size_t j = 0; j < spec.c; ++j) inst.y[j] = (shared * g + own * gauss(rng)) > threshold;
    inst.x.assign(spec.d, 0.0);
    for (std::size_t j = 0; j < spec.c; ++j)
      if (inst.y[j])
        for (std::size_t t = 0; t < spec.d; ++t) inst.x[t] += prototypes[j][t];
    for (auto& v : inst.x) {
      v += spec.noise * gauss(rng);
      max_abs = std::max(max_abs, std::abs(v));
    }
  }
  if (max_abs > 0.0)
    for (auto& inst : data)
      for (auto& v : inst.x) v /= max_abs;
  return data;
}

// ---------------------------------------------------------------------------
// Files

namespace detail {

/// Writes via a sibling temp file and renames it into place.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + tmp.string());
    os << content;
    if (!os) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return is;
}

}  // namespace detail

inline std::string dataset_to_jsonl(const Dataset& data) {
  std::string out;
  for (const auto& inst : data) out += nlohmann::json{{"x", inst.x}, {"y", inst.y}}.dump() + "\n";
  return out;
}

inline Dataset dataset_from_jsonl(std::istream& is) {
  Dataset data;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    Instance inst{j.at("x").get<std::vector<double>>(), j.at("y").get<Labels>()};
    if (!data.empty() &&
        (inst.x.size() != data.front().x.size() || inst.y.size() != data.front().y.size()))
      throw std::runtime_error("dataset line " + std::to_string(data.size() + 1) +
                               " has inconsistent dimensions");
    data.push_back(std::move(inst));
  }
  return data;
}

inline void save_dataset(const std::filesystem::path& path, const Dataset& data) {
  detail::write_atomic(path, dataset_to_jsonl(data));
}

inline Dataset load_dataset(const std::filesystem::path& path) {
  auto is = detail::open_input(path);
  return dataset_from_jsonl(is);
}

inline void save_scorer(const std::filesystem::path& path, const Scorer& model) {
  std::ostringstream os;
  write_scorer(os, model);
  detail::write_atomic(path, os.str());
}

inline Scorer load_scorer(const std::filesystem::path& path) {
  auto is = detail::open_input(path);
  return read_scorer(is);
}

// ---------------------------------------------------------------------------
// Experiments

enum class Scheme { global, random };

struct MethodOverride {
  std::optional<double> eta;
  std::optional<double> alpha;
  std::optional<int> max_iter;
};

struct ExperimentConfig {
  std::string dataset;
  std::string victim;
  std::vector<std::size_t> k_values{3};
  Scheme scheme = Scheme::global;
  IndexSet categories{0};
  std::size_t m = 1;
  std::vector<std::string> methods{"tkmia", "ml_cw_u", "tkml_ap_u"};
  AttackConfig attack;
  std::map<std::string, MethodOverride> overrides;
  std::size_t max_instances = 1000;
  /// Instances [eval_begin, eval_end) are eligible for attack.
  std::size_t eval_begin = 0;
  std::size_t eval_end = std::numeric_limits<std::size_t>::max();
  bool per_category_map = false;
  std::uint64_t seed = 0;
  std::string csv;
  std::string outcomes;
};

inline const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> m{"tkmia", "ml_cw_u", "tkml_ap_u"};
  return m;
}

/// Parses the flat JSON config. Per-method settings use "<method>.eta",
/// "<method>.alpha" and "<method>.max_iter" keys.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  ExperimentConfig cfg;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    const auto& v = it.value();
    if (key == "dataset") cfg.dataset = v.get<std::string>();
    else if (key == "victim") cfg.victim = v.get<std::string>();
    else if (key == "k") cfg.k_values = v.is_array() ? v.get<std::vector<std::size_t>>()
                                                     : std::vector<std::size_t>{v.get<std::size_t>()};
    else if (key == "scheme") {
      const auto s = v.get<std::string>();
      if (s == "global") cfg.scheme = Scheme::global;
      else if (s == "random") cfg.scheme = Scheme::random;
      else throw std::invalid_argument("unknown scheme '" + s + "'");
    }
    else if (key == "categories") cfg.categories = v.get<IndexSet>();
    else if (key == "m") cfg.m = v.get<std::size_t>();
    else if (key == "methods") cfg.methods = v.get<std::vector<std::string>>();
    else if (key == "alpha") cfg.attack.alpha = v.get<double>();
    else if (key == "eta") cfg.attack.eta = v.get<double>();
    else if (key == "momentum") cfg.attack.momentum = v.get<double>();
    else if (key == "max_iter") cfg.attack.max_iter = v.get<int>();
    else if (key == "stop_mode") cfg.attack.stop = stop_mode_from_string(v.get<std::string>());
    else if (key == "delta") cfg.attack.delta_threshold = v.get<std::size_t>();
    else if (key == "clip_lo") cfg.attack.clip_lo = v.get<double>();
    else if (key == "clip_hi") cfg.attack.clip_hi = v.get<double>();
    else if (key == "max_instances") cfg.max_instances = v.get<std::size_t>();
    else if (key == "eval_begin") cfg.eval_begin = v.get<std::size_t>();
    else if (key == "eval_end") cfg.eval_end = v.get<std::size_t>();
    else if (key == "map_mode") {
      const auto s = v.get<std::string>();
      if (s != "sample" && s != "category") throw std::invalid_argument("unknown map_mode '" + s + "'");
      cfg.per_category_map = s == "category";
    }
    else if (key == "seed") cfg.seed = v.get<std::uint64_t>();
    else if (key == "csv") cfg.csv = v.get<std::string>();
    else if (key == "outcomes") cfg.outcomes = v.get<std::string>();
    else if (auto dot = key.find('.'); dot != std::string::npos) {
      const auto method = key.substr(0, dot), field = key.substr(dot + 1);
      auto& o = cfg.overrides[method];
      if (field == "eta") o.eta = v.get<double>();
      else if (field == "alpha") o.alpha = v.get<double>();
      else if (field == "max_iter") o.max_iter = v.get<int>();
      else throw std::invalid_argument("unknown config key '" + key + "'");
    }
    else throw std::invalid_argument("unknown config key '" + key + "'");
  }
  if (cfg.k_values.empty()) throw std::invalid_argument("config: empty k grid");
  if (cfg.max_instances == 0) throw std::invalid_argument("config: max_instances must be positive");
  if (cfg.methods.empty()) throw std::invalid_argument("config: no methods");
  for (const auto& m : cfg.methods)
    if (std::find(known_methods().begin(), known_methods().end(), m) == known_methods().end())
      throw std::invalid_argument("config: unknown method '" + m + "'");
  for (const auto& [m, o] : cfg.overrides)
    if (std::find(known_methods().begin(), known_methods().end(), m) == known_methods().end())
      throw std::invalid_argument("config: override for unknown method '" + m + "'");
  if (cfg.scheme == Scheme::random)
    for (auto k : cfg.k_values)
      if (cfg.m == 0 || cfg.m > k) throw std::invalid_argument("config: scheme S2 needs 0 < m <= k");
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  auto is = detail::open_input(path);
  return config_from_json(nlohmann::json::parse(is));
}

struct ExperimentResult {
  std::vector<AggregateReport> rows;
  std::vector<nlohmann::json> records;  // one per (cell, method, instance)
};

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  // splitmix64 finaliser over the combined key
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (a + 1) + 0xBF58476D1CE4E5B9ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline nlohmann::json metrics_json(const MetricsRecord& r) {
  return {{"tk_acc", r.tk_acc}, {"p_at_k", r.p_at_k}, {"ap_at_k", r.ap_at_k}, {"ndcg_at_k", r.ndcg_at_k}};
}

struct Cell {
  std::size_t k = 0;
  std::size_t s_size = 0;
  std::vector<Selection> picks;
};

// An instance is attackable when |Yp| >= k + |S| and at least one label is
// irrelevant (the margin baseline is undefined otherwise).
inline bool attackable(const Instance& inst, std::size_t k, std::size_t s_size) {
  const auto relevant = relevant_indices(inst.y).size();
  return relevant >= k + s_size && relevant < inst.y.size();
}

inline std::vector<Cell> plan_cells(const ExperimentConfig& cfg, std::span<const Instance> data) {
  const std::size_t begin = std::min(cfg.eval_begin, data.size());
  const std::size_t end = std::min(cfg.eval_end, data.size());
  if (begin > end) throw std::invalid_argument("config: eval_begin > eval_end");
  std::vector<Cell> cells;
  for (auto k : cfg.k_values) {
    if (cfg.scheme == Scheme::global) {
      std::map<std::size_t, Cell> by_size;
      for (auto& sel : select_global(data.subspan(begin, end - begin), cfg.categories)) {
        sel.instance += begin;
        auto& cell = by_size[sel.specified.size()];
        cell.k = k;
        cell.s_size = sel.specified.size();
        if (attackable(data[sel.instance], k, cell.s_size) && cell.picks.size() < cfg.max_instances)
          cell.picks.push_back(std::move(sel));
      }
      if (by_size.empty()) cells.push_back({k, 1, {}});
      for (auto& [size, cell] : by_size) cells.push_back(std::move(cell));
    } else {
      Cell cell{k, cfg.m, {}};
      for (auto idx : filter_instances(data.subspan(begin, end - begin), k, cfg.m)) {
        if (cell.picks.size() >= cfg.max_instances) break;
        const auto i = idx + begin;
        if (!attackable(data[i], k, cfg.m)) continue;
        cell.picks.push_back({i, select_random(data[i], cfg.m, mix_seed(cfg.seed, i, k))});
      }
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

}  // namespace detail

inline AttackConfig method_config(const ExperimentConfig& cfg, const std::string& method,
                                  std::size_t k) {
  AttackConfig a = cfg.attack;
  a.k = k;
  if (auto it = cfg.overrides.find(method); it != cfg.overrides.end()) {
    if (it->second.eta) a.eta = *it->second.eta;
    if (it->second.alpha) a.alpha = *it->second.alpha;
    if (it->second.max_iter) a.max_iter = *it->second.max_iter;
  }
  return a;
}

/// Runs every (k, |S|) cell for every method on the same instance list and
/// specified sets.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, std::span<const Instance> data,
                                       const Scorer& victim) {
  if (!data.empty() &&
      (data.front().x.size() != victim.input_dim() || data.front().y.size() != victim.output_dim()))
    throw std::invalid_argument("dataset dimensions do not match the victim");
  ExperimentResult result;
  for (const auto& cell : detail::plan_cells(cfg, data)) {
    for (const auto& method : cfg.methods) {
      const auto acfg = method_config(cfg, method, cell.k);
      std::vector<MetricsRecord> clean, perturbed;
      std::vector<Expulsion> expulsions;
      std::vector<std::vector<double>> successes;
      std::vector<ScoredSample> clean_samples, perturbed_samples;
      for (const auto& pick : cell.picks) {
        const auto& inst = data[pick.instance];
        AttackOutcome o = method == "tkmia"
                              ? tkmia_attack(victim, inst, pick.specified, acfg, pick.instance)
                              : run_baseline(victim, inst, pick.specified,
                                             {baseline_from_string(method), acfg}, pick.instance);
        clean.push_back(evaluate(o.scores_before, inst.y, cell.k, pick.instance));
        perturbed.push_back(evaluate(o.scores_after, inst.y, cell.k, pick.instance));
        expulsions.push_back(o.expulsion());
        if (o.success) successes.push_back(o.epsilon);
        if (cfg.per_category_map) {
          clean_samples.push_back({o.scores_before, inst.y});
          perturbed_samples.push_back({o.scores_after, inst.y});
        }
        auto rec = to_json(o);
        rec["s_size"] = cell.s_size;
        rec["clean"] = detail::metrics_json(clean.back());
        rec["perturbed"] = detail::metrics_json(perturbed.back());
        result.records.push_back(std::move(rec));
      }
      auto row = delta_report(clean, perturbed, expulsions, successes);
      row.k = cell.k;
      row.s_size = cell.s_size;
      row.method = method;
      if (cfg.per_category_map && cell.picks.size() >= cell.k) {
        row.clean.map_at_k = map_at_k_per_category(clean_samples, cell.k);
        row.perturbed.map_at_k = map_at_k_per_category(perturbed_samples, cell.k);
        row.delta.map_at_k = row.clean.map_at_k - row.perturbed.map_at_k;
      }
      result.rows.push_back(std::move(row));
    }
  }
  return result;
}

inline std::string report_csv(const ExperimentResult& r) {
  std::string out = std::string(kReportCsvHeader) + "\n";
  for (const auto& row : r.rows) out += to_csv_row(row) + "\n";
  return out;
}

inline std::string outcomes_jsonl(const ExperimentResult& r) {
  std::string out;
  for (const auto& rec : r.records) out += rec.dump() + "\n";
  return out;
}

/// Loads dataset and victim named in the config, runs it and writes the CSV
/// and outcome files. Nothing is written unless the whole run succeeds.
inline ExperimentResult run_experiment_files(const ExperimentConfig& cfg) {
  if (cfg.dataset.empty() || cfg.victim.empty())
    throw std::invalid_argument("config must name a dataset and a victim");
  if (cfg.csv.empty()) throw std::invalid_argument("config must name a csv output path");
  const auto data = load_dataset(cfg.dataset);
  const auto victim = load_scorer(cfg.victim);
  auto result = run_experiment(cfg, data, victim);
  detail::write_atomic(cfg.csv, report_csv(result));
  if (!cfg.outcomes.empty()) detail::write_atomic(cfg.outcomes, outcomes_jsonl(result));
  return result;
}

}  // namespace tkmia
