#pragma once

// Comparison attacks that share the iterative engine: a C&W-style multi-label
// margin loss and the top-k "all relevant labels out" loss. Both attack the
// whole relevant set; success is judged on the specified set only.

#include <span>
#include <stdexcept>
#include <string>

#include "tkmia/attack.hpp"

namespace tkmia {

enum class BaselineMethod { ml_cw_u, tkml_ap_u };

inline const char* to_string(BaselineMethod m) {
  return m == BaselineMethod::ml_cw_u ? "ml_cw_u" : "tkml_ap_u";
}

inline BaselineMethod baseline_from_string(const std::string& s) {
  if (s == "ml_cw_u") return BaselineMethod::ml_cw_u;
  if (s == "tkml_ap_u") return BaselineMethod::tkml_ap_u;
  throw std::invalid_argument("unknown baseline '" + s + "'");
}

struct BaselineSpec {
  BaselineMethod method = BaselineMethod::ml_cw_u;
  AttackConfig config;
};

/// [min_{j in Yp} f_j - max_{i not in Yp} f_i]_+ + alpha/2 |eps|^2.
/// Descending it drags the weakest relevant label under the strongest
/// irrelevant one.
inline ObjectiveValue ml_cw_u_loss(const Scorer& model, std::span<const double> x,
                                   std::span<const double> epsilon, const IndexSet& relevant,
                                   double alpha = 0.0) {
  const std::size_t c = model.output_dim();
  if (relevant.empty()) throw std::invalid_argument("ml_cw_u_loss: empty relevant set");
  IndexSet all(c), irrelevant;
  for (std::size_t i = 0; i < c; ++i) all[i] = i;
  irrelevant = remaining_relevant(all, relevant);
  if (irrelevant.empty()) throw std::invalid_argument("ml_cw_u_loss: no irrelevant labels");
  for (auto y : relevant) detail::check_index(y, c, "ml_cw_u_loss");

  const auto xe = detail::add(x, epsilon);
  const auto f = model.score(xe);
  const auto low_rel = detail::argmin_over(f, relevant);
  const auto top_irr = detail::argmax_over(f, irrelevant);

  ObjectiveValue out;
  out.value = 0.5 * alpha * detail::squared_norm(epsilon);
  std::vector<double> cot(c, 0.0);
  const double margin = f[low_rel] - f[top_irr];
  if (margin > 0.0) {
    out.value += margin;
    cot[low_rel] = 1.0;
    cot[top_irr] = -1.0;
  }
  out.grad_epsilon = model.input_gradient(xe, cot);
  for (std::size_t d = 0; d < out.grad_epsilon.size(); ++d) out.grad_epsilon[d] += alpha * epsilon[d];
  return out;
}

/// [max_{y in Yp} f_y - f_[k+1]]_+ + alpha/2 |eps|^2. The f_[k+1] gradient
/// flows through whichever class currently holds rank k+1.
inline ObjectiveValue tkml_ap_u_loss(const Scorer& model, std::span<const double> x,
                                     std::span<const double> epsilon, const IndexSet& relevant,
                                     std::size_t k, double alpha = 0.0) {
  const std::size_t c = model.output_dim();
  if (k < 1 || k >= c) throw std::out_of_range("tkml_ap_u_loss: k must lie in [1, c)");
  if (relevant.empty()) throw std::invalid_argument("tkml_ap_u_loss: empty relevant set");
  for (auto y : relevant) detail::check_index(y, c, "tkml_ap_u_loss");

  const auto xe = detail::add(x, epsilon);
  const auto f = model.score(xe);
  const auto top_rel = detail::argmax_over(f, relevant);
  const auto pivot = ranking(f)[k];

  ObjectiveValue out;
  out.value = 0.5 * alpha * detail::squared_norm(epsilon);
  std::vector<double> cot(c, 0.0);
  const double margin = f[top_rel] - f[pivot];
  if (margin > 0.0) {
    out.value += margin;
    cot[top_rel] += 1.0;
    cot[pivot] -= 1.0;
  }
  out.grad_epsilon = model.input_gradient(xe, cot);
  for (std::size_t d = 0; d < out.grad_epsilon.size(); ++d) out.grad_epsilon[d] += alpha * epsilon[d];
  return out;
}

/// Runs a baseline through the shared loop (no lambda variables). Success:
/// at least delta specified labels pushed out of the top-k.
inline AttackOutcome run_baseline(const Scorer& model, const Instance& inst,
                                  const IndexSet& specified, const BaselineSpec& spec,
                                  std::size_t instance_id = 0) {
  const auto& cfg = spec.config;
  detail::validate_attack(model, inst, specified, cfg, "run_baseline");
  const auto relevant = relevant_indices(inst.y);
  const std::size_t needed = cfg.delta_threshold == 0 ? specified.size() : cfg.delta_threshold;

  LossFn loss;
  if (spec.method == BaselineMethod::ml_cw_u) {
    loss = [&](std::span<const double> x, std::span<const double> eps, double, double) {
      return ml_cw_u_loss(model, x, eps, relevant, cfg.alpha);
    };
  } else {
    loss = [&](std::span<const double> x, std::span<const double> eps, double, double) {
      return tkml_ap_u_loss(model, x, eps, relevant, cfg.k, cfg.alpha);
    };
  }
  SuccessFn done = [&](std::span<const double> scores) {
    return specified.size() - residual_set(scores, specified, cfg.k).size() >= needed;
  };
  auto out = detail::run_engine(model, inst, specified, cfg, to_string(spec.method), loss, done,
                                false);
  out.instance = instance_id;
  return out;
}

}  // namespace tkmia
