#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "oracles.hpp"
#include "tkmia/baselines.hpp"
#include "tkmia/harness.hpp"

using namespace tkmia;

namespace {

// Affine scorer whose outputs are sigmoid(bias) regardless of the input.
Scorer constant_scorer(const std::vector<double>& probs) {
  std::vector<double> bias;
  for (double p : probs) bias.push_back(std::log(p / (1 - p)));
  return Scorer("affine", {Layer{1, probs.size(), std::vector<double>(probs.size(), 0.0), bias,
                                 Activation::sigmoid}});
}

Scorer scaled(const Scorer& s, double factor) {
  std::vector<Layer> layers(s.layers().begin(), s.layers().end());
  for (auto& l : layers)
    for (auto& w : l.weights) w *= factor;
  return Scorer(s.architecture(), std::move(layers));
}

bool generic(const std::vector<double>& f, double gap) {
  auto v = f;
  std::sort(v.begin(), v.end());
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] - v[i - 1] < gap) return false;
  return true;
}

}  // namespace

TEST(MlCwU, Values) {
  std::vector<double> x{0.0}, eps{0.0};
  auto below = constant_scorer({0.2, 0.1, 0.6, 0.5});
  EXPECT_EQ(ml_cw_u_loss(below, x, eps, {0, 1}).value, 0.0);
  auto above = constant_scorer({0.8, 0.9, 0.3, 0.1});
  EXPECT_NEAR(ml_cw_u_loss(above, x, eps, {0, 1}).value, 0.5, 1e-12);
  EXPECT_THROW(ml_cw_u_loss(above, x, eps, {}), std::invalid_argument);
  EXPECT_THROW(ml_cw_u_loss(above, x, eps, {0, 1, 2, 3}), std::invalid_argument);
}

TEST(TkmlApU, Values) {
  std::vector<double> x{0.0}, eps{0.0};
  auto m = constant_scorer({0.9, 0.2, 0.1, 0.05});
  EXPECT_NEAR(tkml_ap_u_loss(m, x, eps, {0}, 2).value, 0.8, 1e-12);
  auto out = constant_scorer({0.1, 0.9, 0.8, 0.7});
  EXPECT_EQ(tkml_ap_u_loss(out, x, eps, {0}, 2).value, 0.0);
  EXPECT_THROW(tkml_ap_u_loss(m, x, eps, {0}, 4), std::out_of_range);
  EXPECT_THROW(tkml_ap_u_loss(m, x, eps, {}, 2), std::invalid_argument);
}

TEST(Baselines, NonNegativeAndZeroExactlyWhenSatisfied) {
  std::mt19937_64 rng(41);
  for (int t = 0; t < 500; ++t) {
    auto m = Scorer::mlp(4, 5, 6, rng());
    auto x = oracle::uniform_vector(rng, 4, -1, 1);
    std::vector<double> eps(4, 0.0);
    auto f = m.score(x);
    const IndexSet yp{0, 2, 3};
    const double cw = ml_cw_u_loss(m, x, eps, yp).value;
    const double ap = tkml_ap_u_loss(m, x, eps, yp, 2).value;
    EXPECT_GE(cw, 0.0);
    EXPECT_GE(ap, 0.0);
    const double low_rel = std::min({f[0], f[2], f[3]}), top_irr = std::max({f[1], f[4], f[5]});
    EXPECT_EQ(cw == 0.0, low_rel <= top_irr);
    auto r = oracle::ranks(f);
    const bool all_out = r[0] > 2 && r[2] > 2 && r[3] > 2;
    EXPECT_EQ(ap == 0.0, all_out);
  }
}

TEST(Baselines, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(42);
  const IndexSet yp{0, 1, 2, 3};
  int checked = 0;
  for (int t = 0; checked < 400 && t < 10000; ++t) {
    auto m = t % 2 ? scaled(Scorer::affine(8, 6, rng()), 4) : scaled(Scorer::mlp(8, 10, 6, rng()), 3);
    auto x = oracle::uniform_vector(rng, 8, -0.8, 0.8), eps = oracle::uniform_vector(rng, 8, -0.08, 0.08);
    std::vector<double> xe(8);
    for (int i = 0; i < 8; ++i) xe[i] = x[i] + eps[i];
    auto f = m.score(xe);
    if (!generic(f, 1e-4)) continue;
    const double alpha = 1e-3;
    const bool cw = checked % 2 == 0;
    auto value = [&](const std::vector<double>& e) {
      return cw ? ml_cw_u_loss(m, x, e, yp, alpha).value : tkml_ap_u_loss(m, x, e, yp, 2, alpha).value;
    };
    // A hinge sitting at zero is a kink as well.
    const double margin = cw ? std::min({f[0], f[1], f[2], f[3]}) - std::max(f[4], f[5])
                             : std::max({f[0], f[1], f[2], f[3]}) - f[ranking(f)[2]];
    if (std::abs(margin) < 1e-4) continue;
    ++checked;
    auto analytic = cw ? ml_cw_u_loss(m, x, eps, yp, alpha).grad_epsilon
                       : tkml_ap_u_loss(m, x, eps, yp, 2, alpha).grad_epsilon;
    EXPECT_LE(oracle::relative_error(analytic, oracle::central_gradient(value, eps, 1e-6)), 1e-4);
  }
  EXPECT_EQ(checked, 400);
}

TEST(RunBaseline, ImmediateSuccessWhenAlreadyExpelled) {
  auto m = constant_scorer({0.9, 0.8, 0.6, 0.3, 0.2});
  Instance inst{{0.0}, {1, 1, 0, 1, 1}};
  BaselineSpec spec;
  spec.config.k = 2;
  for (auto method : {BaselineMethod::ml_cw_u, BaselineMethod::tkml_ap_u}) {
    spec.method = method;
    auto o = run_baseline(m, inst, {3}, spec);
    EXPECT_TRUE(o.success);
    EXPECT_EQ(o.iterations_used, 0);
    EXPECT_EQ(o.method, to_string(method));
    EXPECT_EQ(o.epsilon, std::vector<double>{0.0});
  }
}

TEST(RunBaseline, ThresholdAboveSetSizeRejected) {
  auto m = constant_scorer({0.9, 0.8, 0.6, 0.3, 0.2});
  Instance inst{{0.0}, {1, 1, 1, 1, 0}};
  BaselineSpec spec;
  spec.config.k = 2;
  spec.config.delta_threshold = 2;
  EXPECT_THROW(run_baseline(m, inst, {0}, spec), std::invalid_argument);
}

TEST(RunBaseline, SuccessConfirmedByRankOracle) {
  SyntheticSpec s;
  s.n = 500;
  s.d = 16;
  s.c = 6;
  s.mean_relevant = 3;
  s.seed = 8;
  auto data = gen_synthetic(s);
  TrainConfig tc;
  tc.epochs = 30;
  auto victim = train_bce(std::span<const Instance>(data).first(250), tc);
  for (auto method : {BaselineMethod::ml_cw_u, BaselineMethod::tkml_ap_u}) {
    for (std::size_t delta : {0u, 1u}) {
      BaselineSpec spec{method, {}};
      spec.config.k = 2;
      spec.config.delta_threshold = delta;
      int runs = 0;
      for (std::size_t i = 250; i < data.size() && runs < 60; ++i) {
        auto yp = relevant_indices(data[i].y);
        if (yp.size() < 4 || yp.size() == s.c) continue;
        const IndexSet sel{yp[0], yp[1]};
        auto o = run_baseline(victim, data[i], sel, spec, i);
        ++runs;
        auto r = oracle::ranks(o.scores_after);
        std::size_t expelled = (r[sel[0]] > 2) + (r[sel[1]] > 2);
        const std::size_t needed = delta == 0 ? 2 : delta;
        EXPECT_EQ(o.success, expelled >= needed);
        EXPECT_EQ(o.residual.size(), 2 - expelled);
      }
    }
  }
}

TEST(RunBaseline, OutcomeSchemaMatchesTkmia) {
  auto m = Scorer::affine(3, 5, 2);
  Instance inst{{0.2, -0.1, 0.4}, {1, 1, 1, 1, 0}};
  AttackConfig cfg;
  cfg.k = 2;
  cfg.max_iter = 5;
  auto a = to_json(tkmia_attack(m, inst, {0}, cfg));
  auto b = to_json(run_baseline(m, inst, {0}, {BaselineMethod::tkml_ap_u, cfg}));
  std::vector<std::string> ka, kb;
  for (auto it = a.begin(); it != a.end(); ++it) ka.push_back(it.key());
  for (auto it = b.begin(); it != b.end(); ++it) kb.push_back(it.key());
  EXPECT_EQ(ka, kb);
  EXPECT_EQ(b["lambda1"], 0.0);
  EXPECT_EQ(b["lambda2"], 0.0);
}

TEST(BaselineMethod, StringRoundTrip) {
  EXPECT_EQ(baseline_from_string("ml_cw_u"), BaselineMethod::ml_cw_u);
  EXPECT_EQ(baseline_from_string(to_string(BaselineMethod::tkml_ap_u)), BaselineMethod::tkml_ap_u);
  EXPECT_THROW(baseline_from_string("kfool"), std::invalid_argument);
}
