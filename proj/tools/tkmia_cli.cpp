// tkmia: generate data, train victims, run single attacks, build reports and
// run the built-in property checks.

#include <cstdint>
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tkmia/attack.hpp"
#include "tkmia/baselines.hpp"
#include "tkmia/harness.hpp"
#include "tkmia/selfcheck.hpp"

namespace {

using namespace tkmia;

int gen_data(const SyntheticSpec& spec, const std::string& out) {
  save_dataset(out, gen_synthetic(spec));
  std::cout << "wrote " << spec.n << " instances to " << out << "\n";
  return 0;
}

int train(const std::string& data_path, const std::string& out, const TrainConfig& cfg,
          std::size_t train_count) {
  auto data = load_dataset(data_path);
  if (train_count == 0 || train_count > data.size()) train_count = data.size();
  std::span<const Instance> train_set(data.data(), train_count);
  double last = 0.0;
  auto model = train_bce(train_set, cfg, [&](int, double loss) { last = loss; });
  std::vector<ScoredSample> held;
  for (std::size_t i = train_count; i < data.size(); ++i)
    if (!relevant_indices(data[i].y).empty()) held.push_back({model.score(data[i].x), data[i].y});
  std::cout << "trained " << model.architecture() << " scorer on " << train_count
            << " instances, final loss " << last << "\n";
  if (held.size() >= 1 && model.output_dim() >= 3)
    std::cout << "held-out sample-mean AP@3 " << map_at_k(held, 3) << " over " << held.size()
              << " instances\n";
  save_scorer(out, model);
  return 0;
}

struct AttackArgs {
  std::string data, victim, method = "tkmia", stop = "c1_only";
  std::size_t index = 0, m = 0;
  std::vector<std::size_t> specified, categories;
  AttackConfig cfg;
  std::uint64_t seed = 0;
};

int attack(const AttackArgs& a) {
  const auto data = load_dataset(a.data);
  const auto victim = load_scorer(a.victim);
  if (a.index >= data.size()) throw std::out_of_range("instance index out of range");
  const auto& inst = data[a.index];
  IndexSet s = a.specified;
  if (s.empty() && !a.categories.empty()) {
    auto picked = select_global(std::span<const Instance>(&inst, 1), a.categories);
    if (picked.empty()) throw std::invalid_argument("instance has no label in the categories");
    s = picked.front().specified;
  }
  if (s.empty() && a.m > 0) s = select_random(inst, a.m, a.seed);
  if (s.empty()) throw std::invalid_argument("give --specified, --categories or --m");
  auto cfg = a.cfg;
  cfg.stop = stop_mode_from_string(a.stop);
  AttackOutcome o = a.method == "tkmia"
                        ? tkmia_attack(victim, inst, s, cfg, a.index)
                        : run_baseline(victim, inst, s, {baseline_from_string(a.method), cfg}, a.index);
  std::cout << to_json(o).dump() << "\n";
  return 0;
}

int report(const std::string& config_path, std::optional<std::uint64_t> seed) {
  auto cfg = load_config(config_path);
  if (seed) cfg.seed = *seed;
  auto result = run_experiment_files(cfg);
  std::cout << report_csv(result);
  return 0;
}

int check(std::uint64_t seed) {
  bool ok = true;
  for (const auto& r : run_self_checks(seed)) {
    std::cout << (r.pass ? "PASS " : "FAIL ") << r.name << ": " << r.detail << "\n";
    ok = ok && r.pass;
  }
  std::cout << (ok ? "all checks passed" : "some checks failed") << "\n";
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Top-k measure-imperceptible attacks on multi-label scorers"};
  app.require_subcommand(1);

  SyntheticSpec spec;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic multi-label dataset");
  gen->add_option("--out", gen_out, "output JSONL path")->required();
  gen->add_option("--n", spec.n, "instance count");
  gen->add_option("--d", spec.d, "feature dimension");
  gen->add_option("--c", spec.c, "class count");
  gen->add_option("--mean-relevant", spec.mean_relevant, "mean relevant labels per instance");
  gen->add_option("--correlation", spec.correlation, "label correlation strength in [0,1]");
  gen->add_option("--noise", spec.noise, "feature noise level");
  gen->add_option("--seed", spec.seed, "random seed");

  TrainConfig tcfg;
  std::string train_data, train_out, hidden_act = "tanh";
  std::size_t train_count = 0;
  auto* tr = app.add_subcommand("train", "train a victim scorer with binary cross-entropy");
  tr->add_option("--data", train_data, "dataset JSONL")->required();
  tr->add_option("--out", train_out, "output scorer path")->required();
  tr->add_option("--arch", tcfg.architecture, "affine or mlp");
  tr->add_option("--hidden", tcfg.hidden, "hidden units (mlp)");
  tr->add_option("--hidden-activation", hidden_act, "tanh, relu or identity");
  tr->add_option("--epochs", tcfg.epochs);
  tr->add_option("--lr", tcfg.learning_rate);
  tr->add_option("--momentum", tcfg.momentum);
  tr->add_option("--batch", tcfg.batch_size);
  tr->add_option("--weight-decay", tcfg.weight_decay);
  tr->add_option("--train-count", train_count, "train on the first N instances (0 = all)");
  tr->add_option("--seed", tcfg.seed, "random seed");

  AttackArgs aa;
  auto* at = app.add_subcommand("attack", "attack one instance and print the outcome as JSON");
  at->add_option("--data", aa.data, "dataset JSONL")->required();
  at->add_option("--victim", aa.victim, "scorer file")->required();
  at->add_option("--index", aa.index, "instance index");
  at->add_option("--method", aa.method, "tkmia, ml_cw_u or tkml_ap_u");
  at->add_option("--specified", aa.specified, "explicit specified labels");
  at->add_option("--categories", aa.categories, "global selection categories");
  at->add_option("--m", aa.m, "random selection size");
  at->add_option("--k", aa.cfg.k);
  at->add_option("--eta", aa.cfg.eta);
  at->add_option("--alpha", aa.cfg.alpha);
  at->add_option("--momentum", aa.cfg.momentum);
  at->add_option("--max-iter", aa.cfg.max_iter);
  at->add_option("--delta", aa.cfg.delta_threshold);
  at->add_option("--stop-mode", aa.stop, "c1_only or strict");
  at->add_option("--seed", aa.seed, "random seed for --m selection");

  std::string config_path;
  std::optional<std::uint64_t> report_seed;
  auto* rp = app.add_subcommand("report", "run an experiment config and write CSV/JSONL");
  rp->add_option("config", config_path, "experiment config JSON")->required();
  rp->add_option("--seed", report_seed, "override the config seed");

  std::uint64_t check_seed = 0;
  auto* ck = app.add_subcommand("check", "run the built-in property checks");
  ck->add_option("--seed", check_seed, "random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) return gen_data(spec, gen_out);
    if (*tr) {
      tcfg.hidden_activation = activation_from_string(hidden_act);
      return train(train_data, train_out, tcfg, train_count);
    }
    if (*at) return attack(aa);
    if (*rp) return report(config_path, report_seed);
    if (*ck) return check(check_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
