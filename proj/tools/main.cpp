#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "fp/adv.hpp"
#include "fp/run.hpp"
#include "fp/util.hpp"

namespace fs = std::filesystem;
using namespace fp;

namespace {

RunConfig config_of_run(const std::string& run_dir) {
  std::string path = (fs::path(run_dir) / "config.txt").string();
  check(fs::exists(path), cat("no config.txt under ", run_dir));
  RunConfig cfg = parse_config_text(read_text_file(path));
  cfg.validate();
  return cfg;
}

// every client's holdout rows, fleet order, optionally capped
Dataset pooled_validation(const std::vector<Shard>& shards, int cap) {
  Dataset pool;
  pool.sample_shape = shards.at(0).val.sample_shape;
  pool.classes = shards[0].val.classes;
  for (const Shard& sh : shards)
    for (int i = 0; i < sh.val.n(); ++i) {
      if (cap > 0 && pool.n() >= cap) return pool;
      pool.append_row(sh.val, i);
    }
  return pool;
}

int cmd_partition(const std::string& config_path) {
  RunConfig cfg = load_config(config_path);
  RunSetup setup = prepare_run(cfg);
  std::cout << "preset " << cfg.preset << ", memory floor " << setup.r_min << " bytes\n";
  std::cout << "module  atoms      mem_bytes      train_flops  budget_rounds\n";
  for (size_t i = 0; i < setup.part.modules.size(); ++i) {
    const ModuleCost& mc = setup.part.modules[i];
    printf("%6zu  %3d..%-3d  %9lld  %15lld  %13d\n", i + 1, mc.atom_lo, mc.atom_hi,
           (long long)mc.mem_bytes, (long long)mc.flops, setup.budget[i]);
  }
  double p_min = min_performance(setup.fleet);
  std::cout << "fleet: " << setup.fleet.size() << " clients, regime " << cfg.regime
            << ", base performance floor " << fmt_double(p_min) << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, bool quiet) {
  RunConfig cfg = load_config(config_path);
  auto printer = [&](const RoundRecord& r) {
    if (quiet) return;
    std::cout << "round " << r.round << " stage " << r.stage << " eps "
              << fmt_double(r.epsilon) << " alpha " << fmt_double(r.alpha) << " clean "
              << fmt_double(r.clean) << " adv " << fmt_double(r.adv) << " assigned ";
    for (size_t i = 0; i < r.assigned.size(); ++i)
      std::cout << (i ? "|" : "") << r.assigned[i].first << ":" << r.assigned[i].second;
    std::cout << "\n";
  };
  RunResult res = run(cfg, printer);
  std::cout << "finished " << res.stages.size() << " stages in " << res.rounds.size()
            << " rounds\n";
  if (!res.rounds.empty()) {
    const RoundRecord& last = res.rounds.back();
    std::cout << "final clean " << fmt_double(last.clean) << ", adv " << fmt_double(last.adv)
              << "\n";
  }
  std::cout << "artifacts under " << cfg.run_dir << "\n";
  return 0;
}

int cmd_evaluate(const std::string& run_dir, int steps, double epsilon, int depth) {
  RunConfig cfg = config_of_run(run_dir);
  RunSetup setup = prepare_run(cfg);
  Checkpoint ck = load_checkpoint(run_dir);
  int M = ck.bb.M();
  if (depth == 0) depth = M;
  check(depth >= 1 && depth <= M, cat("depth must be in 1..", M));
  AttackCfg acfg;
  acfg.norm = Norm::Linf;
  acfg.epsilon = epsilon >= 0 ? epsilon : cfg.epsilon0;
  acfg.steps = steps > 0 ? steps : cfg.pgd_eval_steps;
  Rng rng(derive_seed(cfg.seed, Stream::TestAttack));
  EvalResult r = evaluate(ck.bb, depth, setup.test.full_x(), setup.test.y, acfg, rng);
  std::cout << "test samples " << r.n << ", depth " << depth << ", pgd steps " << acfg.steps
            << ", epsilon " << fmt_double(acfg.epsilon) << "\n";
  std::cout << "clean " << fmt_double(r.clean) << "\n";
  std::cout << "adv " << fmt_double(r.adv) << "\n";
  if (!ck.finished) std::cout << "note: run is unfinished (stopped before round " << ck.round
                              << " of stage " << ck.stage << ")\n";
  return 0;
}

int cmd_report(const std::string& run_dir) {
  std::cout << render_report(run_dir);
  return 0;
}

int cmd_certify(const std::string& run_dir, double mu, int samples, int steps) {
  RunConfig cfg = config_of_run(run_dir);
  RunSetup setup = prepare_run(cfg);
  Checkpoint ck = load_checkpoint(run_dir);
  int M = ck.bb.M();
  if (mu < 0) mu = cfg.mu_zero ? 0.0 : cfg.mu;
  if (steps <= 0) steps = cfg.pgd_eval_steps;
  Dataset pool = pooled_validation(setup.shards, samples);
  Tensor x = pool.full_x();
  std::cout << "pooled holdout: " << pool.n() << " samples, mu " << fmt_double(mu) << "\n";

  std::vector<StageRecord> stages;
  std::string modules_path = (fs::path(run_dir) / "modules.csv").string();
  if (fs::exists(modules_path)) stages = read_modules_csv(modules_path);
  auto epsilon_entering = [&](int m) -> double {  // feature budget used against module m
    for (const StageRecord& s : stages)
      if (s.stage == m - 1) return s.epsilon_next;
    return -1;
  };

  if (M == 1) std::cout << "single module: no feature-space stages to certify\n";
  for (int m = 2; m <= M; ++m) {
    if (!ck.bb.module(m - 1).frozen) {
      std::cout << "module " << m << ": prefix not frozen yet, skipped\n";
      continue;
    }
    double eps = epsilon_entering(m);
    if (eps < 0) {
      std::cout << "module " << m << ": no recorded perturbation budget, skipped\n";
      continue;
    }
    AttackCfg acfg;
    acfg.norm = Norm::L2;
    acfg.epsilon = eps;
    acfg.steps = steps;
    Tensor z_prev = forward_frozen_prefix(ck.bb, x, m);
    Rng rng(derive_seed(cfg.seed, Stream::Certify, (uint64_t)m));
    RobustnessCertificate cert = certify_displacement(ck.bb, m, z_prev, pool.y, mu, acfg, rng);
    std::string out = (fs::path(run_dir) / cat("certificate_m", m, ".csv")).string();
    write_certificate_csv(out, cert);
    std::cout << "module " << m << ": epsilon " << fmt_double(eps) << ", "
              << cert.rows.size() << " rows, " << cert.violations << " bound violations -> "
              << out << "\n";
  }

  for (int m = 1; m < M; ++m) {
    Rng rng(derive_seed(cfg.seed, Stream::Diag, (uint64_t)m));
    ConsistencyReport rep = gradient_inconsistency(ck.bb, m, x, pool.y, mu, rng);
    std::string out = (fs::path(run_dir) / cat("consistency_m", m, ".csv")).string();
    write_consistency_csv(out, rep);
    std::cout << "module " << m << ": grad gap mean " << fmt_double(rep.mean) << ", median "
              << fmt_double(rep.median) << ", curvature " << fmt_double(rep.beta_module)
              << " vs joint " << fmt_double(rep.beta_joint) << " -> " << out << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cascade federated adversarial training simulator"};
  app.require_subcommand(1);

  std::string config_path, run_dir;
  bool quiet = false;
  int steps = 0, depth = 0, samples = 0;
  double epsilon = -1, mu = -1;

  CLI::App* part = app.add_subcommand("partition", "print the module split for a config");
  part->add_option("config", config_path, "run config file")->required();

  CLI::App* train = app.add_subcommand("train", "run (or resume) a full training run");
  train->add_option("config", config_path, "run config file")->required();
  train->add_flag("--quiet", quiet, "suppress per-round lines");

  CLI::App* eval = app.add_subcommand("evaluate", "attack the checkpoint on held-out test data");
  eval->add_option("checkpoint", run_dir, "run directory holding the checkpoint")->required();
  eval->add_option("--pgd-steps", steps, "attack steps (default: eval steps from the config)");
  eval->add_option("--epsilon", epsilon, "input attack budget (default: trained budget)");
  eval->add_option("--depth", depth, "exit head to score, 1-based (default: deepest)");

  CLI::App* report = app.add_subcommand("report", "summarize a run directory");
  report->add_option("run_dir", run_dir, "run directory")->required();

  CLI::App* certify = app.add_subcommand("certify", "robustness bound and gradient-gap checks");
  certify->add_option("checkpoint", run_dir, "run directory holding the checkpoint")->required();
  certify->add_option("--mu", mu, "regularizer weight (default: from the config)");
  certify->add_option("--samples", samples, "cap on pooled holdout samples (0 = all)");
  certify->add_option("--pgd-steps", steps, "attack steps (default: eval steps from the config)");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*part) return cmd_partition(config_path);
    if (*train) return cmd_train(config_path, quiet);
    if (*eval) return cmd_evaluate(run_dir, steps, epsilon, depth);
    if (*report) return cmd_report(run_dir);
    if (*certify) return cmd_certify(run_dir, mu, samples, steps);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
