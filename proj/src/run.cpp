#include "fp/run.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "fp/util.hpp"

namespace fp {

namespace fs = std::filesystem;

namespace {

int parse_i(const std::string& field, const std::string& v) {
  try {
    size_t pos = 0;
    int out = std::stoi(v, &pos);
    check(pos == v.size(), "");
    return out;
  } catch (...) {
    throw std::invalid_argument(cat("bad ", field, ": '", v, "'"));
  }
}

double parse_d(const std::string& field, const std::string& v) {
  check(!v.empty(), cat("bad ", field, ": empty"));
  char* end = nullptr;
  double out = std::strtod(v.c_str(), &end);
  check(end == v.c_str() + v.size(), cat("bad ", field, ": '", v, "'"));
  return out;
}

void append_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::app);
  check(f.good(), cat("cannot open for append: ", path));
  f << text;
  check(f.good(), cat("write failed: ", path));
}

std::string assigned_str(const std::vector<std::pair<int, int>>& a) {
  std::ostringstream os;
  for (size_t i = 0; i < a.size(); ++i) {
    if (i) os << "|";
    os << a[i].first << ":" << a[i].second;
  }
  return os.str();
}

std::vector<std::pair<int, int>> parse_assigned(const std::string& s) {
  std::vector<std::pair<int, int>> out;
  for (const std::string& tok : split(s, '|')) {
    if (tok.empty()) continue;
    auto kv = split(tok, ':');
    check(kv.size() == 2, cat("bad assignment histogram: '", s, "'"));
    out.emplace_back(parse_i("histogram module", kv[0]), parse_i("histogram count", kv[1]));
  }
  return out;
}

std::vector<std::pair<int, int>> plan_histogram(const RoundPlan& plan) {
  std::map<int, int> counts;
  for (int mk : plan.last_module) ++counts[mk];
  return {counts.begin(), counts.end()};
}

constexpr const char* kRoundsHeader = "round,stage,epsilon,alpha,clean,adv,assigned";
constexpr const char* kResourcesHeader =
    "round,client,stage,mem_avail,perf_avail,assigned_last,mem_need,flop_need,flop_budget";
constexpr const char* kModulesHeader = "stage,rounds_used,ref_clean,ref_adv,mean_dstar,epsilon_next";

struct RunDir {
  std::string dir;
  std::string path(const char* name) const { return (fs::path(dir) / name).string(); }
  void event(int t, int m, const char* phase) const {
    append_text(path("events.log"), cat("round ", t, " stage ", m, " ", phase, "\n"));
  }
  void round_row(const RoundRecord& r) const {
    append_text(path("rounds.csv"),
                cat(r.round, ",", r.stage, ",", fmt_double(r.epsilon), ",", fmt_double(r.alpha),
                    ",", fmt_double(r.clean), ",", fmt_double(r.adv), ",",
                    assigned_str(r.assigned), "\n"));
  }
  void module_row(const StageRecord& s) const {
    append_text(path("modules.csv"),
                cat(s.stage, ",", s.rounds_used, ",", fmt_double(s.ref_clean), ",",
                    fmt_double(s.ref_adv), ",", fmt_double(s.mean_dstar), ",",
                    fmt_double(s.epsilon_next), "\n"));
  }
};

void init_run_dir(const RunDir& rd, const RunConfig& cfg, const RunSetup& setup) {
  fs::create_directories(rd.dir);
  write_text_file(rd.path("config.txt"), render_config(cfg));
  {
    std::ostringstream os;
    os << "module,atom_lo,atom_hi,mem_bytes,flops,budget_rounds\n";
    for (size_t i = 0; i < setup.part.modules.size(); ++i) {
      const ModuleCost& mc = setup.part.modules[i];
      os << i + 1 << "," << mc.atom_lo << "," << mc.atom_hi << "," << mc.mem_bytes << ","
         << mc.flops << "," << setup.budget[i] << "\n";
    }
    write_text_file(rd.path("partition.csv"), os.str());
  }
  {
    std::ostringstream os;
    os << "client,profile,base_memory,base_performance,q,train_n,val_n\n";
    for (size_t k = 0; k < setup.fleet.size(); ++k) {
      const ClientRecord& c = setup.fleet[k];
      os << c.id << "," << c.profile.name << "," << c.profile.base_memory << ","
         << fmt_double(c.profile.base_performance) << "," << fmt_double(c.q) << ","
         << setup.shards[k].train.n() << "," << setup.shards[k].val.n() << "\n";
    }
    write_text_file(rd.path("clients.csv"), os.str());
  }
  write_text_file(rd.path("rounds.csv"), cat(kRoundsHeader, "\n"));
  write_text_file(rd.path("resources.csv"), cat(kResourcesHeader, "\n"));
  write_text_file(rd.path("modules.csv"), cat(kModulesHeader, "\n"));
  write_text_file(rd.path("events.log"), "");
}

void resources_rows(const RunDir& rd, int t, int m, const RunSetup& setup, const Backbone& bb,
                    const RoundPlan& plan, int attack_steps) {
  double p_min = min_performance(setup.fleet);
  int lo = bb.module(m).atom_lo;
  int64_t flops_m = train_flops(bb.atoms, lo, bb.module(m).atom_hi, setup.cm, attack_steps);
  std::ostringstream os;
  for (size_t k = 0; k < setup.fleet.size(); ++k) {
    const ClientRecord& c = setup.fleet[k];
    int mk = plan.last_module[k];
    int hi = bb.module(mk).atom_hi;
    os << t << "," << c.id << "," << m << "," << c.mem_avail << "," << fmt_double(c.perf_avail)
       << "," << mk << "," << module_mem_req(bb.atoms, lo, hi, bb.classes, setup.cm) << ","
       << train_flops(bb.atoms, lo, hi, setup.cm, attack_steps) << ","
       << fmt_double(c.perf_avail / p_min * (double)flops_m) << "\n";
  }
  append_text(rd.path("resources.csv"), os.str());
}

// drops data rows whose leading integer field is >= cutoff
void trim_by_first_field(const std::string& path, int cutoff, const std::string& header) {
  if (!fs::exists(path)) return;
  std::string text = read_text_file(path);
  std::ostringstream os;
  bool saw_header = false;
  for (const std::string& raw : split(text, '\n')) {
    std::string line = trim(raw);
    if (line.empty()) continue;
    if (!saw_header && !header.empty()) {
      check(line == header, cat(path, ": unexpected header '", line, "'"));
      os << line << "\n";
      saw_header = true;
      continue;
    }
    std::string first = header.empty() ? split(line, ' ')[1] : split(line, ',')[0];
    if (parse_i("row index", first) < cutoff) os << line << "\n";
  }
  write_text_file(path, os.str());
}

void trim_events(const std::string& path, int cutoff) {
  if (!fs::exists(path)) return;
  std::string text = read_text_file(path);
  std::ostringstream os;
  for (const std::string& raw : split(text, '\n')) {
    std::string line = trim(raw);
    if (line.empty()) continue;
    auto toks = split(line, ' ');
    check(toks.size() >= 2 && toks[0] == "round", cat(path, ": unexpected line '", line, "'"));
    if (parse_i("event round", toks[1]) < cutoff) os << line << "\n";
  }
  write_text_file(path, os.str());
}

}  // namespace

RunSetup prepare_run(const RunConfig& cfg) {
  cfg.validate();
  RunSetup s;
  if (cfg.dataset == "blobs") {
    s.train = make_blobs(cfg.classes, cfg.blob_dim, cfg.train_per_class,
                         derive_seed(cfg.seed, Stream::DataGen), cfg.blob_sigma);
    s.test = make_blobs(cfg.classes, cfg.blob_dim, cfg.test_per_class,
                        derive_seed(cfg.seed, Stream::TestData), cfg.blob_sigma);
  } else if (cfg.dataset == "pattern") {
    s.train = make_pattern_images(cfg.classes, cfg.train_per_class,
                                  derive_seed(cfg.seed, Stream::DataGen));
    s.test = make_pattern_images(cfg.classes, cfg.test_per_class,
                                 derive_seed(cfg.seed, Stream::TestData));
  } else {
    s.train = load_idx(cfg.idx_train_images, cfg.idx_train_labels);
    s.test = load_idx(cfg.idx_test_images, cfg.idx_test_labels);
    check(s.train.classes == cfg.classes,
          cat("config says ", cfg.classes, " classes, training labels span ", s.train.classes));
    check(s.test.classes <= s.train.classes, "test labels fall outside the training classes");
    s.test.classes = s.train.classes;
    check(s.train.sample_shape == s.test.sample_shape, "train and test image shapes differ");
  }

  s.shards = partition_20_80(s.train, cfg.clients, cfg.seed);
  for (Shard& sh : s.shards) split_validation(sh, cfg.val_fraction, cfg.seed);
  recompute_weights(s.shards);

  s.cm = CostModel{8, 1, cfg.batch_size};
  std::vector<Atom> atoms = make_preset_atoms(cfg.preset, s.train.sample_shape,
                                              derive_seed(cfg.seed, Stream::ParamInit));
  int64_t whole = module_mem_req(atoms, 0, (int)atoms.size() - 1, cfg.classes, s.cm);
  if (cfg.mode == "joint-fat") s.r_min = whole;
  else if (cfg.r_min_fraction > 0) s.r_min = (int64_t)llround(cfg.r_min_fraction * (double)whole);
  else s.r_min = cfg.r_min_bytes;
  s.part = greedy_partition(atoms, cfg.classes, s.r_min, s.cm, cfg.pgd_train_steps);

  int M = s.part.module_count();
  if (!cfg.rounds_per_module.empty()) {
    check((int)cfg.rounds_per_module.size() == M,
          cat("rounds_per_module lists ", cfg.rounds_per_module.size(), " budgets for ", M,
              " modules"));
    s.budget = cfg.rounds_per_module;
  } else {
    int64_t total = 0;
    for (const ModuleCost& mc : s.part.modules) total += mc.flops;
    for (const ModuleCost& mc : s.part.modules)
      s.budget.push_back(std::max(
          1, (int)llround((double)cfg.rounds_total * (double)mc.flops / (double)total)));
  }

  FleetRegime regime = cfg.regime == "balanced" ? FleetRegime::Balanced : FleetRegime::Unbalanced;
  s.fleet = sample_fleet(default_profiles(s.r_min), cfg.clients, regime, cfg.seed);
  for (size_t k = 0; k < s.fleet.size(); ++k) s.fleet[k].q = s.shards[k].q;
  return s;
}

Backbone fresh_backbone(const RunConfig& cfg, const RunSetup& setup) {
  Backbone bb;
  bb.preset = cfg.preset;
  bb.input_shape = setup.train.sample_shape;
  bb.classes = setup.train.classes;
  bb.atoms = make_preset_atoms(cfg.preset, bb.input_shape, derive_seed(cfg.seed, Stream::ParamInit));
  install_modules(bb, setup.part.ranges(), derive_seed(cfg.seed, Stream::AuxInit));
  return bb;
}

bool module_converged(const std::vector<double>& adv_history, int budget, int patience,
                      double min_delta) {
  check(!adv_history.empty(), "convergence needs at least one round of history");
  check(budget >= 1 && patience >= 1 && min_delta >= 0, "bad convergence knobs");
  if ((int)adv_history.size() >= budget) return true;
  if ((int)adv_history.size() <= patience) return false;
  double best_before = -1.0;
  for (size_t i = 0; i + patience < adv_history.size(); ++i)
    best_before = std::max(best_before, adv_history[i]);
  double best_tail = -1.0;
  for (size_t i = adv_history.size() - patience; i < adv_history.size(); ++i)
    best_tail = std::max(best_tail, adv_history[i]);
  return best_tail < best_before + min_delta;
}

std::pair<double, double> validate_round(const Backbone& bb, int depth,
                                         const std::vector<Shard>& shards, const RunConfig& cfg,
                                         int round, std::vector<EvalResult>* per_client) {
  AttackCfg ecfg;
  ecfg.norm = Norm::Linf;
  ecfg.epsilon = cfg.epsilon0;
  ecfg.steps = cfg.pgd_eval_steps;
  std::vector<EvalResult> reports;
  std::vector<double> q;
  for (size_t k = 0; k < shards.size(); ++k) {
    Rng rng(derive_seed(cfg.seed, Stream::ValAttack, (uint64_t)round, k));
    reports.push_back(report_validation(bb, depth, shards[k], ecfg, rng));
    q.push_back(shards[k].q);
  }
  auto pooled = aggregate_validation(reports, q);
  if (per_client) *per_client = std::move(reports);
  return pooled;
}

double measure_mean_dstar(const Backbone& bb, int stage, const std::vector<Shard>& shards,
                          const RunConfig& cfg, double epsilon_in) {
  AttackCfg dcfg;
  dcfg.norm = stage == 1 ? Norm::Linf : Norm::L2;
  dcfg.epsilon = epsilon_in;
  dcfg.steps = cfg.pgd_eval_steps;
  double num = 0, den = 0;
  for (size_t k = 0; k < shards.size(); ++k) {
    Rng rng(derive_seed(cfg.seed, Stream::Dstar, (uint64_t)stage, k));
    DstarResult r = report_dstar(bb, stage, shards[k], dcfg, rng);
    num += shards[k].q * r.mean;
    den += shards[k].q;
  }
  check(den > 0, "displacement weights sum to zero");
  return num / den;
}

std::vector<RoundRecord> read_rounds_csv(const std::string& path) {
  std::vector<RoundRecord> out;
  bool saw_header = false;
  for (const std::string& raw : split(read_text_file(path), '\n')) {
    std::string line = trim(raw);
    if (line.empty()) continue;
    if (!saw_header) {
      check(line == kRoundsHeader, cat(path, ": unexpected header '", line, "'"));
      saw_header = true;
      continue;
    }
    auto f = split(line, ',');
    check(f.size() == 7, cat(path, ": bad row '", line, "'"));
    RoundRecord r;
    r.round = parse_i("round", f[0]);
    r.stage = parse_i("stage", f[1]);
    r.epsilon = parse_d("epsilon", f[2]);
    r.alpha = parse_d("alpha", f[3]);
    r.clean = parse_d("clean", f[4]);
    r.adv = parse_d("adv", f[5]);
    r.assigned = parse_assigned(f[6]);
    out.push_back(std::move(r));
  }
  check(saw_header, cat(path, ": empty file"));
  return out;
}

std::vector<StageRecord> read_modules_csv(const std::string& path) {
  std::vector<StageRecord> out;
  bool saw_header = false;
  for (const std::string& raw : split(read_text_file(path), '\n')) {
    std::string line = trim(raw);
    if (line.empty()) continue;
    if (!saw_header) {
      check(line == kModulesHeader, cat(path, ": unexpected header '", line, "'"));
      saw_header = true;
      continue;
    }
    auto f = split(line, ',');
    check(f.size() == 6, cat(path, ": bad row '", line, "'"));
    StageRecord s;
    s.stage = parse_i("stage", f[0]);
    s.rounds_used = parse_i("rounds_used", f[1]);
    s.ref_clean = parse_d("ref_clean", f[2]);
    s.ref_adv = parse_d("ref_adv", f[3]);
    s.mean_dstar = parse_d("mean_dstar", f[4]);
    s.epsilon_next = parse_d("epsilon_next", f[5]);
    out.push_back(s);
  }
  check(saw_header, cat(path, ": empty file"));
  return out;
}

RunResult run(const RunConfig& cfg, const std::function<void(const RoundRecord&)>& on_round) {
  RunSetup setup = prepare_run(cfg);
  int M = setup.part.module_count();
  RunDir rd{cfg.run_dir};

  Checkpoint ck;
  std::vector<RoundRecord> rounds;
  std::vector<StageRecord> stages;
  std::vector<double> hist;
  double last_clean = 0, last_adv = 0;

  if (checkpoint_exists(cfg.run_dir)) {
    check(read_text_file(rd.path("config.txt")) == render_config(cfg),
          cat(cfg.run_dir, " belongs to a different configuration"));
    ck = load_checkpoint(cfg.run_dir);
    if (!ck.finished) {
      trim_by_first_field(rd.path("rounds.csv"), ck.round, kRoundsHeader);
      trim_by_first_field(rd.path("resources.csv"), ck.round, kResourcesHeader);
      trim_by_first_field(rd.path("modules.csv"), ck.stage, kModulesHeader);
      trim_events(rd.path("events.log"), ck.round);
    }
    rounds = read_rounds_csv(rd.path("rounds.csv"));
    stages = read_modules_csv(rd.path("modules.csv"));
    for (const RoundRecord& r : rounds)
      if (r.stage == ck.stage) {
        hist.push_back(r.adv);
        last_clean = r.clean;
        last_adv = r.adv;
      }
    if (ck.finished) return {ck.bb, rounds, stages};
  } else {
    ck.bb = fresh_backbone(cfg, setup);
    ck.round = 0;
    ck.stage = 1;
    ck.stage_start = 0;
    ck.schedule.alpha = cfg.alpha_init;
    ck.schedule.epsilon = cfg.epsilon0;
    ck.schedule.delta = cfg.delta;
    init_run_dir(rd, cfg, setup);
  }

  OptimCfg opt;
  opt.lr = cfg.lr;
  opt.momentum = cfg.momentum;
  opt.iterations = cfg.local_iterations;
  opt.batch_size = cfg.batch_size;
  AttackCfg tcfg;
  tcfg.steps = cfg.pgd_train_steps;  // norm and budget are the client's call
  double mu_eff = cfg.mu_zero ? 0.0 : cfg.mu;
  std::vector<double> q;
  for (const Shard& sh : setup.shards) q.push_back(sh.q);

  while (ck.stage <= M) {
    int m = ck.stage;
    int t = ck.round;

    if (m > 1 && !cfg.apa_off && ck.schedule.has_reference && !hist.empty())
      adjust_alpha(ck.schedule, last_clean, last_adv);
    rd.event(t, m, "adjust");

    tick_resources(setup.fleet, t, cfg.seed, setup.r_min);
    RoundPlan plan = assign_modules(ck.bb, m, setup.fleet, setup.cm, cfg.pgd_train_steps, t);
    if (cfg.dma_off)
      for (int& mk : plan.last_module) mk = m;
    rd.event(t, m, "assign");
    resources_rows(rd, t, m, setup, ck.bb, plan, cfg.pgd_train_steps);

    std::vector<LocalUpdate> updates;
    for (size_t k = 0; k < setup.shards.size(); ++k)
      updates.push_back(local_adversarial_train(
          ck.bb, m, plan.last_module[k], setup.shards[k], ck.schedule.epsilon, mu_eff, tcfg, opt,
          derive_seed(cfg.seed, Stream::LocalTrain, (uint64_t)t, k)));
    rd.event(t, m, "train");

    aggregate_backbone(ck.bb, updates, q, plan);
    aggregate_aux(ck.bb, updates, q, plan);
    rd.event(t, m, "aggregate");

    auto [clean, adv] = validate_round(ck.bb, m, setup.shards, cfg, t);
    rd.event(t, m, "validate");

    RoundRecord rec{t, m, ck.schedule.epsilon, ck.schedule.alpha, clean, adv,
                    plan_histogram(plan)};
    rounds.push_back(rec);
    rd.round_row(rec);
    if (on_round) on_round(rec);
    hist.push_back(adv);
    last_clean = clean;
    last_adv = adv;
    ck.round = t + 1;

    if (module_converged(hist, setup.budget[(size_t)m - 1], cfg.patience, cfg.min_delta)) {
      double chance = 1.0 / ck.bb.classes;
      if (clean < chance) {
        rd.event(t, m, "abort");
        throw std::runtime_error(cat("module ", m, " stuck at clean accuracy ",
                                     fmt_double(clean), ", under the chance level ",
                                     fmt_double(chance), ", after ", hist.size(),
                                     " rounds; aborting"));
      }
      ck.bb.module(m).frozen = true;
      rd.event(t, m, "freeze");
      StageRecord sr{m, (int)hist.size(), clean, adv, 0.0, 0.0};
      if (m < M) {
        sr.mean_dstar = measure_mean_dstar(ck.bb, m, setup.shards, cfg, ck.schedule.epsilon);
        rd.event(t, m, "measure");
        PerturbationSchedule next;
        next.alpha = cfg.alpha_init;
        next.delta = cfg.delta;
        if (adv > 0) next.set_reference(clean, adv);  // degenerate stage idles the scale controller
        next.set_dstar(sr.mean_dstar);
        sr.epsilon_next = next.epsilon;
        ck.schedule = next;
      }
      stages.push_back(sr);
      rd.module_row(sr);
      hist.clear();
      last_clean = last_adv = 0;
      ck.stage = m + 1;
      ck.stage_start = ck.round;
      ck.finished = ck.stage > M;
    }
    save_checkpoint(cfg.run_dir, ck);
  }
  return {ck.bb, rounds, stages};
}

std::string render_report(const std::string& run_dir) {
  std::ostringstream os;
  os << "run directory: " << run_dir << "\n";
  auto have = [&](const char* name) {
    bool ok = fs::exists(fs::path(run_dir) / name);
    if (!ok) os << "missing " << name << "\n";
    return ok;
  };

  if (have("config.txt")) {
    RunConfig cfg = parse_config_text(read_text_file((fs::path(run_dir) / "config.txt").string()));
    os << "mode " << cfg.mode << ", preset " << cfg.preset << ", dataset " << cfg.dataset
       << ", clients " << cfg.clients << ", seed " << cfg.seed << "\n";
    if (cfg.apa_off || cfg.dma_off || cfg.mu_zero) {
      os << "ablations:";
      if (cfg.apa_off) os << " apa_off";
      if (cfg.dma_off) os << " dma_off";
      if (cfg.mu_zero) os << " mu_zero";
      os << "\n";
    }
  }

  if (have("partition.csv")) {
    std::string text = read_text_file((fs::path(run_dir) / "partition.csv").string());
    int n = 0;
    for (const std::string& raw : split(text, '\n'))
      if (!trim(raw).empty()) ++n;
    os << "modules: " << (n > 0 ? n - 1 : 0) << "\n";
  }

  std::vector<RoundRecord> rounds;
  if (have("rounds.csv"))
    rounds = read_rounds_csv((fs::path(run_dir) / "rounds.csv").string());
  if (rounds.empty()) {
    os << "no rounds recorded\n";
    return os.str();
  }

  os << "rounds: " << rounds.size() << "\n";
  std::map<int, std::vector<const RoundRecord*>> by_stage;
  for (const RoundRecord& r : rounds) by_stage[r.stage].push_back(&r);
  for (const auto& [stage, rs] : by_stage) {
    double alo = rs[0]->alpha, ahi = rs[0]->alpha;
    int steps = 0;
    for (size_t i = 0; i < rs.size(); ++i) {
      alo = std::min(alo, rs[i]->alpha);
      ahi = std::max(ahi, rs[i]->alpha);
      if (i && std::abs(rs[i]->alpha - rs[i - 1]->alpha) > 1e-12) ++steps;
    }
    const RoundRecord* lastr = rs.back();
    os << "stage " << stage << ": rounds " << rs.size() << ", epsilon " << fmt_double(lastr->epsilon)
       << ", alpha " << fmt_double(alo) << ".." << fmt_double(ahi) << " (" << steps
       << " adjustments), final clean " << fmt_double(lastr->clean) << ", adv "
       << fmt_double(lastr->adv) << "\n";
  }
  const RoundRecord& last = rounds.back();
  os << "final round " << last.round << ": stage " << last.stage << ", clean "
     << fmt_double(last.clean) << ", adv " << fmt_double(last.adv) << ", assigned "
     << assigned_str(last.assigned) << "\n";

  if (have("modules.csv")) {
    for (const StageRecord& s :
         read_modules_csv((fs::path(run_dir) / "modules.csv").string()))
      os << "frozen stage " << s.stage << ": rounds " << s.rounds_used << ", ref clean "
         << fmt_double(s.ref_clean) << ", ref adv " << fmt_double(s.ref_adv)
         << ", mean displacement " << fmt_double(s.mean_dstar) << ", next epsilon "
         << fmt_double(s.epsilon_next) << "\n";
  }
  have("resources.csv");
  have("events.log");
  have("manifest.txt");

  // trailer lines of any certify output
  auto summarize = [&](const char* prefix, const char* label) {
    int found = 0;
    for (int m = 1; m <= 64; ++m) {
      fs::path p = fs::path(run_dir) / cat(prefix, m, ".csv");
      if (!fs::exists(p)) continue;
      ++found;
      for (const std::string& raw : split(read_text_file(p.string()), '\n')) {
        std::string line = trim(raw);
        if (line.rfind("summary,", 0) == 0)
          os << label << " module " << m << ": " << line.substr(8) << "\n";
      }
    }
    if (!found) os << "no " << label << " files recorded (run certify)\n";
  };
  summarize("certificate_m", "certificate");
  summarize("consistency_m", "gradient gap");
  return os.str();
}

}  // namespace fp
