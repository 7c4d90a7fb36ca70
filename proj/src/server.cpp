#include "fp/server.hpp"

#include <algorithm>
#include <cmath>

#include "fp/util.hpp"

namespace fp {

void PerturbationSchedule::set_reference(double clean, double adv) {
  check(adv > 0.0, cat("reference adversarial accuracy must be positive, got ", adv));
  check(clean >= adv, "reference clean accuracy cannot undercut the adversarial one");
  ref_clean = clean;
  ref_adv = adv;
  has_reference = true;
}

void PerturbationSchedule::set_dstar(double mean) {
  check(mean >= 0.0, cat("mean displacement must be nonnegative, got ", mean));
  mean_dstar = mean;
  epsilon = alpha * mean_dstar;
}

void adjust_alpha(PerturbationSchedule& s, double clean_acc, double adv_acc) {
  check(s.has_reference, "alpha adjustment needs a frozen reference accuracy pair");
  check(clean_acc >= 0.0 && adv_acc >= 0.0, "accuracies cannot be negative");
  double ref_ratio = s.ref_clean / s.ref_adv;
  int dir = 0;
  if (adv_acc <= 0.0) {
    dir = 1;  // gap at infinity: robustness collapsed, train against more
  } else {
    double ratio = clean_acc / adv_acc;
    if (ratio > (1.0 + s.delta) * ref_ratio) dir = 1;
    else if (ratio < (1.0 - s.delta) * ref_ratio) dir = -1;
  }
  double next = s.alpha + 0.1 * dir;
  if (next >= s.alpha_floor - 1e-12 && next <= s.alpha_cap + 1e-12) s.alpha = next;
  s.epsilon = s.alpha * s.mean_dstar;
}

std::vector<int> RoundPlan::s_set(int n) const {
  std::vector<int> out;
  for (size_t k = 0; k < last_module.size(); ++k)
    if (last_module[k] >= n) out.push_back((int)k);
  return out;
}

std::vector<int> RoundPlan::k_set(int n) const {
  std::vector<int> out;
  for (size_t k = 0; k < last_module.size(); ++k)
    if (last_module[k] == n) out.push_back((int)k);
  return out;
}

int max_assignable(int m, int M, const std::vector<int64_t>& group_mem,
                   const std::vector<int64_t>& group_flops, int64_t mem_avail,
                   double perf_ratio) {
  check(m >= 1 && m <= M, cat("stage ", m, " outside 1..", M));
  check((int)group_mem.size() == M - m + 1 && group_mem.size() == group_flops.size(),
        "cost arrays must cover modules m..M");
  check(group_mem[0] <= mem_avail,
        cat("current module needs ", group_mem[0], " bytes but only ", mem_avail,
            " are available"));
  check(perf_ratio >= 1.0, "performance ratio is measured against the fleet minimum");
  double flop_budget = perf_ratio * (double)group_flops[0];
  int best = m;
  for (int j = m; j <= M; ++j) {
    int i = j - m;
    if (group_mem[i] > mem_avail || (double)group_flops[i] > flop_budget) break;
    best = j;
  }
  return best;
}

RoundPlan assign_modules(const Backbone& bb, int m, const std::vector<ClientRecord>& fleet,
                         const CostModel& cm, int attack_steps, int round) {
  check(!fleet.empty(), "cannot plan a round for an empty fleet");
  int M = bb.M();
  check(m >= 1 && m <= M, cat("stage ", m, " outside 1..", M));

  int lo = bb.module(m).atom_lo;
  std::vector<int64_t> group_mem, group_flops;
  for (int j = m; j <= M; ++j) {
    int hi = bb.module(j).atom_hi;
    group_mem.push_back(module_mem_req(bb.atoms, lo, hi, bb.classes, cm));
    group_flops.push_back(train_flops(bb.atoms, lo, hi, cm, attack_steps));
  }

  double p_min = min_performance(fleet);
  RoundPlan plan;
  plan.round = round;
  plan.current_module = m;
  plan.last_module.resize(fleet.size());
  for (size_t k = 0; k < fleet.size(); ++k)
    plan.last_module[k] = max_assignable(m, M, group_mem, group_flops, fleet[k].mem_avail,
                                         fleet[k].perf_avail / p_min);
  return plan;
}

namespace {

std::vector<Tensor> module_param_handles(Backbone& bb, int n) {
  std::vector<Tensor> out;
  const ModuleSpec& ms = bb.module(n);
  for (int a = ms.atom_lo; a <= ms.atom_hi; ++a)
    for (const Tensor& p : bb.atoms[a].params()) out.push_back(p);
  return out;
}

void check_updates(const Backbone& global, const std::vector<LocalUpdate>& updates,
                   const std::vector<double>& q, const RoundPlan& plan) {
  check(updates.size() == q.size() && updates.size() == plan.last_module.size(),
        cat("got ", updates.size(), " updates for ", plan.last_module.size(),
            " planned clients and ", q.size(), " weights"));
  for (size_t k = 0; k < updates.size(); ++k) {
    const LocalUpdate& u = updates[k];
    check(u.client == (int)k, cat("update ", k, " reports client ", u.client));
    check(u.first_module == plan.current_module && u.last_module == plan.last_module[k],
          cat("client ", k, " trained modules [", u.first_module, ", ", u.last_module,
              "] against plan [", plan.current_module, ", ", plan.last_module[k], "]"));
    check((int)u.modules.size() == u.last_module - u.first_module + 1,
          cat("client ", k, " update covers ", u.modules.size(), " modules"));
    check(u.last_module <= global.M(), "assignment beyond the model");
  }
}

// weighted mean into `target`, verbatim copy when every pick agrees bitwise
void pool_values(Tensor target, const std::vector<const std::vector<double>*>& picks,
                 const std::vector<double>& w) {
  const std::vector<double>& first = *picks.front();
  for (const auto* p : picks)
    check(p->size() == target.values().size(), "parameter shape drifted across clients");
  bool all_same = true;
  for (const auto* p : picks)
    if (*p != first) {
      all_same = false;
      break;
    }
  if (all_same) {
    target.values() = first;
    return;
  }
  double wsum = 0;
  for (double v : w) wsum += v;
  check(wsum > 0, "aggregation weights sum to zero");
  std::vector<double>& out = target.values();
  std::fill(out.begin(), out.end(), 0.0);
  for (size_t i = 0; i < picks.size(); ++i) {
    const std::vector<double>& vals = *picks[i];
    for (size_t j = 0; j < out.size(); ++j) out[j] += w[i] * vals[j];
  }
  for (double& v : out) v /= wsum;
}

}  // namespace

void aggregate_backbone(Backbone& global, const std::vector<LocalUpdate>& updates,
                        const std::vector<double>& q, const RoundPlan& plan) {
  check_updates(global, updates, q, plan);
  for (int n = plan.current_module; n <= global.M(); ++n) {
    std::vector<int> s = plan.s_set(n);
    if (s.empty()) continue;
    std::vector<Tensor> target = module_param_handles(global, n);
    for (int k : s)
      check(updates[k].modules[n - plan.current_module].tensors.size() == target.size(),
            cat("client ", k, " module ", n, " carries the wrong tensor count"));
    for (size_t ti = 0; ti < target.size(); ++ti) {
      std::vector<const std::vector<double>*> picks;
      std::vector<double> w;
      for (int k : s) {
        picks.push_back(&updates[k].modules[n - plan.current_module].tensors[ti].values());
        w.push_back(q[k]);
      }
      pool_values(target[ti], picks, w);
    }
  }
}

void aggregate_aux(Backbone& global, const std::vector<LocalUpdate>& updates,
                   const std::vector<double>& q, const RoundPlan& plan) {
  check_updates(global, updates, q, plan);
  for (int n = plan.current_module; n <= global.M(); ++n) {
    std::vector<int> ks = plan.k_set(n);
    if (ks.empty()) continue;  // nobody stopped here: head carries over
    std::vector<const std::vector<double>*> pw, pb;
    std::vector<double> w;
    for (int k : ks) {
      pw.push_back(&updates[k].aux_w.values());
      pb.push_back(&updates[k].aux_b.values());
      w.push_back(q[k]);
    }
    pool_values(global.module(n).aux.W, pw, w);
    pool_values(global.module(n).aux.b, pb, w);
  }
}

std::pair<double, double> aggregate_validation(const std::vector<EvalResult>& reports,
                                               const std::vector<double>& q) {
  check(!reports.empty(), "no validation reports to aggregate");
  check(reports.size() == q.size(),
        cat(reports.size(), " validation reports against ", q.size(), " weights"));
  double qsum = 0, c = 0, a = 0;
  for (size_t k = 0; k < reports.size(); ++k) {
    check(reports[k].n > 0, cat("client ", k, " reported an empty validation set"));
    qsum += q[k];
    c += q[k] * reports[k].clean;
    a += q[k] * reports[k].adv;
  }
  check(qsum > 0, "validation weights sum to zero");
  return {c / qsum, a / qsum};
}

}  // namespace fp
