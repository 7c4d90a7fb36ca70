#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "fp/client.hpp"
#include "fp/fleet.hpp"
#include "fp/part.hpp"

namespace fp {

// Perturbation state for the module currently in training. epsilon is always
// alpha times the measured mean displacement of the frozen predecessor.
struct PerturbationSchedule {
  double alpha = 0.3;
  double epsilon = 0.0;
  double mean_dstar = 0.0;
  double ref_clean = 0.0;  // accuracy pair frozen when the previous stage ended
  double ref_adv = 0.0;
  double delta = 0.05;
  double alpha_floor = 0.1;
  double alpha_cap = 2.0;
  bool has_reference = false;

  void set_reference(double clean, double adv);
  void set_dstar(double mean);
};

// One +/-0.1 alpha step against the reference accuracy ratio: a clean/adv
// ratio drifting above (1+delta) times the reference raises alpha, below
// (1-delta) lowers it. adv = 0 counts as an infinite ratio. Steps that would
// leave [alpha_floor, alpha_cap] are held, so the alpha trace only ever moves
// in exact 0.1 increments.
void adjust_alpha(PerturbationSchedule& s, double clean_acc, double adv_acc);

struct RoundPlan {
  int round = 0;
  int current_module = 0;        // m, 1-based
  std::vector<int> last_module;  // M_k per client
  std::vector<int> s_set(int n) const;  // clients with M_k >= n
  std::vector<int> k_set(int n) const;  // clients with M_k == n
};

// Largest j in [m, M] whose cumulative memory fits mem_avail and whose
// cumulative training flops fit perf_ratio times the single-module cost.
// group_mem[i] / group_flops[i] hold the m..m+i cumulative costs.
int max_assignable(int m, int M, const std::vector<int64_t>& group_mem,
                   const std::vector<int64_t>& group_flops, int64_t mem_avail,
                   double perf_ratio);

RoundPlan assign_modules(const Backbone& bb, int m, const std::vector<ClientRecord>& fleet,
                         const CostModel& cm, int attack_steps, int round);

// Partial average: module n pools the clients that trained it (M_k >= n),
// weighted by q. Aux heads pool only exact-stop clients (M_k == n). A module
// nobody trained carries over unchanged. When every contribution is bitwise
// identical the value is copied verbatim, so consensus never drifts.
void aggregate_backbone(Backbone& global, const std::vector<LocalUpdate>& updates,
                        const std::vector<double>& q, const RoundPlan& plan);
void aggregate_aux(Backbone& global, const std::vector<LocalUpdate>& updates,
                   const std::vector<double>& q, const RoundPlan& plan);

std::pair<double, double> aggregate_validation(const std::vector<EvalResult>& reports,
                                               const std::vector<double>& q);

}  // namespace fp
