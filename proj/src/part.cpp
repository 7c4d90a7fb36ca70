#include "fp/part.hpp"

#include "fp/util.hpp"

namespace fp {

static void check_span(const std::vector<Atom>& atoms, int first, int last) {
  check(first >= 0 && last < (int)atoms.size() && first <= last,
        cat("bad atom span [", first, ", ", last, "] over ", atoms.size(), " atoms"));
}

int64_t atoms_mem_req(const std::vector<Atom>& atoms, int first, int last, const CostModel& cm) {
  check_span(atoms, first, last);
  int64_t per_param = (int64_t)cm.bytes_per_scalar * (2 + cm.optimizer_states_per_param);
  int64_t bytes = 0;
  for (int i = first; i <= last; ++i) {
    const Atom& a = atoms[i];
    bytes += a.param_count() * per_param;
    bytes += (a.in_elems() + a.out_elems()) * (int64_t)cm.batch_size * cm.bytes_per_scalar;
  }
  return bytes;
}

int64_t aux_mem_req(int feat_dim, int classes, const CostModel& cm) {
  check(feat_dim > 0 && classes > 0, "aux head needs positive dims");
  int64_t per_param = (int64_t)cm.bytes_per_scalar * (2 + cm.optimizer_states_per_param);
  int64_t params = (int64_t)feat_dim * classes + classes;
  return params * per_param + (int64_t)cm.batch_size * classes * cm.bytes_per_scalar;
}

int64_t module_mem_req(const std::vector<Atom>& atoms, int first, int last, int classes,
                       const CostModel& cm) {
  check_span(atoms, first, last);
  return atoms_mem_req(atoms, first, last, cm) +
         aux_mem_req((int)atoms[last].out_elems(), classes, cm);
}

int64_t train_flops(const std::vector<Atom>& atoms, int first, int last, const CostModel& cm,
                    int attack_steps) {
  check_span(atoms, first, last);
  check(attack_steps >= 0, "attack step count must be nonnegative");
  int64_t fwd = 0;
  for (int i = first; i <= last; ++i) fwd += atoms[i].forward_flops(cm.batch_size);
  return (int64_t)(attack_steps + 1) * 3 * fwd;
}

std::vector<std::pair<int, int>> PartitionPlan::ranges() const {
  std::vector<std::pair<int, int>> r;
  r.reserve(modules.size());
  for (const ModuleCost& m : modules) r.emplace_back(m.atom_lo, m.atom_hi);
  return r;
}

PartitionPlan greedy_partition_costs(int n_atoms,
                                     const std::function<int64_t(int, int)>& group_mem,
                                     int64_t r_min) {
  check(n_atoms > 0, "cannot partition an empty atom list");
  check(r_min > 0, "memory floor must be positive");
  PartitionPlan plan;
  plan.r_min = r_min;

  if (group_mem(0, n_atoms - 1) <= r_min) {
    plan.modules.push_back({0, n_atoms - 1, group_mem(0, n_atoms - 1), 0});
    return plan;
  }
  for (int i = 0; i < n_atoms; ++i) {
    int64_t m = group_mem(i, i);
    check(m < r_min, cat("atom ", i + 1, " alone needs ", m, " bytes, at or over the floor ",
                         r_min, "; no partition can fit this device"));
  }

  int lo = 0;
  while (lo < n_atoms) {
    int hi = lo;
    while (hi + 1 < n_atoms && group_mem(lo, hi + 1) < r_min) ++hi;
    plan.modules.push_back({lo, hi, group_mem(lo, hi), 0});
    lo = hi + 1;
  }
  return plan;
}

PartitionPlan greedy_partition(const std::vector<Atom>& atoms, int classes, int64_t r_min,
                               const CostModel& cm, int attack_steps) {
  auto mem = [&](int first, int last) {
    return module_mem_req(atoms, first, last, classes, cm);
  };
  PartitionPlan plan = greedy_partition_costs((int)atoms.size(), mem, r_min);
  for (ModuleCost& m : plan.modules)
    m.flops = train_flops(atoms, m.atom_lo, m.atom_hi, cm, attack_steps);
  return plan;
}

}  // namespace fp
