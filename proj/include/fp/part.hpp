#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "fp/net.hpp"

namespace fp {

// Training-memory accounting. Bytes per module = parameters times
// (weights + gradients + optimizer states) plus stored activations for the
// batch: every atom keeps its input and its output alive for backward.
struct CostModel {
  int bytes_per_scalar = 8;
  int optimizer_states_per_param = 1;  // SGD with momentum
  int batch_size = 32;
};

// Parameter and activation bytes for atoms [first..last], no head.
int64_t atoms_mem_req(const std::vector<Atom>& atoms, int first, int last, const CostModel& cm);

// Affine head on a feat_dim feature: its parameters plus the logits activation.
int64_t aux_mem_req(int feat_dim, int classes, const CostModel& cm);

// Full training footprint of a module: its atoms plus its head.
int64_t module_mem_req(const std::vector<Atom>& atoms, int first, int last, int classes,
                       const CostModel& cm);

// FLOPs to train atoms [first..last] on one batch with an n-step attack:
// n attack steps plus one parameter step, each a forward plus a backward,
// with backward costed at twice the forward.
int64_t train_flops(const std::vector<Atom>& atoms, int first, int last, const CostModel& cm,
                    int attack_steps);

struct ModuleCost {
  int atom_lo = 0;  // inclusive, 0-based
  int atom_hi = 0;  // inclusive
  int64_t mem_bytes = 0;
  int64_t flops = 0;
};

struct PartitionPlan {
  std::vector<ModuleCost> modules;
  int64_t r_min = 0;
  int module_count() const { return (int)modules.size(); }
  std::vector<std::pair<int, int>> ranges() const;
};

// Greedy left-to-right split: keep appending atoms while the module stays
// strictly under r_min. Whole model fitting r_min short-circuits to one
// module; any single atom at or over r_min is rejected up front.
// group_mem(first, last) must be positive and grow when the group widens.
PartitionPlan greedy_partition_costs(int n_atoms,
                                     const std::function<int64_t(int, int)>& group_mem,
                                     int64_t r_min);

PartitionPlan greedy_partition(const std::vector<Atom>& atoms, int classes, int64_t r_min,
                               const CostModel& cm, int attack_steps);

}  // namespace fp
