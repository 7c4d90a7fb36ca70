#pragma once

#include <cstdint>
#include <vector>

#include "fp/adv.hpp"
#include "fp/data.hpp"
#include "fp/net.hpp"

namespace fp {

struct OptimCfg {
  double lr = 0.05;
  double momentum = 0.9;
  int iterations = 1;  // local SGD steps per round
  int batch_size = 32;
  void validate() const;
};

struct ModuleParams {
  int module = 0;               // 1-based backbone index
  std::vector<Tensor> tensors;  // atom weights and biases, in atom order
};

struct LocalUpdate {
  int client = 0;
  int first_module = 0;  // training stage m
  int last_module = 0;   // furthest module this device could also carry
  std::vector<ModuleParams> modules;
  Tensor aux_w, aux_b;  // trained head of the last assigned module
  int iterations = 0;
  double clean_acc = 0.0, adv_acc = 0.0;  // filled by report_validation
  int val_count = 0;
};

// One round of local adversarial training on a cloned snapshot: per step,
// attack the features entering module `first_module` (raw input linf ball
// when first_module is 1, l2 ball otherwise), then one SGD-momentum step on
// the regularized loss through the last assigned module's head. epsilon = 0
// degenerates to standard training. The snapshot itself is never touched.
LocalUpdate local_adversarial_train(const Backbone& snapshot, int first_module, int last_module,
                                    const Shard& shard, double epsilon, double mu,
                                    const AttackCfg& attack, const OptimCfg& opt, uint64_t seed);

// Clean/adversarial accuracy on the shard's validation split, measured
// through the early-exit head of module `depth`.
EvalResult report_validation(const Backbone& bb, int depth, const Shard& shard,
                             const AttackCfg& cfg, Rng& rng);

// Local displacement measurement of a frozen module on the shard's train set.
DstarResult report_dstar(const Backbone& bb, int module_j, const Shard& shard,
                         const AttackCfg& cfg, Rng& rng, int max_samples = 0);

}  // namespace fp
