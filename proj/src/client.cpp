#include "fp/client.hpp"

#include <algorithm>

#include "fp/util.hpp"

namespace fp {

void OptimCfg::validate() const {
  check(lr >= 0.0, cat("learning rate must be nonnegative, got ", lr));
  check(momentum >= 0.0 && momentum < 1.0, cat("momentum must sit in [0, 1), got ", momentum));
  check(iterations >= 1, cat("need at least one local iteration, got ", iterations));
  check(batch_size >= 1, cat("batch size must be positive, got ", batch_size));
}

namespace {

std::vector<Tensor> trainable_params(Backbone& bb, int first_module, int last_module) {
  std::vector<Tensor> out;
  for (int m = first_module; m <= last_module; ++m) {
    const ModuleSpec& ms = bb.module(m);
    for (int a = ms.atom_lo; a <= ms.atom_hi; ++a)
      for (const Tensor& p : bb.atoms[a].params()) out.push_back(p);
  }
  out.push_back(bb.module(last_module).aux.W);
  out.push_back(bb.module(last_module).aux.b);
  return out;
}

}  // namespace

LocalUpdate local_adversarial_train(const Backbone& snapshot, int first_module, int last_module,
                                    const Shard& shard, double epsilon, double mu,
                                    const AttackCfg& attack, const OptimCfg& opt, uint64_t seed) {
  opt.validate();
  check(epsilon >= 0.0, cat("attack budget must be nonnegative, got ", epsilon));
  check(shard.train.n() > 0, cat("client ", shard.client, " holds no training data"));
  check(first_module >= 1 && last_module >= first_module && last_module <= snapshot.M(),
        cat("bad module assignment [", first_module, ", ", last_module, "] with M = ",
            snapshot.M()));
  for (int m = 1; m < first_module; ++m)
    check(snapshot.module(m).frozen, cat("module ", m, " must be frozen before stage ",
                                         first_module, " training"));

  Backbone local = snapshot.clone_deep();
  std::vector<Tensor> params = trainable_params(local, first_module, last_module);
  for (const Tensor& p : params) p.set_requires_grad(true);
  std::vector<std::vector<double>> velocity(params.size());
  for (size_t i = 0; i < params.size(); ++i) velocity[i].assign(params[i].size(), 0.0);

  AttackCfg acfg = attack;
  acfg.norm = first_module == 1 ? Norm::Linf : Norm::L2;
  acfg.epsilon = epsilon;

  Rng batch_rng(derive_seed(seed, Stream::LocalTrain));
  int n = shard.train.n();
  for (int it = 0; it < opt.iterations; ++it) {
    std::vector<int> rows;
    if (opt.batch_size >= n) {
      rows.resize(n);
      for (int i = 0; i < n; ++i) rows[i] = i;  // full batch, no resampling
    } else {
      rows.resize(opt.batch_size);
      for (auto& r : rows) r = (int)batch_rng.index((uint64_t)n);
    }
    Tensor x = shard.train.batch_x(rows);
    std::vector<int> y = shard.train.batch_y(rows);
    Tensor z_prev = forward_frozen_prefix(local, x, first_module);

    Tensor z_adv = z_prev;
    if (epsilon > 0.0) {
      AttackObjective obj;
      obj.eval = [&](const Tensor& zin, Tensor* grad) {
        if (!grad) return prophet_loss(nullptr, local, first_module, last_module, zin, y, mu)
                       .per_sample;
        Tape tape;
        Tensor zc = zin;
        zc.set_requires_grad(true);
        LossOut lo = prophet_loss(&tape, local, first_module, last_module, zc, y, mu);
        *grad = tape.grad_wrt(lo.loss, zc);
        return lo.per_sample;
      };
      Rng att_rng(derive_seed(seed, Stream::LocalTrain, (uint64_t)it + 1));
      Tensor delta = pgd_attack(obj, z_prev, acfg, att_rng);
      z_adv = z_prev.detached_copy();
      for (size_t i = 0; i < z_adv.values().size(); ++i) z_adv.values()[i] += delta.values()[i];
    }

    Tape tape;
    LossOut lo = prophet_loss(&tape, local, first_module, last_module, z_adv, y, mu);
    tape.backward(lo.loss);
    for (size_t i = 0; i < params.size(); ++i) {
      if (!params[i].has_grad()) continue;
      const std::vector<double>& g = params[i].grad();
      std::vector<double>& v = velocity[i];
      std::vector<double>& p = params[i].values();
      for (size_t j = 0; j < p.size(); ++j) {
        v[j] = opt.momentum * v[j] + g[j];
        p[j] -= opt.lr * v[j];
      }
      params[i].clear_grad();
    }
  }

  LocalUpdate up;
  up.client = shard.client;
  up.first_module = first_module;
  up.last_module = last_module;
  up.iterations = opt.iterations;
  for (int m = first_module; m <= last_module; ++m) {
    ModuleParams mp;
    mp.module = m;
    const ModuleSpec& ms = local.module(m);
    for (int a = ms.atom_lo; a <= ms.atom_hi; ++a)
      for (const Tensor& p : local.atoms[a].params()) mp.tensors.push_back(p.detached_copy());
    up.modules.push_back(std::move(mp));
  }
  up.aux_w = local.module(last_module).aux.W.detached_copy();
  up.aux_b = local.module(last_module).aux.b.detached_copy();
  return up;
}

EvalResult report_validation(const Backbone& bb, int depth, const Shard& shard,
                             const AttackCfg& cfg, Rng& rng) {
  check(shard.val.n() > 0, cat("client ", shard.client, " holds no validation data"));
  std::vector<int> rows(shard.val.n());
  for (int i = 0; i < shard.val.n(); ++i) rows[i] = i;
  return evaluate(bb, depth, shard.val.batch_x(rows), shard.val.batch_y(rows), cfg, rng);
}

DstarResult report_dstar(const Backbone& bb, int module_j, const Shard& shard,
                         const AttackCfg& cfg, Rng& rng, int max_samples) {
  check(shard.train.n() > 0, cat("client ", shard.client, " holds no training data"));
  int take = shard.train.n();
  if (max_samples > 0) take = std::min(take, max_samples);
  std::vector<int> rows(take);
  for (int i = 0; i < take; ++i) rows[i] = i;
  Tensor x = shard.train.batch_x(rows);
  Tensor z_prev = forward_frozen_prefix(bb, x, module_j);
  return measure_dstar(bb, module_j, z_prev, cfg, rng);
}

}  // namespace fp
