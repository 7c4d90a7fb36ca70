#pragma once
#include <functional>
#include <string>
#include <vector>

#include "fp/net.hpp"
#include "fp/rng.hpp"

namespace fp {

enum class Norm { Linf, L2 };

struct AttackCfg {
  Norm norm = Norm::Linf;
  double epsilon = 0.0;
  double step_size = 0.0;  // <= 0 picks epsilon/4
  int steps = 0;
  bool random_start = true;

  double step() const { return step_size > 0 ? step_size : epsilon / 4.0; }
  void validate() const;
};

// Batched attack objective: returns per-sample objective values at x and, when
// grad is non-null, fills it with the gradient of the summed/mean objective.
struct AttackObjective {
  std::function<std::vector<double>(const Tensor& x, Tensor* grad)> eval;
};

// Projected gradient ascent, per sample over axis 0. Keeps the best iterate
// per sample (earliest on ties); with random_start=false the clean point is
// among the candidates, so the returned objective never drops below it.
// Samples with a vanishing gradient step in a seeded random direction.
Tensor pgd_attack(const AttackObjective& obj, const Tensor& x0, const AttackCfg& cfg, Rng& rng);

struct EvalResult {
  double clean = 0.0;
  double adv = 0.0;
  int n = 0;
};

// Accuracy through the early-exit head of module `depth`: clean, and under a
// PGD attack on the input. A sample counts as adversarially correct only if
// it is also clean-correct, so adv <= clean holds structurally.
EvalResult evaluate(const Backbone& bb, int depth, const Tensor& x, const std::vector<int>& y,
                    const AttackCfg& cfg, Rng& rng);

struct DstarResult {
  std::vector<double> d;  // per-sample largest measured output displacement
  double mean = 0.0;
};

// Largest output displacement of (frozen) module j under input perturbations
// bounded by cfg: max_delta ||f(z+delta) - f(z)||_2, measured by PGD on the
// displacement objective starting from delta = 0.
DstarResult measure_dstar(const Backbone& bb, int module_j, const Tensor& z_prev,
                          const AttackCfg& cfg, Rng& rng);

struct CertRow {
  double displacement = 0.0;  // ||r||_2 of the module output feature
  double loss_increase = 0.0;
  double grad_norm = 0.0;  // ||grad_z l_m||_2 at the clean feature
  double bound = 0.0;
  bool violated = false;
};

struct RobustnessCertificate {
  std::vector<CertRow> rows;
  double mu = 0.0;
  int violations = 0;
};

// ||grad||/mu + sqrt(2c/mu + ||grad||^2/mu^2), radicand clamped at zero.
double displacement_bound(double grad_norm, double loss_increase, double mu);

// Per-sample check of the strong-convexity displacement bound
// ||r|| <= ||grad||/mu + sqrt(2c/mu + ||grad||^2/mu^2) under a PGD attack on
// module m's regularized loss.
RobustnessCertificate certify_displacement(const Backbone& bb, int m, const Tensor& z_prev,
                                     const std::vector<int>& y, double mu,
                                     const AttackCfg& cfg, Rng& rng);

struct ConsistencyReport {
  std::vector<double> diff_norms;  // per-sample ||grad_w l - grad_w l_m||_2
  double mean = 0.0;
  double median = 0.0;
  double beta_module = 0.0;  // FD curvature of l_m along random parameter directions
  double beta_joint = 0.0;   // same for the joint loss
};

// Distance between module m's parameter gradient under its own early-exit
// loss and under the full joint loss; diagnostic only, ignores memory limits.
ConsistencyReport gradient_inconsistency(Backbone& bb, int m, const Tensor& x,
                                         const std::vector<int>& y, double mu, Rng& rng);

void write_certificate_csv(const std::string& path, const RobustnessCertificate& cert);
void write_consistency_csv(const std::string& path, const ConsistencyReport& rep);

}  // namespace fp
