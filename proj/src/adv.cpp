#include "fp/adv.hpp"

#include <algorithm>
#include <cmath>

#include "fp/util.hpp"

namespace fp {
namespace {

constexpr double kZeroGrad = 1e-12;

int sample_count(const Tensor& x) { return x.dim(0); }

size_t sample_elems(const Tensor& x) { return x.values().size() / x.dim(0); }

double row_norm(const double* p, size_t n) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) acc += p[i] * p[i];
  return std::sqrt(acc);
}

void project_row(double* p, size_t n, const AttackCfg& cfg) {
  if (cfg.norm == Norm::Linf) {
    for (size_t i = 0; i < n; ++i) p[i] = std::clamp(p[i], -cfg.epsilon, cfg.epsilon);
    return;
  }
  double nr = row_norm(p, n);
  while (nr > cfg.epsilon) {
    double s = cfg.epsilon / nr * (1.0 - 1e-16);
    for (size_t i = 0; i < n; ++i) p[i] *= s;
    nr = row_norm(p, n);
  }
}

void random_start_row(double* p, size_t n, const AttackCfg& cfg, Rng& rng) {
  if (cfg.norm == Norm::Linf) {
    for (size_t i = 0; i < n; ++i) p[i] = rng.uniform(-cfg.epsilon, cfg.epsilon);
    return;
  }
  double nr = 0.0;
  for (size_t i = 0; i < n; ++i) {
    p[i] = rng.normal();
    nr += p[i] * p[i];
  }
  nr = std::sqrt(nr);
  if (nr == 0.0) nr = 1.0;
  double radius = cfg.epsilon * std::pow(rng.uniform(), 1.0 / n);
  for (size_t i = 0; i < n; ++i) p[i] *= radius / nr;
}

// Ascent direction from the gradient row, or a seeded random direction when
// the gradient vanishes (a flat start must still move).
void step_row(double* delta, const double* grad, size_t n, const AttackCfg& cfg, Rng& rng) {
  double gn = row_norm(grad, n);
  double step = cfg.step();
  if (cfg.norm == Norm::Linf) {
    if (gn < kZeroGrad) {
      for (size_t i = 0; i < n; ++i) delta[i] += step * (rng.uniform() < 0.5 ? -1.0 : 1.0);
    } else {
      for (size_t i = 0; i < n; ++i)
        delta[i] += step * (grad[i] > 0 ? 1.0 : (grad[i] < 0 ? -1.0 : 0.0));
    }
    return;
  }
  if (gn < kZeroGrad) {
    std::vector<double> u(n);
    double un = 0.0;
    for (size_t i = 0; i < n; ++i) {
      u[i] = rng.normal();
      un += u[i] * u[i];
    }
    un = std::sqrt(un);
    if (un == 0.0) un = 1.0;
    for (size_t i = 0; i < n; ++i) delta[i] += step * u[i] / un;
  } else {
    for (size_t i = 0; i < n; ++i) delta[i] += step * grad[i] / gn;
  }
}

std::vector<int> predictions(const Tensor& logits) {
  int B = logits.dim(0), C = logits.dim(1);
  std::vector<int> pred(B);
  const double* lv = logits.values().data();
  for (int i = 0; i < B; ++i) {
    const double* row = lv + (size_t)i * C;
    int best = 0;
    for (int j = 1; j < C; ++j)
      if (row[j] > row[best]) best = j;
    pred[i] = best;
  }
  return pred;
}

std::vector<Atom> module_atoms(const Backbone& bb, int m) {
  const ModuleSpec& ms = bb.module(m);
  std::vector<Atom> atoms;
  for (int a = ms.atom_lo; a <= ms.atom_hi; ++a) atoms.push_back(bb.atoms[a]);
  return atoms;
}

}  // namespace

void AttackCfg::validate() const {
  check(epsilon >= 0.0, "attack epsilon must be >= 0");
  check(steps >= 0, "attack steps must be >= 0");
  if (epsilon > 0.0 && steps > 0)
    check(step() <= epsilon + 1e-15,
          cat("attack step size ", step(), " exceeds epsilon ", epsilon));
}

Tensor pgd_attack(const AttackObjective& obj, const Tensor& x0, const AttackCfg& cfg, Rng& rng) {
  cfg.validate();
  Tensor delta(x0.shape());
  if (cfg.epsilon <= 0.0 || cfg.steps <= 0) return delta;
  int B = sample_count(x0);
  size_t n = sample_elems(x0);
  if (cfg.random_start) {
    for (int i = 0; i < B; ++i) {
      double* row = delta.values().data() + (size_t)i * n;
      random_start_row(row, n, cfg, rng);
      project_row(row, n, cfg);
    }
  }
  Tensor best_delta = delta.detached_copy();

  auto perturbed = [&]() {
    Tensor x = x0.detached_copy();
    auto& xv = x.values();
    const auto& dv = delta.values();
    for (size_t i = 0; i < xv.size(); ++i) xv[i] += dv[i];
    return x;
  };

  Tensor grad;
  std::vector<double> best = obj.eval(perturbed(), &grad);
  check((int)best.size() == B, "attack objective must return one value per sample");

  for (int s = 0; s < cfg.steps; ++s) {
    for (int i = 0; i < B; ++i) {
      double* drow = delta.values().data() + (size_t)i * n;
      step_row(drow, grad.values().data() + (size_t)i * n, n, cfg, rng);
      project_row(drow, n, cfg);
    }
    bool last = (s == cfg.steps - 1);
    std::vector<double> cur = obj.eval(perturbed(), last ? nullptr : &grad);
    for (int i = 0; i < B; ++i) {
      if (cur[i] > best[i]) {
        best[i] = cur[i];
        std::copy_n(delta.values().data() + (size_t)i * n, n,
                    best_delta.values().data() + (size_t)i * n);
      }
    }
  }
  return best_delta;
}

EvalResult evaluate(const Backbone& bb, int depth, const Tensor& x, const std::vector<int>& y,
                    const AttackCfg& cfg, Rng& rng) {
  cfg.validate();
  check(x.dim(0) > 0 && !y.empty(), "evaluate needs a nonempty dataset");
  check((int)y.size() == x.dim(0), cat(y.size(), " labels for batch of ", x.dim(0)));
  const ModuleSpec& ms = bb.module(depth);
  EvalResult res;
  res.n = x.dim(0);
  const int chunk = 512;
  size_t n = sample_elems(x);
  int clean_correct = 0, adv_correct = 0;
  for (int lo = 0; lo < res.n; lo += chunk) {
    int hi = std::min(res.n, lo + chunk);
    int b = hi - lo;
    Shape cs = x.shape();
    cs[0] = b;
    Tensor cx(cs);
    std::copy_n(x.values().data() + (size_t)lo * n, (size_t)b * n, cx.values().data());
    std::vector<int> cy(y.begin() + lo, y.begin() + hi);

    Tensor feat = bb.forward_atoms(nullptr, cx, 0, ms.atom_hi);
    if (feat.shape().size() > 2) feat = flatten(nullptr, feat);
    std::vector<int> pred = predictions(ms.aux.logits(nullptr, feat));
    std::vector<bool> clean_ok(b);
    for (int i = 0; i < b; ++i) clean_ok[i] = pred[i] == cy[i];
    for (int i = 0; i < b; ++i) clean_correct += clean_ok[i];

    if (cfg.epsilon <= 0.0 || cfg.steps <= 0) {
      for (int i = 0; i < b; ++i) adv_correct += clean_ok[i];
      continue;
    }
    AttackObjective obj;
    obj.eval = [&](const Tensor& xin, Tensor* grad) {
      if (!grad) {
        Tensor f = bb.forward_atoms(nullptr, xin, 0, ms.atom_hi);
        if (f.shape().size() > 2) f = flatten(nullptr, f);
        std::vector<double> per;
        softmax_cross_entropy(nullptr, ms.aux.logits(nullptr, f), cy, &per);
        return per;
      }
      Tensor xc = xin;
      xc.set_requires_grad(true);
      Tape tape;
      Tensor f = bb.forward_atoms(&tape, xc, 0, ms.atom_hi);
      if (f.shape().size() > 2) f = flatten(&tape, f);
      std::vector<double> per;
      Tensor loss = softmax_cross_entropy(&tape, ms.aux.logits(&tape, f), cy, &per);
      *grad = tape.grad_wrt(loss, xc);
      return per;
    };
    Tensor delta = pgd_attack(obj, cx, cfg, rng);
    Tensor xa = cx.detached_copy();
    for (size_t i = 0; i < xa.values().size(); ++i) xa.values()[i] += delta.values()[i];
    Tensor fa = bb.forward_atoms(nullptr, xa, 0, ms.atom_hi);
    if (fa.shape().size() > 2) fa = flatten(nullptr, fa);
    std::vector<int> pa = predictions(ms.aux.logits(nullptr, fa));
    for (int i = 0; i < b; ++i) adv_correct += (clean_ok[i] && pa[i] == cy[i]);
  }
  res.clean = (double)clean_correct / res.n;
  res.adv = (double)adv_correct / res.n;
  return res;
}

DstarResult measure_dstar(const Backbone& bb, int module_j, const Tensor& z_prev,
                          const AttackCfg& cfg, Rng& rng) {
  cfg.validate();
  check(bb.module(module_j).frozen,
        cat("module ", module_j, " must be frozen before measuring its displacement"));
  std::vector<Atom> atoms = module_atoms(bb, module_j);
  auto fwd = [&](Tape* t, const Tensor& zin) {
    Tensor h = zin;
    for (const Atom& a : atoms) h = a.forward(t, h);
    return h.shape().size() > 2 ? flatten(t, h) : h;
  };
  Tensor z_clean = fwd(nullptr, z_prev);
  int B = z_prev.dim(0);
  int fd = z_clean.dim(1);

  auto displacement = [&](const Tensor& feat) {
    std::vector<double> d(B);
    for (int i = 0; i < B; ++i) {
      double acc = 0.0;
      const double* a = feat.values().data() + (size_t)i * fd;
      const double* c = z_clean.values().data() + (size_t)i * fd;
      for (int j = 0; j < fd; ++j) {
        double diff = a[j] - c[j];
        acc += diff * diff;
      }
      d[i] = std::sqrt(acc);
    }
    return d;
  };

  AttackObjective obj;
  obj.eval = [&](const Tensor& zin, Tensor* grad) {
    if (!grad) return displacement(fwd(nullptr, zin));
    Tensor zc = zin;
    zc.set_requires_grad(true);
    Tape tape;
    Tensor feat = fwd(&tape, zc);
    Tensor diff = sub(&tape, feat, z_clean);
    Tensor loss = l2_norm_squared(&tape, diff);
    std::vector<double> vals = displacement(feat);
    *grad = tape.grad_wrt(loss, zc);
    return vals;
  };

  AttackCfg dcfg = cfg;
  dcfg.random_start = false;  // displacement objective starts from the clean point
  // The objective is flat at delta=0 and has one ascent basin per activation
  // pattern; independent kick directions across restarts cover the basins.
  const int restarts = 6;
  uint64_t base = rng.bits();
  DstarResult res;
  res.d.assign(B, 0.0);
  for (int r = 0; r < restarts; ++r) {
    Rng rr(mix64(base + 0x9E3779B9ull * (uint64_t)r));
    Tensor delta = pgd_attack(obj, z_prev, dcfg, rr);
    Tensor za = z_prev.detached_copy();
    for (size_t i = 0; i < za.values().size(); ++i) za.values()[i] += delta.values()[i];
    std::vector<double> dr = displacement(fwd(nullptr, za));
    for (int i = 0; i < B; ++i) res.d[i] = std::max(res.d[i], dr[i]);
  }
  double total = 0.0;
  for (double v : res.d) total += v;
  res.mean = res.d.empty() ? 0.0 : total / res.d.size();
  return res;
}

double displacement_bound(double grad_norm, double loss_increase, double mu) {
  check(mu > 0.0, "displacement bound needs mu > 0");
  double radicand = 2.0 * loss_increase / mu + grad_norm * grad_norm / (mu * mu);
  return grad_norm / mu + std::sqrt(std::max(0.0, radicand));
}

RobustnessCertificate certify_displacement(const Backbone& bb, int m, const Tensor& z_prev,
                                     const std::vector<int>& y, double mu,
                                     const AttackCfg& cfg, Rng& rng) {
  cfg.validate();
  check(mu > 0.0, "displacement bound needs mu > 0");
  std::vector<Atom> atoms = module_atoms(bb, m);
  const AuxHead& head = bb.module(m).aux;
  int B = z_prev.dim(0);
  check((int)y.size() == B, cat(y.size(), " labels for batch of ", B));

  LossOut clean = cascade_loss(nullptr, atoms, head, z_prev, y, mu);
  int fd = clean.features.dim(1);

  // per-sample grad of l_m w.r.t. the clean feature z_m
  Tensor feat_leaf = clean.features.detached_copy();
  feat_leaf.set_requires_grad(true);
  Tape tape;
  Tensor logits = head.logits(&tape, feat_leaf);
  std::vector<double> ce;
  Tensor lm = softmax_cross_entropy(&tape, logits, y, &ce);
  lm = add(&tape, lm, scalar_scale(&tape, l2_norm_squared(&tape, feat_leaf), mu / (2.0 * B)));
  Tensor gfeat = tape.grad_wrt(lm, feat_leaf);

  AttackObjective obj;
  obj.eval = [&](const Tensor& zin, Tensor* grad) {
    if (!grad) return cascade_loss(nullptr, atoms, head, zin, y, mu).per_sample;
    Tensor zc = zin;
    zc.set_requires_grad(true);
    Tape t2;
    LossOut lo = cascade_loss(&t2, atoms, head, zc, y, mu);
    *grad = t2.grad_wrt(lo.loss, zc);
    return lo.per_sample;
  };
  Tensor delta = pgd_attack(obj, z_prev, cfg, rng);
  Tensor za = z_prev.detached_copy();
  for (size_t i = 0; i < za.values().size(); ++i) za.values()[i] += delta.values()[i];
  LossOut attacked = cascade_loss(nullptr, atoms, head, za, y, mu);

  RobustnessCertificate cert;
  cert.mu = mu;
  cert.rows.resize(B);
  for (int i = 0; i < B; ++i) {
    CertRow& row = cert.rows[i];
    const double* fa = attacked.features.values().data() + (size_t)i * fd;
    const double* fc = clean.features.values().data() + (size_t)i * fd;
    double acc = 0.0;
    for (int j = 0; j < fd; ++j) {
      double d = fa[j] - fc[j];
      acc += d * d;
    }
    row.displacement = std::sqrt(acc);
    row.loss_increase = attacked.per_sample[i] - clean.per_sample[i];
    // gfeat is the gradient of the batch-mean loss; scale back to per-sample
    row.grad_norm = row_norm(gfeat.values().data() + (size_t)i * fd, fd) * B;
    row.bound = displacement_bound(row.grad_norm, row.loss_increase, mu);
    row.violated = row.displacement > row.bound + 1e-6;
    cert.violations += row.violated;
  }
  return cert;
}

ConsistencyReport gradient_inconsistency(Backbone& bb, int m, const Tensor& x,
                                         const std::vector<int>& y, double mu, Rng& rng) {
  int B = x.dim(0);
  check((int)y.size() == B, cat(y.size(), " labels for batch of ", B));
  const ModuleSpec& ms = bb.module(m);
  std::vector<Tensor> wparams;
  for (int a = ms.atom_lo; a <= ms.atom_hi; ++a)
    for (const Tensor& p : bb.atoms[a].params()) wparams.push_back(p);
  for (const Tensor& p : wparams) p.set_requires_grad(true);

  size_t n = sample_elems(x);
  Shape one = x.shape();
  one[0] = 1;

  Tensor z_prev_all =
      ms.atom_lo == 0 ? x : bb.forward_atoms(nullptr, x, 0, ms.atom_lo - 1);
  size_t zn = sample_elems(z_prev_all);
  Shape zone = z_prev_all.shape();
  zone[0] = 1;

  auto collect = [&]() {
    std::vector<double> g;
    for (const Tensor& p : wparams) {
      const auto& pg = p.grad();
      g.insert(g.end(), pg.begin(), pg.end());
    }
    for (const Tensor& p : wparams) p.clear_grad();
    return g;
  };

  ConsistencyReport rep;
  std::vector<Atom> matoms = module_atoms(bb, m);
  for (int i = 0; i < B; ++i) {
    Tensor zi(zone);
    std::copy_n(z_prev_all.values().data() + (size_t)i * zn, zn, zi.values().data());
    std::vector<int> yi{y[i]};
    {
      Tape tape;
      LossOut lo = cascade_loss(&tape, matoms, ms.aux, zi, yi, mu);
      tape.backward(lo.loss);
    }
    std::vector<double> gm = collect();
    Tensor xi(one);
    std::copy_n(x.values().data() + (size_t)i * n, n, xi.values().data());
    {
      Tape tape;
      Tensor h = bb.forward_atoms(&tape, xi, 0, (int)bb.atoms.size() - 1);
      Tensor feat = h.shape().size() > 2 ? flatten(&tape, h) : h;
      Tensor loss = softmax_cross_entropy(&tape, bb.module(bb.M()).aux.logits(&tape, feat), yi);
      tape.backward(loss);
    }
    std::vector<double> gj = collect();
    double acc = 0.0;
    for (size_t k = 0; k < gm.size(); ++k) {
      double d = gj[k] - gm[k];
      acc += d * d;
    }
    rep.diff_norms.push_back(std::sqrt(acc));
  }
  for (const Tensor& p : wparams) p.set_requires_grad(false);

  double total = 0.0;
  for (double v : rep.diff_norms) total += v;
  rep.mean = total / B;
  std::vector<double> sorted = rep.diff_norms;
  std::sort(sorted.begin(), sorted.end());
  rep.median = sorted[sorted.size() / 2];

  // curvature along random parameter directions, reporting only
  int64_t np = 0;
  for (const Tensor& p : wparams) np += p.size();
  const double h = 1e-3;
  const int dirs = 4;
  Tensor x0(one);
  std::copy_n(x.values().data(), n, x0.values().data());
  Tensor z0(zone);
  std::copy_n(z_prev_all.values().data(), zn, z0.values().data());
  std::vector<int> y0{y[0]};
  auto loss_module = [&]() {
    return cascade_loss(nullptr, matoms, ms.aux, z0, y0, mu).loss.item();
  };
  auto loss_joint = [&]() {
    Tensor hh = bb.forward_atoms(nullptr, x0, 0, (int)bb.atoms.size() - 1);
    Tensor feat = hh.shape().size() > 2 ? flatten(nullptr, hh) : hh;
    return softmax_cross_entropy(nullptr, bb.module(bb.M()).aux.logits(nullptr, feat), y0)
        .item();
  };
  for (int d = 0; d < dirs; ++d) {
    std::vector<double> dir(np);
    double dn = 0.0;
    for (auto& v : dir) {
      v = rng.normal();
      dn += v * v;
    }
    dn = std::sqrt(dn);
    auto shift = [&](double scale) {
      size_t off = 0;
      for (Tensor& p : wparams) {
        for (auto& v : p.values()) v += scale * dir[off++] / dn;
      }
      // refresh matoms views (they share storage with bb.atoms, nothing to do)
    };
    double l0m = loss_module(), l0j = loss_joint();
    shift(h);
    double lpm = loss_module(), lpj = loss_joint();
    shift(-2 * h);
    double lmm = loss_module(), lmj = loss_joint();
    shift(h);
    rep.beta_module = std::max(rep.beta_module, std::fabs(lpm - 2 * l0m + lmm) / (h * h));
    rep.beta_joint = std::max(rep.beta_joint, std::fabs(lpj - 2 * l0j + lmj) / (h * h));
  }
  return rep;
}

void write_certificate_csv(const std::string& path, const RobustnessCertificate& cert) {
  std::string out = "sample,displacement,loss_increase,grad_norm,bound,violated\n";
  for (size_t i = 0; i < cert.rows.size(); ++i) {
    const CertRow& r = cert.rows[i];
    out += cat(i, ",", fmt_double(r.displacement), ",", fmt_double(r.loss_increase), ",",
               fmt_double(r.grad_norm), ",", fmt_double(r.bound), ",", r.violated ? 1 : 0,
               "\n");
  }
  out += cat("summary,mu=", fmt_double(cert.mu), ",violations=", cert.violations, ",samples=",
             cert.rows.size(), ",,\n");
  write_text_file(path, out);
}

void write_consistency_csv(const std::string& path, const ConsistencyReport& rep) {
  std::string out = "sample,grad_diff_norm\n";
  for (size_t i = 0; i < rep.diff_norms.size(); ++i)
    out += cat(i, ",", fmt_double(rep.diff_norms[i]), "\n");
  out += cat("summary,mean=", fmt_double(rep.mean), ",median=", fmt_double(rep.median),
             ",beta_module=", fmt_double(rep.beta_module), ",beta_joint=",
             fmt_double(rep.beta_joint), "\n");
  write_text_file(path, out);
}

}  // namespace fp
