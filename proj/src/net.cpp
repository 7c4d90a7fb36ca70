#include "fp/net.hpp"

#include <cmath>

#include "fp/util.hpp"

namespace fp {
namespace {

void kaiming_uniform(Tensor& w, int fan_in, Rng& rng) {
  double bound = std::sqrt(6.0 / fan_in);
  for (auto& v : w.values()) v = rng.uniform(-bound, bound);
}

Tensor batched(const Tensor& x, const Shape& per_sample, const char* who) {
  Shape want = per_sample;
  const Shape& got = x.shape();
  check(got.size() == want.size() + 1,
        cat(who, ": expected batched input with per-sample shape ", shape_str(want), ", got ",
            shape_str(got)));
  for (size_t i = 0; i < want.size(); ++i)
    check(got[i + 1] == want[i],
          cat(who, ": per-sample shape mismatch, want ", shape_str(want), ", got ",
              shape_str(got)));
  return x;
}

}  // namespace

Tensor Atom::forward(Tape* t, const Tensor& x) const {
  batched(x, in_shape, "atom");
  if (kind == AtomKind::Linear) {
    Tensor flat = x.shape().size() > 2 ? flatten(t, x) : x;
    return relu(t, add(t, matmul(t, flat, W), b));
  }
  Tensor h = relu(t, conv2d(t, x, W, b, stride, pad));
  if (kind == AtomKind::ConvReluPool) h = maxpool2d(t, h, 2, 2);
  return h;
}

int64_t Atom::param_count() const { return W.size() + b.size(); }

int64_t Atom::in_elems() const { return numel(in_shape); }

int64_t Atom::out_elems() const { return numel(out_shape); }

int64_t Atom::forward_flops(int batch) const {
  if (kind == AtomKind::Linear) return 2ll * batch * W.dim(0) * W.dim(1);
  // conv: per pre-pool output element, Cin*kh*kw multiply-accumulates
  int co = W.dim(0), ci = W.dim(1), kh = W.dim(2), kw = W.dim(3);
  int64_t ho, wo;
  if (kind == AtomKind::ConvReluPool) {
    ho = out_shape[1] * 2;
    wo = out_shape[2] * 2;
  } else {
    ho = out_shape[1];
    wo = out_shape[2];
  }
  return 2ll * batch * co * ho * wo * ci * kh * kw;
}

Atom Atom::clone_deep() const {
  Atom a = *this;
  a.W = W.detached_copy();
  a.b = b.detached_copy();
  return a;
}

std::vector<Tensor> Atom::params() const { return {W, b}; }

Atom make_linear_atom(int in_dim, int out_dim, uint64_t seed) {
  Atom a;
  a.kind = AtomKind::Linear;
  a.in_shape = {in_dim};
  a.out_shape = {out_dim};
  a.W = Tensor({in_dim, out_dim});
  a.b = Tensor({out_dim});
  Rng rng(seed);
  kaiming_uniform(a.W, in_dim, rng);
  return a;
}

Atom make_conv_atom(Shape in_shape, int out_channels, bool pool, uint64_t seed) {
  check(in_shape.size() == 3, cat("conv atom needs (C,H,W) input, got ", shape_str(in_shape)));
  Atom a;
  a.kind = pool ? AtomKind::ConvReluPool : AtomKind::ConvRelu;
  a.in_shape = in_shape;
  int ci = in_shape[0], h = in_shape[1], w = in_shape[2];
  check(!pool || (h % 2 == 0 && w % 2 == 0),
        cat("pooling atom needs even spatial dims, got ", shape_str(in_shape)));
  a.out_shape = pool ? Shape{out_channels, h / 2, w / 2} : Shape{out_channels, h, w};
  a.W = Tensor({out_channels, ci, 3, 3});
  a.b = Tensor({out_channels});
  Rng rng(seed);
  kaiming_uniform(a.W, ci * 9, rng);
  return a;
}

Tensor AuxHead::logits(Tape* t, const Tensor& features) const {
  check(features.shape().size() == 2 && features.dim(1) == W.dim(0),
        cat("aux head expects (batch,", W.dim(0), ") features, got ",
            shape_str(features.shape())));
  return add(t, matmul(t, features, W), b);
}

AuxHead AuxHead::clone_deep() const {
  AuxHead h;
  h.W = W.detached_copy();
  h.b = b.detached_copy();
  return h;
}

AuxHead make_aux_head(int feat_dim, int classes, uint64_t seed) {
  AuxHead h;
  h.W = Tensor({feat_dim, classes});
  h.b = Tensor({classes});
  Rng rng(seed);
  kaiming_uniform(h.W, feat_dim, rng);
  return h;
}

const ModuleSpec& Backbone::module(int m) const {
  check(m >= 1 && m <= M(), cat("module index ", m, " out of range [1,", M(), "]"));
  return modules[m - 1];
}

ModuleSpec& Backbone::module(int m) {
  check(m >= 1 && m <= M(), cat("module index ", m, " out of range [1,", M(), "]"));
  return modules[m - 1];
}

int64_t Backbone::flat_out_dim(int atom_idx) const {
  return numel(atoms[atom_idx].out_shape);
}

Tensor Backbone::forward_atoms(Tape* t, const Tensor& x, int lo, int hi) const {
  check(lo >= 0 && hi < (int)atoms.size() && lo <= hi, "atom range out of bounds");
  Tensor h = x;
  for (int i = lo; i <= hi; ++i) h = atoms[i].forward(t, h);
  return h;
}

Backbone Backbone::clone_deep() const {
  Backbone bb = *this;
  for (auto& a : bb.atoms) a = a.clone_deep();
  for (auto& ms : bb.modules) ms.aux = ms.aux.clone_deep();
  return bb;
}

std::vector<Atom> make_preset_atoms(const std::string& preset, const Shape& input_shape,
                                    uint64_t seed) {
  std::vector<Atom> atoms;
  if (preset == "mlp-4x64") {
    int d = (int)numel(input_shape);
    atoms.push_back(make_linear_atom(d, 64, derive_seed(seed, Stream::ParamInit, 0)));
    for (int i = 1; i < 4; ++i)
      atoms.push_back(make_linear_atom(64, 64, derive_seed(seed, Stream::ParamInit, i)));
    return atoms;
  }
  if (preset == "cnn-6") {
    check(input_shape.size() == 3,
          cat("cnn-6 needs (C,H,W) input, got ", shape_str(input_shape)));
    Shape cur = input_shape;
    const int widths[6] = {8, 8, 16, 16, 32, 32};
    for (int i = 0; i < 6; ++i) {
      bool pool = (i % 2 == 1);
      atoms.push_back(make_conv_atom(cur, widths[i], pool, derive_seed(seed, Stream::ParamInit, i)));
      cur = atoms.back().out_shape;
    }
    int flat = (int)numel(cur);
    atoms.push_back(make_linear_atom(flat, 32, derive_seed(seed, Stream::ParamInit, 6)));
    return atoms;
  }
  throw std::invalid_argument(cat("unknown backbone preset: ", preset));
}

void install_modules(Backbone& bb, const std::vector<std::pair<int, int>>& ranges,
                     uint64_t seed) {
  check(!ranges.empty(), "module layout must contain at least one range");
  check(ranges.front().first == 0 && ranges.back().second == (int)bb.atoms.size() - 1,
        "module layout must cover every atom");
  bb.modules.clear();
  int expect = 0;
  for (size_t i = 0; i < ranges.size(); ++i) {
    auto [lo, hi] = ranges[i];
    check(lo == expect && hi >= lo, "module layout must be contiguous");
    expect = hi + 1;
    ModuleSpec ms;
    ms.index = (int)i + 1;
    ms.atom_lo = lo;
    ms.atom_hi = hi;
    int feat = (int)numel(bb.atoms[hi].out_shape);
    ms.aux = make_aux_head(feat, bb.classes, derive_seed(seed, Stream::AuxInit, i + 1));
    bb.modules.push_back(std::move(ms));
  }
}

Tensor forward_frozen_prefix(const Backbone& bb, const Tensor& x, int m) {
  check(m >= 1 && m <= bb.M(), cat("module index ", m, " out of range [1,", bb.M(), "]"));
  for (int i = 1; i < m; ++i)
    check(bb.module(i).frozen, cat("module ", i, " in the prefix of module ", m,
                                   " is not frozen"));
  if (m == 1) return x;
  return bb.forward_atoms(nullptr, x, 0, bb.module(m - 1).atom_hi);
}

LossOut cascade_loss(Tape* t, const std::vector<Atom>& atoms, const AuxHead& head,
                     const Tensor& z_prev, const std::vector<int>& labels, double mu) {
  check(!atoms.empty(), "cascade loss needs at least one atom");
  check(mu >= 0.0, "mu must be non-negative");
  int B = z_prev.dim(0);
  check((int)labels.size() == B, cat(labels.size(), " labels for batch of ", B));
  Tensor h = z_prev;
  for (const Atom& a : atoms) h = a.forward(t, h);
  Tensor feat = h.shape().size() > 2 ? flatten(t, h) : h;
  LossOut out;
  out.features = feat;
  out.logits = head.logits(t, feat);
  std::vector<double> ce;
  Tensor loss = softmax_cross_entropy(t, out.logits, labels, &ce);
  if (mu > 0.0)
    loss = add(t, loss, scalar_scale(t, l2_norm_squared(t, feat), mu / (2.0 * B)));
  out.loss = loss;
  out.per_sample = std::move(ce);
  if (mu > 0.0) {
    const auto& fv = feat.values();
    int fd = feat.dim(1);
    for (int i = 0; i < B; ++i) {
      double sq = 0.0;
      for (int j = 0; j < fd; ++j) {
        double v = fv[(size_t)i * fd + j];
        sq += v * v;
      }
      out.per_sample[i] += 0.5 * mu * sq;
    }
  }
  return out;
}

LossOut early_exit_loss(Tape* t, const Backbone& bb, int m, const Tensor& z_prev,
                        const std::vector<int>& labels, double mu) {
  return prophet_loss(t, bb, m, m, z_prev, labels, mu);
}

LossOut prophet_loss(Tape* t, const Backbone& bb, int m, int mk, const Tensor& z_prev,
                     const std::vector<int>& labels, double mu) {
  check(m >= 1 && mk <= bb.M() && m <= mk,
        cat("module range [", m, ",", mk, "] invalid for backbone with M=", bb.M()));
  std::vector<Atom> atoms;
  for (int i = m; i <= mk; ++i) {
    const ModuleSpec& ms = bb.module(i);
    check(!ms.frozen, cat("module ", i, " is frozen and cannot be trained"));
    for (int a = ms.atom_lo; a <= ms.atom_hi; ++a) atoms.push_back(bb.atoms[a]);
  }
  return cascade_loss(t, atoms, bb.module(mk).aux, z_prev, labels, mu);
}

double strong_convexity_check(const AuxHead& head, double mu, const std::vector<Tensor>& zs,
                              double h) {
  check(!zs.empty(), "need at least one sample point");
  int n = head.feat_dim();
  std::vector<int> label{0};
  auto grad_at = [&](const Tensor& z) {
    Tensor zc = z.detached_copy();
    zc.set_requires_grad(true);
    Tape tape;
    Tensor logits = head.logits(&tape, zc);
    Tensor loss = softmax_cross_entropy(&tape, logits, label);
    if (mu > 0.0) loss = add(&tape, loss, scalar_scale(&tape, l2_norm_squared(&tape, zc), mu / 2));
    return tape.grad_wrt(loss, zc).values();
  };
  double min_eig = 1e300;
  for (const Tensor& z0 : zs) {
    check(z0.shape() == Shape{1, n},
          cat("sample must have shape (1,", n, "), got ", shape_str(z0.shape())));
    std::vector<double> hess((size_t)n * n, 0.0);
    Tensor z = z0.detached_copy();
    for (int j = 0; j < n; ++j) {
      double keep = z.values()[j];
      z.values()[j] = keep + h;
      auto gu = grad_at(z);
      z.values()[j] = keep - h;
      auto gd = grad_at(z);
      z.values()[j] = keep;
      for (int i = 0; i < n; ++i) hess[(size_t)i * n + j] = (gu[i] - gd[i]) / (2 * h);
    }
    // symmetrize before the eigensolve
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        double v = 0.5 * (hess[(size_t)i * n + j] + hess[(size_t)j * n + i]);
        hess[(size_t)i * n + j] = hess[(size_t)j * n + i] = v;
      }
    double e = sym_eigenvalues(std::move(hess), n).front();
    min_eig = std::min(min_eig, e);
  }
  return min_eig;
}

}  // namespace fp
