#include "fp/ops.hpp"

#include <cmath>

#include "fp/util.hpp"

namespace fp {
namespace {

bool suffix_of(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  size_t off = big.size() - small.size();
  for (size_t i = 0; i < small.size(); ++i)
    if (small[i] != big[off + i]) return false;
  return true;
}

bool wants_record(Tape* t, std::initializer_list<const Tensor*> ins) {
  if (!t) return false;
  for (const Tensor* x : ins) {
    if (!x->defined()) continue;
    detail::TensorState* s = x->state();
    if (s->requires_grad) return true;
    if (s->tape == t && s->tape_gen == t->generation()) return true;
  }
  return false;
}

struct ConvDims {
  int B, Ci, H, W, Co, kh, kw, Ho, Wo, stride, pad;
};

ConvDims conv_dims(const Shape& xs, const Shape& ws, int stride, int padding) {
  check(xs.size() == 4, cat("conv2d: input must be 4-d, got ", shape_str(xs)));
  check(ws.size() == 4, cat("conv2d: weight must be 4-d, got ", shape_str(ws)));
  check(stride >= 1, "conv2d: stride must be >= 1");
  check(padding >= 0, "conv2d: padding must be >= 0");
  ConvDims d;
  d.B = xs[0];
  d.Ci = xs[1];
  d.H = xs[2];
  d.W = xs[3];
  d.Co = ws[0];
  d.kh = ws[2];
  d.kw = ws[3];
  d.stride = stride;
  d.pad = padding;
  check(ws[1] == d.Ci,
        cat("conv2d: channel mismatch, input ", shape_str(xs), " weight ", shape_str(ws)));
  int eh = d.H + 2 * padding - d.kh;
  int ew = d.W + 2 * padding - d.kw;
  check(eh >= 0 && ew >= 0,
        cat("conv2d: kernel larger than padded input, input ", shape_str(xs), " weight ",
            shape_str(ws), " padding ", padding));
  d.Ho = eh / stride + 1;
  d.Wo = ew / stride + 1;
  return d;
}

struct PoolDims {
  int B, C, H, W, Ho, Wo, k, s;
};

PoolDims pool_dims(const Shape& xs, int kernel, int stride, const char* name) {
  check(xs.size() == 4, cat(name, ": input must be 4-d, got ", shape_str(xs)));
  check(kernel >= 1 && stride >= 1, cat(name, ": kernel and stride must be >= 1"));
  check(xs[2] >= kernel && xs[3] >= kernel,
        cat(name, ": window ", kernel, " exceeds input ", shape_str(xs)));
  PoolDims d;
  d.B = xs[0];
  d.C = xs[1];
  d.H = xs[2];
  d.W = xs[3];
  d.k = kernel;
  d.s = stride;
  d.Ho = (d.H - kernel) / stride + 1;
  d.Wo = (d.W - kernel) / stride + 1;
  return d;
}

}  // namespace

void matmul_kernel(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    double* ci = c + (size_t)i * n;
    const double* ai = a + (size_t)i * k;
    for (int p = 0; p < k; ++p) {
      double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b + (size_t)p * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

std::vector<double> row_softmax(const std::vector<double>& logits, int rows, int cols) {
  std::vector<double> p(logits.size());
  for (int i = 0; i < rows; ++i) {
    const double* l = logits.data() + (size_t)i * cols;
    double* pi = p.data() + (size_t)i * cols;
    double mx = l[0];
    for (int j = 1; j < cols; ++j) mx = std::max(mx, l[j]);
    double z = 0.0;
    for (int j = 0; j < cols; ++j) {
      pi[j] = std::exp(l[j] - mx);
      z += pi[j];
    }
    for (int j = 0; j < cols; ++j) pi[j] /= z;
  }
  return p;
}

Tensor add(Tape* t, const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  check(sa == sb || suffix_of(sb, sa),
        cat("add: shape mismatch ", shape_str(sa), " vs ", shape_str(sb)));
  Tensor out(sa);
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  size_t nb = bv.size();
  for (size_t i = 0; i < av.size(); ++i) ov[i] = av[i] + bv[i % nb];
  if (!wants_record(t, {&a, &b})) return out;
  int na = t->node_of(a), nbn = t->node_of(b);
  int node = t->emit([na, nbn, nb](Tape& tp, const std::vector<double>& g) {
    if (na >= 0) tp.accumulate(na, g);
    if (nbn >= 0) {
      std::vector<double> gb(nb, 0.0);
      for (size_t i = 0; i < g.size(); ++i) gb[i % nb] += g[i];
      tp.accumulate(nbn, gb);
    }
  });
  t->attach_output(out, node);
  return out;
}

Tensor sub(Tape* t, const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  check(sa == b.shape(),
        cat("sub: shape mismatch ", shape_str(sa), " vs ", shape_str(b.shape())));
  Tensor out(sa);
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  for (size_t i = 0; i < av.size(); ++i) ov[i] = av[i] - bv[i];
  if (!wants_record(t, {&a, &b})) return out;
  int na = t->node_of(a), nb = t->node_of(b);
  int node = t->emit([na, nb](Tape& tp, const std::vector<double>& g) {
    if (na >= 0) tp.accumulate(na, g);
    if (nb >= 0) {
      std::vector<double> gb(g.size());
      for (size_t i = 0; i < g.size(); ++i) gb[i] = -g[i];
      tp.accumulate(nb, gb);
    }
  });
  t->attach_output(out, node);
  return out;
}

Tensor mul(Tape* t, const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  check(sa == b.shape(),
        cat("mul: shape mismatch ", shape_str(sa), " vs ", shape_str(b.shape())));
  Tensor out(sa);
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  for (size_t i = 0; i < av.size(); ++i) ov[i] = av[i] * bv[i];
  if (!wants_record(t, {&a, &b})) return out;
  int na = t->node_of(a), nb = t->node_of(b);
  Tensor ac = a, bc = b;  // keep inputs alive for the backward closure
  int node = t->emit([na, nb, ac, bc](Tape& tp, const std::vector<double>& g) {
    if (na >= 0) {
      std::vector<double> ga(g.size());
      const auto& bv2 = bc.values();
      for (size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * bv2[i];
      tp.accumulate(na, ga);
    }
    if (nb >= 0) {
      std::vector<double> gb(g.size());
      const auto& av2 = ac.values();
      for (size_t i = 0; i < g.size(); ++i) gb[i] = g[i] * av2[i];
      tp.accumulate(nb, gb);
    }
  });
  t->attach_output(out, node);
  return out;
}

Tensor matmul(Tape* t, const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  check(sa.size() == 2 && sb.size() == 2,
        cat("matmul: need 2-d operands, got ", shape_str(sa), " and ", shape_str(sb)));
  check(sa[1] == sb[0],
        cat("matmul: inner dimension mismatch ", shape_str(sa), " x ", shape_str(sb)));
  int m = sa[0], k = sa[1], n = sb[1];
  Tensor out(Shape{m, n});
  matmul_kernel(a.values().data(), b.values().data(), out.values().data(), m, k, n);
  if (!wants_record(t, {&a, &b})) return out;
  int na = t->node_of(a), nb = t->node_of(b);
  Tensor ac = a, bc = b;
  int node = t->emit([na, nb, ac, bc, m, k, n](Tape& tp, const std::vector<double>& g) {
    if (na >= 0) {
      // dA = g . B^T
      std::vector<double> ga((size_t)m * k, 0.0);
      const double* bv = bc.values().data();
      for (int i = 0; i < m; ++i) {
        const double* gi = g.data() + (size_t)i * n;
        double* gai = ga.data() + (size_t)i * k;
        for (int p = 0; p < k; ++p) {
          const double* bp = bv + (size_t)p * n;
          double acc = 0.0;
          for (int j = 0; j < n; ++j) acc += gi[j] * bp[j];
          gai[p] = acc;
        }
      }
      tp.accumulate(na, ga);
    }
    if (nb >= 0) {
      // dB = A^T . g
      std::vector<double> gb((size_t)k * n, 0.0);
      const double* av = ac.values().data();
      for (int i = 0; i < m; ++i) {
        const double* ai = av + (size_t)i * k;
        const double* gi = g.data() + (size_t)i * n;
        for (int p = 0; p < k; ++p) {
          double apv = ai[p];
          if (apv == 0.0) continue;
          double* gbp = gb.data() + (size_t)p * n;
          for (int j = 0; j < n; ++j) gbp[j] += apv * gi[j];
        }
      }
      tp.accumulate(nb, gb);
    }
  });
  t->attach_output(out, node);
  return out;
}

Tensor conv2d(Tape* t, const Tensor& x, const Tensor& w, const Tensor& bias, int stride,
              int padding) {
  ConvDims d = conv_dims(x.shape(), w.shape(), stride, padding);
  if (bias.defined())
    check(bias.shape() == Shape{d.Co},
          cat("conv2d: bias shape ", shape_str(bias.shape()), " must be (", d.Co, ")"));
  Tensor out(Shape{d.B, d.Co, d.Ho, d.Wo});
  const double* xv = x.values().data();
  const double* wv = w.values().data();
  double* ov = out.values().data();
  auto xat = [&](int b, int c, int i, int j) -> double {
    if (i < 0 || j < 0 || i >= d.H || j >= d.W) return 0.0;
    return xv[(((size_t)b * d.Ci + c) * d.H + i) * d.W + j];
  };
  for (int b = 0; b < d.B; ++b)
    for (int co = 0; co < d.Co; ++co) {
      double bv = bias.defined() ? bias.values()[co] : 0.0;
      for (int oi = 0; oi < d.Ho; ++oi)
        for (int oj = 0; oj < d.Wo; ++oj) {
          double acc = bv;
          int i0 = oi * d.stride - d.pad;
          int j0 = oj * d.stride - d.pad;
          for (int ci = 0; ci < d.Ci; ++ci)
            for (int ki = 0; ki < d.kh; ++ki)
              for (int kj = 0; kj < d.kw; ++kj)
                acc += xat(b, ci, i0 + ki, j0 + kj) *
                       wv[(((size_t)co * d.Ci + ci) * d.kh + ki) * d.kw + kj];
          ov[(((size_t)b * d.Co + co) * d.Ho + oi) * d.Wo + oj] = acc;
        }
    }
  if (!wants_record(t, {&x, &w, &bias})) return out;
  int nx = t->node_of(x), nw = t->node_of(w);
  int nbias = bias.defined() ? t->node_of(bias) : -1;
  Tensor xc = x, wc = w;
  int node = t->emit([nx, nw, nbias, xc, wc, d](Tape& tp, const std::vector<double>& g) {
    const double* xv2 = xc.values().data();
    const double* wv2 = wc.values().data();
    auto gidx = [&](int b, int co, int oi, int oj) {
      return (((size_t)b * d.Co + co) * d.Ho + oi) * d.Wo + oj;
    };
    if (nx >= 0) {
      std::vector<double> gx((size_t)d.B * d.Ci * d.H * d.W, 0.0);
      for (int b = 0; b < d.B; ++b)
        for (int co = 0; co < d.Co; ++co)
          for (int oi = 0; oi < d.Ho; ++oi)
            for (int oj = 0; oj < d.Wo; ++oj) {
              double gv = g[gidx(b, co, oi, oj)];
              if (gv == 0.0) continue;
              int i0 = oi * d.stride - d.pad;
              int j0 = oj * d.stride - d.pad;
              for (int ci = 0; ci < d.Ci; ++ci)
                for (int ki = 0; ki < d.kh; ++ki) {
                  int i = i0 + ki;
                  if (i < 0 || i >= d.H) continue;
                  for (int kj = 0; kj < d.kw; ++kj) {
                    int j = j0 + kj;
                    if (j < 0 || j >= d.W) continue;
                    gx[(((size_t)b * d.Ci + ci) * d.H + i) * d.W + j] +=
                        gv * wv2[(((size_t)co * d.Ci + ci) * d.kh + ki) * d.kw + kj];
                  }
                }
            }
      tp.accumulate(nx, gx);
    }
    if (nw >= 0) {
      std::vector<double> gw((size_t)d.Co * d.Ci * d.kh * d.kw, 0.0);
      for (int b = 0; b < d.B; ++b)
        for (int co = 0; co < d.Co; ++co)
          for (int oi = 0; oi < d.Ho; ++oi)
            for (int oj = 0; oj < d.Wo; ++oj) {
              double gv = g[gidx(b, co, oi, oj)];
              if (gv == 0.0) continue;
              int i0 = oi * d.stride - d.pad;
              int j0 = oj * d.stride - d.pad;
              for (int ci = 0; ci < d.Ci; ++ci)
                for (int ki = 0; ki < d.kh; ++ki) {
                  int i = i0 + ki;
                  if (i < 0 || i >= d.H) continue;
                  for (int kj = 0; kj < d.kw; ++kj) {
                    int j = j0 + kj;
                    if (j < 0 || j >= d.W) continue;
                    gw[(((size_t)co * d.Ci + ci) * d.kh + ki) * d.kw + kj] +=
                        gv * xv2[(((size_t)b * d.Ci + ci) * d.H + i) * d.W + j];
                  }
                }
            }
      tp.accumulate(nw, gw);
    }
    if (nbias >= 0) {
      std::vector<double> gb(d.Co, 0.0);
      for (int b = 0; b < d.B; ++b)
        for (int co = 0; co < d.Co; ++co)
          for (int oi = 0; oi < d.Ho; ++oi)
            for (int oj = 0; oj < d.Wo; ++oj) gb[co] += g[gidx(b, co, oi, oj)];
      tp.accumulate(nbias, gb);
    }
  });
  t->attach_output(out, node);
  return out;
}

Tensor relu(Tape* t, const Tensor& x) {
  Tensor out(x.shape());
  const auto& xv = x.values();
  auto& ov = out.values();
  for (size_t i = 0; i < xv.size(); ++i) ov[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  if (!wants_record(t, {&x})) return out;
  int nx = t->node_of(x);
  Tensor xc = x;
  int node = t->emit([nx, xc](Tape& tp, const std::vector<double>& g) {
    if (nx < 0) return;
    const auto& xv2 = xc.values();
    std::vector<double> gx(g.size());
    for (size_t i = 0; i < g.size(); ++i) gx[i] = xv2[i] > 0.0 ? g[i] : 0.0;
    tp.accumulate(nx, gx);
  });
  t->attach_output(out, node);
  return out;
}

Tensor maxpool2d(Tape* t, const Tensor& x, int kernel, int stride) {
  PoolDims d = pool_dims(x.shape(), kernel, stride, "maxpool2d");
  Tensor out(Shape{d.B, d.C, d.Ho, d.Wo});
  std::vector<int64_t> arg((size_t)d.B * d.C * d.Ho * d.Wo);
  const double* xv = x.values().data();
  double* ov = out.values().data();
  size_t o = 0;
  for (int b = 0; b < d.B; ++b)
    for (int c = 0; c < d.C; ++c) {
      const double* plane = xv + ((size_t)b * d.C + c) * d.H * d.W;
      for (int oi = 0; oi < d.Ho; ++oi)
        for (int oj = 0; oj < d.Wo; ++oj, ++o) {
          int i0 = oi * d.s, j0 = oj * d.s;
          double best = plane[(size_t)i0 * d.W + j0];
          int64_t bi = (size_t)i0 * d.W + j0;
          for (int ki = 0; ki < d.k; ++ki)
            for (int kj = 0; kj < d.k; ++kj) {
              int64_t idx = (size_t)(i0 + ki) * d.W + (j0 + kj);
              if (plane[idx] > best) {
                best = plane[idx];
                bi = idx;
              }
            }
          ov[o] = best;
          arg[o] = ((size_t)b * d.C + c) * d.H * d.W + bi;
        }
    }
  if (!wants_record(t, {&x})) return out;
  int nx = t->node_of(x);
  size_t in_size = x.values().size();
  int node = t->emit([nx, arg = std::move(arg), in_size](Tape& tp, const std::vector<double>& g) {
    if (nx < 0) return;
    std::vector<double> gx(in_size, 0.0);
    for (size_t i = 0; i < g.size(); ++i) gx[(size_t)arg[i]] += g[i];
    tp.accumulate(nx, gx);
  });
  t->attach_output(out, node);
  return out;
}

Tensor avgpool2d(Tape* t, const Tensor& x, int kernel, int stride) {
  PoolDims d = pool_dims(x.shape(), kernel, stride, "avgpool2d");
  Tensor out(Shape{d.B, d.C, d.Ho, d.Wo});
  const double* xv = x.values().data();
  double* ov = out.values().data();
  double inv = 1.0 / (kernel * kernel);
  size_t o = 0;
  for (int b = 0; b < d.B; ++b)
    for (int c = 0; c < d.C; ++c) {
      const double* plane = xv + ((size_t)b * d.C + c) * d.H * d.W;
      for (int oi = 0; oi < d.Ho; ++oi)
        for (int oj = 0; oj < d.Wo; ++oj, ++o) {
          int i0 = oi * d.s, j0 = oj * d.s;
          double acc = 0.0;
          for (int ki = 0; ki < d.k; ++ki)
            for (int kj = 0; kj < d.k; ++kj) acc += plane[(size_t)(i0 + ki) * d.W + (j0 + kj)];
          ov[o] = acc * inv;
        }
    }
  if (!wants_record(t, {&x})) return out;
  int nx = t->node_of(x);
  size_t in_size = x.values().size();
  int node = t->emit([nx, d, inv, in_size](Tape& tp, const std::vector<double>& g) {
    if (nx < 0) return;
    std::vector<double> gx(in_size, 0.0);
    size_t o2 = 0;
    for (int b = 0; b < d.B; ++b)
      for (int c = 0; c < d.C; ++c) {
        double* plane = gx.data() + ((size_t)b * d.C + c) * d.H * d.W;
        for (int oi = 0; oi < d.Ho; ++oi)
          for (int oj = 0; oj < d.Wo; ++oj, ++o2) {
            double gv = g[o2] * inv;
            int i0 = oi * d.s, j0 = oj * d.s;
            for (int ki = 0; ki < d.k; ++ki)
              for (int kj = 0; kj < d.k; ++kj) plane[(size_t)(i0 + ki) * d.W + (j0 + kj)] += gv;
          }
      }
    tp.accumulate(nx, gx);
  });
  t->attach_output(out, node);
  return out;
}

Tensor flatten(Tape* t, const Tensor& x) {
  const Shape& xs = x.shape();
  check(xs.size() >= 2, cat("flatten: need rank >= 2, got ", shape_str(xs)));
  int64_t rest = 1;
  for (size_t i = 1; i < xs.size(); ++i) rest *= xs[i];
  Tensor out(Shape{xs[0], (int)rest}, x.values());
  if (!wants_record(t, {&x})) return out;
  int nx = t->node_of(x);
  int node = t->emit([nx](Tape& tp, const std::vector<double>& g) {
    if (nx >= 0) tp.accumulate(nx, g);
  });
  t->attach_output(out, node);
  return out;
}

Tensor softmax_cross_entropy(Tape* t, const Tensor& logits, const std::vector<int>& labels,
                             std::vector<double>* per_sample) {
  const Shape& ls = logits.shape();
  check(ls.size() == 2, cat("softmax_cross_entropy: logits must be 2-d, got ", shape_str(ls)));
  int B = ls[0], C = ls[1];
  check((int)labels.size() == B,
        cat("softmax_cross_entropy: ", labels.size(), " labels for batch of ", B));
  for (int i = 0; i < B; ++i)
    check(labels[i] >= 0 && labels[i] < C,
          cat("softmax_cross_entropy: label ", labels[i], " out of range [0,", C, ")"));
  const double* lv = logits.values().data();
  std::vector<double> losses(B);
  std::vector<double> probs = row_softmax(logits.values(), B, C);
  for (int i = 0; i < B; ++i) {
    const double* li = lv + (size_t)i * C;
    double mx = li[0];
    for (int j = 1; j < C; ++j) mx = std::max(mx, li[j]);
    double z = 0.0;
    for (int j = 0; j < C; ++j) z += std::exp(li[j] - mx);
    losses[i] = mx + std::log(z) - li[labels[i]];
  }
  if (per_sample) *per_sample = losses;
  double total = 0.0;
  for (double v : losses) total += v;
  Tensor out = Tensor::scalar(total / B);
  if (!wants_record(t, {&logits})) return out;
  int nl = t->node_of(logits);
  int node = t->emit(
      [nl, probs = std::move(probs), labels, B, C](Tape& tp, const std::vector<double>& g) {
        if (nl < 0) return;
        double gs = g[0] / B;
        std::vector<double> gl((size_t)B * C);
        for (int i = 0; i < B; ++i)
          for (int j = 0; j < C; ++j)
            gl[(size_t)i * C + j] =
                gs * (probs[(size_t)i * C + j] - (j == labels[i] ? 1.0 : 0.0));
        tp.accumulate(nl, gl);
      });
  t->attach_output(out, node);
  return out;
}

Tensor l2_norm_squared(Tape* t, const Tensor& x) {
  const auto& xv = x.values();
  double acc = 0.0;
  for (double v : xv) acc += v * v;
  Tensor out = Tensor::scalar(acc);
  if (!wants_record(t, {&x})) return out;
  int nx = t->node_of(x);
  Tensor xc = x;
  int node = t->emit([nx, xc](Tape& tp, const std::vector<double>& g) {
    if (nx < 0) return;
    const auto& xv2 = xc.values();
    std::vector<double> gx(xv2.size());
    for (size_t i = 0; i < xv2.size(); ++i) gx[i] = 2.0 * xv2[i] * g[0];
    tp.accumulate(nx, gx);
  });
  t->attach_output(out, node);
  return out;
}

Tensor scalar_scale(Tape* t, const Tensor& x, double c) {
  Tensor out(x.shape());
  const auto& xv = x.values();
  auto& ov = out.values();
  for (size_t i = 0; i < xv.size(); ++i) ov[i] = c * xv[i];
  if (!wants_record(t, {&x})) return out;
  int nx = t->node_of(x);
  int node = t->emit([nx, c](Tape& tp, const std::vector<double>& g) {
    if (nx < 0) return;
    std::vector<double> gx(g.size());
    for (size_t i = 0; i < g.size(); ++i) gx[i] = c * g[i];
    tp.accumulate(nx, gx);
  });
  t->attach_output(out, node);
  return out;
}

Tensor sum(Tape* t, const Tensor& x) {
  const auto& xv = x.values();
  double acc = 0.0;
  for (double v : xv) acc += v;
  Tensor out = Tensor::scalar(acc);
  if (!wants_record(t, {&x})) return out;
  int nx = t->node_of(x);
  size_t n = xv.size();
  int node = t->emit([nx, n](Tape& tp, const std::vector<double>& g) {
    if (nx < 0) return;
    std::vector<double> gx(n, g[0]);
    tp.accumulate(nx, gx);
  });
  t->attach_output(out, node);
  return out;
}

Tensor mean(Tape* t, const Tensor& x) {
  const auto& xv = x.values();
  double acc = 0.0;
  for (double v : xv) acc += v;
  size_t n = xv.size();
  Tensor out = Tensor::scalar(acc / n);
  if (!wants_record(t, {&x})) return out;
  int nx = t->node_of(x);
  int node = t->emit([nx, n](Tape& tp, const std::vector<double>& g) {
    if (nx < 0) return;
    std::vector<double> gx(n, g[0] / n);
    tp.accumulate(nx, gx);
  });
  t->attach_output(out, node);
  return out;
}

}  // namespace fp
