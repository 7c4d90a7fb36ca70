#pragma once
#include <string>
#include <vector>

#include "fp/ops.hpp"
#include "fp/rng.hpp"

namespace fp {

enum class AtomKind { Linear, ConvRelu, ConvReluPool };

// Smallest indivisible backbone block. Copies of an Atom share parameter
// storage (snapshot views); clone_deep() makes an independent trainable copy.
struct Atom {
  AtomKind kind = AtomKind::Linear;
  Shape in_shape, out_shape;  // per-sample shapes
  Tensor W, b;
  int stride = 1, pad = 1;

  Tensor forward(Tape* t, const Tensor& x) const;  // x is (batch, in_shape...)
  int64_t param_count() const;
  int64_t in_elems() const;
  int64_t out_elems() const;
  int64_t forward_flops(int batch) const;  // multiply-accumulate pairs, 2 flops each
  Atom clone_deep() const;
  std::vector<Tensor> params() const;
};

Atom make_linear_atom(int in_dim, int out_dim, uint64_t seed);
Atom make_conv_atom(Shape in_shape, int out_channels, bool pool, uint64_t seed);

// One affine layer mapping flattened features to class logits.
struct AuxHead {
  Tensor W;  // (feat, classes)
  Tensor b;  // (classes)
  Tensor logits(Tape* t, const Tensor& features) const;
  AuxHead clone_deep() const;
  int feat_dim() const { return W.dim(0); }
  int classes() const { return W.dim(1); }
};

AuxHead make_aux_head(int feat_dim, int classes, uint64_t seed);

struct ModuleSpec {
  int index = 0;     // 1-based
  int atom_lo = 0;   // inclusive, 0-based into Backbone::atoms
  int atom_hi = 0;   // inclusive
  AuxHead aux;
  bool frozen = false;
};

struct Backbone {
  std::string preset;
  Shape input_shape;  // per-sample
  int classes = 0;
  std::vector<Atom> atoms;
  std::vector<ModuleSpec> modules;

  int M() const { return (int)modules.size(); }
  const ModuleSpec& module(int m) const;  // 1-based
  ModuleSpec& module(int m);
  int64_t flat_out_dim(int atom_idx) const;

  Tensor forward_atoms(Tape* t, const Tensor& x, int lo, int hi) const;
  Backbone clone_deep() const;
};

// Atom list for a named preset; module boundaries come from the partitioner.
std::vector<Atom> make_preset_atoms(const std::string& preset, const Shape& input_shape,
                                    uint64_t seed);

// Installs module boundaries (pairs of inclusive atom ranges) and seeds one
// aux head per module.
void install_modules(Backbone& bb, const std::vector<std::pair<int, int>>& ranges,
                     uint64_t seed);

// Feature entering module m: input passed through modules 1..m-1, which must
// all be frozen. m=1 returns x unchanged. Never records on a tape.
Tensor forward_frozen_prefix(const Backbone& bb, const Tensor& x, int m);

struct LossOut {
  Tensor loss;                     // scalar: mean CE + (mu/2)*mean ||z||^2
  Tensor logits;                   // (batch, classes)
  Tensor features;                 // (batch, feat) flattened output of last atom
  std::vector<double> per_sample;  // CE_i + (mu/2)*||z_i||^2
};

// Cross entropy through the aux head on top of atoms, plus the strong
// convexity regularizer on the (flattened) output feature.
LossOut cascade_loss(Tape* t, const std::vector<Atom>& atoms, const AuxHead& head,
                     const Tensor& z_prev, const std::vector<int>& labels, double mu);

// Loss of module m alone, fed with z_{m-1}.
LossOut early_exit_loss(Tape* t, const Backbone& bb, int m, const Tensor& z_prev,
                        const std::vector<int>& labels, double mu);

// Joint loss of modules m..mk through the aux head of module mk only.
LossOut prophet_loss(Tape* t, const Backbone& bb, int m, int mk, const Tensor& z_prev,
                     const std::vector<int>& labels, double mu);

// Minimum eigenvalue of the per-sample loss Hessian in z, over the given
// sample points; Hessian columns come from finite differences of tape
// gradients. Labels default to class 0 (curvature does not depend on them).
double strong_convexity_check(const AuxHead& head, double mu, const std::vector<Tensor>& zs,
                              double h = 1e-5);

}  // namespace fp
