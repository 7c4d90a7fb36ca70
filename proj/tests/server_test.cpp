#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "fp/client.hpp"
#include "fp/fleet.hpp"
#include "fp/net.hpp"
#include "fp/part.hpp"
#include "fp/rng.hpp"
#include "fp/server.hpp"

using namespace fp;

namespace {

Backbone chain(const std::vector<int>& dims, const std::vector<std::pair<int, int>>& ranges,
               int classes, uint64_t seed) {
  Backbone bb;
  bb.preset = "chain";
  bb.input_shape = {dims.front()};
  bb.classes = classes;
  for (size_t i = 0; i + 1 < dims.size(); ++i)
    bb.atoms.push_back(make_linear_atom(dims[i], dims[i + 1], seed + i));
  install_modules(bb, ranges, seed * 31 + 7);
  return bb;
}

LocalUpdate shaped_update(const Backbone& bb, int client, int first, int last) {
  LocalUpdate u;
  u.client = client;
  u.first_module = first;
  u.last_module = last;
  for (int n = first; n <= last; ++n) {
    ModuleParams mp;
    mp.module = n;
    const ModuleSpec& ms = bb.module(n);
    for (int a = ms.atom_lo; a <= ms.atom_hi; ++a)
      for (const Tensor& p : bb.atoms[a].params()) mp.tensors.push_back(p.detached_copy());
    u.modules.push_back(mp);
  }
  u.aux_w = bb.module(last).aux.W.detached_copy();
  u.aux_b = bb.module(last).aux.b.detached_copy();
  return u;
}

void fill_update(LocalUpdate& u, double v) {
  for (ModuleParams& mp : u.modules)
    for (Tensor& t : mp.tensors) std::fill(t.values().begin(), t.values().end(), v);
  std::fill(u.aux_w.values().begin(), u.aux_w.values().end(), v);
  std::fill(u.aux_b.values().begin(), u.aux_b.values().end(), v);
}

LocalUpdate clone_update(const LocalUpdate& u) {
  LocalUpdate c = u;
  for (ModuleParams& mp : c.modules)
    for (Tensor& t : mp.tensors) t = t.detached_copy();
  c.aux_w = u.aux_w.detached_copy();
  c.aux_b = u.aux_b.detached_copy();
  return c;
}

void fill_backbone(Backbone& bb, double v) {
  for (Atom& a : bb.atoms)
    for (Tensor p : a.params()) std::fill(p.values().begin(), p.values().end(), v);
  for (ModuleSpec& ms : bb.modules) {
    std::fill(ms.aux.W.values().begin(), ms.aux.W.values().end(), v);
    std::fill(ms.aux.b.values().begin(), ms.aux.b.values().end(), v);
  }
}

std::vector<double> collect_module(const Backbone& bb, int n) {
  std::vector<double> out;
  const ModuleSpec& ms = bb.module(n);
  for (int a = ms.atom_lo; a <= ms.atom_hi; ++a)
    for (const Tensor& p : bb.atoms[a].params())
      out.insert(out.end(), p.values().begin(), p.values().end());
  return out;
}

}  // namespace

TEST_CASE("alpha control follows the accuracy gap against its reference") {
  PerturbationSchedule s;
  CHECK(s.alpha == doctest::Approx(0.3));
  s.set_reference(0.65, 0.50);  // gap 1.30, band 1.235 .. 1.365
  s.set_dstar(1.0);

  SUBCASE("gap above the band raises alpha") {
    adjust_alpha(s, 0.70, 0.50);  // gap 1.40
    CHECK(s.alpha == doctest::Approx(0.4));
  }
  SUBCASE("gap inside the band holds alpha") {
    adjust_alpha(s, 0.65, 0.50);
    CHECK(s.alpha == doctest::Approx(0.3));
    adjust_alpha(s, 0.66, 0.50);  // gap 1.32
    CHECK(s.alpha == doctest::Approx(0.3));
  }
  SUBCASE("gap below the band lowers alpha") {
    PerturbationSchedule t;
    t.set_reference(0.80, 0.40);  // gap 2.0, band 1.9 .. 2.1
    t.set_dstar(1.0);
    adjust_alpha(t, 0.72, 0.40);  // gap 1.8
    CHECK(t.alpha == doctest::Approx(0.2));
  }
  SUBCASE("a wiped-out adversarial accuracy counts as an infinite gap") {
    adjust_alpha(s, 0.70, 0.0);
    CHECK(s.alpha == doctest::Approx(0.4));
  }
}

TEST_CASE("alpha parks at the rails instead of crossing them") {
  PerturbationSchedule s;
  s.set_reference(0.6, 0.5);
  s.set_dstar(2.0);
  for (int i = 0; i < 40; ++i) adjust_alpha(s, 0.9, 0.0);
  CHECK(s.alpha == doctest::Approx(2.0));
  CHECK(s.epsilon == doctest::Approx(4.0));
  adjust_alpha(s, 0.9, 0.0);
  CHECK(s.alpha == doctest::Approx(2.0));

  for (int i = 0; i < 40; ++i) adjust_alpha(s, 0.5, 0.5);  // gap 1.0, far below the band
  CHECK(s.alpha == doctest::Approx(0.1));
  adjust_alpha(s, 0.5, 0.5);
  CHECK(s.alpha == doctest::Approx(0.1));
  CHECK(s.epsilon == doctest::Approx(0.2));
}

TEST_CASE("alpha trace moves in tenth steps and epsilon follows it") {
  PerturbationSchedule s;
  s.set_reference(0.7, 0.5);
  s.set_dstar(0.37);
  Rng rng(4242);
  double prev = s.alpha;
  for (int i = 0; i < 500; ++i) {
    double adv = rng.uniform(0.0, 0.8);
    double clean = adv + rng.uniform(0.0, 0.2);
    adjust_alpha(s, clean, adv);
    double diff = s.alpha - prev;
    bool legal = std::abs(diff) < 1e-9 || std::abs(std::abs(diff) - 0.1) < 1e-9;
    CHECK(legal);
    CHECK(s.alpha > 0.1 - 1e-9);
    CHECK(s.alpha < 2.0 + 1e-9);
    CHECK(s.epsilon == doctest::Approx(s.alpha * 0.37).epsilon(1e-12));
    prev = s.alpha;
  }
}

TEST_CASE("epsilon is the measured displacement scaled by alpha") {
  PerturbationSchedule s;
  CHECK(s.epsilon == 0.0);
  s.set_dstar(0.5);
  CHECK(s.epsilon == doctest::Approx(0.15));
  s.set_reference(0.9, 0.6);  // gap 1.5
  adjust_alpha(s, 0.9, 0.3);  // gap 3.0
  CHECK(s.alpha == doctest::Approx(0.4));
  CHECK(s.epsilon == doctest::Approx(0.2));
  s.set_dstar(1.25);
  CHECK(s.epsilon == doctest::Approx(0.5));

  CHECK_THROWS(s.set_dstar(-0.1));
  CHECK_THROWS(s.set_reference(0.5, 0.0));
  CHECK_THROWS(s.set_reference(0.4, 0.5));
  PerturbationSchedule fresh;
  CHECK_THROWS(adjust_alpha(fresh, 0.5, 0.4));
}

TEST_CASE("assignment walk stops at the first budget violation") {
  std::vector<int64_t> mem = {10, 30, 70};
  std::vector<int64_t> flops = {10, 20, 40};
  CHECK(max_assignable(1, 3, mem, flops, 100, 3.0) == 2);  // 40 flops over a 30 budget
  CHECK(max_assignable(1, 3, mem, flops, 100, 1.0) == 1);
  CHECK(max_assignable(1, 3, mem, flops, 100, 4.0) == 3);
  CHECK(max_assignable(1, 3, mem, flops, 35, 10.0) == 2);  // 70 bytes over 35
  CHECK(max_assignable(1, 3, mem, flops, 10, 10.0) == 1);
  CHECK_THROWS(max_assignable(1, 3, mem, flops, 9, 10.0));  // current module cannot fit
  CHECK_THROWS(max_assignable(0, 3, mem, flops, 100, 1.0));
  CHECK_THROWS(max_assignable(1, 3, mem, flops, 100, 0.5));  // below the fleet floor
  CHECK_THROWS(max_assignable(2, 3, mem, flops, 100, 1.0));  // arrays sized for stage 1
}

TEST_CASE("assignment agrees with exhaustive search on random cost tables") {
  Rng rng(77);
  for (int trial = 0; trial < 300; ++trial) {
    int M = 1 + (int)rng.index(6);
    int m = 1 + (int)rng.index(M);
    int len = M - m + 1;
    std::vector<int64_t> mem(len), flops(len);
    int64_t acc_m = 1 + (int64_t)rng.index(50);
    int64_t acc_f = 1 + (int64_t)rng.index(50);
    for (int i = 0; i < len; ++i) {
      if (i) {
        acc_m += 1 + (int64_t)rng.index(60);
        acc_f += 1 + (int64_t)rng.index(60);
      }
      mem[i] = acc_m;
      flops[i] = acc_f;
    }
    int64_t mem_avail = mem[0] + (int64_t)rng.index(200);
    double ratio = 1.0 + rng.uniform(0.0, 3.0);
    int got = max_assignable(m, M, mem, flops, mem_avail, ratio);
    int want = m;
    for (int j = m; j <= M; ++j) {
      bool ok = true;
      for (int i = m; i <= j; ++i)
        if (mem[i - m] > mem_avail || (double)flops[i - m] > ratio * (double)flops[0]) ok = false;
      if (ok) want = j;
    }
    CHECK(got == want);
  }
}

TEST_CASE("fleet assignment respects every device budget") {
  Shape in = {100};
  std::vector<Atom> atoms = make_preset_atoms("mlp-4x64", in, 11);
  CostModel cm;
  int classes = 10;
  int64_t whole = module_mem_req(atoms, 0, (int)atoms.size() - 1, classes, cm);
  int64_t r_min = (int64_t)llround(0.40 * (double)whole);
  PartitionPlan part = greedy_partition(atoms, classes, r_min, cm, 7);
  Backbone bb;
  bb.preset = "mlp-4x64";
  bb.input_shape = in;
  bb.classes = classes;
  bb.atoms = atoms;
  install_modules(bb, part.ranges(), 19);
  int M = bb.M();
  REQUIRE(M >= 2);

  std::vector<ClientRecord> fleet =
      sample_fleet(default_profiles(r_min), 24, FleetRegime::Unbalanced, 5);
  tick_resources(fleet, 3, 5, r_min);
  double p_min = min_performance(fleet);

  for (int m = 1; m <= M; ++m) {
    RoundPlan plan = assign_modules(bb, m, fleet, cm, 7, 3);
    CHECK(plan.current_module == m);
    CHECK(plan.round == 3);
    REQUIRE(plan.last_module.size() == fleet.size());
    int lo = bb.module(m).atom_lo;
    int64_t flops_m = train_flops(bb.atoms, lo, bb.module(m).atom_hi, cm, 7);
    for (size_t k = 0; k < fleet.size(); ++k) {
      int mk = plan.last_module[k];
      REQUIRE(mk >= m);
      REQUIRE(mk <= M);
      double budget = fleet[k].perf_avail / p_min * (double)flops_m;
      int hi = bb.module(mk).atom_hi;
      CHECK(module_mem_req(bb.atoms, lo, hi, classes, cm) <= fleet[k].mem_avail);
      CHECK((double)train_flops(bb.atoms, lo, hi, cm, 7) <= budget * (1 + 1e-12));
      if (mk < M) {
        int hi2 = bb.module(mk + 1).atom_hi;
        bool mem_block = module_mem_req(bb.atoms, lo, hi2, classes, cm) > fleet[k].mem_avail;
        bool flop_block = (double)train_flops(bb.atoms, lo, hi2, cm, 7) > budget;
        CHECK((mem_block || flop_block));
      }
      if (fleet[k].perf_avail == p_min) CHECK(mk == m);
    }
    std::vector<int> seen(fleet.size(), 0);
    for (int n = m; n <= M; ++n) {
      for (int k : plan.k_set(n)) {
        CHECK(plan.last_module[k] == n);
        ++seen[k];
      }
      std::vector<int> sset = plan.s_set(n);
      for (size_t k = 0; k < fleet.size(); ++k) {
        bool in_s = std::find(sset.begin(), sset.end(), (int)k) != sset.end();
        CHECK(in_s == (plan.last_module[k] >= n));
      }
    }
    for (int c : seen) CHECK(c == 1);
  }
}

TEST_CASE("backbone pooling averages contributions by data weight") {
  Backbone bb = chain({4, 3, 2}, {{0, 0}, {1, 1}}, 2, 31);
  fill_backbone(bb, 9.0);
  RoundPlan plan;
  plan.current_module = 1;
  plan.last_module = {2, 2};
  LocalUpdate u0 = shaped_update(bb, 0, 1, 2);
  fill_update(u0, 2.0);
  LocalUpdate u1 = shaped_update(bb, 1, 1, 2);
  fill_update(u1, 4.0);
  aggregate_backbone(bb, {u0, u1}, {0.2, 0.3}, plan);
  for (int n = 1; n <= 2; ++n)
    for (double v : collect_module(bb, n)) CHECK(v == doctest::Approx(3.2).epsilon(1e-14));
  CHECK(bb.module(1).aux.W.values()[0] == 9.0);  // heads belong to the other pass
}

TEST_CASE("modules beyond a device's reach keep the deeper clients' values") {
  Backbone bb = chain({4, 3, 2}, {{0, 0}, {1, 1}}, 2, 31);
  fill_backbone(bb, 9.0);
  RoundPlan plan;
  plan.current_module = 1;
  plan.last_module = {1, 2};
  LocalUpdate u0 = shaped_update(bb, 0, 1, 1);
  fill_update(u0, 2.0);
  LocalUpdate u1 = shaped_update(bb, 1, 1, 2);
  double odd = 0.1 + 0.2;  // off the binary grid
  fill_update(u1, odd);
  aggregate_backbone(bb, {u0, u1}, {0.25, 0.75}, plan);
  for (double v : collect_module(bb, 1))
    CHECK(v == doctest::Approx(0.25 * 2.0 + 0.75 * odd).epsilon(1e-14));
  // single contributor: copied verbatim, no weighting roundoff
  for (double v : collect_module(bb, 2)) CHECK(v == odd);

  SUBCASE("a module nobody reached carries over untouched") {
    fill_backbone(bb, 9.0);
    RoundPlan shallow;
    shallow.current_module = 1;
    shallow.last_module = {1, 1};
    LocalUpdate w0 = shaped_update(bb, 0, 1, 1);
    fill_update(w0, 2.0);
    LocalUpdate w1 = shaped_update(bb, 1, 1, 1);
    fill_update(w1, 4.0);
    aggregate_backbone(bb, {w0, w1}, {0.5, 0.5}, shallow);
    for (double v : collect_module(bb, 1)) CHECK(v == doctest::Approx(3.0).epsilon(1e-14));
    for (double v : collect_module(bb, 2)) CHECK(v == 9.0);
  }
}

TEST_CASE("identical updates survive pooling bit for bit") {
  Backbone bb = chain({5, 4, 3}, {{0, 0}, {1, 1}}, 3, 17);
  RoundPlan plan;
  plan.current_module = 1;
  plan.last_module = {2, 2};
  LocalUpdate u0 = shaped_update(bb, 0, 1, 2);
  int i = 0;
  for (ModuleParams& mp : u0.modules)
    for (Tensor& t : mp.tensors)
      for (double& v : t.values()) v = 0.1 * (++i) + 1.0 / 3.0;
  for (double& v : u0.aux_w.values()) v = 0.1 * (++i) + 1.0 / 3.0;
  for (double& v : u0.aux_b.values()) v = 0.1 * (++i) + 1.0 / 3.0;
  LocalUpdate u1 = clone_update(u0);
  u1.client = 1;

  std::vector<double> q = {1.0 / 3.0, 2.0 / 3.0};  // weights that do not sum to one exactly
  aggregate_backbone(bb, {u0, u1}, q, plan);
  aggregate_aux(bb, {u0, u1}, q, plan);
  for (int n = 1; n <= 2; ++n) {
    std::vector<double> got = collect_module(bb, n);
    size_t j = 0;
    for (const Tensor& t : u0.modules[n - 1].tensors)
      for (double v : t.values()) CHECK(got.at(j++) == v);
  }
  for (size_t j = 0; j < u0.aux_w.values().size(); ++j)
    CHECK(bb.module(2).aux.W.values()[j] == u0.aux_w.values()[j]);
  for (size_t j = 0; j < u0.aux_b.values().size(); ++j)
    CHECK(bb.module(2).aux.b.values()[j] == u0.aux_b.values()[j]);

  // pooling again changes nothing
  aggregate_backbone(bb, {u0, u1}, q, plan);
  std::vector<double> again = collect_module(bb, 1);
  size_t j = 0;
  for (const Tensor& t : u0.modules[0].tensors)
    for (double v : t.values()) CHECK(again.at(j++) == v);
}

TEST_CASE("head pooling follows the exact-stop set") {
  Backbone bb = chain({4, 4, 4}, {{0, 0}, {1, 1}}, 2, 23);
  fill_backbone(bb, 7.5);
  RoundPlan plan;
  plan.current_module = 1;
  plan.last_module = {1, 2, 2};
  LocalUpdate u0 = shaped_update(bb, 0, 1, 1);
  fill_update(u0, 1.0);
  LocalUpdate u1 = shaped_update(bb, 1, 1, 2);
  fill_update(u1, 2.0);
  LocalUpdate u2 = shaped_update(bb, 2, 1, 2);
  fill_update(u2, 5.0);
  aggregate_aux(bb, {u0, u1, u2}, {0.5, 0.25, 0.25}, plan);
  for (double v : bb.module(1).aux.W.values()) CHECK(v == 1.0);  // sole exact stop
  for (double v : bb.module(1).aux.b.values()) CHECK(v == 1.0);
  for (double v : bb.module(2).aux.W.values()) CHECK(v == doctest::Approx(3.5).epsilon(1e-14));
  for (double v : bb.module(2).aux.b.values()) CHECK(v == doctest::Approx(3.5).epsilon(1e-14));
  for (double v : collect_module(bb, 1)) CHECK(v == 7.5);  // backbone belongs to the other pass

  SUBCASE("a stage nobody stops at keeps its head") {
    fill_backbone(bb, 7.5);
    RoundPlan deep;
    deep.current_module = 1;
    deep.last_module = {2, 2};
    LocalUpdate w0 = shaped_update(bb, 0, 1, 2);
    fill_update(w0, 1.0);
    LocalUpdate w1 = shaped_update(bb, 1, 1, 2);
    fill_update(w1, 3.0);
    aggregate_aux(bb, {w0, w1}, {0.5, 0.5}, deep);
    for (double v : bb.module(1).aux.W.values()) CHECK(v == 7.5);
    for (double v : bb.module(2).aux.W.values()) CHECK(v == doctest::Approx(2.0).epsilon(1e-14));
  }
}

TEST_CASE("scope or shape drift in an update is rejected") {
  Backbone bb = chain({4, 3, 2}, {{0, 0}, {1, 1}}, 2, 31);
  RoundPlan plan;
  plan.current_module = 1;
  plan.last_module = {2, 2};
  auto mk = [&](int c, double v) {
    LocalUpdate u = shaped_update(bb, c, 1, 2);
    fill_update(u, v);
    return u;
  };

  {
    auto u0 = mk(0, 1.0), u1 = mk(1, 2.0);
    u1.client = 7;
    CHECK_THROWS(aggregate_backbone(bb, {u0, u1}, {0.5, 0.5}, plan));
  }
  {
    auto u0 = mk(0, 1.0), u1 = mk(1, 2.0);
    u1.first_module = 2;
    CHECK_THROWS(aggregate_backbone(bb, {u0, u1}, {0.5, 0.5}, plan));
  }
  {
    auto u0 = mk(0, 1.0), u1 = mk(1, 2.0);
    u1.modules.pop_back();
    CHECK_THROWS(aggregate_backbone(bb, {u0, u1}, {0.5, 0.5}, plan));
  }
  {
    auto u0 = mk(0, 1.0), u1 = mk(1, 2.0);
    u1.modules[0].tensors.pop_back();
    CHECK_THROWS(aggregate_backbone(bb, {u0, u1}, {0.5, 0.5}, plan));
  }
  {
    auto u0 = mk(0, 1.0), u1 = mk(1, 2.0);
    u1.modules[1].tensors[0] = Tensor({5}, std::vector<double>(5, 1.0));
    CHECK_THROWS(aggregate_backbone(bb, {u0, u1}, {0.5, 0.5}, plan));
  }
  {
    auto u0 = mk(0, 1.0), u1 = mk(1, 2.0);
    u1.last_module = 1;
    u1.modules.pop_back();
    CHECK_THROWS(aggregate_backbone(bb, {u0, u1}, {0.5, 0.5}, plan));
  }
  {
    auto u0 = mk(0, 1.0);
    CHECK_THROWS(aggregate_backbone(bb, {u0}, {0.5}, plan));  // one update short of the plan
  }
  {
    auto u0 = mk(0, 1.0), u1 = mk(1, 2.0);
    CHECK_THROWS(aggregate_backbone(bb, {u0, u1}, {0.5}, plan));  // weight list short
  }
  {
    auto u0 = mk(0, 1.0), u1 = mk(1, 2.0);
    CHECK_THROWS(aggregate_backbone(bb, {u0, u1}, {0.0, 0.0}, plan));  // nothing to weight by
  }
  {
    auto u0 = mk(0, 1.0), u1 = mk(1, 2.0);
    u1.aux_w = Tensor({3, 2}, std::vector<double>(6, 0.0));
    CHECK_THROWS(aggregate_aux(bb, {u0, u1}, {0.5, 0.5}, plan));  // head shape drift
  }
}

TEST_CASE("validation pooling is a data-weighted mean") {
  std::vector<EvalResult> r(2);
  r[0] = {0.8, 0.5, 10};
  r[1] = {0.6, 0.3, 10};
  auto [c, a] = aggregate_validation(r, {0.5, 0.5});
  CHECK(c == doctest::Approx(0.7));
  CHECK(a == doctest::Approx(0.4));

  auto [c2, a2] = aggregate_validation(r, {0.2, 0.3});  // weights need not sum to one
  CHECK(c2 == doctest::Approx(0.68));
  CHECK(a2 == doctest::Approx(0.38));

  // equal shards pool exactly like one concatenated evaluation
  std::vector<EvalResult> d(2);
  d[0] = {6.0 / 8, 4.0 / 8, 8};
  d[1] = {5.0 / 8, 3.0 / 8, 8};
  auto [cd, ad] = aggregate_validation(d, {0.5, 0.5});
  CHECK(cd == 11.0 / 16);
  CHECK(ad == 7.0 / 16);

  CHECK_THROWS(aggregate_validation({}, {}));
  CHECK_THROWS(aggregate_validation(r, {0.5}));
  CHECK_THROWS(aggregate_validation(r, {0.0, 0.0}));
  std::vector<EvalResult> bad = r;
  bad[1].n = 0;
  CHECK_THROWS(aggregate_validation(bad, {0.5, 0.5}));
}
