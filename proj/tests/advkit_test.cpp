#include "testmain.hpp"

#include <cmath>

#include "fp/adv.hpp"

using namespace fp;

namespace {

Backbone one_linear_module(int dim, int classes, uint64_t seed, bool identity = false,
                           double scale = 1.0) {
  Backbone bb;
  bb.preset = "toy";
  bb.input_shape = {dim};
  bb.classes = classes;
  Atom a = make_linear_atom(dim, dim, seed);
  if (identity) {
    for (auto& v : a.W.values()) v = 0.0;
    for (int i = 0; i < dim; ++i) a.W.values()[(size_t)i * dim + i] = scale;
    for (auto& v : a.b.values()) v = 0.0;
  }
  bb.atoms = {a};
  install_modules(bb, {{0, 0}}, seed);
  return bb;
}

}  // namespace

TEST_CASE("single linf sign step") {
  AttackObjective obj;
  obj.eval = [](const Tensor& x, Tensor* grad) {
    double v = x.values()[0];
    if (grad) {
      *grad = Tensor(x.shape());
      grad->values()[0] = 2 * v;
    }
    return std::vector<double>{v * v};
  };
  AttackCfg cfg;
  cfg.norm = Norm::Linf;
  cfg.epsilon = 0.5;
  cfg.step_size = 0.5;
  cfg.steps = 1;
  cfg.random_start = false;
  Rng rng(1);
  Tensor x0({1, 1}, {1.0});
  Tensor d = pgd_attack(obj, x0, cfg, rng);
  CHECK(d.values()[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(obj.eval(Tensor({1, 1}, {1.5}), nullptr)[0] == doctest::Approx(2.25));
}

TEST_CASE("constant loss keeps the start point") {
  AttackObjective obj;
  obj.eval = [](const Tensor& x, Tensor* grad) {
    if (grad) *grad = Tensor(x.shape());
    return std::vector<double>(x.dim(0), 3.14);
  };
  AttackCfg cfg;
  cfg.norm = Norm::L2;
  cfg.epsilon = 1.0;
  cfg.step_size = 0.25;
  cfg.random_start = true;
  Tensor x0({2, 3}, {0, 0, 0, 1, 1, 1});
  cfg.steps = 1;
  Rng r1(42);
  Tensor d1 = pgd_attack(obj, x0, cfg, r1);
  cfg.steps = 7;
  Rng r2(42);
  Tensor d2 = pgd_attack(obj, x0, cfg, r2);
  // the best candidate stays the (identically drawn) random start
  CHECK(d1.values() == d2.values());
  for (int i = 0; i < 2; ++i) {
    double nr = 0;
    for (int j = 0; j < 3; ++j) {
      double v = d1.values()[i * 3 + j];
      nr += v * v;
    }
    CHECK(std::sqrt(nr) <= 1.0);
    CHECK(std::sqrt(nr) > 0.0);
  }
}

TEST_CASE("l2 quadratic reaches the analytic boundary maximizer") {
  // f(d) = -||d - p||^2 with p outside the ball: argmax = eps * p/||p||
  const double px = 2.0, py = 1.5;
  AttackObjective obj;
  obj.eval = [&](const Tensor& x, Tensor* grad) {
    double dx = x.values()[0] - px, dy = x.values()[1] - py;
    if (grad) {
      *grad = Tensor(x.shape());
      grad->values()[0] = -2 * dx;
      grad->values()[1] = -2 * dy;
    }
    return std::vector<double>{-(dx * dx + dy * dy)};
  };
  AttackCfg cfg;
  cfg.norm = Norm::L2;
  cfg.epsilon = 1.0;
  cfg.step_size = 0.25;
  cfg.steps = 20;
  cfg.random_start = false;
  Rng rng(7);
  Tensor x0({1, 2}, {0.0, 0.0});
  Tensor d = pgd_attack(obj, x0, cfg, rng);
  double pn = std::sqrt(px * px + py * py);
  double ax = px / pn, ay = py / pn;

  // grid-search oracle over the ball confirms the analytic argmax
  double best = -1e300, bx = 0, by = 0;
  for (int a = 0; a < 720; ++a)
    for (int r = 0; r <= 50; ++r) {
      double ang = a * M_PI / 360.0, rad = r / 50.0;
      double cx = rad * std::cos(ang), cy = rad * std::sin(ang);
      double v = -((cx - px) * (cx - px) + (cy - py) * (cy - py));
      if (v > best) {
        best = v;
        bx = cx;
        by = cy;
      }
    }
  CHECK(std::hypot(bx - ax, by - ay) < 0.01);
  CHECK(std::hypot(d.values()[0] - ax, d.values()[1] - ay) < 1e-3);
}

TEST_CASE("every iterate respects the ball") {
  std::vector<std::vector<double>> seen;
  AttackObjective obj;
  obj.eval = [&](const Tensor& x, Tensor* grad) {
    seen.push_back(x.values());
    std::vector<double> v(x.dim(0));
    size_t n = x.values().size() / x.dim(0);
    if (grad) *grad = Tensor(x.shape());
    for (int i = 0; i < x.dim(0); ++i)
      for (size_t j = 0; j < n; ++j) {
        double xv = x.values()[i * n + j];
        v[i] += std::sin(3 * xv) + xv * xv;
        if (grad) grad->values()[i * n + j] = 3 * std::cos(3 * xv) + 2 * xv;
      }
    return v;
  };
  Tensor x0({3, 4});
  Rng init(5);
  for (auto& v : x0.values()) v = init.normal();

  for (Norm norm : {Norm::Linf, Norm::L2}) {
    seen.clear();
    AttackCfg cfg;
    cfg.norm = norm;
    cfg.epsilon = 0.3;
    cfg.step_size = 0.1;
    cfg.steps = 8;
    cfg.random_start = true;
    Rng rng(9);
    pgd_attack(obj, x0, cfg, rng);
    REQUIRE(seen.size() == 9);
    // The attack projects delta exactly; recovering it as (x0+delta)-x0
    // reintroduces one rounding, so allow a 1-ulp relative slack.
    double lim = cfg.epsilon * (1 + 1e-12);
    for (const auto& xs : seen)
      for (int i = 0; i < 3; ++i) {
        double nr = 0, mx = 0;
        for (int j = 0; j < 4; ++j) {
          double dv = xs[i * 4 + j] - x0.values()[i * 4 + j];
          nr += dv * dv;
          mx = std::max(mx, std::fabs(dv));
        }
        if (norm == Norm::Linf)
          CHECK(mx <= lim);
        else
          CHECK(std::sqrt(nr) <= lim);
      }
  }
}

TEST_CASE("zero epsilon returns zero perturbation") {
  AttackObjective obj;
  obj.eval = [](const Tensor& x, Tensor* grad) {
    if (grad) *grad = Tensor(x.shape());
    return std::vector<double>(x.dim(0), 0.0);
  };
  AttackCfg cfg;
  cfg.epsilon = 0.0;
  cfg.steps = 5;
  Rng rng(3);
  Tensor d = pgd_attack(obj, Tensor({2, 2}, {1, 2, 3, 4}), cfg, rng);
  for (double v : d.values()) CHECK(v == 0.0);
}

TEST_CASE("attack cfg validation") {
  AttackCfg cfg;
  cfg.epsilon = 0.1;
  cfg.step_size = 0.5;
  cfg.steps = 3;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.step_size = 0.0;  // defaults to eps/4
  CHECK(cfg.step() == doctest::Approx(0.025));
  cfg.validate();
}

TEST_CASE("dstar of identity and scaled modules") {
  AttackCfg cfg;
  cfg.norm = Norm::L2;
  cfg.epsilon = 0.1;
  cfg.steps = 10;

  Tensor z({2, 4}, {2, 2, 2, 2, 3, 2, 1, 2});

  SUBCASE("identity module moves exactly epsilon") {
    Backbone bb = one_linear_module(4, 2, 1, true, 1.0);
    bb.module(1).frozen = true;
    Rng rng(11);
    DstarResult res = measure_dstar(bb, 1, z, cfg, rng);
    for (double d : res.d) CHECK(d == doctest::Approx(0.1).epsilon(1e-9));
    CHECK(res.mean == doctest::Approx(0.1).epsilon(1e-9));
  }
  SUBCASE("2x scaling doubles the displacement") {
    Backbone bb = one_linear_module(4, 2, 1, true, 2.0);
    bb.module(1).frozen = true;
    Rng rng(11);
    DstarResult res = measure_dstar(bb, 1, z, cfg, rng);
    for (double d : res.d) CHECK(d == doctest::Approx(0.2).epsilon(1e-9));
  }
  SUBCASE("unfrozen module rejected") {
    Backbone bb = one_linear_module(4, 2, 1, true, 1.0);
    Rng rng(11);
    CHECK_THROWS_AS(measure_dstar(bb, 1, z, cfg, rng), std::invalid_argument);
  }
}

TEST_CASE("dstar within 5 percent of grid search on a relu toy") {
  Backbone bb;
  bb.preset = "toy";
  bb.input_shape = {2};
  bb.classes = 2;
  Atom a = make_linear_atom(2, 3, 17);
  bb.atoms = {a};
  install_modules(bb, {{0, 0}}, 17);
  bb.module(1).frozen = true;

  Tensor z({1, 2}, {0.4, -0.3});
  AttackCfg cfg;
  cfg.norm = Norm::L2;
  cfg.epsilon = 0.3;
  cfg.step_size = 0.3 / 8;
  cfg.steps = 40;
  Rng rng(23);
  DstarResult res = measure_dstar(bb, 1, z, cfg, rng);

  Tensor zc = a.forward(nullptr, z);
  auto disp_at = [&](double dx, double dy) {
    Tensor zp({1, 2}, {z.values()[0] + dx, z.values()[1] + dy});
    Tensor out = a.forward(nullptr, zp);
    double acc = 0.0;
    for (int j = 0; j < 3; ++j) {
      double dv = out.values()[j] - zc.values()[j];
      acc += dv * dv;
    }
    return std::sqrt(acc);
  };
  double best = 0.0;
  for (int ai = 0; ai < 720; ++ai)
    for (int r = 1; r <= 60; ++r) {
      double ang = ai * M_PI / 360.0, rad = cfg.epsilon * r / 60.0;
      best = std::max(best, disp_at(rad * std::cos(ang), rad * std::sin(ang)));
    }
  // fine sweep of the ball boundary so the oracle is tight enough for the
  // upper bound too
  for (int ai = 0; ai < 20000; ++ai) {
    double ang = ai * 2.0 * M_PI / 20000.0;
    best = std::max(best, disp_at(cfg.epsilon * std::cos(ang), cfg.epsilon * std::sin(ang)));
  }
  CHECK(res.d[0] >= 0.95 * best);
  CHECK(res.d[0] <= best * (1 + 1e-3));
}

TEST_CASE("dstar is monotone in epsilon") {
  Backbone bb = one_linear_module(5, 3, 29);
  bb.module(1).frozen = true;
  Tensor z({3, 5});
  Rng init(31);
  for (auto& v : z.values()) v = init.normal();
  double prev = -1.0;
  std::vector<double> prev_d;
  for (double eps : {0.05, 0.1, 0.2, 0.4}) {
    AttackCfg cfg;
    cfg.norm = Norm::L2;
    cfg.epsilon = eps;
    cfg.steps = 15;
    Rng rng(37);
    DstarResult res = measure_dstar(bb, 1, z, cfg, rng);
    if (!prev_d.empty())
      for (size_t i = 0; i < res.d.size(); ++i) CHECK(res.d[i] >= prev_d[i] - 1e-9);
    CHECK(res.mean >= prev - 1e-9);
    prev = res.mean;
    prev_d = res.d;
  }
}

TEST_CASE("displacement bound arithmetic") {
  CHECK(displacement_bound(0.0, 0.5, 1.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(displacement_bound(2.0, 0.0, 1.0) == doctest::Approx(4.0).epsilon(1e-12));
  CHECK_THROWS_AS(displacement_bound(1.0, 1.0, 0.0), std::invalid_argument);
}

TEST_CASE("certificate with degenerate attack has zero violations") {
  Backbone bb = one_linear_module(4, 3, 41);
  Tensor z({8, 4});
  Rng init(43);
  for (auto& v : z.values()) v = init.normal();
  std::vector<int> y = {0, 1, 2, 0, 1, 2, 0, 1};
  AttackCfg cfg;
  cfg.norm = Norm::L2;
  cfg.epsilon = 0.0;
  cfg.steps = 0;
  Rng rng(47);
  RobustnessCertificate cert = certify_displacement(bb, 1, z, y, 0.5, cfg, rng);
  CHECK(cert.violations == 0);
  for (const CertRow& r : cert.rows) {
    CHECK(r.displacement == 0.0);
    CHECK(std::fabs(r.loss_increase) < 1e-12);
    CHECK(r.bound == doctest::Approx(2 * r.grad_norm / 0.5).epsilon(1e-9));
  }
}

TEST_CASE("certificate zero violations on random modules") {
  Rng init(53);
  for (double mu : {1e-3, 1e-2}) {
    Backbone bb = one_linear_module(6, 3, 59);
    Tensor z({64, 6});
    for (auto& v : z.values()) v = init.normal();
    std::vector<int> y(64);
    for (auto& v : y) v = (int)init.index(3);
    AttackCfg cfg;
    cfg.norm = Norm::L2;
    cfg.epsilon = 0.5;
    cfg.steps = 10;
    Rng rng(61);
    RobustnessCertificate cert = certify_displacement(bb, 1, z, y, mu, cfg, rng);
    CHECK(cert.violations == 0);
    CHECK((int)cert.rows.size() == 64);
  }
}

TEST_CASE("certify rejects mu of zero") {
  Backbone bb = one_linear_module(4, 2, 67);
  Tensor z({1, 4}, {1, 2, 3, 4});
  AttackCfg cfg;
  cfg.epsilon = 0.1;
  cfg.steps = 1;
  cfg.norm = Norm::L2;
  Rng rng(1);
  CHECK_THROWS_AS(certify_displacement(bb, 1, z, {0}, 0.0, cfg, rng), std::invalid_argument);
}

TEST_CASE("gradient inconsistency vanishes in the degenerate cases") {
  Tensor x({4, 5});
  Rng init(71);
  for (auto& v : x.values()) v = init.normal();
  std::vector<int> y = {0, 1, 0, 1};

  SUBCASE("single module, mu=0") {
    Backbone bb = one_linear_module(5, 2, 73);
    Rng rng(79);
    ConsistencyReport rep = gradient_inconsistency(bb, 1, x, y, 0.0, rng);
    for (double d : rep.diff_norms) CHECK(d < 1e-12);
    CHECK(rep.mean < 1e-12);
  }
  SUBCASE("last module of a 2-module cascade, mu=0") {
    Backbone bb;
    bb.preset = "toy";
    bb.input_shape = {5};
    bb.classes = 2;
    bb.atoms = {make_linear_atom(5, 6, 81), make_linear_atom(6, 4, 83)};
    install_modules(bb, {{0, 0}, {1, 1}}, 83);
    Rng rng(89);
    ConsistencyReport rep = gradient_inconsistency(bb, 2, x, y, 0.0, rng);
    for (double d : rep.diff_norms) CHECK(d < 1e-12);
  }
  SUBCASE("first module of a 2-module cascade differs") {
    Backbone bb;
    bb.preset = "toy";
    bb.input_shape = {5};
    bb.classes = 2;
    bb.atoms = {make_linear_atom(5, 6, 91), make_linear_atom(6, 4, 93)};
    install_modules(bb, {{0, 0}, {1, 1}}, 93);
    Rng rng(97);
    ConsistencyReport rep = gradient_inconsistency(bb, 1, x, y, 0.0, rng);
    CHECK(rep.mean > 1e-6);
    CHECK(rep.median >= 0.0);
    CHECK(rep.beta_module >= 0.0);
    CHECK(rep.beta_joint >= 0.0);
  }
}

TEST_CASE("evaluate basics") {
  Rng init(101);
  Backbone bb = one_linear_module(4, 2, 103);
  Tensor x({200, 4});
  for (auto& v : x.values()) v = init.normal();
  std::vector<int> y(200);
  for (size_t i = 0; i < y.size(); ++i) y[i] = (int)(i % 2);

  SUBCASE("untrained head sits near chance") {
    AttackCfg cfg;
    cfg.epsilon = 0.0;
    Rng rng(107);
    EvalResult r = evaluate(bb, 1, x, y, cfg, rng);
    CHECK(r.clean > 0.3);
    CHECK(r.clean < 0.7);
  }
  SUBCASE("zero epsilon makes adv equal clean exactly") {
    AttackCfg cfg;
    cfg.epsilon = 0.0;
    cfg.steps = 20;
    Rng rng(109);
    EvalResult r = evaluate(bb, 1, x, y, cfg, rng);
    CHECK(r.adv == r.clean);
  }
  SUBCASE("adv never exceeds clean") {
    AttackCfg cfg;
    cfg.norm = Norm::Linf;
    cfg.epsilon = 0.05;
    cfg.step_size = 0.0125;
    cfg.steps = 5;
    Rng rng(113);
    EvalResult r = evaluate(bb, 1, x, y, cfg, rng);
    CHECK(r.adv <= r.clean);
  }
  SUBCASE("empty dataset rejected") {
    AttackCfg cfg;
    Rng rng(127);
    CHECK_THROWS_AS(evaluate(bb, 1, x, {}, cfg, rng), std::invalid_argument);
  }
}

TEST_CASE("evaluate matches the margin oracle on a linear classifier") {
  // identity module keeps features positive, so the pipeline is affine there;
  // for 2 classes the robust decision is a closed-form margin test.
  int dim = 3, n = 300;
  Backbone bb = one_linear_module(dim, 2, 131, true, 1.0);
  AuxHead& head = bb.module(1).aux;
  Rng init(137);
  for (auto& v : head.W.values()) v = init.normal();
  for (auto& v : head.b.values()) v = 0.1 * init.normal();

  Tensor x({n, dim});
  for (auto& v : x.values()) v = 2.0 + 0.8 * init.normal();
  for (auto& v : x.values()) v = std::max(v, 0.5);
  std::vector<int> y(n);
  for (auto& v : y) v = (int)init.index(2);

  double eps = 0.05;
  AttackCfg cfg;
  cfg.norm = Norm::Linf;
  cfg.epsilon = eps;
  cfg.step_size = eps / 4;
  cfg.steps = 20;
  Rng rng(139);
  EvalResult r = evaluate(bb, 1, x, y, cfg, rng);

  int robust = 0;
  for (int i = 0; i < n; ++i) {
    double margin = 0.0, l1 = 0.0;
    for (int j = 0; j < dim; ++j) {
      double w = head.W.values()[(size_t)j * 2 + y[i]] - head.W.values()[(size_t)j * 2 + 1 - y[i]];
      margin += w * x.values()[(size_t)i * dim + j];
      l1 += std::fabs(w);
    }
    margin += head.b.values()[y[i]] - head.b.values()[1 - y[i]];
    robust += (margin - eps * l1 > 0);
  }
  CHECK(r.adv == doctest::Approx((double)robust / n).epsilon(0.02));
}
