#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "easecore/nn.hpp"
#include "easecore/optimizer.hpp"

using namespace easecore;

TEST_CASE("momentum sgd matches a hand-computed 5-step sequence") {
  // Quadratic loss L(w) = (w - 3)^2 / 2, so grad = w - 3.
  // mu = 0.9, lr = 0.1, no weight decay, w0 = 0:
  //   v <- mu v + g ; w <- w - lr v
  // gives w = 0.3, 0.84, 1.542, 2.3196, 3.08748 (exact decimals).
  Param<double> w;
  w.name = "w";
  w.resize(1);
  w.decay = false;
  std::vector<Param<double>*> params{&w};

  MomentumSgd<double> opt(0.9, 0.0);

  const std::vector<double> expected{0.3, 0.84, 1.542, 2.3196, 3.08748};
  for (double want : expected) {
    w.g[0] = w.v[0] - 3.0;
    opt.step(params, 0.1);
    CHECK(w.v[0] == Catch::Approx(want).epsilon(1e-10));
  }
}

TEST_CASE("weight decay enters the velocity for decaying parameters only") {
  // mu = 0.9, lr = 0.1, wd = 0.5, grad = w - 3, w0 = 0:
  // hand sequence 0.3, 0.825, 1.47375.
  Param<double> w;
  w.name = "w";
  w.resize(1);
  w.decay = true;
  Param<double> n;  // norm-like parameter: decay excluded
  n.name = "n";
  n.resize(1);
  n.decay = false;
  std::vector<Param<double>*> params{&w, &n};

  MomentumSgd<double> opt(0.9, 0.5);

  const std::vector<double> expected{0.3, 0.825, 1.47375};
  for (double want : expected) {
    w.g[0] = w.v[0] - 3.0;
    n.g[0] = n.v[0] - 3.0;
    opt.step(params, 0.1);
    CHECK(w.v[0] == Catch::Approx(want).epsilon(1e-10));
  }
  // The non-decaying parameter followed the wd = 0 trajectory instead.
  CHECK(n.v[0] == Catch::Approx(1.542).epsilon(1e-10));
}

TEST_CASE("learning rate is initial / 10^k after the k-th milestone") {
  TrainConfig cfg;
  cfg.initial_lr = 0.1;
  cfg.lr_milestones = {11, 16};
  for (int e = 1; e <= 10; ++e) CHECK(cfg.lr_for_epoch(e) == 0.1);
  for (int e = 11; e <= 15; ++e) CHECK(cfg.lr_for_epoch(e) == 0.1 / 10.0);
  for (int e = 16; e <= 20; ++e) CHECK(cfg.lr_for_epoch(e) == 0.1 / 100.0);
}

TEST_CASE("train config validation names bad fields") {
  TrainConfig cfg;
  cfg.checkpoint_updates = {5, 10};
  CHECK_NOTHROW(cfg.validate(100));

  TrainConfig bad = cfg;
  bad.lr_milestones = {16, 11};
  CHECK_THROWS_AS(bad.validate(100), ValidationError);

  bad = cfg;
  bad.checkpoint_updates = {10, 5};
  CHECK_THROWS_AS(bad.validate(100), ValidationError);

  bad = cfg;
  bad.checkpoint_updates = {5, 1000};
  CHECK_THROWS_AS(bad.validate(100), ValidationError);

  bad = cfg;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(100), ValidationError);

  bad = cfg;
  bad.max_epochs = 0;
  CHECK_THROWS_AS(bad.validate(100), ValidationError);

  bad = cfg;
  bad.initial_lr = -1.0;
  CHECK_THROWS_AS(bad.validate(100), ValidationError);
}

TEST_CASE("canonical form is stable and sensitive to every field") {
  TrainConfig a, b;
  CHECK(a.canonical() == b.canonical());
  b.weight_decay = 2e-4;
  CHECK(a.canonical() != b.canonical());
  TrainConfig c;
  c.checkpoint_updates = {5};
  CHECK(a.canonical() != c.canonical());
}
