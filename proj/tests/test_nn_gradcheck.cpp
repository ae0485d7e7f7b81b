#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <memory>
#include <vector>

#include "easecore/architectures.hpp"
#include "easecore/nn.hpp"
#include "easecore/rng.hpp"
#include "easecore/tensor.hpp"

using namespace easecore;

namespace {

void fill_random(Tensor4<double>& x, Rng& rng, double scale = 0.5) {
  for (auto& v : x.data) v = scale * rng.next_normal();
}

struct GradcheckResult {
  int checked = 0;
  int passed = 0;
};

// Central finite differences against the analytic backward pass.
GradcheckResult gradcheck(Model<double>& model, const Tensor4<double>& x,
                          const std::vector<int>& labels, int samples, Rng& rng,
                          double eps = 1e-5, double tol = 1e-3) {
  auto loss_of = [&]() {
    const MatX<double>& logits = model.forward(x, true);
    return SoftmaxCrossEntropy<double>::forward_backward(logits, labels, nullptr, nullptr);
  };

  MatX<double> dlogits;
  const MatX<double>& logits = model.forward(x, true);
  SoftmaxCrossEntropy<double>::forward_backward(logits, labels, &dlogits, nullptr);
  model.zero_grad();
  model.backward(dlogits);

  std::vector<std::vector<double>> analytic;
  for (Param<double>* p : model.params()) analytic.emplace_back(p->g);

  GradcheckResult res;
  const auto& params = model.params();
  for (int s = 0; s < samples; ++s) {
    const std::size_t pi = rng.next_below(params.size());
    Param<double>* p = params[pi];
    if (p->size() == 0) continue;
    const std::size_t ci = rng.next_below(p->size());
    const double saved = p->v[ci];
    p->v[ci] = saved + eps;
    const double lp = loss_of();
    p->v[ci] = saved - eps;
    const double lm = loss_of();
    p->v[ci] = saved;
    const double fd = (lp - lm) / (2.0 * eps);
    const double an = analytic[pi][ci];
    const double denom = std::max({std::abs(an), std::abs(fd), 1e-6});
    const bool ok = std::abs(an - fd) < 1e-8 || std::abs(an - fd) / denom < tol;
    res.checked++;
    if (ok) res.passed++;
  }
  return res;
}

std::vector<int> cyclic_labels(int n, int classes) {
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = i % classes;
  return labels;
}

}  // namespace

TEST_CASE("softmax cross entropy matches hand computation") {
  MatX<double> logits(2, 2);
  logits << 1.0, 0.0, -1.0, 2.0;  // example 0: [1,-1], example 1: [0,2]
  MatX<double> dlogits;
  std::vector<double> per_example;
  const double loss = SoftmaxCrossEntropy<double>::forward_backward(
      logits, {0, 1}, &dlogits, &per_example);

  const double l0 = std::log(std::exp(1.0) + std::exp(-1.0)) - 1.0;
  const double l1 = std::log(std::exp(0.0) + std::exp(2.0)) - 2.0;
  REQUIRE(per_example.size() == 2);
  CHECK(per_example[0] == Catch::Approx(l0).epsilon(1e-12));
  CHECK(per_example[1] == Catch::Approx(l1).epsilon(1e-12));
  CHECK(loss == Catch::Approx(0.5 * (l0 + l1)).epsilon(1e-12));

  // dlogits = (softmax - onehot) / batch
  const double p00 = std::exp(1.0) / (std::exp(1.0) + std::exp(-1.0));
  CHECK(dlogits(0, 0) == Catch::Approx((p00 - 1.0) / 2.0).epsilon(1e-10));
  const double p11 = std::exp(2.0) / (1.0 + std::exp(2.0));
  CHECK(dlogits(1, 1) == Catch::Approx((p11 - 1.0) / 2.0).epsilon(1e-10));
}

TEST_CASE("uniform logits give ln(num_classes) per example") {
  MatX<double> logits = MatX<double>::Zero(10, 3);
  std::vector<double> per_example;
  SoftmaxCrossEntropy<double>::forward_backward(logits, {0, 5, 9}, nullptr, &per_example);
  for (double l : per_example) CHECK(l == Catch::Approx(std::log(10.0)).epsilon(1e-12));
}

TEST_CASE("batch norm normalizes with batch statistics and tracks running stats") {
  BatchNorm2d<double> bn("bn", 3);
  Rng init_rng(1);
  bn.init(init_rng);

  FeatureMap<double> fm;
  fm.reset(8, 3, 2, 2);
  Rng rng(42);
  for (Eigen::Index i = 0; i < fm.m.size(); ++i)
    fm.m.data()[i] = 2.0 * rng.next_normal() + 0.5;

  // Capture batch statistics before the forward mutates nothing but buffers.
  std::vector<double> batch_mean(3), batch_var(3);
  for (int c = 0; c < 3; ++c) {
    const auto row = fm.m.row(c);
    batch_mean[static_cast<std::size_t>(c)] = row.mean();
    batch_var[static_cast<std::size_t>(c)] =
        row.array().square().mean() - row.mean() * row.mean();
  }

  const FeatureMap<double>& out = bn.forward(fm, true);
  for (int c = 0; c < 3; ++c) {
    const auto row = out.m.row(c);
    CHECK(std::abs(row.mean()) < 1e-10);
    const double var = row.array().square().mean() - row.mean() * row.mean();
    CHECK(var == Catch::Approx(1.0).margin(1e-3));  // eps shifts it slightly below 1
  }

  LayerState<double> st;
  bn.collect(st);
  REQUIRE(st.buffers.size() == 2);
  for (int c = 0; c < 3; ++c) {
    CHECK(st.buffers[0]->v[static_cast<std::size_t>(c)] ==
          Catch::Approx(0.1 * batch_mean[static_cast<std::size_t>(c)]).margin(1e-10));
    CHECK(st.buffers[1]->v[static_cast<std::size_t>(c)] ==
          Catch::Approx(0.9 + 0.1 * batch_var[static_cast<std::size_t>(c)]).margin(1e-10));
  }

  // Weight decay must skip normalization parameters.
  for (Param<double>* p : st.params) CHECK(!p->decay);
}

TEST_CASE("max pooling picks windows maxima (floor semantics)") {
  FeatureMap<double> fm;
  fm.reset(1, 1, 3, 3);  // odd trailing row/column must be dropped
  // Column layout: position index p = y*w + x.
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) fm.m(0, y * 3 + x) = y * 3 + x;
  Pool2x2<double> pool(Pool2x2<double>::Kind::max);
  const FeatureMap<double>& out = pool.forward(fm);
  REQUIRE(out.h == 1);
  REQUIRE(out.w == 1);
  CHECK(out.m(0, 0) == 4.0);  // max of {0,1,3,4}
}

TEST_CASE("gradcheck: plain CNN on a 4-example batch") {
  ArchitectureSpec spec;
  spec.family = "plain-cnn";
  spec.num_classes = 10;
  spec.input_shape = {3, 32, 32};
  auto model = build_model<double>(spec);
  Rng rng(7);
  model->init(rng);

  Tensor4<double> x;
  x.resize(4, 3, 32, 32);
  fill_random(x, rng);
  const auto labels = cyclic_labels(4, 10);

  Rng sample_rng(11);
  const GradcheckResult res = gradcheck(*model, x, labels, 300, sample_rng);
  INFO("passed " << res.passed << " of " << res.checked);
  CHECK(res.checked >= 290);
  CHECK(static_cast<double>(res.passed) >= 0.95 * static_cast<double>(res.checked));
}

TEST_CASE("gradcheck: small wide-residual network") {
  ArchitectureSpec spec;
  spec.family = "wide-resnet-small";
  spec.num_classes = 4;
  spec.input_shape = {3, 16, 16};
  spec.widths = {4, 6, 8, 10};
  spec.blocks_per_group = 1;
  spec.head_hidden = 8;
  auto model = build_model<double>(spec);
  Rng rng(13);
  model->init(rng);

  Tensor4<double> x;
  x.resize(4, 3, 16, 16);
  fill_random(x, rng);
  const auto labels = cyclic_labels(4, 4);

  Rng sample_rng(17);
  const GradcheckResult res = gradcheck(*model, x, labels, 200, sample_rng);
  INFO("passed " << res.passed << " of " << res.checked);
  CHECK(static_cast<double>(res.passed) >= 0.95 * static_cast<double>(res.checked));
}

TEST_CASE("gradcheck: small densely-connected network") {
  ArchitectureSpec spec;
  spec.family = "densenet-small";
  spec.num_classes = 4;
  spec.input_shape = {3, 16, 16};
  spec.stem_channels = 6;
  spec.layers_per_block = 1;
  spec.growth = {3, 4, 5};
  spec.bottleneck_mult = 2;
  auto model = build_model<double>(spec);
  Rng rng(19);
  model->init(rng);

  Tensor4<double> x;
  x.resize(4, 3, 16, 16);
  fill_random(x, rng);
  const auto labels = cyclic_labels(4, 4);

  Rng sample_rng(23);
  const GradcheckResult res = gradcheck(*model, x, labels, 200, sample_rng);
  INFO("passed " << res.passed << " of " << res.checked);
  CHECK(static_cast<double>(res.passed) >= 0.95 * static_cast<double>(res.checked));
}

TEST_CASE("gradcheck: global average pool head variant") {
  ArchitectureSpec spec;
  spec.family = "wide-resnet-small";
  spec.num_classes = 4;
  spec.input_shape = {3, 16, 16};
  spec.widths = {4, 6, 8, 10};
  spec.head_hidden = 0;  // GAP head
  auto model = build_model<double>(spec);
  Rng rng(29);
  model->init(rng);

  Tensor4<double> x;
  x.resize(4, 3, 16, 16);
  fill_random(x, rng);
  const auto labels = cyclic_labels(4, 4);

  Rng sample_rng(31);
  const GradcheckResult res = gradcheck(*model, x, labels, 150, sample_rng);
  INFO("passed " << res.passed << " of " << res.checked);
  CHECK(static_cast<double>(res.passed) >= 0.95 * static_cast<double>(res.checked));
}

TEST_CASE("parameter counts are architecture-determined and documented bands hold") {
  ArchitectureSpec wrn;  // desk defaults
  wrn.family = "wide-resnet-small";
  CHECK(param_count(wrn) > 200000);
  CHECK(param_count(wrn) < 350000);

  ArchitectureSpec dn;
  dn.family = "densenet-small";
  CHECK(param_count(dn) > 150000);
  CHECK(param_count(dn) < 250000);

  ArchitectureSpec pc;
  pc.family = "plain-cnn";
  CHECK(param_count(pc) > 50000);
}
