#include <cmath>
#include <string>

#include "doctest.h"
#include "odm/error.hpp"
#include "odm/tape.hpp"
#include "oracles.hpp"

using namespace odm;
using namespace odm::testing;

namespace {

Tensor make(Shape s, std::vector<float> v) { return Tensor(s, std::move(v)); }

}  // namespace

TEST_CASE("conv2d: all-ones 3x3 gives 9") {
  Tape tape;
  Var x = tape.constant(Tensor({1, 1, 3, 3}, 1.0f));
  Var w = tape.constant(Tensor({1, 1, 3, 3}, 1.0f));
  Var y = conv2d(x, w, Var(), 1, 0);
  CHECK(y.shape() == Shape{1, 1, 1, 1});
  CHECK(y.value().item() == doctest::Approx(9.0));
}

TEST_CASE("conv2d: identity 1x1 kernel reproduces the input") {
  Rng rng(3);
  Tape tape;
  const Tensor in = random_tensor({2, 1, 5, 4}, rng);
  Var y = conv2d(tape.constant(in), tape.constant(Tensor({1, 1, 1, 1}, 1.0f)), tape.constant(Tensor({1, 1, 1, 1}, 0.0f)),
                 1, 0);
  CHECK(y.value() == in);
}

TEST_CASE("conv2d: matches the naive loop oracle") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    const Tensor x = random_tensor({1, 2, 4, 4}, rng);
    const Tensor w = random_tensor({3, 2, 3, 3}, rng);
    const Tensor b = random_tensor({1, 3, 1, 1}, rng);
    for (int stride : {1, 2}) {
      Tape tape;
      Var y = conv2d(tape.constant(x), tape.constant(w), tape.constant(b), stride, 1);
      Shape ref_shape;
      const DVec ref = conv_ref(to_double(x), x.shape(), to_double(w), w.shape(), to_double(b), stride, 1, &ref_shape);
      REQUIRE(y.shape() == ref_shape);
      for (std::size_t i = 0; i < ref.size(); ++i) CHECK(y.value()[i] == doctest::Approx(ref[i]).epsilon(1e-5));
    }
  }
}

TEST_CASE("conv2d: output size follows floor((H + 2p - k)/s) + 1") {
  Tape tape;
  Var y = conv2d(tape.constant(Tensor({1, 1, 7, 6})), tape.constant(Tensor({2, 1, 3, 3})), Var(), 2, 1);
  CHECK(y.shape() == Shape{1, 2, 4, 3});
}

TEST_CASE("conv2d: channel mismatch reports both shapes") {
  Tape tape;
  try {
    conv2d(tape.constant(Tensor({1, 2, 4, 4})), tape.constant(Tensor({3, 5, 3, 3})), Var(), 1, 1);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("(1, 2, 4, 4)") != std::string::npos);
    CHECK(msg.find("(3, 5, 3, 3)") != std::string::npos);
  }
  CHECK_THROWS_AS(conv2d(tape.constant(Tensor({1, 1, 4, 4})), tape.constant(Tensor({1, 1, 3, 3})), Var(), 0, 1),
                  DimensionError);
}

TEST_CASE("channel broadcasts") {
  Rng rng(1);
  const Tensor x = random_tensor({2, 2, 3, 3}, rng);
  Tape tape;
  Var xv = tape.constant(x);
  CHECK(broadcast_add_channel(xv, tape.constant(Tensor({1, 2, 1, 1}, 0.0f))).value() == x);
  CHECK(broadcast_mul_channel(xv, tape.constant(Tensor({1, 2, 1, 1}, 1.0f))).value() == x);
  CHECK_THROWS_AS(broadcast_add_channel(xv, tape.constant(Tensor({1, 3, 1, 1}))), DimensionError);
  CHECK_THROWS_AS(broadcast_mul_channel(xv, tape.constant(Tensor({1, 1, 1, 1}))), DimensionError);
}

TEST_CASE("broadcast_add_channel moves channel means by v") {
  // channel 0 values average 1, channel 1 values average 3
  const Tensor x = make({1, 2, 1, 2}, {0.0f, 2.0f, 2.0f, 4.0f});
  Tape tape;
  Var y = broadcast_add_channel(tape.constant(x), tape.constant(make({1, 2, 1, 1}, {2.0f, -2.0f})));
  const auto means = channel_means(y.value());
  CHECK(means[0] == doctest::Approx(3.0));
  CHECK(means[1] == doctest::Approx(1.0));
}

TEST_CASE("reduce_stats examples") {
  Tape tape;
  Var c = tape.constant(Tensor({2, 3, 2, 2}, 5.0f));
  CHECK(mean(c).value().item() == doctest::Approx(5.0));
  CHECK(std_dev(c).value().item() == 0.0f);

  Var v = tape.constant(make({1, 1, 1, 4}, {1, 2, 3, 4}));
  CHECK(mean(v).value().item() == doctest::Approx(2.5));
  CHECK(std_dev(v).value().item() == doctest::Approx(std::sqrt(1.25)).epsilon(1e-6));

  Var two = tape.constant(make({1, 2, 2, 2}, {0, 0, 0, 0, 2, 2, 2, 2}));
  const Tensor cm = channel_mean(two).value();
  const Tensor cs = channel_std(two).value();
  CHECK(cm.shape() == Shape{1, 2, 1, 1});
  CHECK(cm[0] == 0.0f);
  CHECK(cm[1] == doctest::Approx(2.0));
  CHECK(cs[0] == 0.0f);
  CHECK(cs[1] == 0.0f);
}

TEST_CASE("pixel_shuffle") {
  Rng rng(2);
  const Tensor x = random_tensor({2, 8, 3, 2}, rng);
  CHECK(pixel_shuffle_forward(x, 1) == x);

  const Tensor abcd = make({1, 4, 1, 1}, {1, 2, 3, 4});
  const Tensor out = pixel_shuffle_forward(abcd, 2);
  CHECK(out.shape() == Shape{1, 1, 2, 2});
  CHECK(out.storage() == std::vector<float>{1, 2, 3, 4});

  // index formula oracle: (b, c, h*r+i, w*r+j) <- (b, c*r*r + i*r + j, h, w)
  const Tensor y = pixel_shuffle_forward(x, 2);
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        for (int h = 0; h < 3; ++h)
          for (int w = 0; w < 2; ++w) CHECK(y.at(1, c, h * 2 + i, w * 2 + j) == x.at(1, c * 4 + i * 2 + j, h, w));

  CHECK(pixel_unshuffle_forward(y, 2) == x);
  CHECK_THROWS_AS(pixel_shuffle_forward(Tensor({1, 6, 2, 2}), 2), DimensionError);
}

TEST_CASE("backward: mean distributes 1/N") {
  Tape tape;
  Var x = tape.leaf(Tensor({2, 3, 2, 2}, 0.5f));
  tape.backward(mean(x));
  const Tensor g = tape.grad(x);
  for (float v : g.values()) CHECK(v == doctest::Approx(1.0 / 24.0));
}

TEST_CASE("backward: std matches central differences") {
  Rng rng(11);
  const Tensor x = random_tensor({1, 1, 2, 4}, rng);
  Tape tape;
  Var xv = tape.leaf(x);
  tape.backward(std_dev(xv));
  const DVec num = numeric_grad([](const DVec& v) { return std_ref(v); }, to_double(x));
  CHECK(rel_error(tape.grad(xv), num) < 1e-3);
}

TEST_CASE("backward: std at zero variance gives zero gradient") {
  Tape tape;
  Var x = tape.leaf(Tensor({1, 2, 2, 2}, 3.0f));
  tape.backward(std_dev(x));
  const Tensor g = tape.grad(x);
  for (float v : g.values()) CHECK(v == 0.0f);
  Tape t2;
  Var y = t2.leaf(Tensor({1, 2, 2, 2}, 3.0f));
  t2.backward(mean(channel_std(y)));
  const Tensor gy = t2.grad(y);
  for (float v : gy.values()) CHECK(v == 0.0f);
}

TEST_CASE("backward: relu subgradient at 0 is 0") {
  Tape tape;
  Var x = tape.leaf(make({1, 1, 1, 3}, {-1.0f, 0.0f, 2.0f}));
  tape.backward(sum_scalars(std::vector<Var>{mean(relu(x))}));
  const Tensor g = tape.grad(x);
  CHECK(g[0] == 0.0f);
  CHECK(g[1] == 0.0f);
  CHECK(g[2] == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("backward: L1(conv2d) weight gradient matches central differences") {
  Rng rng(5);
  const Tensor x = random_tensor({1, 2, 4, 4}, rng);
  const Tensor w = random_tensor({2, 2, 3, 3}, rng);
  const Tensor target = random_tensor({1, 2, 4, 4}, rng);
  Tape tape;
  Var wv = tape.leaf(w);
  tape.backward(l1_loss(conv2d(tape.constant(x), wv, Var(), 1, 1), tape.constant(target)));
  const DVec xd = to_double(x);
  const DVec td = to_double(target);
  const DVec num = numeric_grad(
      [&](const DVec& wd) {
        const DVec y = conv_ref(xd, x.shape(), wd, w.shape(), {}, 1, 1);
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += std::fabs(y[i] - td[i]);
        return s / static_cast<double>(y.size());
      },
      to_double(w));
  CHECK(rel_error(tape.grad(wv), num) < 1e-3);
}

TEST_CASE("backward: a consumed tape rejects a second pass") {
  Tape tape;
  Var x = tape.leaf(Tensor({1, 1, 2, 2}, 1.0f));
  Var l = mean(x);
  tape.backward(l);
  CHECK(tape.consumed());
  CHECK_THROWS_AS(tape.backward(l), UsageError);
  CHECK_THROWS_AS(mean(x), UsageError);
}

TEST_CASE("backward: non-scalar root is rejected") {
  Tape tape;
  Var x = tape.leaf(Tensor({1, 1, 2, 2}, 1.0f));
  CHECK_THROWS_AS(tape.backward(relu(x)), DimensionError);
}

TEST_CASE("backward: two roots fill separate parameter slots") {
  Parameter p("p", {1, 1, 1, 3});
  p.assign(std::vector<float>{1.0f, 2.0f, 6.0f});
  Tape tape;
  Var v = tape.parameter(p);
  CHECK(tape.parameter(p).id() == v.id());
  Var l_mean = mean(v);
  Var l_std = std_dev(v);
  const LossRoot roots[] = {{l_mean, GradSlot::Reconstruction}, {l_std, GradSlot::Variance}};
  tape.backward(roots);
  CHECK(p.populated(GradSlot::Reconstruction));
  CHECK(p.populated(GradSlot::Variance));
  for (float g : p.grad(GradSlot::Reconstruction)) CHECK(g == doctest::Approx(1.0 / 3.0));
  const DVec num = numeric_grad([](const DVec& d) { return std_ref(d); }, {1.0, 2.0, 6.0});
  for (std::size_t i = 0; i < 3; ++i) CHECK(p.grad(GradSlot::Variance)[i] == doctest::Approx(num[i]).epsilon(1e-4));
  p.zero_grad();
  CHECK_FALSE(p.populated(GradSlot::Reconstruction));
}

TEST_CASE("backward is linear in the loss") {
  Rng rng(9);
  const Tensor x = random_tensor({2, 3, 4, 4}, rng);
  const Tensor w = random_tensor({3, 3, 3, 3}, rng);
  const float a = 0.7f;
  const float b = -1.3f;
  auto grad_of = [&](int which) {
    Tape tape;
    Var xv = tape.leaf(x);
    Var y = conv2d(xv, tape.constant(w), Var(), 1, 1);
    Var l1 = std_dev(y);
    Var l2 = mean(relu(y));
    Var loss;
    if (which == 0) loss = l1;
    if (which == 1) loss = l2;
    if (which == 2) {
      const Var parts[] = {mul_scalar(l1, a), mul_scalar(l2, b)};
      loss = sum_scalars(parts);
    }
    tape.backward(loss);
    return tape.grad(xv);
  };
  const Tensor g1 = grad_of(0);
  const Tensor g2 = grad_of(1);
  const Tensor g = grad_of(2);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(std::fabs(g[i] - (a * g1[i] + b * g2[i])) < 1e-6);
}

TEST_CASE("forward and backward are deterministic") {
  auto run = [] {
    Rng rng(42);
    const Tensor x = random_tensor({2, 4, 8, 8}, rng);
    const Tensor w = random_tensor({4, 4, 3, 3}, rng);
    Tape tape;
    Var xv = tape.leaf(x);
    Var wv = tape.leaf(w);
    Var y = pixel_shuffle(relu(conv2d(xv, wv, Var(), 1, 1)), 2);
    Var loss = std_dev(y);
    tape.backward(loss);
    return std::vector<Tensor>{y.value(), loss.value(), tape.grad(xv), tape.grad(wv)};
  };
  CHECK(run() == run());
}

TEST_CASE("batch_norm gradient matches central differences") {
  Rng rng(4);
  const Shape s{2, 3, 3, 3};
  const Tensor x = random_tensor(s, rng);
  const Tensor gamma = random_tensor({1, 3, 1, 1}, rng, 0.5, 1.5);
  const Tensor beta = random_tensor({1, 3, 1, 1}, rng);
  const Tensor r = random_tensor(s, rng);
  Tape tape;
  Var xv = tape.leaf(x);
  Var gv = tape.leaf(gamma);
  tape.backward(weighted_sum(batch_norm(xv, gv, tape.constant(beta)), r));
  const DVec rd = to_double(r);
  auto bn_ref = [&](const DVec& xd, const DVec& gd) {
    DVec y(xd.size());
    for (int c = 0; c < s.c; ++c) {
      const DVec ch = channel_ref(xd, s, c);
      const double m = mean_ref(ch);
      const double sd = std_ref(ch);
      const double inv = 1.0 / std::sqrt(sd * sd + 1e-5);
      for (int n = 0; n < s.n; ++n)
        for (std::size_t i = 0; i < s.plane(); ++i) {
          const std::size_t k = (static_cast<std::size_t>(n) * s.c + c) * s.plane() + i;
          y[k] = gd[static_cast<std::size_t>(c)] * (xd[k] - m) * inv + beta[static_cast<std::size_t>(c)];
        }
    }
    return dot(y, rd);
  };
  const DVec gd = to_double(gamma);
  const DVec xd = to_double(x);
  CHECK(rel_error(tape.grad(xv), numeric_grad([&](const DVec& v) { return bn_ref(v, gd); }, xd)) < 1e-3);
  CHECK(rel_error(tape.grad(gv), numeric_grad([&](const DVec& v) { return bn_ref(xd, v); }, gd)) < 1e-3);
}
