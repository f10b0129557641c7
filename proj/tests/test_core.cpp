#include "doctest.h"

#include <cmath>
#include <vector>

#include "csmae/errors.hpp"
#include "csmae/ops.hpp"
#include "csmae/optim.hpp"
#include "csmae/rng.hpp"
#include "csmae/tensor.hpp"

using namespace csmae;

namespace {

Tensor mat(std::size_t r, std::size_t c, std::vector<Real> v, bool grad = false) {
  return Tensor({r, c}, std::move(v), grad);
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST_CASE("matmul hand cases") {
  const Tensor id = mat(2, 2, {1, 0, 0, 1});
  const Tensor b = mat(2, 2, {1, 2, 3, 4});
  CHECK(values(ops::matmul(id, b)) == std::vector<double>{1, 2, 3, 4});
  const Tensor out = ops::matmul(mat(1, 2, {1, 2}), mat(2, 1, {3, 4}));
  CHECK(out.shape() == Shape{1, 1});
  CHECK(out.item() == doctest::Approx(11));
  CHECK_THROWS_AS(ops::matmul(mat(1, 2, {1, 2}), mat(1, 2, {1, 2})), DimensionError);
}

TEST_CASE("softmax is shift-stable") {
  const Tensor u = ops::softmax(mat(1, 4, {0, 0, 0, 0}), 1);
  for (double p : values(u)) CHECK(p == doctest::Approx(0.25));
  const Tensor big = ops::softmax(mat(1, 2, {1000, 0}), 1);
  CHECK(big.data()[0] == doctest::Approx(1.0));
  CHECK(big.data()[1] == doctest::Approx(0.0));
  CHECK(std::isfinite(big.data()[1]));
  const Tensor lp = ops::log_softmax(mat(1, 2, {1000, 0}), 1);
  CHECK(lp.data()[1] == doctest::Approx(-1000));
}

TEST_CASE("layer_norm degenerate rows") {
  const Tensor ones = Tensor::full({2}, 1), zeros = Tensor::zeros({2});
  for (double v : values(ops::layer_norm(mat(1, 2, {5, 5}), ones, zeros))) CHECK(v == 0.0);
  const Tensor y = ops::layer_norm(mat(1, 2, {1, 3}), ones, zeros, Real(1e-12));
  CHECK(y.data()[0] == doctest::Approx(-1).epsilon(1e-5));
  CHECK(y.data()[1] == doctest::Approx(1).epsilon(1e-5));
}

TEST_CASE("gelu reference points") {
  const Tensor y = ops::gelu(mat(1, 3, {0, 1, -1}));
  CHECK(y.data()[0] == 0.0);
  // x * Phi(x) with Phi(1) = 0.841344746
  CHECK(y.data()[1] == doctest::Approx(0.841344746).epsilon(1e-5));
  CHECK(y.data()[2] == doctest::Approx(-0.158655254).epsilon(1e-5));
}

TEST_CASE("cross entropy of uniform logits is log C") {
  const std::vector<std::size_t> labels{0, 2};
  const Tensor loss = ops::cross_entropy(Tensor::zeros({2, 3}), labels);
  CHECK(loss.item() == doctest::Approx(std::log(3.0)));
  const std::vector<std::size_t> bad{3, 0};
  CHECK_THROWS(ops::cross_entropy(Tensor::zeros({2, 3}), bad));
}

TEST_CASE("backward of sum gives ones") {
  Tensor x = mat(2, 3, {1, 2, 3, 4, 5, 6}, true);
  Tape tape;
  {
    Tape::Scope scope(tape);
    tape.backward(ops::sum(x));
  }
  for (double g : x.grad()) CHECK(g == 1.0);
}

TEST_CASE("detach blocks one path") {
  Tensor x = mat(1, 3, {1, 2, 3}, true);
  Tensor y = mat(1, 3, {4, 5, 6}, true);
  Tape tape;
  {
    Tape::Scope scope(tape);
    tape.backward(ops::sum(ops::mul(ops::detach(x), y)));
  }
  CHECK_FALSE(x.has_grad());
  REQUIRE(y.has_grad());
  CHECK(std::vector<double>(y.grad().begin(), y.grad().end()) == std::vector<double>{1, 2, 3});
}

TEST_CASE("no tape, no records") {
  Tensor x = mat(1, 2, {1, 2}, true);
  const Tensor y = ops::sum(ops::square(x));
  CHECK(y.item() == doctest::Approx(5));
  CHECK(Tape::active() == nullptr);
}

TEST_CASE("backward twice on the same tape is deterministic") {
  auto run = [] {
    Tensor w = mat(3, 2, {0.1f, -0.2f, 0.3f, 0.4f, -0.5f, 0.6f}, true);
    Tensor x = mat(2, 3, {1, 2, 3, -1, 0, 2});
    Tape tape;
    Tape::Scope scope(tape);
    tape.backward(ops::mean(ops::gelu(ops::matmul(x, w))));
    return std::vector<double>(w.grad().begin(), w.grad().end());
  };
  CHECK(run() == run());
}

TEST_CASE("tensor shape contracts") {
  CHECK_THROWS_AS(Tensor({2, 2}, {1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(Tensor({0, 2}, {}), DimensionError);
  CHECK_THROWS_AS(Tensor::zeros({2, 2}).item(), ContractError);
  const Tensor a = Tensor::full({2}, 3);
  Tensor b = a.clone();
  b.data()[0] = 7;
  CHECK(a.data()[0] == 3);
}

TEST_CASE("adamw hand-rolled updates") {
  SUBCASE("zero grad and no decay leaves params") {
    ParamSet ps;
    Tensor& w = ps.add("w", Tensor({2, 2}, {1, 2, 3, 4}, true));
    w.zero_grad();
    (void)w.node()->grad_buffer();
    auto st = OptimizerState::for_params(ps, AdamWConfig{0.1, 0.9, 0.999, 1e-8, 0.0});
    adamw_step(ps, st);
    CHECK(values(w) == std::vector<double>{1, 2, 3, 4});
  }
  SUBCASE("first step with unit gradient moves by lr") {
    ParamSet ps;
    Tensor& w = ps.add("w", Tensor({1}, {0.5f}, true), false);
    w.node()->grad_buffer()[0] = 1;
    auto st = OptimizerState::for_params(ps, AdamWConfig{0.1, 0.9, 0.999, 1e-8, 0.0});
    adamw_step(ps, st);
    // m_hat = v_hat = 1 after bias correction, so the step is lr * 1 / (1 + eps).
    CHECK(w.data()[0] == doctest::Approx(0.5 - 0.1 / (1 + 1e-8)).epsilon(1e-6));
  }
  SUBCASE("decoupled decay adds -lr*wd*w") {
    ParamSet ps;
    Tensor& w = ps.add("w", Tensor({1, 1}, {2.0f}, true), true);
    w.node()->grad_buffer()[0] = 1;
    auto st = OptimizerState::for_params(ps, AdamWConfig{0.1, 0.9, 0.999, 1e-8, 0.1});
    adamw_step(ps, st);
    CHECK(w.data()[0] == doctest::Approx(2.0 - 0.1 * (1.0 + 0.1 * 2.0)).epsilon(1e-6));
  }
  SUBCASE("second step follows the moment recursion") {
    ParamSet ps;
    Tensor& w = ps.add("w", Tensor({1}, {0.0f}, true), false);
    const AdamWConfig c{0.01, 0.9, 0.99, 1e-8, 0.0};
    auto st = OptimizerState::for_params(ps, c);
    double m = 0, v = 0, ref = 0;
    for (int t = 1; t <= 2; ++t) {
      const double g = t == 1 ? 2.0 : -1.0;
      w.node()->grad_buffer()[0] = static_cast<Real>(g);
      adamw_step(ps, st);
      m = 0.9 * m + 0.1 * g;
      v = 0.99 * v + 0.01 * g * g;
      ref -= 0.01 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.99, t))) + 1e-8);
    }
    CHECK(w.data()[0] == doctest::Approx(ref).epsilon(1e-5));
  }
  SUBCASE("non-finite gradient names the parameter") {
    ParamSet ps;
    Tensor& w = ps.add("enc.block0.qkv.weight", Tensor({1, 1}, {1.0f}, true));
    w.node()->grad_buffer()[0] = std::numeric_limits<Real>::quiet_NaN();
    auto st = OptimizerState::for_params(ps, {});
    try {
      adamw_step(ps, st);
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("enc.block0.qkv.weight") != std::string::npos);
    }
    CHECK(w.data()[0] == 1.0f);
  }
}

TEST_CASE("parameter set bookkeeping") {
  ParamSet ps;
  ps.add("a.weight", Tensor::zeros({2, 3}, true));
  ps.add("a.bias", Tensor::zeros({3}, true));
  CHECK(ps[0].decay);
  CHECK_FALSE(ps[1].decay);
  ps.add("mask_token", Tensor::zeros({1, 3}, true));
  CHECK_FALSE(ps[2].decay);
  CHECK(ps.numel() == 12);
  CHECK(ps.find("a.bias") != nullptr);
  CHECK(ps.find("missing") == nullptr);
  CHECK_THROWS_AS(ps.add("a.bias", Tensor::zeros({1}, true)), ConfigError);
}

TEST_CASE("gradient clipping") {
  ParamSet ps;
  Tensor& a = ps.add("a", Tensor::zeros({2}, true));
  a.node()->grad_buffer() = {3, 4};
  CHECK(clip_grad_norm(ps, 10.0) == doctest::Approx(5.0));
  CHECK(a.grad()[0] == doctest::Approx(3));
  CHECK(clip_grad_norm(ps, 1.0) == doctest::Approx(5.0));
  CHECK(a.grad()[0] == doctest::Approx(0.6));
  CHECK(a.grad()[1] == doctest::Approx(0.8));
}

TEST_CASE("cosine schedule endpoints") {
  const CosineSchedule s{1e-3, 1e-6, 10, 110};
  CHECK(s.at(0) == doctest::Approx(1e-4));
  CHECK(s.at(9) == doctest::Approx(1e-3));
  CHECK(s.at(10) == doctest::Approx(1e-3));
  CHECK(s.at(109) == doctest::Approx(1e-6));
  // Halfway through the decay the cosine term is zero.
  const double mid = 10 + 99 / 2.0;
  CHECK(s.at(static_cast<std::size_t>(mid)) == doctest::Approx(1e-6 + (1e-3 - 1e-6) * 0.5 *
                                                                (1 + std::cos(M_PI * 49.0 / 99.0))));
  for (std::size_t t = 11; t < 110; ++t) CHECK(s.at(t) <= s.at(t - 1));
}

TEST_CASE("rng streams are reproducible and independent") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
  Rng s1 = Rng::derive(42, {1, 2}), s2 = Rng::derive(42, {1, 2}), s3 = Rng::derive(42, {2, 1});
  const auto x = s1.next();
  CHECK(x == s2.next());
  CHECK(x != s3.next());
  Rng r(3);
  double lo = 1, hi = 0;
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform_open();
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    CHECK(r.below(7) < 7);
  }
  CHECK(lo > 0);
  CHECK(hi < 1);
}

TEST_CASE("rng moments") {
  Rng r(9);
  const int n = 200000;
  double s = 0, s2 = 0, g = 0;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    s += z;
    s2 += z * z;
    g += r.gumbel();
  }
  CHECK(std::abs(s / n) < 0.01);
  CHECK(std::abs(s2 / n - 1) < 0.02);
  // Gumbel(0,1) has mean equal to the Euler-Mascheroni constant.
  CHECK(std::abs(g / n - 0.5772156649) < 0.01);
}
