#include <doctest.h>

#include <cmath>
#include <limits>

#include "polytx/error.hpp"
#include "polytx/optim.hpp"

using namespace polytx;

namespace {

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TEST_SUITE("optim") {
  TEST_CASE("names parse and print") {
    CHECK(parse_optimizer("lamb") == OptimizerKind::Lamb);
    CHECK(parse_optimizer("adamw") == OptimizerKind::AdamW);
    CHECK(optimizer_name(OptimizerKind::Lamb) == "lamb");
    CHECK(parse_schedule("constant") == Schedule::Constant);
    CHECK(schedule_name(Schedule::WarmupDecay) == "warmup_decay");
    CHECK_THROWS_AS(parse_optimizer("sgd"), Error);
    CHECK_THROWS_AS(parse_schedule("cosine"), Error);
  }

  TEST_CASE("adamw: zero gradient and zero decay leave parameters unchanged") {
    std::vector<double> p = {1.0, -2.0, 0.5};
    const std::vector<double> g(3, 0.0);
    MomentState<double> s;
    for (int i = 0; i < 5; ++i) step_adamw<double>(p, g, s, 0.1, AdamHyper{});
    CHECK(p == std::vector<double>{1.0, -2.0, 0.5});
  }

  TEST_CASE("adamw: two steps against a hand computation") {
    const AdamHyper hp{0.9, 0.999, 1e-8, 0.01};
    const double lr = 0.1;
    std::vector<double> p = {1.0, -3.0};
    MomentState<double> s;
    const std::vector<std::vector<double>> grads = {{0.5, -0.2}, {-0.1, 0.4}};

    std::vector<double> ref = p, m(2, 0.0), v(2, 0.0);
    for (std::size_t t = 1; t <= grads.size(); ++t) {
      step_adamw<double>(p, grads[t - 1], s, lr, hp);
      for (std::size_t i = 0; i < 2; ++i) {
        const double g = grads[t - 1][i];
        m[i] = 0.9 * m[i] + 0.1 * g;
        v[i] = 0.999 * v[i] + 0.001 * g * g;
        const double mh = m[i] / (1.0 - std::pow(0.9, t));
        const double vh = v[i] / (1.0 - std::pow(0.999, t));
        ref[i] = ref[i] - lr * 0.01 * ref[i] - lr * mh / (std::sqrt(vh) + 1e-8);
      }
      for (std::size_t i = 0; i < 2; ++i) CHECK(p[i] == doctest::Approx(ref[i]).epsilon(1e-14));
    }
    CHECK(s.t == 2);
    // First step moves every coordinate by about lr against its gradient sign.
    CHECK(ref[0] < 1.0);
  }

  TEST_CASE("adamw: decay alone shrinks geometrically") {
    std::vector<double> p = {2.0, -4.0};
    const std::vector<double> g(2, 0.0);
    MomentState<double> s;
    const AdamHyper hp{0.9, 0.999, 1e-8, 0.1};
    for (int i = 0; i < 3; ++i) step_adamw<double>(p, g, s, 0.5, hp);
    CHECK(p[0] == doctest::Approx(2.0 * std::pow(0.95, 3)).epsilon(1e-14));
    CHECK(p[1] == doctest::Approx(-4.0 * std::pow(0.95, 3)).epsilon(1e-14));
  }

  TEST_CASE("lamb: trust ratio is 1 for a zero tensor and clamped otherwise") {
    std::vector<double> zero(4, 0.0);
    MomentState<double> s;
    CHECK(step_lamb<double>(zero, std::vector<double>{1, -1, 2, 0.5}, s, 0.01, AdamHyper{}) == 1.0);

    std::vector<double> huge = {1e6, 1e6};
    MomentState<double> s2;
    CHECK(step_lamb<double>(huge, std::vector<double>{1, 1}, s2, 1e-3, AdamHyper{}) == kTrustRatioMax);

    std::vector<double> tiny = {1e-9, -1e-9};
    MomentState<double> s3;
    CHECK(step_lamb<double>(tiny, std::vector<double>{1, 1}, s3, 1e-3, AdamHyper{}) == kTrustRatioMin);
  }

  TEST_CASE("lamb update direction equals the adam direction, rescaled") {
    const std::vector<double> start = {0.3, -0.7, 1.2, 0.05};
    const std::vector<double> g = {0.2, 0.1, -0.4, 0.9};
    std::vector<double> pa = start, pl = start;
    MomentState<double> sa, sl;
    const AdamHyper hp{0.9, 0.999, 1e-8, 0.0};
    step_adamw<double>(pa, g, sa, 1e-3, hp);
    const double trust = step_lamb<double>(pl, g, sl, 1e-3, hp);
    std::vector<double> da(4), dl(4);
    for (std::size_t i = 0; i < 4; ++i) {
      da[i] = pa[i] - start[i];
      dl[i] = pl[i] - start[i];
    }
    for (std::size_t i = 0; i < 4; ++i) CHECK(dl[i] == doctest::Approx(trust * da[i]).epsilon(1e-9));
    // ratio ||p|| / ||adam update / lr||
    CHECK(trust == doctest::Approx(norm(start) / (norm(da) / 1e-3)).epsilon(1e-9));
  }

  TEST_CASE("learning-rate schedule") {
    CHECK(lr_at(0, 1000, 1e-3, 0.1) == 0.0);
    CHECK(lr_at(50, 1000, 1e-3, 0.1) == doctest::Approx(5e-4));
    CHECK(lr_at(100, 1000, 1e-3, 0.1) == doctest::Approx(1e-3));
    CHECK(lr_at(550, 1000, 1e-3, 0.1) == doctest::Approx(5e-4));
    CHECK(lr_at(1000, 1000, 1e-3, 0.1) == 0.0);
    CHECK(lr_at(700, 1000, 2e-5, 0.1, Schedule::Constant) == 2e-5);
    double prev = -1.0;
    for (std::uint64_t s = 0; s <= 100; ++s) {
      const double lr = lr_at(s, 1000, 1e-3, 0.1);
      CHECK(lr >= prev);
      prev = lr;
    }
    try {
      lr_at(1001, 1000, 1e-3, 0.1);
      FAIL("expected BadStep");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::BadStep);
    }
  }

  TEST_CASE("optimizer class rejects non-finite gradients before any update") {
    auto a = ad::Tensor<double>::from({2}, {1.0, 2.0}, true);
    auto b = ad::Tensor<double>::from({2}, {3.0, 4.0}, true);
    ad::backward(ad::add(ad::sum(a), ad::sum(ad::scale(b, std::numeric_limits<double>::quiet_NaN()))));
    const std::vector<NamedParam<double>> params = {{"first", &a}, {"second.weight", &b}};
    Optimizer<double> opt(OptimizerKind::AdamW, AdamHyper{});
    try {
      opt.step(params, 0.1);
      FAIL("expected NonFiniteGradient");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NonFiniteGradient);
      CHECK(std::string(e.what()).find("second.weight") != std::string::npos);
    }
    CHECK(a.data()[0] == 1.0);
    CHECK(opt.steps_taken() == 0);
  }

  TEST_CASE("optimizer state export and import resume identically") {
    auto make = [] { return ad::Tensor<double>::from({3}, {0.5, -1.0, 2.0}, true); };
    auto x = make(), y = make();
    const std::vector<NamedParam<double>> px = {{"w", &x}}, py = {{"w", &y}};
    Optimizer<double> ox(OptimizerKind::Lamb, AdamHyper{0.9, 0.999, 1e-8, 0.01});
    Optimizer<double> oy(OptimizerKind::Lamb, AdamHyper{0.9, 0.999, 1e-8, 0.01});
    auto grad_step = [](ad::Tensor<double>& t, Optimizer<double>& o, const std::vector<NamedParam<double>>& p) {
      t.zero_grad();
      ad::backward(ad::sum(ad::gelu(t)));
      o.step(p, 1e-2);
    };
    grad_step(x, ox, px);
    grad_step(y, oy, py);
    Optimizer<double> resumed(OptimizerKind::Lamb, AdamHyper{0.9, 0.999, 1e-8, 0.01});
    resumed.import_state(ox.export_state(), px);
    grad_step(x, resumed, px);
    grad_step(y, oy, py);
    for (std::size_t i = 0; i < 3; ++i) CHECK(x.data()[i] == doctest::Approx(y.data()[i]).epsilon(1e-6));
    CHECK(resumed.last_trust_ratios().count("w") == 1);
  }
}
