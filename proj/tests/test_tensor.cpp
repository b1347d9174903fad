#include <doctest.h>

#include <cmath>
#include <unordered_set>

#include "gradcheck_suite.hpp"
#include "polytx/error.hpp"
#include "polytx/tensor.hpp"

using namespace polytx;
using T = ad::Tensor<double>;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::IoError;
}

}  // namespace

TEST_SUITE("tensor") {
  TEST_CASE("construction validates shapes") {
    CHECK(T::zeros({2, 3}).numel() == 6);
    CHECK_THROWS_AS(T::from({2, 2}, {1, 2, 3}), Error);
    CHECK_THROWS_AS(T::zeros({2, 0}), Error);
    CHECK(T::scalar(3.5).item() == 3.5);
    CHECK(code_of([] { (void)T::zeros({2}).item(); }) == ErrorCode::NotScalar);
  }

  TEST_CASE("forward values") {
    auto s = ad::softmax(T::from({1, 2}, {0.0, 0.0}));
    CHECK(s.data()[0] == doctest::Approx(0.5));
    CHECK(s.data()[1] == doctest::Approx(0.5));

    auto ln = ad::layer_norm(T::from({1, 4}, {3, 3, 3, 3}), T::full({4}, 1.0), T::zeros({4}));
    for (double v : ln.data()) CHECK(v == 0.0);

    CHECK(ad::matmul(T::zeros({2, 3}), T::zeros({3, 4})).shape() == ad::Shape{2, 4});
    CHECK(ad::matmul(T::zeros({5, 2, 3}), T::zeros({3, 4})).shape() == ad::Shape{5, 2, 4});
    CHECK(ad::matmul(T::zeros({5, 2, 3}), T::zeros({5, 3, 4})).shape() == ad::Shape{5, 2, 4});

    auto m = ad::matmul(T::from({2, 2}, {1, 2, 3, 4}), T::from({2, 1}, {5, 6}));
    CHECK(m.data()[0] == 17.0);
    CHECK(m.data()[1] == 39.0);

    auto g = ad::gelu(T::from({3}, {0.0, 1.0, -1.0}));
    CHECK(g.data()[0] == 0.0);
    CHECK(g.data()[1] == doctest::Approx(0.8413447460685429));
    CHECK(g.data()[2] == doctest::Approx(-0.15865525393145707));

    auto tr = ad::transpose(T::from({2, 3}, {1, 2, 3, 4, 5, 6}), 0, 1);
    CHECK(tr.shape() == ad::Shape{3, 2});
    CHECK(std::vector<double>(tr.data().begin(), tr.data().end()) == std::vector<double>{1, 4, 2, 5, 3, 6});

    auto c = ad::concat<double>({T::from({1, 2}, {1, 2}), T::from({1, 1}, {3})}, 1);
    CHECK(std::vector<double>(c.data().begin(), c.data().end()) == std::vector<double>{1, 2, 3});

    CHECK(ad::mean(T::from({4}, {1, 2, 3, 6})).item() == 3.0);
    CHECK(ad::sum(T::from({4}, {1, 2, 3, 6})).item() == 12.0);

    auto e = ad::embedding_lookup(T::from({3, 2}, {0, 1, 10, 11, 20, 21}), std::vector<int>{2, 0, 2});
    CHECK(e.shape() == ad::Shape{3, 2});
    CHECK(e.data()[0] == 20.0);
    CHECK(e.data()[3] == 1.0);
  }

  TEST_CASE("shape mismatches name both shapes") {
    try {
      ad::matmul(T::zeros({2, 3}), T::zeros({4, 5}));
      FAIL("expected ShapeMismatch");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ShapeMismatch);
      const std::string msg = e.what();
      CHECK(msg.find("(2,3)") != std::string::npos);
      CHECK(msg.find("(4,5)") != std::string::npos);
    }
    CHECK(code_of([] { ad::add(T::zeros({2, 3}), T::zeros({2})); }) == ErrorCode::ShapeMismatch);
    CHECK(code_of([] { ad::reshape(T::zeros({2, 3}), {4}); }) == ErrorCode::ShapeMismatch);
    CHECK(code_of([] { ad::embedding_lookup(T::zeros({2, 3}), std::vector<int>{2}); }) == ErrorCode::ShapeMismatch);
  }

  TEST_CASE("cross entropy") {
    auto uniform = T::zeros({1, 4});
    CHECK(ad::cross_entropy(uniform, std::vector<int>{2}).item() == doctest::Approx(std::log(4.0)));

    double prev = 1e9;
    for (double margin : {1.0, 5.0, 20.0, 60.0}) {
      const double l = ad::cross_entropy(T::from({1, 3}, {margin, 0, 0}), std::vector<int>{0}).item();
      CHECK(l < prev);
      prev = l;
    }
    CHECK(prev < 1e-20);

    auto two = T::from({2, 3}, {0.3, -1.0, 2.0, 5.0, 1.0, -2.0});
    auto one = T::from({1, 3}, {0.3, -1.0, 2.0});
    CHECK(ad::cross_entropy(two, std::vector<int>{1, ad::kIgnoreIndex}).item() ==
          doctest::Approx(ad::cross_entropy(one, std::vector<int>{1}).item()).epsilon(1e-15));

    auto logits = T::from({2, 3}, {0.3, -1.0, 2.0, 5.0, 1.0, -2.0}, true);
    ad::backward(ad::cross_entropy(logits, std::vector<int>{1, ad::kIgnoreIndex}));
    for (std::size_t j = 3; j < 6; ++j) CHECK(logits.grad()[j] == 0.0);

    CHECK(code_of([] { ad::cross_entropy(T::zeros({2, 3}), std::vector<int>{ad::kIgnoreIndex, ad::kIgnoreIndex}); }) ==
          ErrorCode::AllIgnored);
    CHECK(code_of([] { ad::cross_entropy(T::zeros({1, 3}), std::vector<int>{3}); }) == ErrorCode::ShapeMismatch);
  }

  TEST_CASE("l1 loss") {
    auto p = T::from({1, 2}, {1, 5});
    CHECK(ad::l1_loss(p, p, std::vector<std::uint8_t>{1, 1}).item() == 0.0);
    CHECK(ad::l1_loss(p, T::from({1, 2}, {2, 9}), std::vector<std::uint8_t>{1, 0}).item() == 1.0);
    CHECK(code_of([&] { ad::l1_loss(p, p, std::vector<std::uint8_t>{0, 0}); }) == ErrorCode::AllUnobserved);
    CHECK(code_of([&] { ad::l1_loss(p, T::zeros({2, 1}), std::vector<std::uint8_t>{1, 1}); }) == ErrorCode::ShapeMismatch);
  }

  TEST_CASE("backward basics") {
    auto x = T::from({2, 3}, {1, 2, 3, 4, 5, 6}, true);
    ad::backward(ad::sum(x));
    for (double g : x.grad()) CHECK(g == 1.0);
    ad::backward(ad::sum(x));
    for (double g : x.grad()) CHECK(g == 2.0);
    x.zero_grad();
    CHECK(!x.has_grad());

    auto d = x.detach();
    CHECK(!d.requires_grad());
    auto y = T::from({2}, {1, 2}, true);
    ad::backward(ad::add(ad::sum(d), ad::sum(y)));
    CHECK(!x.has_grad());
    CHECK(y.has_grad());

    CHECK(code_of([&] { ad::backward(ad::scale(x, 2.0)); }) == ErrorCode::NotScalar);
    CHECK(code_of([] { ad::backward(T::scalar(1.0)); }) == ErrorCode::NotOnGraph);
  }

  TEST_CASE("no-grad guard records nothing") {
    auto x = T::from({2}, {1, 2}, true);
    {
      ad::NoGradGuard g;
      CHECK(!ad::grad_enabled());
      CHECK(!ad::sum(x).requires_grad());
    }
    CHECK(ad::grad_enabled());
    CHECK(ad::sum(x).requires_grad());
  }

  TEST_CASE("compute graph is topologically ordered, each node once") {
    auto a = T::from({2, 2}, {1, 2, 3, 4}, true);
    auto b = ad::matmul(a, a);
    auto c = ad::add(b, a);
    auto loss = ad::sum(ad::add(c, b));
    const auto g = ad::ComputeGraph<double>::trace(loss);
    std::unordered_set<const void*> seen;
    for (std::size_t i = 0; i < g.nodes().size(); ++i) {
      CHECK(seen.insert(g.nodes()[i]).second);
      for (const auto& p : g.nodes()[i]->parents) {
        if (!p->requires_grad) continue;
        bool earlier = false;
        for (std::size_t j = 0; j < i; ++j) earlier = earlier || g.nodes()[j] == p.get();
        CHECK(earlier);
      }
    }
    CHECK(g.nodes().size() == 5);
    CHECK(g.nodes().back() == loss.node());
  }

  TEST_CASE("dropout") {
    Rng rng(5);
    auto x = testing::random_tensor({100, 1000}, rng);
    auto same = ad::dropout(x, 0.0, true, std::uint64_t{1});
    CHECK(same.node() == x.node());
    CHECK(ad::dropout(x, 0.5, false, std::uint64_t{1}).node() == x.node());
    for (double p : {0.1, 0.3, 0.5}) {
      auto y = ad::dropout(x, p, true, std::uint64_t{9});
      std::size_t dropped = 0;
      for (std::size_t i = 0; i < y.numel(); ++i) {
        if (y.data()[i] == 0.0) {
          ++dropped;
        } else {
          CHECK(y.data()[i] == doctest::Approx(x.data()[i] / (1.0 - p)));
        }
      }
      CHECK(std::abs(static_cast<double>(dropped) / 1e5 - p) <= 0.01);
    }
    CHECK_THROWS_AS(ad::dropout(x, 1.0, true, std::uint64_t{1}), Error);
    auto a = ad::dropout(x, 0.2, true, std::uint64_t{3});
    auto b = ad::dropout(x, 0.2, true, std::uint64_t{3});
    CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
  }

  TEST_CASE("gradcheck: every primitive and both heads, 64-bit") {
    for (const auto& c : testing::run_gradcheck_suite()) {
      INFO(c.name << " worst relative error " << c.worst());
      CHECK(c.max_leaf <= 64);
      CHECK(c.ok());
    }
  }

  TEST_CASE("float and double agree on a forward pass") {
    Rng rng(8);
    std::vector<double> v(24);
    for (auto& e : v) e = rng.normal();
    auto xd = T::from({4, 6}, v);
    auto xf = ad::Tensor<float>::from({4, 6}, std::vector<float>(v.begin(), v.end()));
    auto yd = ad::softmax(ad::gelu(xd));
    auto yf = ad::softmax(ad::gelu(xf));
    for (std::size_t i = 0; i < 24; ++i) CHECK(yf.data()[i] == doctest::Approx(yd.data()[i]).epsilon(1e-5));
  }
}
