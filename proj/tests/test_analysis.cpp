#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <fstream>

#include "polytx/analysis.hpp"
#include "polytx/error.hpp"
#include "polytx/rng.hpp"
#include "polytx/smiles_graph.hpp"
#include "polytx/tokenizer.hpp"
#include "test_util.hpp"

using namespace polytx;

namespace {

Matrix make(std::size_t rows, std::size_t cols, std::vector<double> v) { return Matrix{rows, cols, std::move(v)}; }

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m{rows, cols, std::vector<double>(rows * cols)};
  // Distinct column scales keep the leading eigenvalues well separated.
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) m.at(r, c) = rng.normal() * (1.0 + static_cast<double>(cols - c));
  }
  return m;
}

struct EigenPca {
  Eigen::VectorXd values;   // descending
  Eigen::MatrixXd vectors;  // columns
};

EigenPca eigen_reference(const Matrix& x) {
  Eigen::MatrixXd m(x.rows, x.cols);
  for (std::size_t r = 0; r < x.rows; ++r) {
    for (std::size_t c = 0; c < x.cols; ++c) m(r, c) = x.at(r, c);
  }
  const Eigen::MatrixXd centered = m.rowwise() - m.colwise().mean();
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(x.rows - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  return {es.eigenvalues().reverse(), es.eigenvectors().rowwise().reverse()};
}

}  // namespace

TEST_SUITE("analysis") {
  TEST_CASE("points on y = x give the diagonal direction") {
    const auto m = pca_fit(make(4, 2, {0, 0, 1, 1, 2, 2, 3, 3}), 1);
    CHECK(m.components[0][0] == doctest::Approx(std::sqrt(0.5)));
    CHECK(m.components[0][1] == doctest::Approx(std::sqrt(0.5)));
    CHECK(m.mean == std::vector<double>{1.5, 1.5});
    CHECK(m.explained_variance[0] == doctest::Approx(2.0 * 5.0 / 3.0));
  }

  TEST_CASE("axis-aligned variance 4 and 1") {
    const auto m = pca_fit(make(4, 2, {2, 0, -2, 0, 0, 1, 0, -1}), 2);
    CHECK(std::abs(m.components[0][0]) == doctest::Approx(1.0));
    CHECK(m.components[0][1] == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(std::abs(m.components[1][1]) == doctest::Approx(1.0));
    CHECK(m.explained_variance[0] / m.explained_variance[1] == doctest::Approx(4.0));
    // sign convention: largest-magnitude entry positive
    CHECK(m.components[0][0] > 0.0);
    CHECK(m.components[1][1] > 0.0);
  }

  TEST_CASE("projection: the mean maps to zero, a component to a unit axis") {
    Rng rng(2);
    const auto x = random_matrix(30, 5, rng);
    const auto m = pca_fit(x, 2);
    const auto origin = project(m, make(1, 5, m.mean));
    CHECK(origin.at(0, 0) == doctest::Approx(0.0));
    CHECK(origin.at(0, 1) == doctest::Approx(0.0));
    std::vector<double> tip(5);
    for (std::size_t c = 0; c < 5; ++c) tip[c] = m.mean[c] + m.components[0][c];
    const auto axis = project(m, make(1, 5, tip));
    CHECK(axis.at(0, 0) == doctest::Approx(1.0));
    CHECK(axis.at(0, 1) == doctest::Approx(0.0).epsilon(1e-9));

    // projected coordinates carry the explained variance
    const auto coords = project(m, x);
    for (std::size_t k = 0; k < 2; ++k) {
      double ss = 0.0;
      for (std::size_t r = 0; r < coords.rows; ++r) ss += coords.at(r, k) * coords.at(r, k);
      CHECK(ss / static_cast<double>(coords.rows - 1) == doctest::Approx(m.explained_variance[k]).epsilon(1e-9));
    }
    CHECK_THROWS_AS(project(m, make(1, 4, {0, 0, 0, 0})), Error);
  }

  TEST_CASE("agrees with a dense symmetric eigensolver") {
    Rng rng(77);
    for (int trial = 0; trial < 10; ++trial) {
      const auto x = random_matrix(20, 8, rng);
      const auto m = pca_fit(x, 2);
      const auto ref = eigen_reference(x);
      for (std::size_t k = 0; k < 2; ++k) {
        CHECK(m.explained_variance[k] == doctest::Approx(ref.values(static_cast<Eigen::Index>(k))).epsilon(1e-9));
        double dot = 0.0;
        for (std::size_t c = 0; c < 8; ++c) dot += m.components[k][c] * ref.vectors(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(k));
        CHECK(std::abs(dot) == doctest::Approx(1.0).epsilon(1e-6));
      }
    }
  }

  TEST_CASE("deterministic and row-order invariant") {
    Rng rng(5);
    const auto x = random_matrix(25, 6, rng);
    const auto a = pca_fit(x, 2);
    const auto b = pca_fit(x, 2);
    CHECK(a.components == b.components);
    Matrix rev = x;
    for (std::size_t r = 0; r < x.rows; ++r) {
      for (std::size_t c = 0; c < x.cols; ++c) rev.at(r, c) = x.at(x.rows - 1 - r, c);
    }
    const auto c = pca_fit(rev, 2);
    for (std::size_t k = 0; k < 2; ++k) {
      for (std::size_t j = 0; j < 6; ++j) CHECK(c.components[k][j] == doctest::Approx(a.components[k][j]).epsilon(1e-6));
    }
  }

  TEST_CASE("degenerate inputs") {
    auto code = [](const std::function<void()>& f) {
      try {
        f();
      } catch (const Error& e) {
        return std::string(error_code_name(e.code()));
      }
      return std::string("none");
    };
    CHECK(code([] { pca_fit(make(3, 2, {1, 1, 1, 1, 1, 1}), 1); }) == "DegenerateData");
    CHECK(code([] { pca_fit(make(1, 2, {1, 2}), 1); }) == "TooFewSamples");
    CHECK(code([] { pca_fit(make(2, 2, {1, 2, 3, 4}), 3); }) == "BadConfig");
  }

  TEST_CASE("fingerprint PCA runs end to end") {
    const auto fp = fingerprint_matrix(read_corpus(testing::data_path("polymer_sample.txt")), 40, 1);
    const auto x = to_matrix(fp);
    CHECK(x.rows == 40);
    CHECK(x.cols == 1024);
    const auto m = pca_fit(x, 2);
    CHECK(m.explained_variance[0] >= m.explained_variance[1]);
    double dot = 0.0, n0 = 0.0;
    for (std::size_t c = 0; c < 1024; ++c) {
      dot += m.components[0][c] * m.components[1][c];
      n0 += m.components[0][c] * m.components[0][c];
    }
    CHECK(dot == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(n0 == doctest::Approx(1.0));
  }

  TEST_CASE("density grid: shared box, conservation, overlap") {
    const std::vector<std::string> same_labels = {"a", "a", "a"};
    auto g = density_grid(make(3, 2, {1, 1, 1, 1, 1, 1}), same_labels, 10);
    CHECK(g.total(0) == 3);
    std::size_t nonzero = 0;
    for (auto c : g.counts[0]) nonzero += c != 0;
    CHECK(nonzero == 1);
    CHECK(g.x_min == 0.5);
    CHECK(g.x_max == 1.5);

    Rng rng(3);
    Matrix pts{400, 2, std::vector<double>(800)};
    std::vector<std::string> labels;
    for (std::size_t r = 0; r < 400; ++r) {
      const bool first = r < 200;
      pts.at(r, 0) = rng.normal() + (first ? -10.0 : 10.0);
      pts.at(r, 1) = rng.normal();
      labels.push_back(first ? "left" : "right");
    }
    g = density_grid(pts, labels, 50);
    REQUIRE(g.labels.size() == 2);
    CHECK(g.total(0) == 200);
    CHECK(g.total(1) == 200);
    CHECK(grid_overlap(g, 0, 1) < 0.05);
    CHECK(grid_overlap(g, 0, 0) == doctest::Approx(1.0));

    for (std::size_t r = 200; r < 400; ++r) {
      pts.at(r, 0) = pts.at(r - 200, 0);
      pts.at(r, 1) = pts.at(r - 200, 1);
    }
    g = density_grid(pts, labels, 20);
    CHECK(grid_overlap(g, 0, 1) == doctest::Approx(1.0));
    CHECK_THROWS_AS(density_grid(pts, labels, 1), Error);
  }

  TEST_CASE("coordinate and grid files") {
    const auto dir = testing::scratch_dir("pca_files");
    const std::vector<std::string> labels = {"a", "b"};
    const auto coords = make(2, 2, {0, 0, 1, 1});
    write_coords_csv(dir / "c.csv", coords, labels);
    const auto g = density_grid(coords, labels, 4);
    write_grid_csv(dir / "g.csv", g);
    std::ifstream in(dir / "g.csv");
    std::string line;
    std::size_t lines = 0;
    while (std::getline(in, line)) ++lines;
    CHECK(lines == 1 + 2 * 16);
  }
}
