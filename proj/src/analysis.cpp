#include "polytx/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "polytx/error.hpp"
#include "polytx/rng.hpp"
#include "polytx/smiles_graph.hpp"

namespace polytx {

Matrix to_matrix(const FingerprintMatrix& fp) {
  Matrix m{fp.rows, fp.cols, std::vector<double>(fp.bits.begin(), fp.bits.end())};
  return m;
}

Matrix stack_rows(std::span<const Matrix> parts) {
  Matrix out;
  if (parts.empty()) return out;
  out.cols = parts[0].cols;
  for (const auto& p : parts) {
    if (p.cols != out.cols) {
      fail(ErrorCode::ShapeMismatch, "stack_rows: column counts " + std::to_string(out.cols) + " and " + std::to_string(p.cols));
    }
    out.rows += p.rows;
    out.values.insert(out.values.end(), p.values.begin(), p.values.end());
  }
  return out;
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

// out = C v with C = Xc^T Xc / (n - 1), Xc the centered data.
void cov_times(const Matrix& x, std::span<const double> mean, std::span<const double> v, std::vector<double>& out,
               std::vector<double>& scratch) {
  const std::size_t n = x.rows, d = x.cols;
  scratch.assign(n, 0.0);
  double mv = dot(mean, v);
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = x.values.data() + r * d;
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) s += row[c] * v[c];
    scratch[r] = s - mv;
  }
  out.assign(d, 0.0);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const double w = scratch[r];
    if (w == 0.0) continue;
    const double* row = x.values.data() + r * d;
    for (std::size_t c = 0; c < d; ++c) out[c] += w * row[c];
    total += w;
  }
  const double inv = 1.0 / static_cast<double>(n - 1);
  for (std::size_t c = 0; c < d; ++c) out[c] = (out[c] - total * mean[c]) * inv;
}

void orthogonalize(std::vector<double>& v, const std::vector<std::vector<double>>& basis) {
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& b : basis) {
      const double p = dot(v, b);
      for (std::size_t i = 0; i < v.size(); ++i) v[i] -= p * b[i];
    }
  }
}

void apply_sign_convention(std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (std::abs(v[i]) > std::abs(v[best])) best = i;
  }
  if (v[best] < 0.0) {
    for (auto& x : v) x = -x;
  }
}

}  // namespace

PcaModel pca_fit(const Matrix& x, std::size_t n_components, const PcaOptions& options) {
  if (x.rows < 2) fail(ErrorCode::TooFewSamples, "pca_fit: needs at least 2 rows");
  if (n_components == 0 || n_components > x.cols) fail(ErrorCode::BadConfig, "pca_fit: bad component count");
  const std::size_t n = x.rows, d = x.cols;
  PcaModel model;
  model.mean.assign(d, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) model.mean[c] += x.at(r, c);
  }
  for (auto& m : model.mean) m /= static_cast<double>(n);
  double total_var = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      const double z = x.at(r, c) - model.mean[c];
      total_var += z * z;
    }
  }
  total_var /= static_cast<double>(n - 1);
  if (!(total_var > 0.0)) fail(ErrorCode::DegenerateData, "pca_fit: data has zero variance");

  Rng rng(derive_seed(options.seed, 0x504341ULL));
  std::vector<double> v(d), cv, scratch;
  for (std::size_t k = 0; k < n_components; ++k) {
    for (auto& e : v) e = rng.normal();
    orthogonalize(v, model.components);
    double nv = norm(v);
    for (auto& e : v) e /= nv;
    double lambda = 0.0;
    for (std::size_t it = 0; it < options.max_iterations; ++it) {
      cov_times(x, model.mean, v, cv, scratch);
      orthogonalize(cv, model.components);
      lambda = dot(v, cv);
      // Residual of the eigen-equation, relative to the leading scale.
      double resid = 0.0;
      for (std::size_t i = 0; i < d; ++i) resid += (cv[i] - lambda * v[i]) * (cv[i] - lambda * v[i]);
      resid = std::sqrt(resid);
      const double ncv = norm(cv);
      if (ncv <= options.tolerance * total_var) {
        lambda = 0.0;  // the remaining spectrum is null; keep the orthonormal v
        break;
      }
      for (std::size_t i = 0; i < d; ++i) v[i] = cv[i] / ncv;
      if (resid <= options.tolerance * total_var) break;
    }
    cov_times(x, model.mean, v, cv, scratch);
    lambda = std::max(0.0, dot(v, cv));
    apply_sign_convention(v);
    model.components.push_back(v);
    model.explained_variance.push_back(lambda);
  }
  return model;
}

Matrix project(const PcaModel& model, const Matrix& x) {
  if (x.cols != model.mean.size()) {
    fail(ErrorCode::ShapeMismatch, "project: matrix has " + std::to_string(x.cols) + " columns, model expects " +
                                       std::to_string(model.mean.size()));
  }
  const std::size_t k = model.components.size();
  Matrix out{x.rows, k, std::vector<double>(x.rows * k, 0.0)};
  for (std::size_t r = 0; r < x.rows; ++r) {
    for (std::size_t j = 0; j < k; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < x.cols; ++c) s += (x.at(r, c) - model.mean[c]) * model.components[j][c];
      out.at(r, j) = s;
    }
  }
  return out;
}

std::size_t DensityGrid::total(std::size_t label) const {
  std::size_t s = 0;
  for (auto c : counts.at(label)) s += c;
  return s;
}

DensityGrid density_grid(const Matrix& coords, std::span<const std::string> row_labels, std::size_t bins) {
  if (bins < 2) fail(ErrorCode::BadConfig, "density_grid: bins must be >= 2");
  if (coords.cols != 2) fail(ErrorCode::ShapeMismatch, "density_grid: coordinates must have 2 columns");
  if (row_labels.size() != coords.rows) fail(ErrorCode::ShapeMismatch, "density_grid: one label per row required");
  DensityGrid g;
  g.bins = bins;
  for (const auto& l : row_labels) {
    if (std::find(g.labels.begin(), g.labels.end(), l) == g.labels.end()) g.labels.push_back(l);
  }
  g.counts.assign(g.labels.size(), std::vector<std::size_t>(bins * bins, 0));
  if (coords.rows == 0) return g;
  double x0 = coords.at(0, 0), x1 = x0, y0 = coords.at(0, 1), y1 = y0;
  for (std::size_t r = 0; r < coords.rows; ++r) {
    x0 = std::min(x0, coords.at(r, 0));
    x1 = std::max(x1, coords.at(r, 0));
    y0 = std::min(y0, coords.at(r, 1));
    y1 = std::max(y1, coords.at(r, 1));
  }
  auto pad = [](double& lo, double& hi) {
    const double m = hi > lo ? 0.05 * (hi - lo) : 0.5;
    lo -= m;
    hi += m;
  };
  pad(x0, x1);
  pad(y0, y1);
  g.x_min = x0, g.x_max = x1, g.y_min = y0, g.y_max = y1;
  auto cell = [bins](double v, double lo, double hi) {
    const auto i = static_cast<long long>(std::floor((v - lo) / (hi - lo) * static_cast<double>(bins)));
    return static_cast<std::size_t>(std::clamp<long long>(i, 0, static_cast<long long>(bins) - 1));
  };
  for (std::size_t r = 0; r < coords.rows; ++r) {
    const auto li = static_cast<std::size_t>(std::find(g.labels.begin(), g.labels.end(), row_labels[r]) - g.labels.begin());
    const std::size_t cx = cell(coords.at(r, 0), x0, x1);
    const std::size_t cy = cell(coords.at(r, 1), y0, y1);
    ++g.counts[li][cy * bins + cx];
  }
  return g;
}

double grid_overlap(const DensityGrid& grid, std::size_t a, std::size_t b) {
  const double ta = static_cast<double>(grid.total(a)), tb = static_cast<double>(grid.total(b));
  if (ta == 0.0 || tb == 0.0) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < grid.counts[a].size(); ++i) {
    s += std::min(static_cast<double>(grid.counts[a][i]) / ta, static_cast<double>(grid.counts[b][i]) / tb);
  }
  return s;
}

void write_coords_csv(const std::filesystem::path& path, const Matrix& coords, std::span<const std::string> row_labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out.precision(10);
  out << "label";
  for (std::size_t j = 0; j < coords.cols; ++j) out << ",pc" << j + 1;
  out << '\n';
  for (std::size_t r = 0; r < coords.rows; ++r) {
    out << row_labels[r];
    for (std::size_t j = 0; j < coords.cols; ++j) out << ',' << coords.at(r, j);
    out << '\n';
  }
}

void write_grid_csv(const std::filesystem::path& path, const DensityGrid& g) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out.precision(10);
  out << "label,x_bin,y_bin,x_center,y_center,count\n";
  const double wx = (g.x_max - g.x_min) / static_cast<double>(g.bins);
  const double wy = (g.y_max - g.y_min) / static_cast<double>(g.bins);
  for (std::size_t l = 0; l < g.labels.size(); ++l) {
    for (std::size_t y = 0; y < g.bins; ++y) {
      for (std::size_t x = 0; x < g.bins; ++x) {
        out << g.labels[l] << ',' << x << ',' << y << ',' << g.x_min + (static_cast<double>(x) + 0.5) * wx << ','
            << g.y_min + (static_cast<double>(y) + 0.5) * wy << ',' << g.counts[l][y * g.bins + x] << '\n';
      }
    }
  }
}

}  // namespace polytx
