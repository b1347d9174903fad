#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace polytx {

/// Dense row-major matrix of reals.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
};

struct FingerprintMatrix;
Matrix to_matrix(const FingerprintMatrix& fp);
/// Stacks matrices with equal column counts.
Matrix stack_rows(std::span<const Matrix> parts);

struct PcaModel {
  std::vector<double> mean;
  std::vector<std::vector<double>> components;  // orthonormal, one per row
  std::vector<double> explained_variance;       // descending, sample covariance (n - 1)
};

struct PcaOptions {
  std::size_t max_iterations = 5000;
  double tolerance = 1e-13;
  std::uint64_t seed = 0;
};

/// Power iteration with deflation on the sample covariance, applied as
/// X^T (X v) so the cols x cols covariance is never formed. Each component
/// is signed so its largest-magnitude entry is positive.
PcaModel pca_fit(const Matrix& x, std::size_t n_components = 2, const PcaOptions& options = {});

/// (row - mean) . components, rows x n_components.
Matrix project(const PcaModel& model, const Matrix& x);

struct DensityGrid {
  std::size_t bins = 0;
  double x_min = 0, x_max = 0, y_min = 0, y_max = 0;
  std::vector<std::string> labels;
  std::vector<std::vector<std::size_t>> counts;  // per label, bins * bins, row = y bin, col = x bin

  std::size_t total(std::size_t label) const;
};

/// Histograms every label on one shared box: joint min/max padded by 5% of
/// the span on each side (by 0.5 when a span is zero).
DensityGrid density_grid(const Matrix& coords, std::span<const std::string> row_labels, std::size_t bins);

/// Sum over cells of min(pA, pB) with each label's counts normalized to 1.
double grid_overlap(const DensityGrid& grid, std::size_t a, std::size_t b);

void write_coords_csv(const std::filesystem::path& path, const Matrix& coords, std::span<const std::string> row_labels);
/// label,x_bin,y_bin,x_center,y_center,count for every cell.
void write_grid_csv(const std::filesystem::path& path, const DensityGrid& grid);

}  // namespace polytx
