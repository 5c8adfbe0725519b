#pragma once

// Data-parallel kernels. Each has a serial reference and an OpenMP variant
// that must produce bit-identical results: parallelism is over independent
// rows/samples only, never over a reduction.

#include <cstddef>
#include <span>
#include <vector>

#include "reluopt/nn.hpp"

namespace reluopt::kernels {

/// Network outputs in normalised units for `inputs` (count x n0, row-major).
void forward_batch_serial(const nn::ReluNetwork& net, std::span<const double> inputs,
                          std::span<double> outputs);
void forward_batch_omp(const nn::ReluNetwork& net, std::span<const double> inputs,
                       std::span<double> outputs);

/// Dense row-major square matrix holding an explicit basis inverse.
struct DenseRows {
  std::size_t n = 0;
  std::vector<double> data;

  explicit DenseRows(std::size_t size = 0) : n(size), data(size * size, 0.0) {}
  double* row(std::size_t i) { return data.data() + i * n; }
  const double* row(std::size_t i) const { return data.data() + i * n; }
};

/// Gauss-Jordan step of a basis change. Row `pivot` is divided by
/// `column[pivot]`; every other row i with column[i] != 0 has column[i] times
/// the new pivot row subtracted. `pivot_support` lists the nonzero positions of
/// the pivot row, `column_support` the nonzero positions of `column`.
void eliminate_serial(DenseRows& m, std::size_t pivot, std::span<const double> column,
                      std::span<const std::size_t> column_support,
                      std::span<const std::size_t> pivot_support);
void eliminate_omp(DenseRows& m, std::size_t pivot, std::span<const double> column,
                   std::span<const std::size_t> column_support,
                   std::span<const std::size_t> pivot_support);

/// Whether the OpenMP variants were compiled with OpenMP enabled.
bool openmp_enabled();

}  // namespace reluopt::kernels
