#include "reluopt/kernels.hpp"

#include <algorithm>

#include "reluopt/errors.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace reluopt::kernels {

namespace {

// Work below which spawning a team costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 15;

void check_batch(const nn::ReluNetwork& net, std::span<const double> inputs,
                 std::span<const double> outputs) {
  if (inputs.size() != outputs.size() * net.input_size()) {
    throw ShapeError("forward_batch: inputs do not match output count");
  }
}

}  // namespace

void forward_batch_serial(const nn::ReluNetwork& net, std::span<const double> inputs,
                          std::span<double> outputs) {
  check_batch(net, inputs, outputs);
  const std::size_t n0 = net.input_size();
  std::vector<double> a, b;
  for (std::size_t s = 0; s < outputs.size(); ++s) {
    outputs[s] = nn::evaluate_normalized(net, inputs.subspan(s * n0, n0), a, b);
  }
}

void forward_batch_omp(const nn::ReluNetwork& net, std::span<const double> inputs,
                       std::span<double> outputs) {
  check_batch(net, inputs, outputs);
  const std::size_t n0 = net.input_size();
  const auto count = static_cast<std::ptrdiff_t>(outputs.size());
  const bool wide = outputs.size() * net.parameter_count() > kParallelWork;
#pragma omp parallel if (wide)
  {
    std::vector<double> a, b;
#pragma omp for schedule(static)
    for (std::ptrdiff_t s = 0; s < count; ++s) {
      const auto i = static_cast<std::size_t>(s);
      outputs[i] = nn::evaluate_normalized(net, inputs.subspan(i * n0, n0), a, b);
    }
  }
}

namespace {

inline void eliminate_row(DenseRows& m, std::size_t i, double factor, const double* pivot_row,
                          std::span<const std::size_t> pivot_support) {
  double* target = m.row(i);
  for (std::size_t k : pivot_support) target[k] -= factor * pivot_row[k];
}

void scale_pivot(DenseRows& m, std::size_t pivot, double pivot_value,
                 std::span<const std::size_t> pivot_support) {
  double* prow = m.row(pivot);
  const double inv = 1.0 / pivot_value;
  for (std::size_t k : pivot_support) prow[k] *= inv;
}

}  // namespace

void eliminate_serial(DenseRows& m, std::size_t pivot, std::span<const double> column,
                      std::span<const std::size_t> column_support,
                      std::span<const std::size_t> pivot_support) {
  scale_pivot(m, pivot, column[pivot], pivot_support);
  const double* prow = m.row(pivot);
  for (std::size_t i : column_support) {
    if (i == pivot) continue;
    eliminate_row(m, i, column[i], prow, pivot_support);
  }
}

void eliminate_omp(DenseRows& m, std::size_t pivot, std::span<const double> column,
                   std::span<const std::size_t> column_support,
                   std::span<const std::size_t> pivot_support) {
  scale_pivot(m, pivot, column[pivot], pivot_support);
  const double* prow = m.row(pivot);
  const auto rows = static_cast<std::ptrdiff_t>(column_support.size());
  const bool wide = column_support.size() * pivot_support.size() > kParallelWork;
#pragma omp parallel for schedule(static) if (wide)
  for (std::ptrdiff_t t = 0; t < rows; ++t) {
    const std::size_t i = column_support[static_cast<std::size_t>(t)];
    if (i == pivot) continue;
    eliminate_row(m, i, column[i], prow, pivot_support);
  }
}

bool openmp_enabled() {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

}  // namespace reluopt::kernels
