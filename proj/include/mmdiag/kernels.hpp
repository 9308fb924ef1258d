#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mmdiag/matrix.hpp"
#include "mmdiag/types.hpp"

namespace mmdiag::kernels {

// Every kernel exists twice: a serial reference and an OpenMP version.
// The parallel versions partition work by output row / series / query, so
// each output element is computed by exactly one thread in the same
// arithmetic order as the serial code — results are bit-identical, which
// the kernel tests assert. The unsuffixed entry points dispatch on work
// size and the global switch below.

bool parallel_enabled();
void set_parallel(bool enabled);
int max_threads();

// out = a * b
void matmul_serial(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_parallel(const Matrix& a, const Matrix& b, Matrix& out);
Matrix matmul(const Matrix& a, const Matrix& b);

struct AnomalyFlag {
    std::size_t index = 0;  // position in the input series
    Direction direction = Direction::Up;

    bool operator==(const AnomalyFlag&) const = default;
};

// Rolling k-sigma scan of one series: point i is flagged against the mean
// and population sigma of the `window` points strictly before it; sigma is
// floored; the first `window` points are never flagged.
std::vector<AnomalyFlag> scan_series(std::span<const double> values, int window, double k_sigma,
                                     double sigma_floor);

std::vector<std::vector<AnomalyFlag>> scan_batch_serial(
    const std::vector<std::vector<double>>& batch, int window, double k_sigma, double sigma_floor);
std::vector<std::vector<AnomalyFlag>> scan_batch_parallel(
    const std::vector<std::vector<double>>& batch, int window, double k_sigma, double sigma_floor);
std::vector<std::vector<AnomalyFlag>> scan_batch(const std::vector<std::vector<double>>& batch,
                                                 int window, double k_sigma, double sigma_floor);

// For each candidate row of `points`, the nearest other candidate row by
// squared Euclidean distance; ties go to the lower row index. Returns one
// entry per candidate, -1 when there is no other candidate.
std::vector<int> nearest_rows_serial(const Matrix& points, const std::vector<int>& candidates);
std::vector<int> nearest_rows_parallel(const Matrix& points, const std::vector<int>& candidates);
std::vector<int> nearest_rows(const Matrix& points, const std::vector<int>& candidates);

}  // namespace mmdiag::kernels
