#include "mmdiag/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mmdiag::kernels {

namespace {
std::atomic<bool> g_parallel{true};
}

bool parallel_enabled() { return g_parallel.load(); }
void set_parallel(bool enabled) { g_parallel.store(enabled); }

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

namespace {

void matmul_rows(const Matrix& a, const Matrix& b, Matrix& out, std::size_t r0, std::size_t r1) {
    const std::size_t k = a.cols();
    const std::size_t n = b.cols();
    for (std::size_t i = r0; i < r1; ++i) {
        double* out_row = out.data().data() + i * n;
        std::fill(out_row, out_row + n, 0.0);
        const double* a_row = a.data().data() + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a_row[p];
            if (av == 0.0) continue;
            const double* b_row = b.data().data() + p * n;
            for (std::size_t j = 0; j < n; ++j) out_row[j] += av * b_row[j];
        }
    }
}

}  // namespace

void matmul_serial(const Matrix& a, const Matrix& b, Matrix& out) {
    if (a.cols() != b.rows()) throw NumericError("matmul: inner dimensions disagree");
    out = Matrix(a.rows(), b.cols());
    matmul_rows(a, b, out, 0, a.rows());
}

void matmul_parallel(const Matrix& a, const Matrix& b, Matrix& out) {
    if (a.cols() != b.rows()) throw NumericError("matmul: inner dimensions disagree");
    out = Matrix(a.rows(), b.cols());
#ifdef _OPENMP
    const std::int64_t rows = static_cast<std::int64_t>(a.rows());
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < rows; ++i) {
        matmul_rows(a, b, out, static_cast<std::size_t>(i), static_cast<std::size_t>(i) + 1);
    }
#else
    matmul_rows(a, b, out, 0, a.rows());
#endif
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    Matrix out;
    const std::size_t work = a.rows() * a.cols() * b.cols();
    if (parallel_enabled() && a.rows() > 1 && work >= 1u << 16) {
        matmul_parallel(a, b, out);
    } else {
        matmul_serial(a, b, out);
    }
    return out;
}

std::vector<AnomalyFlag> scan_series(std::span<const double> values, int window, double k_sigma,
                                     double sigma_floor) {
    std::vector<AnomalyFlag> flags;
    if (window < 2 || values.size() <= static_cast<std::size_t>(window)) return flags;
    const std::size_t w = static_cast<std::size_t>(window);
    double sum = 0.0;
    double sumsq = 0.0;
    for (std::size_t i = 0; i < w; ++i) {
        sum += values[i];
        sumsq += values[i] * values[i];
    }
    for (std::size_t i = w; i < values.size(); ++i) {
        const double mean = sum / static_cast<double>(w);
        const double var = std::max(0.0, sumsq / static_cast<double>(w) - mean * mean);
        const double sigma = std::max(std::sqrt(var), sigma_floor);
        const double v = values[i];
        if (v > mean + k_sigma * sigma) {
            flags.push_back({i, Direction::Up});
        } else if (v < mean - k_sigma * sigma) {
            flags.push_back({i, Direction::Down});
        }
        const double out = values[i - w];
        sum += v - out;
        sumsq += v * v - out * out;
    }
    return flags;
}

std::vector<std::vector<AnomalyFlag>> scan_batch_serial(
    const std::vector<std::vector<double>>& batch, int window, double k_sigma, double sigma_floor) {
    std::vector<std::vector<AnomalyFlag>> out(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        out[i] = scan_series(batch[i], window, k_sigma, sigma_floor);
    }
    return out;
}

std::vector<std::vector<AnomalyFlag>> scan_batch_parallel(
    const std::vector<std::vector<double>>& batch, int window, double k_sigma, double sigma_floor) {
    std::vector<std::vector<AnomalyFlag>> out(batch.size());
#ifdef _OPENMP
    const std::int64_t n = static_cast<std::int64_t>(batch.size());
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < n; ++i) {
        out[static_cast<std::size_t>(i)] =
            scan_series(batch[static_cast<std::size_t>(i)], window, k_sigma, sigma_floor);
    }
#else
    out = scan_batch_serial(batch, window, k_sigma, sigma_floor);
#endif
    return out;
}

std::vector<std::vector<AnomalyFlag>> scan_batch(const std::vector<std::vector<double>>& batch,
                                                 int window, double k_sigma, double sigma_floor) {
    if (parallel_enabled() && batch.size() > 1) {
        return scan_batch_parallel(batch, window, k_sigma, sigma_floor);
    }
    return scan_batch_serial(batch, window, k_sigma, sigma_floor);
}

namespace {

int nearest_of(const Matrix& points, const std::vector<int>& candidates, int query) {
    const std::size_t d = points.cols();
    const double* q = points.data().data() + static_cast<std::size_t>(query) * d;
    int best = -1;
    double best_dist = std::numeric_limits<double>::infinity();
    for (int c : candidates) {
        if (c == query) continue;
        const double* p = points.data().data() + static_cast<std::size_t>(c) * d;
        double dist = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double diff = q[j] - p[j];
            dist += diff * diff;
        }
        if (dist < best_dist || (dist == best_dist && c < best)) {
            best_dist = dist;
            best = c;
        }
    }
    return best;
}

}  // namespace

std::vector<int> nearest_rows_serial(const Matrix& points, const std::vector<int>& candidates) {
    std::vector<int> out(candidates.size(), -1);
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        out[i] = nearest_of(points, candidates, candidates[i]);
    }
    return out;
}

std::vector<int> nearest_rows_parallel(const Matrix& points, const std::vector<int>& candidates) {
    std::vector<int> out(candidates.size(), -1);
#ifdef _OPENMP
    const std::int64_t n = static_cast<std::int64_t>(candidates.size());
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
        out[static_cast<std::size_t>(i)] =
            nearest_of(points, candidates, candidates[static_cast<std::size_t>(i)]);
    }
#else
    out = nearest_rows_serial(points, candidates);
#endif
    return out;
}

std::vector<int> nearest_rows(const Matrix& points, const std::vector<int>& candidates) {
    const std::size_t work = candidates.size() * candidates.size() * points.cols();
    if (parallel_enabled() && work >= 1u << 16) {
        return nearest_rows_parallel(points, candidates);
    }
    return nearest_rows_serial(points, candidates);
}

}  // namespace mmdiag::kernels
