#include "ecmoe/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <omp.h>
#include <stdexcept>
#include <vector>

namespace ecmoe {

namespace {

void check_matmul_dims(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("matmul: inner dimensions " + std::to_string(a.cols()) +
                                    " and " + std::to_string(b.rows()) + " differ");
    }
}

void check_finite_result(const Matrix& m, const char* op) {
    if (!m.all_finite()) {
        throw std::runtime_error(std::string(op) + ": non-finite result");
    }
}

void softmax_row(const double* in, double* out, std::size_t n) {
    double mx = in[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, in[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        out[j] = std::exp(in[j] - mx);
        sum += out[j];
    }
    double inv = 1.0 / sum;
    for (std::size_t j = 0; j < n; ++j) out[j] *= inv;
}

// strict total order: value descending, then column ascending
struct TopkCmp {
    const double* row;
    bool operator()(std::uint32_t a, std::uint32_t b) const {
        if (row[a] != row[b]) return row[a] > row[b];
        return a < b;
    }
};

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
    check_matmul_dims(a, b);
    const std::size_t m = a.rows(), p = a.cols(), q = b.cols();
    Matrix c(m, q);
    // i,t,j loop order for contiguous access to b; each c[i][j] still
    // accumulates in ascending t, matching ref::matmul bitwise.
    #pragma omp parallel for schedule(static) if (m * p * q > 32768)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
        double* crow = c.data() + i * q;
        const double* arow = a.data() + i * p;
        for (std::size_t t = 0; t < p; ++t) {
            const double at = arow[t];
            const double* brow = b.data() + t * q;
            for (std::size_t j = 0; j < q; ++j) {
                crow[j] += at * brow[j];
            }
        }
    }
    check_finite_result(c, "matmul");
    return c;
}

Matrix softmax_rows(const Matrix& m) {
    if (!m.all_finite()) {
        throw std::invalid_argument("softmax_rows: non-finite input");
    }
    Matrix out(m.rows(), m.cols());
    const std::size_t cols = m.cols();
    #pragma omp parallel for schedule(static) if (m.size() > 16384)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m.rows()); ++i) {
        softmax_row(m.data() + i * cols, out.data() + i * cols, cols);
    }
    return out;
}

std::pair<Matrix, IndexMatrix> topk_rows(const Matrix& m, std::size_t k) {
    if (k > m.cols()) {
        throw std::invalid_argument("topk_rows: k " + std::to_string(k) + " > cols " +
                                    std::to_string(m.cols()));
    }
    const std::size_t rows = m.rows(), cols = m.cols();
    Matrix values(rows, k);
    IndexMatrix indices(rows, k, cols);
    #pragma omp parallel if (rows > 1 && m.size() > 16384)
    {
        std::vector<std::uint32_t> idx(cols);
        #pragma omp for schedule(static)
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(rows); ++i) {
            std::iota(idx.begin(), idx.end(), 0u);
            TopkCmp cmp{m.data() + i * cols};
            if (k < cols) {
                std::nth_element(idx.begin(), idx.begin() + k, idx.end(), cmp);
            }
            std::sort(idx.begin(), idx.begin() + k, cmp);
            for (std::size_t j = 0; j < k; ++j) {
                indices(i, j) = idx[j];
                values(i, j) = m(i, idx[j]);
            }
        }
    }
    return {std::move(values), std::move(indices)};
}

Matrix transpose(const Matrix& m) {
    Matrix out(m.cols(), m.rows());
    #pragma omp parallel for schedule(static) if (m.size() > 65536)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m.rows()); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            out(j, i) = m(i, j);
        }
    }
    return out;
}

double gelu(double x) {
    constexpr double kSqrt2OverPi = 0.7978845608028653558798921198687;
    double u = kSqrt2OverPi * (x + 0.044715 * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_grad(double x) {
    constexpr double kSqrt2OverPi = 0.7978845608028653558798921198687;
    double u = kSqrt2OverPi * (x + 0.044715 * x * x * x);
    double t = std::tanh(u);
    double du = kSqrt2OverPi * (1.0 + 3.0 * 0.044715 * x * x);
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

Matrix softmax_backward_rows(const Matrix& s, const Matrix& grad_s) {
    if (s.rows() != grad_s.rows() || s.cols() != grad_s.cols()) {
        throw std::invalid_argument("softmax_backward_rows: shape mismatch");
    }
    Matrix grad_z(s.rows(), s.cols());
    for (std::size_t i = 0; i < s.rows(); ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < s.cols(); ++j) dot += grad_s(i, j) * s(i, j);
        for (std::size_t j = 0; j < s.cols(); ++j) {
            grad_z(i, j) = s(i, j) * (grad_s(i, j) - dot);
        }
    }
    return grad_z;
}

namespace ref {

Matrix matmul(const Matrix& a, const Matrix& b) {
    check_matmul_dims(a, b);
    const std::size_t m = a.rows(), p = a.cols(), q = b.cols();
    Matrix c(m, q);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < q; ++j) {
            double acc = 0.0;
            for (std::size_t t = 0; t < p; ++t) {
                acc += a(i, t) * b(t, j);
            }
            c(i, j) = acc;
        }
    }
    check_finite_result(c, "matmul");
    return c;
}

Matrix softmax_rows(const Matrix& m) {
    if (!m.all_finite()) {
        throw std::invalid_argument("softmax_rows: non-finite input");
    }
    Matrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        softmax_row(m.data() + i * m.cols(), out.data() + i * m.cols(), m.cols());
    }
    return out;
}

std::pair<Matrix, IndexMatrix> topk_rows(const Matrix& m, std::size_t k) {
    if (k > m.cols()) {
        throw std::invalid_argument("topk_rows: k > cols");
    }
    const std::size_t rows = m.rows(), cols = m.cols();
    Matrix values(rows, k);
    IndexMatrix indices(rows, k, cols);
    std::vector<std::uint32_t> idx(cols);
    for (std::size_t i = 0; i < rows; ++i) {
        std::iota(idx.begin(), idx.end(), 0u);
        std::sort(idx.begin(), idx.end(), TopkCmp{m.data() + i * cols});
        for (std::size_t j = 0; j < k; ++j) {
            indices(i, j) = idx[j];
            values(i, j) = m(i, idx[j]);
        }
    }
    return {std::move(values), std::move(indices)};
}

Matrix transpose(const Matrix& m) {
    Matrix out(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            out(j, i) = m(i, j);
        }
    }
    return out;
}

}  // namespace ref

void configure_threads_from_env() {
    const char* env = std::getenv("ECMOE_THREADS");
    if (env == nullptr) return;
    int n = std::atoi(env);
    if (n > 0) {
        omp_set_num_threads(n);
    }
}

}  // namespace ecmoe
