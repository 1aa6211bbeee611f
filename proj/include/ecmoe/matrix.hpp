#ifndef ECMOE_MATRIX_HPP
#define ECMOE_MATRIX_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ecmoe {

// Dense row-major f64 matrix. Entries must be finite; constructors that take
// data enforce this, and kernels that can overflow re-check their output.
class Matrix {
public:
    Matrix() = default;

    Matrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw std::invalid_argument("Matrix: data length " + std::to_string(data_.size()) +
                                        " != rows*cols " + std::to_string(rows_ * cols_));
        }
        for (double v : data_) {
            if (!std::isfinite(v)) {
                throw std::invalid_argument("Matrix: non-finite entry on construction");
            }
        }
    }

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
        std::size_t r = rows.size();
        std::size_t c = r == 0 ? 0 : rows.begin()->size();
        std::vector<double> data;
        data.reserve(r * c);
        for (const auto& row : rows) {
            if (row.size() != c) {
                throw std::invalid_argument("Matrix::from_rows: ragged rows");
            }
            data.insert(data.end(), row.begin(), row.end());
        }
        return Matrix(r, c, std::move(data));
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    bool all_finite() const {
        for (double v : data_) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    friend bool operator==(const Matrix& a, const Matrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Row-major matrix of indices into a fixed domain [0, domain).
class IndexMatrix {
public:
    IndexMatrix() = default;

    IndexMatrix(std::size_t rows, std::size_t cols, std::size_t domain)
        : rows_(rows), cols_(cols), domain_(domain), data_(rows * cols, 0) {}

    IndexMatrix(std::size_t rows, std::size_t cols, std::size_t domain,
                std::vector<std::uint32_t> data)
        : rows_(rows), cols_(cols), domain_(domain), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw std::invalid_argument("IndexMatrix: data length != rows*cols");
        }
        for (std::uint32_t v : data_) {
            if (v >= domain_) {
                throw std::invalid_argument("IndexMatrix: index " + std::to_string(v) +
                                            " outside domain " + std::to_string(domain_));
            }
        }
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t domain() const { return domain_; }

    std::uint32_t& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    std::uint32_t operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<const std::uint32_t> row(std::size_t r) const {
        return {data_.data() + r * cols_, cols_};
    }

    friend bool operator==(const IndexMatrix& a, const IndexMatrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::size_t domain_ = 0;
    std::vector<std::uint32_t> data_;
};

// Input tokens: X in R^{n x d} plus optional integer token ids.
struct TokenBatch {
    Matrix x;
    std::vector<std::uint32_t> ids;  // empty when absent

    std::size_t tokens() const { return x.rows(); }
    std::size_t dim() const { return x.cols(); }
    bool has_ids() const { return !ids.empty(); }
};

}  // namespace ecmoe

#endif
