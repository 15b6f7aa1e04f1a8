#pragma once

#include "s2s/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace s2s {

using TokenId = std::int32_t;

/// Dense row-major matrix. `Tensor2` (float) holds every stored weight;
/// `Mat` (double) is the working precision for activations and gradients.
template <typename T>
class Matrix {
public:
    Matrix() = default;

    Matrix(std::size_t rows, std::size_t cols, T fill = T{})
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    Matrix(std::size_t rows, std::size_t cols, std::vector<T> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            fail(ErrorKind::shape, "data length " + std::to_string(data_.size()) +
                                       " does not match shape " + shape_string(rows_, cols_));
        }
    }

    Matrix(std::initializer_list<std::initializer_list<T>> rows) {
        rows_ = rows.size();
        cols_ = rows_ == 0 ? 0 : rows.begin()->size();
        data_.reserve(rows_ * cols_);
        for (const auto& r : rows) {
            if (r.size() != cols_) fail(ErrorKind::shape, "ragged initializer");
            data_.insert(data_.end(), r.begin(), r.end());
        }
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }
    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const T> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }
    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    template <typename U>
    Matrix<U> cast() const {
        std::vector<U> out(data_.begin(), data_.end());
        return Matrix<U>(rows_, cols_, std::move(out));
    }

    bool all_finite() const noexcept {
        for (T v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape() const { return shape_string(rows_, cols_); }

    friend bool operator==(const Matrix&, const Matrix&) = default;

    static std::string shape_string(std::size_t r, std::size_t c) {
        return "(" + std::to_string(r) + "x" + std::to_string(c) + ")";
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

using Tensor2 = Matrix<float>;
using Mat = Matrix<double>;

inline double sigmoid(double x) noexcept {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

enum class Elementwise { sigmoid, tanh, add, mul };

/// Matrix product with 64-bit accumulation. Throws shape error on a.cols != b.rows.
Tensor2 matmul(const Tensor2& a, const Tensor2& b);

/// Unary ops (sigmoid, tanh) take one operand; add/mul take two of equal shape.
Tensor2 elementwise(Elementwise op, const Tensor2& a);
Tensor2 elementwise(Elementwise op, const Tensor2& a, const Tensor2& b);

/// Numerically stable softmax (max-subtracted). Empty input is an argument error.
std::vector<double> softmax(std::span<const double> logits);
std::vector<float> softmax(std::span<const float> logits);

struct CrossEntropy {
    float loss = 0.0f;
    Tensor2 dlogits;
};

/// Mean negative log-likelihood over positions whose mask is set, plus its
/// exact gradient with respect to the logits. Unmasked rows get zero gradient.
CrossEntropy masked_cross_entropy(const Tensor2& logits, std::span<const TokenId> targets,
                                  std::span<const std::uint8_t> mask);

namespace kernels {

/// c (m x n) += a (m x k) * b (k x n), all row-major and contiguous.
void gemm_acc_raw(const double* a, std::size_t m, std::size_t k, const double* b, std::size_t n, double* c);

/// c += a * b
void gemm_acc(const Mat& a, const Mat& b, Mat& c);
/// c += transpose(a) * b
void gemm_tn_acc(const Mat& a, const Mat& b, Mat& c);
Mat transpose(const Mat& a);

struct CrossEntropySums {
    double nll_sum = 0.0;
    std::size_t count = 0;
};

/// Row-wise softmax cross entropy over `logits` (rows x V). When `dlogits` is
/// non-null it receives (softmax - onehot) * scale for masked rows, zero elsewhere.
CrossEntropySums cross_entropy_rows(const Mat& logits, std::span<const TokenId> targets,
                                    std::span<const std::uint8_t> mask, Mat* dlogits, double scale);

} // namespace kernels

} // namespace s2s
