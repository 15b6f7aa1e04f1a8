#include "s2s/tensor.hpp"

#include <algorithm>
#include <limits>

namespace s2s {
namespace {

void require_same_shape(const Tensor2& a, const Tensor2& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        fail(ErrorKind::shape, "operand shapes differ: " + a.shape() + " vs " + b.shape());
}

Tensor2 checked(Tensor2 t, const char* what) {
    if (!t.all_finite()) fail(ErrorKind::numeric, std::string(what) + " produced a non-finite value");
    return t;
}

template <typename T>
std::vector<T> softmax_impl(std::span<const T> logits) {
    if (logits.empty()) fail(ErrorKind::argument, "softmax of an empty vector");
    double mx = -std::numeric_limits<double>::infinity();
    for (T v : logits) {
        if (!std::isfinite(v)) fail(ErrorKind::argument, "softmax input is not finite");
        mx = std::max(mx, static_cast<double>(v));
    }
    std::vector<double> e(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        e[i] = std::exp(static_cast<double>(logits[i]) - mx);
        sum += e[i];
    }
    std::vector<T> out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = static_cast<T>(e[i] / sum);
    return out;
}

} // namespace

Tensor2 matmul(const Tensor2& a, const Tensor2& b) {
    if (a.cols() != b.rows())
        fail(ErrorKind::shape, "matmul shape mismatch: " + a.shape() + " x " + b.shape());
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor2 out(m, n);
    std::vector<double> acc(n);
    for (std::size_t i = 0; i < m; ++i) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a(i, p);
            const float* brow = b.row(p).data();
            for (std::size_t j = 0; j < n; ++j) acc[j] += av * static_cast<double>(brow[j]);
        }
        for (std::size_t j = 0; j < n; ++j) out(i, j) = static_cast<float>(acc[j]);
    }
    return checked(std::move(out), "matmul");
}

Tensor2 elementwise(Elementwise op, const Tensor2& a) {
    Tensor2 out(a.rows(), a.cols());
    switch (op) {
    case Elementwise::sigmoid:
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = static_cast<float>(sigmoid(a[i]));
        break;
    case Elementwise::tanh:
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = static_cast<float>(std::tanh(static_cast<double>(a[i])));
        break;
    case Elementwise::add:
    case Elementwise::mul:
        fail(ErrorKind::argument, "binary elementwise op needs two operands");
    }
    return checked(std::move(out), "elementwise");
}

Tensor2 elementwise(Elementwise op, const Tensor2& a, const Tensor2& b) {
    if (op == Elementwise::sigmoid || op == Elementwise::tanh)
        fail(ErrorKind::argument, "unary elementwise op takes one operand");
    require_same_shape(a, b);
    Tensor2 out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double x = a[i], y = b[i];
        out[i] = static_cast<float>(op == Elementwise::add ? x + y : x * y);
    }
    return checked(std::move(out), "elementwise");
}

std::vector<double> softmax(std::span<const double> logits) { return softmax_impl(logits); }
std::vector<float> softmax(std::span<const float> logits) { return softmax_impl(logits); }

CrossEntropy masked_cross_entropy(const Tensor2& logits, std::span<const TokenId> targets,
                                  std::span<const std::uint8_t> mask) {
    const Mat wide = logits.cast<double>();
    Mat grad(logits.rows(), logits.cols());
    // Count first so the gradient scale is known up front.
    std::size_t m = 0;
    for (auto bit : mask) m += bit ? 1 : 0;
    if (m == 0) fail(ErrorKind::degenerate_batch, "cross entropy over zero unmasked positions");
    const auto sums = kernels::cross_entropy_rows(wide, targets, mask, &grad, 1.0 / static_cast<double>(m));
    CrossEntropy out;
    out.loss = static_cast<float>(sums.nll_sum / static_cast<double>(sums.count));
    out.dlogits = grad.cast<float>();
    return out;
}

namespace kernels {

void gemm_acc_raw(const double* a, std::size_t m, std::size_t k, const double* b, std::size_t n, double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        double* __restrict crow = c + i * n;
        const double* arow = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* __restrict brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void gemm_acc(const Mat& a, const Mat& b, Mat& c) {
    if (a.cols() != b.rows() || c.rows() != a.rows() || c.cols() != b.cols())
        fail(ErrorKind::shape, "gemm shape mismatch: " + a.shape() + " x " + b.shape() + " -> " + c.shape());
    gemm_acc_raw(a.data(), a.rows(), a.cols(), b.data(), b.cols(), c.data());
}

void gemm_tn_acc(const Mat& a, const Mat& b, Mat& c) {
    if (a.rows() != b.rows() || c.rows() != a.cols() || c.cols() != b.cols())
        fail(ErrorKind::shape, "gemm_tn shape mismatch: " + a.shape() + "^T x " + b.shape() + " -> " + c.shape());
    const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
    for (std::size_t p = 0; p < k; ++p) {
        const double* arow = a.data() + p * m;
        const double* __restrict brow = b.data() + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double av = arow[i];
            if (av == 0.0) continue;
            double* __restrict crow = c.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

Mat transpose(const Mat& a) {
    Mat t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

CrossEntropySums cross_entropy_rows(const Mat& logits, std::span<const TokenId> targets,
                                    std::span<const std::uint8_t> mask, Mat* dlogits, double scale) {
    const std::size_t rows = logits.rows(), vocab = logits.cols();
    if (targets.size() != rows || mask.size() != rows)
        fail(ErrorKind::shape, "cross entropy expects " + std::to_string(rows) + " targets and mask entries, got " +
                                   std::to_string(targets.size()) + " and " + std::to_string(mask.size()));
    if (dlogits && (dlogits->rows() != rows || dlogits->cols() != vocab))
        fail(ErrorKind::shape, "gradient buffer shape " + dlogits->shape() + " != " + logits.shape());

    CrossEntropySums sums;
    for (std::size_t r = 0; r < rows; ++r) {
        const TokenId target = targets[r];
        if (target < 0 || static_cast<std::size_t>(target) >= vocab)
            fail(ErrorKind::argument, "target id " + std::to_string(target) + " out of range [0," +
                                          std::to_string(vocab) + ")");
        if (!mask[r]) {
            if (dlogits) std::fill(dlogits->row(r).begin(), dlogits->row(r).end(), 0.0);
            continue;
        }
        const auto row = logits.row(r);
        const double mx = *std::max_element(row.begin(), row.end());
        double sum = 0.0;
        for (double v : row) sum += std::exp(v - mx);
        const double lse = mx + std::log(sum);
        sums.nll_sum += lse - row[static_cast<std::size_t>(target)];
        ++sums.count;
        if (dlogits) {
            auto g = dlogits->row(r);
            for (std::size_t j = 0; j < vocab; ++j) g[j] = std::exp(row[j] - lse) * scale;
            g[static_cast<std::size_t>(target)] -= scale;
        }
    }
    return sums;
}

} // namespace kernels
} // namespace s2s
