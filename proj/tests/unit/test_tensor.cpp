#include "test_util.hpp"

#include <cmath>
#include <numeric>

using namespace s2s;
using test_util::expect_error;

TEST_CASE("matmul: identity, hand-computed product, shape error") {
    const Tensor2 eye{{1, 0}, {0, 1}};
    const Tensor2 m{{1, 2}, {3, 4}};
    CHECK(matmul(eye, m) == m);

    const Tensor2 row{{1, 2}};
    const Tensor2 col{{3}, {4}};
    const Tensor2 p = matmul(row, col);
    REQUIRE(p.rows() == 1);
    REQUIRE(p.cols() == 1);
    CHECK(p(0, 0) == 11.0f);

    const auto msg = expect_error(ErrorKind::shape, [] { matmul(Tensor2(2, 3), Tensor2(4, 2)); });
    CHECK(msg.find("(2x3)") != std::string::npos);
    CHECK(msg.find("(4x2)") != std::string::npos);
}

TEST_CASE("matmul is associative on random small matrices") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    auto random = [&](std::size_t r, std::size_t c) {
        Tensor2 t(r, c);
        for (auto& v : t.values()) v = u(rng);
        return t;
    };
    for (int trial = 0; trial < 50; ++trial) {
        const auto a = random(3, 4), b = random(4, 5), c = random(5, 2);
        const auto left = matmul(matmul(a, b), c);
        const auto right = matmul(a, matmul(b, c));
        for (std::size_t i = 0; i < left.size(); ++i) CHECK(std::abs(left[i] - right[i]) <= 1e-5f);
    }
}

TEST_CASE("Tensor2 rejects a data length that disagrees with its shape") {
    expect_error(ErrorKind::shape, [] { Tensor2(2, 2, std::vector<float>(3)); });
}

TEST_CASE("softmax examples") {
    const std::vector<double> zeros{0, 0, 0};
    for (double p : softmax(zeros)) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    const std::vector<double> two{0.0, std::log(2.0)};
    const auto q = softmax(two);
    CHECK(q[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(q[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

    const std::vector<float> big{1000.0f, 1000.0f};
    const auto r = softmax(big);
    CHECK(r[0] == 0.5f);
    CHECK(r[1] == 0.5f);

    expect_error(ErrorKind::argument, [] { softmax(std::vector<double>{}); });
}

TEST_CASE("softmax sums to one and ignores a constant shift") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-30.0, 30.0);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> x(1 + rng() % 20);
        for (auto& v : x) v = u(rng);
        const double c = u(rng);
        std::vector<double> shifted = x;
        for (auto& v : shifted) v += c;
        const auto p = softmax(x), q = softmax(shifted);
        CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-6));
        for (std::size_t i = 0; i < p.size(); ++i) CHECK(std::abs(p[i] - q[i]) <= 1e-6);
    }
}

TEST_CASE("elementwise ops") {
    const Tensor2 zero(1, 1);
    CHECK(elementwise(Elementwise::sigmoid, zero)(0, 0) == 0.5f);
    CHECK(elementwise(Elementwise::tanh, zero)(0, 0) == 0.0f);

    CHECK(std::abs(sigmoid(40.0) - 1.0) <= 1e-12);
    CHECK(std::abs(sigmoid(-40.0)) <= 1e-12);
    CHECK(std::isfinite(sigmoid(-1000.0)));
    CHECK(std::isfinite(sigmoid(1000.0)));
    const Tensor2 sat{{40.0f, -40.0f, 1e30f, -1e30f}};
    const auto s = elementwise(Elementwise::sigmoid, sat);
    CHECK(s.all_finite());
    CHECK(s(0, 2) == 1.0f);
    CHECK(s(0, 3) == 0.0f);

    const Tensor2 a{{1, 2}}, b{{3, 4}};
    CHECK(elementwise(Elementwise::add, a, b) == Tensor2{{4, 6}});
    CHECK(elementwise(Elementwise::mul, a, b) == Tensor2{{3, 8}});
    expect_error(ErrorKind::shape, [&] { elementwise(Elementwise::add, a, Tensor2(2, 1)); });
    expect_error(ErrorKind::argument, [&] { elementwise(Elementwise::add, a); });
}

TEST_CASE("masked cross entropy: uniform and near-perfect logits") {
    const Tensor2 uniform(3, 4);
    const std::vector<TokenId> targets{0, 3, 1};
    const std::vector<std::uint8_t> all{1, 1, 1};
    CHECK(masked_cross_entropy(uniform, targets, all).loss == doctest::Approx(std::log(4.0)).epsilon(1e-6));

    Tensor2 sharp(1, 4);
    sharp(0, 2) = 60.0f;
    const std::vector<TokenId> t2{2};
    const std::vector<std::uint8_t> m1{1};
    CHECK(masked_cross_entropy(sharp, t2, m1).loss < 1e-12);
}

TEST_CASE("masked cross entropy gradient matches central differences") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<float> u(-2.0f, 2.0f);
    Tensor2 logits(3, 5);
    for (auto& v : logits.values()) v = u(rng);
    const std::vector<TokenId> targets{4, 0, 2};
    const std::vector<std::uint8_t> mask{1, 0, 1};

    // Independent loss: direct log-sum-exp in long double over the masked rows.
    auto oracle_loss = [&](const Tensor2& l) {
        long double total = 0;
        int m = 0;
        for (std::size_t r = 0; r < l.rows(); ++r) {
            if (!mask[r]) continue;
            long double s = 0;
            for (std::size_t j = 0; j < l.cols(); ++j) s += std::exp(static_cast<long double>(l(r, j)));
            total += std::log(s) - l(r, static_cast<std::size_t>(targets[r]));
            ++m;
        }
        return static_cast<double>(total / m);
    };

    const auto ce = masked_cross_entropy(logits, targets, mask);
    CHECK(ce.loss == doctest::Approx(oracle_loss(logits)).epsilon(1e-6));
    const float eps = 1e-3f;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        Tensor2 up = logits, down = logits;
        up[i] += eps;
        down[i] -= eps;
        const double fd = (oracle_loss(up) - oracle_loss(down)) / (static_cast<double>(up[i]) - down[i]);
        const double an = ce.dlogits[i];
        const double rel = std::abs(an - fd) / std::max(1e-8, std::abs(an) + std::abs(fd));
        CHECK(rel <= 1e-3);
    }
    for (std::size_t j = 0; j < 5; ++j) CHECK(ce.dlogits(1, j) == 0.0f);
}

TEST_CASE("masked cross entropy ignores logits at masked-out rows") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<float> u(-5.0f, 5.0f);
    Tensor2 a(4, 6);
    for (auto& v : a.values()) v = u(rng);
    Tensor2 b = a;
    for (std::size_t j = 0; j < 6; ++j) b(2, j) = u(rng) * 10.0f;
    const std::vector<TokenId> targets{1, 2, 3, 4};
    const std::vector<std::uint8_t> mask{1, 1, 0, 1};
    const auto ca = masked_cross_entropy(a, targets, mask), cb = masked_cross_entropy(b, targets, mask);
    CHECK(ca.loss == cb.loss);
    CHECK(ca.dlogits == cb.dlogits);
}

TEST_CASE("masked cross entropy errors") {
    const Tensor2 logits(2, 3);
    const std::vector<TokenId> targets{0, 1};
    expect_error(ErrorKind::degenerate_batch,
                 [&] { masked_cross_entropy(logits, targets, std::vector<std::uint8_t>{0, 0}); });
    expect_error(ErrorKind::argument, [&] {
        masked_cross_entropy(logits, std::vector<TokenId>{0, 3}, std::vector<std::uint8_t>{1, 1});
    });
}

TEST_CASE("gemm kernels agree with naive products") {
    std::mt19937_64 rng(9);
    const auto a = test_util::random_mat(4, 3, rng), b = test_util::random_mat(3, 5, rng);
    Mat c(4, 5);
    kernels::gemm_acc(a, b, c);
    Mat ct(3, 5);
    const auto a2 = test_util::random_mat(4, 3, rng), b2 = test_util::random_mat(4, 5, rng);
    kernels::gemm_tn_acc(a2, b2, ct);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 5; ++j) {
            double s = 0;
            for (std::size_t k = 0; k < 3; ++k) s += a(i, k) * b(k, j);
            CHECK(c(i, j) == doctest::Approx(s).epsilon(1e-12));
        }
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 5; ++j) {
            double s = 0;
            for (std::size_t k = 0; k < 4; ++k) s += a2(k, i) * b2(k, j);
            CHECK(ct(i, j) == doctest::Approx(s).epsilon(1e-12));
        }
}
