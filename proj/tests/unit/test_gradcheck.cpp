#include "test_util.hpp"

#include <cmath>

using namespace s2s;

namespace {

std::vector<EncodedPair> random_pairs(std::size_t n, std::size_t vocab_size, std::size_t max_len, std::mt19937_64& rng) {
    const auto word = [&] { return static_cast<TokenId>(special::count + rng() % (vocab_size - special::count)); };
    std::vector<EncodedPair> pairs;
    for (std::size_t i = 0; i < n; ++i) {
        EncodedPair p;
        for (std::size_t k = 0, len = 1 + rng() % (max_len - 1); k < len; ++k) p.source.push_back(word());
        p.source.push_back(special::eos);
        p.target.push_back(special::sos);
        for (std::size_t k = 0, len = 1 + rng() % (max_len - 2); k < len; ++k) p.target.push_back(word());
        p.target.push_back(special::eos);
        pairs.push_back(p);
    }
    return pairs;
}

} // namespace

TEST_CASE("gradient check on a tiny model, single pair") {
    std::mt19937_64 rng(101);
    const auto vocab = test_util::synthetic_vocab(8);
    REQUIRE(vocab.size() == 12);
    const auto m = init_model(vocab, 8, 10, 5);
    const auto pairs = random_pairs(1, 12, 5, rng);
    const auto report = finite_diff_grad_check(m, pairs, 1e-3f);
    CHECK(report.parameters_checked == m.parameter_count());
    REQUIRE(report.per_param_errs.size() == tensor_names.size());
    double max_seen = 0.0;
    for (const auto& [name, err] : report.per_param_errs) {
        CHECK_MESSAGE(err <= 1e-3, name << " rel err " << err);
        max_seen = std::max(max_seen, err);
    }
    CHECK(report.max_rel_err == max_seen);
    CHECK(report.max_rel_err >= 0.0);
}

TEST_CASE("gradient check with padding across a batch") {
    std::mt19937_64 rng(7);
    const auto vocab = test_util::synthetic_vocab(8);
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        const auto m = init_model(vocab, 8, 10, seed);
        const auto pairs = random_pairs(3, 12, 5, rng);
        const auto report = finite_diff_grad_check(m, pairs, 1e-3f);
        for (const auto& [name, err] : report.per_param_errs) CHECK_MESSAGE(err <= 1e-3, name << " rel err " << err);
    }
}

TEST_CASE("gradient check on an all-zero model") {
    const auto vocab = test_util::synthetic_vocab(4);
    const auto m = ModelParams::zeros(Hyper{vocab.size(), 3, 4, default_max_seq_len});
    const std::vector<EncodedPair> pairs{{{4, 5, special::eos}, {special::sos, 6, special::eos}}};
    const auto g = analytic_gradients(m, collate(pairs));
    // With zero embeddings and zero states, nothing reaches the weight matrices.
    for (const auto* t : {&g.enc.W, &g.enc.U, &g.dec.W, &g.dec.U, &g.W_out})
        for (double v : t->values()) CHECK(v == 0.0);
    const auto report = finite_diff_grad_check(m, pairs, 1e-3f);
    CHECK(std::isfinite(report.max_rel_err));
    for (const auto& [name, err] : report.per_param_errs) CHECK_MESSAGE(err <= 1e-3, name << " rel err " << err);
}

TEST_CASE("a corrupted analytic gradient is located") {
    std::mt19937_64 rng(55);
    const auto vocab = test_util::synthetic_vocab(8);
    const auto m = init_model(vocab, 8, 10, 9);
    const auto pairs = random_pairs(1, 12, 5, rng);

    const auto clean = analytic_gradients(m, collate(pairs));
    std::size_t target = 0;
    for (std::size_t i = 0; i < clean.dec.W.size(); ++i)
        if (std::abs(clean.dec.W[i]) > std::abs(clean.dec.W[target])) target = i;
    REQUIRE(std::abs(clean.dec.W[target]) > 1e-4);

    const GradientFn corrupted = [&](const ModelParams& p, const Batch& b) {
        auto g = analytic_gradients(p, b);
        g.dec.W[target] *= 1.1;
        return g;
    };
    const auto report = finite_diff_grad_check(m, pairs, 1e-3f, corrupted);
    CHECK(report.worst_param_index.name == "dec.W");
    CHECK(report.worst_param_index.index == target);
    CHECK(report.max_rel_err > 0.04);
    CHECK(report.per_param_errs.at("dec.W") == report.max_rel_err);
}

TEST_CASE("non-finite loss during perturbation is a numeric error") {
    const auto vocab = test_util::synthetic_vocab(4);
    auto m = init_model(vocab, 3, 4, 1);
    m.enc.U(0, 0) = std::numeric_limits<float>::quiet_NaN();
    const std::vector<EncodedPair> pairs{{{4, special::eos}, {special::sos, 6, special::eos}}};
    test_util::expect_error(ErrorKind::numeric, [&] { finite_diff_grad_check(m, pairs, 1e-3f); });
}
