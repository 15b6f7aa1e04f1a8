#include "test_util.hpp"

#include <cmath>

using namespace s2s;
using test_util::expect_error;
using test_util::TempDir;

namespace {

Corpus tiny_corpus() {
    Corpus c;
    c.pairs = {{"who are you?", "i am your father!"},
               {"that's not funny", "i love annoying people"},
               {"do you love me?", "you're so emotional."},
               {"thanks", "no worries."},
               {"good answer", "winter is coming"},
               {"how rude!", "you're good!"},
               {"i know", "you have to think beyond the things you know"},
               {"i try", "no. try not. do or do not. there is no try."}};
    return c;
}

std::vector<double> flat(const Gradients& g) {
    std::vector<double> out;
    g.visit([&](std::string_view, const Mat& t) { out.insert(out.end(), t.values().begin(), t.values().end()); });
    return out;
}

Gradients random_grads(const ModelParams& m, std::mt19937_64& rng, double scale) {
    auto g = zeros_like(m);
    std::uniform_real_distribution<double> u(-scale, scale);
    g.visit([&](std::string_view, Mat& t) {
        for (auto& v : t.values()) v = u(rng);
    });
    return g;
}

} // namespace

TEST_CASE("make_batches pads and masks") {
    const std::vector<EncodedPair> one{{{4, special::eos}, {special::sos, 5, 6, special::eos}}};
    Rng rng(1);
    const auto b1 = make_batches(one, 4, rng);
    REQUIRE(b1.size() == 1);
    CHECK(b1[0].size == 1);
    CHECK(b1[0].target == one[0].target);
    CHECK(b1[0].source == one[0].source);

    // Answer lengths 2 and 4: targets SOS a b EOS and SOS a b c d EOS.
    const std::vector<EncodedPair> two{{{4, special::eos}, {special::sos, 5, 6, special::eos}},
                                       {{5, special::eos}, {special::sos, 5, 6, 7, 8, special::eos}}};
    const auto b2 = make_batches(two, 2, rng);
    REQUIRE(b2.size() == 1);
    const auto& b = b2[0];
    CHECK(b.target_len == 6);
    std::vector<std::size_t> mask_sums, pads;
    for (std::size_t r = 0; r < 2; ++r) {
        std::size_t ms = 0, pc = 0;
        for (std::size_t t = 0; t + 1 < b.target_len; ++t) ms += b.mask[r * (b.target_len - 1) + t];
        for (std::size_t t = 0; t < b.target_len; ++t) pc += b.target_at(r, t) == special::pad;
        mask_sums.push_back(ms);
        pads.push_back(pc);
    }
    std::sort(mask_sums.begin(), mask_sums.end());
    std::sort(pads.begin(), pads.end());
    CHECK(mask_sums == std::vector<std::size_t>{3, 5});
    CHECK(pads == std::vector<std::size_t>{0, 2});
}

TEST_CASE("make_batches is seeded and covers every pair once") {
    const auto corpus = generate_sarcasm_corpus(70, 3);
    const auto vocab = build_vocab(corpus);
    const auto a = make_batches(corpus, vocab, 32, 9), b = make_batches(corpus, vocab, 32, 9);
    REQUIRE(a.size() == 3);
    CHECK(a[0].size == 32);
    CHECK(a[2].size == 6);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].source == b[i].source);
    const auto c = make_batches(corpus, vocab, 32, 10);
    CHECK(a[0].source != c[0].source);
    std::size_t total = 0;
    for (const auto& batch : a) total += batch.size;
    CHECK(total == 70);
    expect_error(ErrorKind::argument, [&] { make_batches(Corpus{}, vocab, 4, 1); });
}

TEST_CASE("clip_gradients examples") {
    const auto m = init_model(test_util::synthetic_vocab(2), 2, 2, 1);
    auto g = zeros_like(m);
    g.b_out[0] = 6.0;
    g.E[0] = 8.0;
    CHECK(clip_gradients(g, 5.0) == doctest::Approx(10.0));
    CHECK(g.b_out[0] == doctest::Approx(3.0));
    CHECK(g.E[0] == doctest::Approx(4.0));

    auto small = zeros_like(m);
    small.W_out[1] = 3.0;
    CHECK(clip_gradients(small, 5.0) == doctest::Approx(3.0));
    CHECK(small.W_out[1] == 3.0);

    auto bad = zeros_like(m);
    bad.dec.U[0] = std::nan("");
    CHECK(expect_error(ErrorKind::numeric, [&] { clip_gradients(bad, 5.0); }).find("dec.U") != std::string::npos);
}

TEST_CASE("clipping caps the norm and keeps the direction") {
    std::mt19937_64 rng(12);
    const auto m = init_model(test_util::synthetic_vocab(5), 3, 4, 1);
    for (int trial = 0; trial < 50; ++trial) {
        auto g = random_grads(m, rng, 0.01 + static_cast<double>(rng() % 100) / 20.0);
        const auto before = flat(g);
        const double clip = 0.5 + static_cast<double>(rng() % 10);
        const double pre = clip_gradients(g, clip);
        const auto after = flat(g);
        CHECK(std::abs(global_norm(g) - std::min(pre, clip)) <= 1e-5);
        double dot = 0, na = 0, nb = 0;
        for (std::size_t i = 0; i < before.size(); ++i) {
            dot += before[i] * after[i];
            na += before[i] * before[i];
            nb += after[i] * after[i];
        }
        CHECK(std::abs(dot / std::sqrt(na * nb) - 1.0) <= 1e-6);
    }
}

TEST_CASE("adam_step examples") {
    auto m = ModelParams::zeros(Hyper{5, 1, 1, default_max_seq_len});
    TrainConfig cfg;
    cfg.lr = 0.1;

    auto zero_state = AdamState::for_model(m);
    const auto before = m;
    adam_step(m, zeros_like(m), zero_state, cfg);
    CHECK(m == before);

    auto state = AdamState::for_model(m);
    auto g = zeros_like(m);
    g.b_out[0] = 1.0;
    adam_step(m, g, state, cfg);
    CHECK(m.b_out[0] == doctest::Approx(-0.1).epsilon(1e-6));
    CHECK(m.b_out[1] == 0.0f);
    CHECK(state.t == 1);
}

TEST_CASE("adam_step follows the bias-corrected recurrence") {
    std::mt19937_64 rng(3);
    auto m = init_model(test_util::synthetic_vocab(3), 2, 3, 4);
    TrainConfig cfg;
    cfg.lr = 0.01;
    auto state = AdamState::for_model(m);
    // Track element 0 of W_out with a scalar reference.
    double p = m.W_out[0], mm = 0, vv = 0;
    for (int t = 1; t <= 6; ++t) {
        const auto g = random_grads(m, rng, 1.0);
        const double gi = g.W_out[0];
        mm = 0.9 * mm + 0.1 * gi;
        vv = 0.999 * vv + 0.001 * gi * gi;
        const double mh = mm / (1 - std::pow(0.9, t)), vh = vv / (1 - std::pow(0.999, t));
        p = static_cast<float>(p - 0.01 * mh / (std::sqrt(vh) + 1e-8));
        adam_step(m, g, state, cfg);
        CHECK(m.W_out[0] == doctest::Approx(p).epsilon(1e-6));
    }
}

TEST_CASE("adam with lr 0 leaves parameters fixed") {
    std::mt19937_64 rng(5);
    auto m = init_model(test_util::synthetic_vocab(4), 3, 3, 2);
    const auto before = m;
    TrainConfig cfg;
    cfg.lr = 0.0;
    auto state = AdamState::for_model(m);
    for (int i = 0; i < 5; ++i) adam_step(m, random_grads(m, rng, 10.0), state, cfg);
    CHECK(m == before);
}

TEST_CASE("train: epochs=0 returns the model unchanged with an empty report") {
    const auto corpus = tiny_corpus();
    const auto vocab = build_vocab(corpus);
    auto m = init_model(vocab, 8, 8, 1);
    const auto before = m;
    TrainConfig cfg;
    cfg.epochs = 0;
    const auto report = train(corpus, vocab, m, cfg);
    CHECK(m == before);
    CHECK(report.epoch_losses.empty());
    CHECK(report.checkpoints.empty());
}

TEST_CASE("train: first-epoch loss of a frozen fresh model is about ln V") {
    const auto corpus = generate_sarcasm_corpus(64, 2);
    const auto vocab = build_vocab(corpus);
    auto m = init_model(vocab, 16, 16, 3);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.lr = 0.0;
    const auto report = train(corpus, vocab, m, cfg);
    const double lnv = std::log(static_cast<double>(vocab.size()));
    REQUIRE(report.epoch_losses.size() == 1);
    CHECK(std::abs(report.epoch_losses[0] - lnv) <= 0.05 * lnv);
}

TEST_CASE("train: deterministic runs are bit-identical, checkpoints laid out") {
    const auto corpus = tiny_corpus();
    const auto vocab = build_vocab(corpus);
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.batch_size = 3;
    cfg.deterministic = true;
    cfg.checkpoint_every = 2;

    TempDir dir;
    auto a = init_model(vocab, 8, 8, 1), b = a;
    const auto ra = train(corpus, vocab, a, cfg, dir / "a");
    const auto rb = train(corpus, vocab, b, cfg, dir / "b");
    CHECK(a == b);
    CHECK(ra.epoch_losses == rb.epoch_losses);
    REQUIRE(ra.checkpoints.size() == 3);
    CHECK(ra.checkpoints[0].filename() == "epoch_2.bundle");
    CHECK(ra.checkpoints[1].filename() == "epoch_4.bundle");
    CHECK(ra.checkpoints[2].filename() == "epoch_5.bundle");
    for (const auto& p : ra.checkpoints) CHECK(std::filesystem::exists(p));
    CHECK(test_util::read_text(dir / "a" / "latest") == "epoch_5.bundle\n");
    CHECK(test_util::read_text(dir / "a" / "epoch_5.bundle") == test_util::read_text(dir / "b" / "epoch_5.bundle"));

    const auto loaded = import_model(dir / "a" / "epoch_5.bundle");
    CHECK(loaded.params == a);
    CHECK(loaded.vocab == vocab);
}

TEST_CASE("train: threaded gradients agree with the single-threaded path") {
    const auto corpus = generate_sarcasm_corpus(40, 8);
    const auto vocab = build_vocab(corpus);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 16;
    auto a = init_model(vocab, 8, 12, 1), b = a;
    cfg.deterministic = true;
    const auto ra = train(corpus, vocab, a, cfg);
    cfg.deterministic = false;
    const auto rb = train(corpus, vocab, b, cfg);
    for (std::size_t i = 0; i < ra.epoch_losses.size(); ++i)
        CHECK(ra.epoch_losses[i] == doctest::Approx(rb.epoch_losses[i]).epsilon(1e-6));
}

TEST_CASE("train rejects bad configuration and non-finite models") {
    const auto corpus = tiny_corpus();
    const auto vocab = build_vocab(corpus);
    auto m = init_model(vocab, 4, 4, 1);
    TrainConfig cfg;
    cfg.batch_size = 0;
    expect_error(ErrorKind::config, [&] { train(corpus, vocab, m, cfg); });
    cfg = {};
    cfg.clip_norm = 0.0;
    expect_error(ErrorKind::config, [&] { train(corpus, vocab, m, cfg); });
    cfg = {};
    cfg.lr = -1.0;
    expect_error(ErrorKind::config, [&] { train(corpus, vocab, m, cfg); });
    cfg = {};
    auto bad = m;
    bad.E[0] = std::numeric_limits<float>::infinity();
    expect_error(ErrorKind::numeric, [&] { train(corpus, vocab, bad, cfg); });
    expect_error(ErrorKind::config, [&] { train(corpus, Vocab(), m, cfg); });
}

TEST_CASE("memorization on a tiny corpus") {
    const auto corpus = tiny_corpus();
    const auto vocab = build_vocab(corpus);
    auto m = init_model(vocab, 16, 32, 4);
    CHECK(memorization_score(corpus, vocab, m) == 0.0);

    TrainConfig cfg;
    cfg.lr = 1e-2;
    cfg.epochs = 150;
    cfg.batch_size = 4;
    cfg.deterministic = true;
    const auto report = train(corpus, vocab, m, cfg);
    CHECK(report.memorization == 1.0);
    CHECK(report.epoch_losses.back() < report.epoch_losses.front());
    for (const auto& p : corpus.pairs) CHECK(greedy_decode(p.question, m, vocab) == p.answer);
    CHECK(perplexity(corpus, vocab, m) < 1.2);
}

TEST_CASE("untrained models memorize essentially nothing") {
    const auto corpus = generate_sarcasm_corpus(100, 6);
    const auto vocab = build_vocab(corpus);
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL})
        CHECK(memorization_score(corpus, vocab, init_model(vocab, 16, 16, seed)) <= 0.02);
}

TEST_CASE("conflicting duplicate questions cap the score below 1") {
    Corpus c;
    c.pairs = {{"are you a chatbot?", "i'm a chatbot, dude"}, {"are you a chatbot?", "what do you think?"}};
    const auto vocab = build_vocab(c);
    auto m = init_model(vocab, 8, 16, 2);
    TrainConfig cfg;
    cfg.lr = 1e-2;
    cfg.epochs = 60;
    cfg.deterministic = true;
    train(c, vocab, m, cfg);
    const double score = memorization_score(c, vocab, m);
    CHECK(score < 1.0);
    CHECK(score <= 0.5);
}

TEST_CASE("perplexity of a uniform model equals V") {
    const auto corpus = generate_sarcasm_corpus(50, 4);
    const auto vocab = build_vocab(corpus);
    auto m = init_model(vocab, 8, 8, 1);
    for (auto& w : m.W_out.values()) w = 0.0f;
    for (auto& w : m.b_out.values()) w = 0.25f;
    const double ppl = perplexity(corpus, vocab, m);
    const double v = static_cast<double>(vocab.size());
    CHECK(std::abs(ppl - v) / v <= 1e-4);
}

TEST_CASE("perplexity is exp of the masked cross entropy") {
    const auto corpus = tiny_corpus();
    const auto vocab = build_vocab(corpus);
    const auto m = init_model(vocab, 8, 8, 7);
    // Stack every teacher-forced logit row and score it with the tensor-level loss.
    std::size_t rows = 0;
    std::vector<Mat> per_pair;
    std::vector<TokenId> targets;
    for (const auto& p : corpus.pairs) {
        const auto e = encode_pair(p, vocab, default_max_seq_len);
        per_pair.push_back(decode_teacher_forced(e.target, encode_sequence(e.source, m), m));
        targets.insert(targets.end(), e.target.begin() + 1, e.target.end());
        rows += per_pair.back().rows();
    }
    Tensor2 logits(rows, vocab.size());
    std::size_t r = 0;
    for (const auto& mat : per_pair)
        for (std::size_t i = 0; i < mat.rows(); ++i, ++r)
            for (std::size_t j = 0; j < mat.cols(); ++j) logits(r, j) = static_cast<float>(mat(i, j));
    const std::vector<std::uint8_t> mask(rows, 1);
    const double ce = masked_cross_entropy(logits, targets, mask).loss;
    CHECK(perplexity(corpus, vocab, m) == doctest::Approx(std::exp(ce)).epsilon(1e-6));
}
