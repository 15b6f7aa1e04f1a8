#include "s2s/trainer.hpp"

#include "s2s/bundle.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <thread>

namespace s2s {
namespace {

Batch slice_rows(const Batch& batch, std::size_t begin, std::size_t end) {
    Batch out;
    out.size = end - begin;
    out.source_len = batch.source_len;
    out.target_len = batch.target_len;
    const std::size_t steps = batch.target_len - 1;
    out.source.assign(batch.source.begin() + static_cast<std::ptrdiff_t>(begin * batch.source_len),
                      batch.source.begin() + static_cast<std::ptrdiff_t>(end * batch.source_len));
    out.target.assign(batch.target.begin() + static_cast<std::ptrdiff_t>(begin * batch.target_len),
                      batch.target.begin() + static_cast<std::ptrdiff_t>(end * batch.target_len));
    out.mask.assign(batch.mask.begin() + static_cast<std::ptrdiff_t>(begin * steps),
                    batch.mask.begin() + static_cast<std::ptrdiff_t>(end * steps));
    return out;
}

void add_into(Gradients& dst, const Gradients& src) {
    std::vector<Mat*> d;
    dst.visit([&](std::string_view, Mat& t) { d.push_back(&t); });
    std::size_t k = 0;
    src.visit([&](std::string_view, const Mat& t) {
        for (std::size_t i = 0; i < t.size(); ++i) (*d[k])[i] += t[i];
        ++k;
    });
}

// Gradient of the batch mean loss. Shards are reduced in index order.
LossSums batch_gradients(const ModelParams& m, const Batch& batch, Gradients& grads, std::size_t shards) {
    const std::size_t count = batch.mask_count();
    const double scale = 1.0 / static_cast<double>(count);
    shards = std::clamp<std::size_t>(shards, 1, batch.size);
    if (shards == 1) return forward_backward(m, batch, &grads, scale);

    std::vector<Gradients> partial(shards, zeros_like(m));
    std::vector<LossSums> sums(shards);
    std::vector<std::thread> workers;
    for (std::size_t s = 0; s < shards; ++s) {
        const std::size_t begin = batch.size * s / shards, end = batch.size * (s + 1) / shards;
        workers.emplace_back([&, s, begin, end] {
            sums[s] = forward_backward(m, slice_rows(batch, begin, end), &partial[s], scale);
        });
    }
    for (auto& w : workers) w.join();
    LossSums total;
    for (std::size_t s = 0; s < shards; ++s) {
        add_into(grads, partial[s]);
        total.nll_sum += sums[s].nll_sum;
        total.count += sums[s].count;
    }
    return total;
}

std::vector<EncodedPair> encode_corpus(const Corpus& corpus, const Vocab& vocab, std::size_t max_seq_len) {
    std::vector<EncodedPair> out;
    out.reserve(corpus.pairs.size());
    for (const auto& p : corpus.pairs) out.push_back(encode_pair(p, vocab, max_seq_len));
    return out;
}

std::filesystem::path write_checkpoint(const std::filesystem::path& dir, std::size_t epoch, const ModelParams& m,
                                       const Vocab& vocab) {
    const auto name = "epoch_" + std::to_string(epoch) + ".bundle";
    const auto path = dir / name;
    export_model(m, vocab, path);
    const std::string marker = name + "\n";
    write_file_atomic(dir / "latest", std::span(reinterpret_cast<const std::uint8_t*>(marker.data()), marker.size()));
    return path;
}

} // namespace

void TrainConfig::validate() const {
    if (!(lr >= 0.0)) fail(ErrorKind::config, "lr must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
        fail(ErrorKind::config, "beta1 and beta2 must lie in [0, 1)");
    if (!(eps > 0.0)) fail(ErrorKind::config, "eps must be > 0");
    if (!(clip_norm > 0.0)) fail(ErrorKind::config, "clip_norm must be > 0");
    if (batch_size < 1) fail(ErrorKind::config, "batch_size must be >= 1");
    if (checkpoint_every < 1) fail(ErrorKind::config, "checkpoint_every must be >= 1");
}

AdamState AdamState::for_model(const ModelParams& params) { return {zeros_like(params), zeros_like(params), 0}; }

std::vector<Batch> make_batches(std::span<const EncodedPair> pairs, std::size_t batch_size, Rng& rng) {
    if (pairs.empty()) fail(ErrorKind::argument, "cannot batch an empty corpus");
    if (batch_size < 1) fail(ErrorKind::argument, "batch_size must be >= 1");
    std::vector<std::size_t> order(pairs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);

    std::vector<Batch> batches;
    std::vector<EncodedPair> chunk;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        chunk.clear();
        for (std::size_t i = start; i < std::min(order.size(), start + batch_size); ++i) chunk.push_back(pairs[order[i]]);
        batches.push_back(collate(chunk));
    }
    return batches;
}

std::vector<Batch> make_batches(const Corpus& corpus, const Vocab& vocab, std::size_t batch_size, std::uint64_t seed,
                                std::size_t max_seq_len) {
    const auto encoded = encode_corpus(corpus, vocab, max_seq_len);
    Rng rng(seed);
    return make_batches(encoded, batch_size, rng);
}

double global_norm(const Gradients& grads) {
    double sq = 0.0;
    grads.visit([&](std::string_view, const Mat& t) {
        for (double v : t.values()) sq += v * v;
    });
    return std::sqrt(sq);
}

double clip_gradients(Gradients& grads, double clip_norm) {
    if (!(clip_norm > 0.0)) fail(ErrorKind::config, "clip_norm must be > 0");
    grads.visit([&](std::string_view name, const Mat& t) {
        if (!t.all_finite()) fail(ErrorKind::numeric, "non-finite gradient in " + std::string(name));
    });
    const double norm = global_norm(grads);
    if (norm > clip_norm) {
        const double scale = clip_norm / norm;
        grads.visit([&](std::string_view, Mat& t) {
            for (auto& v : t.values()) v *= scale;
        });
    }
    return norm;
}

void adam_step(ModelParams& params, const Gradients& grads, AdamState& state, const TrainConfig& cfg) {
    if (grads.hyper != params.hyper || state.m.hyper != params.hyper || state.v.hyper != params.hyper)
        fail(ErrorKind::shape, "optimizer state does not match the model");
    ++state.t;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));

    std::vector<Tensor2*> p;
    params.visit([&](std::string_view, Tensor2& t) { p.push_back(&t); });
    std::vector<Mat*> m, v;
    state.m.visit([&](std::string_view, Mat& t) { m.push_back(&t); });
    state.v.visit([&](std::string_view, Mat& t) { v.push_back(&t); });
    std::size_t k = 0;
    grads.visit([&](std::string_view name, const Mat& g) {
        Tensor2& pt = *p[k];
        Mat& mt = *m[k];
        Mat& vt = *v[k];
        for (std::size_t i = 0; i < g.size(); ++i) {
            mt[i] = cfg.beta1 * mt[i] + (1.0 - cfg.beta1) * g[i];
            vt[i] = cfg.beta2 * vt[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double m_hat = mt[i] / bc1;
            const double v_hat = vt[i] / bc2;
            const double updated = static_cast<double>(pt[i]) - cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
            if (!std::isfinite(updated))
                fail(ErrorKind::numeric, "non-finite Adam update in " + std::string(name) + "[" + std::to_string(i) + "]");
            pt[i] = static_cast<float>(updated);
        }
        ++k;
    });
}

TrainReport train(const Corpus& corpus, const Vocab& vocab, ModelParams& model, const TrainConfig& cfg,
                  const std::optional<std::filesystem::path>& checkpoint_dir, const EpochCallback& on_epoch) {
    cfg.validate();
    validate(model);
    if (vocab.size() != model.hyper.vocab_size) fail(ErrorKind::config, "vocabulary does not match the model");
    if (corpus.pairs.empty()) fail(ErrorKind::argument, "cannot train on an empty corpus");
    if (checkpoint_dir) std::filesystem::create_directories(*checkpoint_dir);

    const auto start = std::chrono::steady_clock::now();
    TrainReport report;
    if (cfg.epochs == 0) return report;

    const auto encoded = encode_corpus(corpus, vocab, model.hyper.max_seq_len);
    const std::size_t shards = cfg.deterministic ? 1 : std::max(1u, std::thread::hardware_concurrency());
    AdamState adam = AdamState::for_model(model);
    Rng rng(cfg.seed);
    Gradients grads = zeros_like(model);

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        LossSums epoch_sums;
        for (const auto& batch : make_batches(encoded, cfg.batch_size, rng)) {
            grads.visit([](std::string_view, Mat& t) { t.fill(0.0); });
            const auto sums = batch_gradients(model, batch, grads, shards);
            if (!std::isfinite(sums.nll_sum)) {
                std::string msg = "loss became non-finite in epoch " + std::to_string(epoch);
                if (!report.checkpoints.empty()) msg += "; last good checkpoint " + report.checkpoints.back().string();
                fail(ErrorKind::numeric, msg);
            }
            clip_gradients(grads, cfg.clip_norm);
            adam_step(model, grads, adam, cfg);
            epoch_sums.nll_sum += sums.nll_sum;
            epoch_sums.count += sums.count;
        }
        const double loss = epoch_sums.mean();
        report.epoch_losses.push_back(loss);
        if (checkpoint_dir && (epoch % cfg.checkpoint_every == 0 || epoch == cfg.epochs))
            report.checkpoints.push_back(write_checkpoint(*checkpoint_dir, epoch, model, vocab));
        if (on_epoch) on_epoch(epoch, loss, model);
    }

    constexpr std::size_t window = 20;
    for (std::size_t i = 0; i + window < report.epoch_losses.size(); ++i)
        if (report.epoch_losses[i + window] > report.epoch_losses[i]) report.windows_non_increasing = false;
    report.memorization = memorization_score(corpus, vocab, model);
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

double memorization_score(const Corpus& corpus, const Vocab& vocab, const ModelParams& model) {
    if (corpus.pairs.empty()) return 0.0;
    DecodeConfig cfg;
    cfg.max_len = model.hyper.max_seq_len + 1;
    Rng unused(0);
    std::size_t hits = 0;
    for (const auto& pair : corpus.pairs) {
        const auto src = encode(normalize_tokenize(pair.question), vocab, SequenceRole::source, model.hyper.max_seq_len);
        const auto result = decode_ids(src, model, vocab, cfg, unused);
        auto expected = normalize_tokenize(pair.answer);
        if (expected.size() > model.hyper.max_seq_len) expected.resize(model.hyper.max_seq_len);
        std::vector<std::string> produced;
        for (TokenId id : result.ids) produced.push_back(vocab.token(id));
        hits += produced == expected ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(corpus.pairs.size());
}

double perplexity(const Corpus& corpus, const Vocab& vocab, const ModelParams& model) {
    if (corpus.pairs.empty()) fail(ErrorKind::argument, "perplexity of an empty corpus");
    const auto encoded = encode_corpus(corpus, vocab, model.hyper.max_seq_len);
    constexpr std::size_t chunk = 64;
    LossSums total;
    for (std::size_t start = 0; start < encoded.size(); start += chunk) {
        const auto end = std::min(encoded.size(), start + chunk);
        const auto sums = forward_backward(model, collate(std::span(encoded).subspan(start, end - start)));
        total.nll_sum += sums.nll_sum;
        total.count += sums.count;
    }
    return std::exp(total.mean());
}

} // namespace s2s
