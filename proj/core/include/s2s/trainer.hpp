#pragma once

#include "s2s/corpus.hpp"
#include "s2s/model.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace s2s {

struct TrainConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_norm = 5.0;
    std::size_t epochs = 300;
    std::size_t batch_size = 32;
    std::uint64_t seed = 42;
    /// Single-threaded, fixed-order gradient reduction. When false the batch is
    /// split across hardware threads and results depend on the thread count.
    bool deterministic = false;
    std::size_t checkpoint_every = 50;

    void validate() const;
};

struct AdamState {
    Gradients m;
    Gradients v;
    std::uint64_t t = 0;

    static AdamState for_model(const ModelParams& params);
};

struct TrainReport {
    std::vector<double> epoch_losses;
    double wall_seconds = 0.0;
    double memorization = 0.0;
    std::vector<std::filesystem::path> checkpoints;
    /// Soft check: every 20-epoch window ends no higher than it started.
    bool windows_non_increasing = true;
};

/// One epoch of shuffled, right-padded batches.
std::vector<Batch> make_batches(std::span<const EncodedPair> pairs, std::size_t batch_size, Rng& rng);
std::vector<Batch> make_batches(const Corpus& corpus, const Vocab& vocab, std::size_t batch_size, std::uint64_t seed,
                                std::size_t max_seq_len = default_max_seq_len);

double global_norm(const Gradients& grads);

/// Rescales so the global L2 norm is at most `clip_norm`; returns the norm
/// measured before clipping. Non-finite gradients raise a numeric error.
double clip_gradients(Gradients& grads, double clip_norm);

/// Bias-corrected Adam update.
void adam_step(ModelParams& params, const Gradients& grads, AdamState& state, const TrainConfig& cfg);

/// Called after every epoch with (epoch, mean loss, current model).
using EpochCallback = std::function<void(std::size_t, double, const ModelParams&)>;

/// Teacher-forced training. Checkpoints go to `{dir}/epoch_{N}.bundle` every
/// cfg.checkpoint_every epochs and after the last one, with `{dir}/latest`
/// naming the newest. A non-finite loss aborts with a numeric error and the
/// checkpoints already written are left in place.
TrainReport train(const Corpus& corpus, const Vocab& vocab, ModelParams& model, const TrainConfig& cfg,
                  const std::optional<std::filesystem::path>& checkpoint_dir = std::nullopt,
                  const EpochCallback& on_epoch = {});

/// Fraction of pairs whose greedy reply reproduces the normalized answer tokens.
double memorization_score(const Corpus& corpus, const Vocab& vocab, const ModelParams& model);

/// exp(mean per-token NLL of the answers under teacher forcing).
double perplexity(const Corpus& corpus, const Vocab& vocab, const ModelParams& model);

} // namespace s2s
