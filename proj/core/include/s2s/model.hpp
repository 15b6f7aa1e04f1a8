#pragma once

#include "s2s/corpus.hpp"
#include "s2s/tensor.hpp"
#include "s2s/vocab.hpp"

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace s2s {

using Rng = std::mt19937_64;

/// Gate row blocks are ordered [input, forget, cell, output].
template <typename T>
struct BasicLstm {
    Matrix<T> W;  ///< 4h x d
    Matrix<T> U;  ///< 4h x h
    Matrix<T> b;  ///< 4h x 1

    friend bool operator==(const BasicLstm&, const BasicLstm&) = default;

    std::size_t input_dim() const noexcept { return W.cols(); }
    std::size_t hidden_dim() const noexcept { return U.cols(); }
};

struct Hyper {
    std::size_t vocab_size = 0;
    std::size_t embed_dim = 0;
    std::size_t hidden_dim = 0;
    std::size_t max_seq_len = default_max_seq_len;

    friend bool operator==(const Hyper&, const Hyper&) = default;
};

inline constexpr std::array<std::string_view, 9> tensor_names{
    "E", "enc.W", "enc.U", "enc.b", "dec.W", "dec.U", "dec.b", "W_out", "b_out"};

template <typename T>
struct BasicModel {
    Hyper hyper;
    Matrix<T> E;      ///< V x d
    BasicLstm<T> enc;
    BasicLstm<T> dec;
    Matrix<T> W_out;  ///< V x h
    Matrix<T> b_out;  ///< V x 1

    /// Zero tensors shaped for `hyper`.
    static BasicModel zeros(const Hyper& hyper) {
        const auto v = hyper.vocab_size, d = hyper.embed_dim, h = hyper.hidden_dim;
        BasicModel m;
        m.hyper = hyper;
        m.E = Matrix<T>(v, d);
        m.enc = {Matrix<T>(4 * h, d), Matrix<T>(4 * h, h), Matrix<T>(4 * h, 1)};
        m.dec = {Matrix<T>(4 * h, d), Matrix<T>(4 * h, h), Matrix<T>(4 * h, 1)};
        m.W_out = Matrix<T>(v, h);
        m.b_out = Matrix<T>(v, 1);
        return m;
    }

    /// Calls f(name, tensor) in the fixed export order.
    template <typename F>
    void visit(F&& f) { visit_all(*this, f); }
    template <typename F>
    void visit(F&& f) const { visit_all(*this, f); }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        visit([&](std::string_view, const Matrix<T>& t) { n += t.size(); });
        return n;
    }

    friend bool operator==(const BasicModel&, const BasicModel&) = default;

private:
    template <typename Self, typename F>
    static void visit_all(Self& self, F& f) {
        f(tensor_names[0], self.E);
        f(tensor_names[1], self.enc.W);
        f(tensor_names[2], self.enc.U);
        f(tensor_names[3], self.enc.b);
        f(tensor_names[4], self.dec.W);
        f(tensor_names[5], self.dec.U);
        f(tensor_names[6], self.dec.b);
        f(tensor_names[7], self.W_out);
        f(tensor_names[8], self.b_out);
    }
};

using LstmParams = BasicLstm<float>;
using ModelParams = BasicModel<float>;
/// Gradient accumulators mirror the parameters at working precision.
using Gradients = BasicModel<double>;

Gradients zeros_like(const ModelParams& params);

/// Throws a shape error unless every tensor matches `params.hyper`, and a
/// numeric error if any weight is not finite.
void validate(const ModelParams& params);

/// Uniform(-0.08, 0.08) weights, forget-gate biases 1, other biases 0. Rows of
/// `glove` overwrite the embeddings of the tokens it covers.
ModelParams init_model(const Vocab& vocab, std::size_t embed_dim, std::size_t hidden_dim, std::uint64_t seed,
                       const EmbeddingTable* glove = nullptr, std::size_t max_seq_len = default_max_seq_len);

// ---------------------------------------------------------------------------
// Single LSTM step

struct LstmCache {
    std::vector<double> x, h_prev, c_prev;
    std::vector<double> gates;  ///< activated [i f g o], 4h
    std::vector<double> c, tanh_c;
};

struct LstmStep {
    std::vector<double> h;
    std::vector<double> c;
    LstmCache cache;
};

LstmStep lstm_step(std::span<const double> x, std::span<const double> h_prev, std::span<const double> c_prev,
                   const LstmParams& p);

struct LstmStepGrads {
    std::vector<double> dx, dh_prev, dc_prev;
};

/// Backward pass of one step; parameter gradients are added into `grads`.
LstmStepGrads lstm_step_backward(const LstmCache& cache, std::span<const double> dh, std::span<const double> dc,
                                 const LstmParams& p, BasicLstm<double>& grads);

// ---------------------------------------------------------------------------
// Sequences

struct EncoderState {
    std::vector<double> h;
    std::vector<double> c;
};

/// Runs the encoder from a zero state and returns its final (h, c).
EncoderState encode_sequence(std::span<const TokenId> ids, const ModelParams& m);

/// Teacher-forced decoder logits; row t predicts target_ids[t + 1].
Mat decode_teacher_forced(std::span<const TokenId> target_ids, const EncoderState& init, const ModelParams& m);

struct EncodedPair {
    std::vector<TokenId> source;  ///< ... EOS
    std::vector<TokenId> target;  ///< SOS ... EOS
};

EncodedPair encode_pair(const ExchangePair& pair, const Vocab& vocab, std::size_t max_seq_len);

/// Right-padded batch; sequences are stored row-major (example x position).
struct Batch {
    std::size_t size = 0;
    std::size_t source_len = 0;
    std::size_t target_len = 0;
    std::vector<TokenId> source;      ///< size x source_len
    std::vector<TokenId> target;      ///< size x target_len
    std::vector<std::uint8_t> mask;   ///< size x (target_len - 1); set where target[t + 1] is not PAD

    TokenId source_at(std::size_t b, std::size_t t) const { return source[b * source_len + t]; }
    TokenId target_at(std::size_t b, std::size_t t) const { return target[b * target_len + t]; }
    std::size_t mask_count() const;
};

Batch collate(std::span<const EncodedPair> pairs);

struct LossSums {
    double nll_sum = 0.0;
    std::size_t count = 0;

    double mean() const { return count == 0 ? 0.0 : nll_sum / static_cast<double>(count); }
};

/// Teacher-forced forward pass over a batch. When `grads` is non-null the
/// gradient of (grad_scale * summed NLL) is accumulated into it by BPTT.
LossSums forward_backward(const ModelParams& m, const Batch& batch, Gradients* grads = nullptr,
                          double grad_scale = 1.0);

/// Mean masked cross entropy of the batch.
double batch_loss(const ModelParams& m, const Batch& batch);

// ---------------------------------------------------------------------------
// Decoding

struct DecodeConfig {
    enum class Mode { greedy, sample };

    Mode mode = Mode::greedy;
    double temperature = 1.0;
    std::size_t max_len = default_max_seq_len + 1;
    std::uint64_t seed = 0;

    /// Throws a configuration error for temperature <= 0 or max_len < 1.
    void validate() const;
};

/// Argmax over all tokens except PAD and SOS; ties go to the lowest id.
TokenId argmax_token(std::span<const double> logits);

/// softmax(logits / temperature) with PAD and SOS forced to probability 0.
std::vector<double> token_distribution(std::span<const double> logits, double temperature);

/// Inverse-CDF draw from `probs` using 53 random bits from `rng`.
TokenId sample_token(std::span<const double> probs, Rng& rng);

struct DecodeResult {
    std::vector<TokenId> ids;            ///< emitted tokens, EOS excluded
    std::string text;
    std::vector<std::vector<double>> step_logits;  ///< filled when requested
};

/// Encodes `source_ids` and decodes until EOS or cfg.max_len steps.
DecodeResult decode_ids(std::span<const TokenId> source_ids, const ModelParams& m, const Vocab& vocab,
                        const DecodeConfig& cfg, Rng& rng, bool keep_logits = false);

std::string greedy_decode(std::string_view question, const ModelParams& m, const Vocab& vocab,
                          const DecodeConfig& cfg = {});
std::string sample_decode(std::string_view question, const ModelParams& m, const Vocab& vocab,
                          const DecodeConfig& cfg);
/// Sampling with a caller-owned generator, so a chat session keeps one stream.
std::string sample_decode(std::string_view question, const ModelParams& m, const Vocab& vocab,
                          const DecodeConfig& cfg, Rng& rng);

/// Dispatches on cfg.mode.
std::string reply(std::string_view question, const ModelParams& m, const Vocab& vocab, const DecodeConfig& cfg,
                  Rng& rng);

} // namespace s2s
