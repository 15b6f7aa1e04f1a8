#include "s2s/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace s2s {
namespace {

using kernels::gemm_acc_raw;

// ---------------------------------------------------------------------------
// Cell math shared by the single-step API and the batched sequence kernels.

void cell_forward(const double* pre, const double* c_prev, std::size_t h, double* gates, double* c, double* tanh_c,
                  double* h_out) {
    for (std::size_t j = 0; j < h; ++j) {
        const double i = sigmoid(pre[j]);
        const double f = sigmoid(pre[h + j]);
        const double g = std::tanh(pre[2 * h + j]);
        const double o = sigmoid(pre[3 * h + j]);
        gates[j] = i;
        gates[h + j] = f;
        gates[2 * h + j] = g;
        gates[3 * h + j] = o;
        c[j] = f * c_prev[j] + i * g;
        tanh_c[j] = std::tanh(c[j]);
        h_out[j] = o * tanh_c[j];
    }
}

// dc is read as the incoming cell gradient and overwritten with dc_prev.
void cell_backward(const double* gates, const double* c_prev, const double* tanh_c, const double* dh, double* dc,
                   std::size_t h, double* d_pre) {
    for (std::size_t j = 0; j < h; ++j) {
        const double i = gates[j], f = gates[h + j], g = gates[2 * h + j], o = gates[3 * h + j];
        const double tc = tanh_c[j];
        const double d_o = dh[j] * tc;
        const double d_c = dc[j] + dh[j] * o * (1.0 - tc * tc);
        const double d_i = d_c * g;
        const double d_g = d_c * i;
        const double d_f = d_c * c_prev[j];
        d_pre[j] = d_i * i * (1.0 - i);
        d_pre[h + j] = d_f * f * (1.0 - f);
        d_pre[2 * h + j] = d_g * (1.0 - g * g);
        d_pre[3 * h + j] = d_o * o * (1.0 - o);
        dc[j] = d_c * f;
    }
}

void add_column_sums(const Mat& a, Mat& out) {
    for (std::size_t r = 0; r < a.rows(); ++r) {
        const double* row = a.data() + r * a.cols();
        for (std::size_t j = 0; j < a.cols(); ++j) out[j] += row[j];
    }
}

// ---------------------------------------------------------------------------
// Working-precision copies of the weights, including the transposes the
// row-major gemm wants.

struct PreparedLstm {
    std::size_t hidden = 0;
    Mat W, U;    // 4h x d, 4h x h
    Mat Wt, Ut;  // d x 4h, h x 4h
    std::vector<double> b;

    explicit PreparedLstm(const LstmParams& p)
        : hidden(p.hidden_dim()),
          W(p.W.cast<double>()),
          U(p.U.cast<double>()),
          Wt(kernels::transpose(W)),
          Ut(kernels::transpose(U)),
          b(p.b.values().begin(), p.b.values().end()) {}
};

struct Prepared {
    const ModelParams& m;
    PreparedLstm enc, dec;
    Mat W_out, W_out_t;
    std::vector<double> b_out;

    explicit Prepared(const ModelParams& params)
        : m(params),
          enc(params.enc),
          dec(params.dec),
          W_out(params.W_out.cast<double>()),
          W_out_t(kernels::transpose(W_out)),
          b_out(params.b_out.values().begin(), params.b_out.values().end()) {}

    void embed(TokenId id, double* out) const {
        const auto row = m.E.row(static_cast<std::size_t>(id));
        std::copy(row.begin(), row.end(), out);
    }
};

// Activations for T steps of B sequences, rows in time-major order (t * B + b).
struct SequenceCache {
    std::size_t steps = 0, batch = 0, hidden = 0;
    Mat x;                 // inputs
    Mat gates;             // activated gates
    Mat c, tanh_c, h;      // per-step state
    Mat h0, c0;            // initial state, batch x hidden
    std::vector<std::uint8_t> active;  // rows that advance the state; others carry it

    SequenceCache(std::size_t t, std::size_t b, std::size_t d, std::size_t hid)
        : steps(t), batch(b), hidden(hid),
          x(t * b, d), gates(t * b, 4 * hid), c(t * b, hid), tanh_c(t * b, hid), h(t * b, hid),
          h0(b, hid), c0(b, hid), active(t * b, 1) {}

    const double* h_prev(std::size_t t, std::size_t b) const {
        return t == 0 ? h0.data() + b * hidden : h.data() + ((t - 1) * batch + b) * hidden;
    }
    const double* c_prev(std::size_t t, std::size_t b) const {
        return t == 0 ? c0.data() + b * hidden : c.data() + ((t - 1) * batch + b) * hidden;
    }
    std::span<const double> last_h(std::size_t b) const {
        return {h.data() + ((steps - 1) * batch + b) * hidden, hidden};
    }
    std::span<const double> last_c(std::size_t b) const {
        return {c.data() + ((steps - 1) * batch + b) * hidden, hidden};
    }
};

void run_lstm(const PreparedLstm& p, SequenceCache& s) {
    const std::size_t B = s.batch, H = s.hidden, G = 4 * H;
    Mat pre(s.steps * B, G);
    for (std::size_t r = 0; r < pre.rows(); ++r) std::copy(p.b.begin(), p.b.end(), pre.row(r).begin());
    kernels::gemm_acc(s.x, p.Wt, pre);

    Mat h_prev = s.h0;
    Mat rec(B, G);
    for (std::size_t t = 0; t < s.steps; ++t) {
        rec.fill(0.0);
        gemm_acc_raw(h_prev.data(), B, H, p.Ut.data(), G, rec.data());
        for (std::size_t b = 0; b < B; ++b) {
            const std::size_t r = t * B + b;
            double* h_row = s.h.data() + r * H;
            double* c_row = s.c.data() + r * H;
            const double* cp = s.c_prev(t, b);
            if (!s.active[r]) {
                std::copy(cp, cp + H, c_row);
                std::copy(h_prev.data() + b * H, h_prev.data() + (b + 1) * H, h_row);
                for (std::size_t j = 0; j < H; ++j) s.tanh_c(r, j) = std::tanh(c_row[j]);
                std::fill(s.gates.row(r).begin(), s.gates.row(r).end(), 0.0);
                continue;
            }
            double* pre_row = pre.data() + r * G;
            const double* rec_row = rec.data() + b * G;
            for (std::size_t j = 0; j < G; ++j) pre_row[j] += rec_row[j];
            cell_forward(pre_row, cp, H, s.gates.data() + r * G, c_row, s.tanh_c.data() + r * H, h_row);
        }
        std::copy(s.h.data() + t * B * H, s.h.data() + (t + 1) * B * H, h_prev.data());
    }
}

// dh_out: gradient w.r.t. each step's h output (rows like s.h) or null.
// dh_next/dc_next: gradient w.r.t. the final state on entry, w.r.t. (h0, c0) on exit.
void backprop_lstm(const PreparedLstm& p, const SequenceCache& s, const Mat* dh_out, Mat& dh_next, Mat& dc_next,
                   BasicLstm<double>& g, Mat& dx) {
    const std::size_t B = s.batch, H = s.hidden, G = 4 * H;
    Mat d_pre(s.steps * B, G);
    Mat dh(B, H);
    for (std::size_t t = s.steps; t-- > 0;) {
        for (std::size_t b = 0; b < B; ++b) {
            const std::size_t r = t * B + b;
            for (std::size_t j = 0; j < H; ++j) dh(b, j) = dh_next(b, j) + (dh_out ? (*dh_out)(r, j) : 0.0);
            if (!s.active[r]) continue;  // state passes through untouched; d_pre row stays zero
            cell_backward(s.gates.data() + r * G, s.c_prev(t, b), s.tanh_c.data() + r * H, dh.data() + b * H,
                          dc_next.data() + b * H, H, d_pre.data() + r * G);
        }
        dh_next.fill(0.0);
        gemm_acc_raw(d_pre.data() + t * B * G, B, G, p.U.data(), H, dh_next.data());
        for (std::size_t b = 0; b < B; ++b) {
            if (s.active[t * B + b]) continue;
            std::copy(dh.data() + b * H, dh.data() + (b + 1) * H, dh_next.data() + b * H);
        }
    }

    Mat h_prev_all(s.steps * B, H);
    for (std::size_t t = 0; t < s.steps; ++t)
        for (std::size_t b = 0; b < B; ++b) {
            const double* src = s.h_prev(t, b);
            std::copy(src, src + H, h_prev_all.data() + (t * B + b) * H);
        }
    kernels::gemm_tn_acc(d_pre, s.x, g.W);
    kernels::gemm_tn_acc(d_pre, h_prev_all, g.U);
    add_column_sums(d_pre, g.b);
    dx = Mat(s.steps * B, p.W.cols());
    kernels::gemm_acc(d_pre, p.W, dx);
}

void check_ids(std::span<const TokenId> ids, std::size_t vocab_size) {
    for (TokenId id : ids)
        if (id < 0 || static_cast<std::size_t>(id) >= vocab_size)
            fail(ErrorKind::argument, "token id " + std::to_string(id) + " outside vocabulary of size " +
                                          std::to_string(vocab_size));
}

SequenceCache run_encoder(const Prepared& p, std::span<const TokenId> ids) {
    const auto& hy = p.m.hyper;
    SequenceCache s(ids.size(), 1, hy.embed_dim, hy.hidden_dim);
    for (std::size_t t = 0; t < ids.size(); ++t) p.embed(ids[t], s.x.data() + t * hy.embed_dim);
    run_lstm(p.enc, s);
    return s;
}

// Incremental decoder used at inference time.
class DecoderStepper {
public:
    DecoderStepper(const Prepared& p, const EncoderState& init)
        : p_(p), h_(init.h), c_(init.c), x_(p.m.hyper.embed_dim), pre_(4 * p.m.hyper.hidden_dim),
          gates_(pre_.size()), tanh_c_(h_.size()), c_next_(h_.size()) {}

    std::vector<double> step(TokenId input) {
        const std::size_t H = h_.size(), G = 4 * H, V = p_.m.hyper.vocab_size;
        p_.embed(input, x_.data());
        std::copy(p_.dec.b.begin(), p_.dec.b.end(), pre_.begin());
        gemm_acc_raw(x_.data(), 1, x_.size(), p_.dec.Wt.data(), G, pre_.data());
        gemm_acc_raw(h_.data(), 1, H, p_.dec.Ut.data(), G, pre_.data());
        cell_forward(pre_.data(), c_.data(), H, gates_.data(), c_next_.data(), tanh_c_.data(), h_.data());
        std::swap(c_, c_next_);
        std::vector<double> logits(p_.b_out);
        gemm_acc_raw(h_.data(), 1, H, p_.W_out_t.data(), V, logits.data());
        return logits;
    }

private:
    const Prepared& p_;
    std::vector<double> h_, c_, x_, pre_, gates_, tanh_c_, c_next_;
};

double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

} // namespace

// ---------------------------------------------------------------------------

Gradients zeros_like(const ModelParams& params) { return Gradients::zeros(params.hyper); }

void validate(const ModelParams& params) {
    const auto expected = ModelParams::zeros(params.hyper);
    std::vector<std::pair<std::string_view, std::string>> shapes;
    expected.visit([&](std::string_view name, const Tensor2& t) { shapes.emplace_back(name, t.shape()); });
    std::size_t k = 0;
    params.visit([&](std::string_view name, const Tensor2& t) {
        if (t.shape() != shapes[k].second)
            fail(ErrorKind::shape, std::string(name) + " has shape " + t.shape() + ", expected " + shapes[k].second);
        if (!t.all_finite()) fail(ErrorKind::numeric, std::string(name) + " contains a non-finite value");
        ++k;
    });
}

ModelParams init_model(const Vocab& vocab, std::size_t embed_dim, std::size_t hidden_dim, std::uint64_t seed,
                       const EmbeddingTable* glove, std::size_t max_seq_len) {
    if (embed_dim < 1 || hidden_dim < 1) fail(ErrorKind::config, "embedding and hidden sizes must be >= 1");
    if (glove && glove->dim != embed_dim)
        fail(ErrorKind::config, "embedding file has dimension " + std::to_string(glove->dim) +
                                    " but the model uses " + std::to_string(embed_dim));
    Hyper hyper{vocab.size(), embed_dim, hidden_dim, max_seq_len};
    auto m = ModelParams::zeros(hyper);
    Rng rng(seed);
    constexpr double scale = 0.08;
    m.visit([&](std::string_view name, Tensor2& t) {
        if (name.ends_with(".b") || name == "b_out") return;
        for (auto& v : t.values()) v = static_cast<float>(-scale + 2.0 * scale * uniform01(rng));
    });
    for (auto* lstm : {&m.enc, &m.dec})
        for (std::size_t j = 0; j < hidden_dim; ++j) lstm->b[hidden_dim + j] = 1.0f;
    if (glove) {
        for (const auto& [token, vec] : glove->vectors) {
            if (!vocab.contains(token)) continue;
            auto row = m.E.row(static_cast<std::size_t>(vocab.id(token)));
            std::copy(vec.begin(), vec.end(), row.begin());
        }
    }
    return m;
}

LstmStep lstm_step(std::span<const double> x, std::span<const double> h_prev, std::span<const double> c_prev,
                   const LstmParams& p) {
    const std::size_t d = p.input_dim(), H = p.hidden_dim();
    if (p.W.rows() != 4 * H || p.U.rows() != 4 * H || p.b.size() != 4 * H)
        fail(ErrorKind::shape, "inconsistent LSTM parameter shapes " + p.W.shape() + ", " + p.U.shape() + ", " +
                                   p.b.shape());
    if (x.size() != d || h_prev.size() != H || c_prev.size() != H)
        fail(ErrorKind::shape, "lstm_step expects x of " + std::to_string(d) + " and states of " +
                                   std::to_string(H) + ", got " + std::to_string(x.size()) + "/" +
                                   std::to_string(h_prev.size()) + "/" + std::to_string(c_prev.size()));
    std::vector<double> pre(4 * H);
    for (std::size_t r = 0; r < 4 * H; ++r) {
        double acc = p.b[r];
        for (std::size_t k = 0; k < d; ++k) acc += static_cast<double>(p.W(r, k)) * x[k];
        for (std::size_t k = 0; k < H; ++k) acc += static_cast<double>(p.U(r, k)) * h_prev[k];
        pre[r] = acc;
    }
    LstmStep out;
    out.h.resize(H);
    out.c.resize(H);
    auto& cache = out.cache;
    cache.x.assign(x.begin(), x.end());
    cache.h_prev.assign(h_prev.begin(), h_prev.end());
    cache.c_prev.assign(c_prev.begin(), c_prev.end());
    cache.gates.resize(4 * H);
    cache.tanh_c.resize(H);
    cell_forward(pre.data(), c_prev.data(), H, cache.gates.data(), out.c.data(), cache.tanh_c.data(), out.h.data());
    cache.c = out.c;
    return out;
}

LstmStepGrads lstm_step_backward(const LstmCache& cache, std::span<const double> dh, std::span<const double> dc,
                                 const LstmParams& p, BasicLstm<double>& grads) {
    const std::size_t d = p.input_dim(), H = p.hidden_dim();
    if (dh.size() != H || dc.size() != H) fail(ErrorKind::shape, "lstm_step_backward state gradient size mismatch");
    std::vector<double> dc_io(dc.begin(), dc.end());
    std::vector<double> d_pre(4 * H);
    cell_backward(cache.gates.data(), cache.c_prev.data(), cache.tanh_c.data(), dh.data(), dc_io.data(), H,
                  d_pre.data());
    LstmStepGrads out{std::vector<double>(d), std::vector<double>(H), std::move(dc_io)};
    for (std::size_t r = 0; r < 4 * H; ++r) {
        const double g = d_pre[r];
        grads.b[r] += g;
        for (std::size_t k = 0; k < d; ++k) {
            grads.W(r, k) += g * cache.x[k];
            out.dx[k] += g * p.W(r, k);
        }
        for (std::size_t k = 0; k < H; ++k) {
            grads.U(r, k) += g * cache.h_prev[k];
            out.dh_prev[k] += g * p.U(r, k);
        }
    }
    return out;
}

EncoderState encode_sequence(std::span<const TokenId> ids, const ModelParams& m) {
    if (ids.empty()) fail(ErrorKind::argument, "encode_sequence needs at least one id");
    check_ids(ids, m.hyper.vocab_size);
    const Prepared p(m);
    const auto s = run_encoder(p, ids);
    return {{s.last_h(0).begin(), s.last_h(0).end()}, {s.last_c(0).begin(), s.last_c(0).end()}};
}

Mat decode_teacher_forced(std::span<const TokenId> target_ids, const EncoderState& init, const ModelParams& m) {
    if (target_ids.size() < 2 || target_ids.front() != special::sos || target_ids.back() != special::eos)
        fail(ErrorKind::argument, "teacher-forced target must start with SOS and end with EOS");
    check_ids(target_ids, m.hyper.vocab_size);
    const auto& hy = m.hyper;
    if (init.h.size() != hy.hidden_dim || init.c.size() != hy.hidden_dim)
        fail(ErrorKind::shape, "initial decoder state does not match hidden size");
    const Prepared p(m);
    const std::size_t steps = target_ids.size() - 1;
    SequenceCache s(steps, 1, hy.embed_dim, hy.hidden_dim);
    std::copy(init.h.begin(), init.h.end(), s.h0.data());
    std::copy(init.c.begin(), init.c.end(), s.c0.data());
    for (std::size_t t = 0; t < steps; ++t) p.embed(target_ids[t], s.x.data() + t * hy.embed_dim);
    run_lstm(p.dec, s);
    Mat logits(steps, hy.vocab_size);
    for (std::size_t r = 0; r < steps; ++r) std::copy(p.b_out.begin(), p.b_out.end(), logits.row(r).begin());
    kernels::gemm_acc(s.h, p.W_out_t, logits);
    return logits;
}

EncodedPair encode_pair(const ExchangePair& pair, const Vocab& vocab, std::size_t max_seq_len) {
    const auto q = normalize_tokenize(pair.question);
    const auto a = normalize_tokenize(pair.answer);
    return {encode(q, vocab, SequenceRole::source, max_seq_len), encode(a, vocab, SequenceRole::target, max_seq_len)};
}

std::size_t Batch::mask_count() const {
    std::size_t n = 0;
    for (auto bit : mask) n += bit ? 1 : 0;
    return n;
}

Batch collate(std::span<const EncodedPair> pairs) {
    if (pairs.empty()) fail(ErrorKind::argument, "cannot collate an empty batch");
    Batch batch;
    batch.size = pairs.size();
    for (const auto& p : pairs) {
        if (p.source.empty()) fail(ErrorKind::argument, "source sequence is empty");
        if (p.target.size() < 2 || p.target.front() != special::sos || p.target.back() != special::eos)
            fail(ErrorKind::argument, "target sequence must be framed by SOS and EOS");
        batch.source_len = std::max(batch.source_len, p.source.size());
        batch.target_len = std::max(batch.target_len, p.target.size());
    }
    batch.source.assign(batch.size * batch.source_len, special::pad);
    batch.target.assign(batch.size * batch.target_len, special::pad);
    batch.mask.assign(batch.size * (batch.target_len - 1), 0);
    for (std::size_t b = 0; b < batch.size; ++b) {
        const auto& p = pairs[b];
        std::copy(p.source.begin(), p.source.end(), batch.source.begin() + static_cast<std::ptrdiff_t>(b * batch.source_len));
        std::copy(p.target.begin(), p.target.end(), batch.target.begin() + static_cast<std::ptrdiff_t>(b * batch.target_len));
        for (std::size_t t = 0; t + 1 < p.target.size(); ++t) batch.mask[b * (batch.target_len - 1) + t] = 1;
    }
    return batch;
}

LossSums forward_backward(const ModelParams& m, const Batch& batch, Gradients* grads, double grad_scale) {
    const auto& hy = m.hyper;
    const std::size_t B = batch.size, H = hy.hidden_dim, d = hy.embed_dim, V = hy.vocab_size;
    if (B == 0 || batch.source_len == 0 || batch.target_len < 2) fail(ErrorKind::argument, "malformed batch");
    check_ids(batch.source, V);
    check_ids(batch.target, V);
    const Prepared p(m);

    SequenceCache enc(batch.source_len, B, d, H);
    for (std::size_t t = 0; t < batch.source_len; ++t)
        for (std::size_t b = 0; b < B; ++b) {
            const TokenId id = batch.source_at(b, t);
            enc.active[t * B + b] = id != special::pad;
            p.embed(id, enc.x.data() + (t * B + b) * d);
        }
    run_lstm(p.enc, enc);

    const std::size_t steps = batch.target_len - 1;
    SequenceCache dec(steps, B, d, H);
    for (std::size_t b = 0; b < B; ++b) {
        std::copy(enc.last_h(b).begin(), enc.last_h(b).end(), dec.h0.data() + b * H);
        std::copy(enc.last_c(b).begin(), enc.last_c(b).end(), dec.c0.data() + b * H);
    }
    std::vector<TokenId> targets(steps * B);
    std::vector<std::uint8_t> mask(steps * B);
    for (std::size_t t = 0; t < steps; ++t)
        for (std::size_t b = 0; b < B; ++b) {
            p.embed(batch.target_at(b, t), dec.x.data() + (t * B + b) * d);
            targets[t * B + b] = batch.target_at(b, t + 1);
            mask[t * B + b] = batch.mask[b * steps + t];
        }
    run_lstm(p.dec, dec);

    Mat logits(steps * B, V);
    for (std::size_t r = 0; r < logits.rows(); ++r) std::copy(p.b_out.begin(), p.b_out.end(), logits.row(r).begin());
    kernels::gemm_acc(dec.h, p.W_out_t, logits);

    if (!grads) return [&] {
        const auto sums = kernels::cross_entropy_rows(logits, targets, mask, nullptr, 0.0);
        return LossSums{sums.nll_sum, sums.count};
    }();

    if (grads->hyper != hy) fail(ErrorKind::shape, "gradient buffers do not match the model");
    Mat dlogits(steps * B, V);
    const auto sums = kernels::cross_entropy_rows(logits, targets, mask, &dlogits, grad_scale);

    kernels::gemm_tn_acc(dlogits, dec.h, grads->W_out);
    add_column_sums(dlogits, grads->b_out);
    Mat dh_dec(steps * B, H);
    kernels::gemm_acc(dlogits, p.W_out, dh_dec);

    Mat dh(B, H), dc(B, H), dx;
    backprop_lstm(p.dec, dec, &dh_dec, dh, dc, grads->dec, dx);
    for (std::size_t t = 0; t < steps; ++t)
        for (std::size_t b = 0; b < B; ++b) {
            auto row = grads->E.row(static_cast<std::size_t>(batch.target_at(b, t)));
            const double* src = dx.data() + (t * B + b) * d;
            for (std::size_t k = 0; k < d; ++k) row[k] += src[k];
        }

    backprop_lstm(p.enc, enc, nullptr, dh, dc, grads->enc, dx);
    for (std::size_t t = 0; t < batch.source_len; ++t)
        for (std::size_t b = 0; b < B; ++b) {
            if (!enc.active[t * B + b]) continue;
            auto row = grads->E.row(static_cast<std::size_t>(batch.source_at(b, t)));
            const double* src = dx.data() + (t * B + b) * d;
            for (std::size_t k = 0; k < d; ++k) row[k] += src[k];
        }
    return {sums.nll_sum, sums.count};
}

double batch_loss(const ModelParams& m, const Batch& batch) {
    const auto sums = forward_backward(m, batch);
    if (sums.count == 0) fail(ErrorKind::degenerate_batch, "batch has no target positions");
    return sums.mean();
}

// ---------------------------------------------------------------------------

void DecodeConfig::validate() const {
    if (!(temperature > 0.0) || !std::isfinite(temperature))
        fail(ErrorKind::config, "temperature must be > 0 (got " + std::to_string(temperature) + ")");
    if (max_len < 1) fail(ErrorKind::config, "max_len must be >= 1");
}

TokenId argmax_token(std::span<const double> logits) {
    if (logits.size() <= special::count - 2) fail(ErrorKind::argument, "logits cover no selectable token");
    TokenId best = special::eos;
    for (std::size_t j = special::eos; j < logits.size(); ++j)
        if (logits[j] > logits[static_cast<std::size_t>(best)]) best = static_cast<TokenId>(j);
    return best;
}

std::vector<double> token_distribution(std::span<const double> logits, double temperature) {
    if (!(temperature > 0.0)) fail(ErrorKind::config, "temperature must be > 0");
    if (logits.size() <= static_cast<std::size_t>(special::eos))
        fail(ErrorKind::argument, "logits cover no selectable token");
    std::vector<double> scaled(logits.begin() + special::eos, logits.end());
    for (auto& v : scaled) v /= temperature;
    const auto probs = softmax(scaled);
    std::vector<double> out(logits.size(), 0.0);
    std::copy(probs.begin(), probs.end(), out.begin() + special::eos);
    return out;
}

TokenId sample_token(std::span<const double> probs, Rng& rng) {
    const double u = uniform01(rng);
    double cum = 0.0;
    std::size_t last_positive = probs.size();
    for (std::size_t j = 0; j < probs.size(); ++j) {
        if (probs[j] <= 0.0) continue;
        last_positive = j;
        cum += probs[j];
        if (u < cum) return static_cast<TokenId>(j);
    }
    if (last_positive == probs.size()) fail(ErrorKind::argument, "distribution has no positive mass");
    return static_cast<TokenId>(last_positive);
}

DecodeResult decode_ids(std::span<const TokenId> source_ids, const ModelParams& m, const Vocab& vocab,
                        const DecodeConfig& cfg, Rng& rng, bool keep_logits) {
    cfg.validate();
    if (vocab.size() != m.hyper.vocab_size) fail(ErrorKind::config, "vocabulary does not match the model");
    check_ids(source_ids, m.hyper.vocab_size);
    const Prepared p(m);
    const auto enc = run_encoder(p, source_ids);
    DecoderStepper stepper(p, {{enc.last_h(0).begin(), enc.last_h(0).end()},
                               {enc.last_c(0).begin(), enc.last_c(0).end()}});
    DecodeResult out;
    TokenId input = special::sos;
    for (std::size_t step = 0; step < cfg.max_len; ++step) {
        auto logits = stepper.step(input);
        const TokenId next = cfg.mode == DecodeConfig::Mode::greedy
                                 ? argmax_token(logits)
                                 : sample_token(token_distribution(logits, cfg.temperature), rng);
        if (keep_logits) out.step_logits.push_back(std::move(logits));
        if (next == special::eos) break;
        out.ids.push_back(next);
        input = next;
    }
    out.text = decode(out.ids, vocab);
    return out;
}

namespace {

std::vector<TokenId> question_ids(std::string_view question, const Vocab& vocab, const ModelParams& m) {
    return encode(normalize_tokenize(question), vocab, SequenceRole::source, m.hyper.max_seq_len);
}

} // namespace

std::string greedy_decode(std::string_view question, const ModelParams& m, const Vocab& vocab,
                          const DecodeConfig& cfg) {
    DecodeConfig greedy = cfg;
    greedy.mode = DecodeConfig::Mode::greedy;
    Rng unused(0);
    return decode_ids(question_ids(question, vocab, m), m, vocab, greedy, unused).text;
}

std::string sample_decode(std::string_view question, const ModelParams& m, const Vocab& vocab,
                          const DecodeConfig& cfg, Rng& rng) {
    DecodeConfig sample = cfg;
    sample.mode = DecodeConfig::Mode::sample;
    return decode_ids(question_ids(question, vocab, m), m, vocab, sample, rng).text;
}

std::string sample_decode(std::string_view question, const ModelParams& m, const Vocab& vocab,
                          const DecodeConfig& cfg) {
    Rng rng(cfg.seed);
    return sample_decode(question, m, vocab, cfg, rng);
}

std::string reply(std::string_view question, const ModelParams& m, const Vocab& vocab, const DecodeConfig& cfg,
                  Rng& rng) {
    return cfg.mode == DecodeConfig::Mode::greedy ? greedy_decode(question, m, vocab, cfg)
                                                  : sample_decode(question, m, vocab, cfg, rng);
}

} // namespace s2s
