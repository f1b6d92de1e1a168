#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "phenonet/rng.hpp"
#include "phenonet/tensor.hpp"
#include "phenonet/textprep.hpp"

namespace phenonet {

// Batch of sequences with per-example valid lengths. Positions at or past an
// example's length belong to PAD and hold zero vectors.
template <typename T>
struct SequenceBatch {
    Tensor<T> values;                  // B x T x C
    std::vector<std::size_t> lengths;  // valid steps per example

    std::size_t batch() const { return values.ndim() == 3 ? values.dim(0) : 0; }
    std::size_t steps() const { return values.ndim() == 3 ? values.dim(1) : 0; }
    std::size_t channels() const { return values.ndim() == 3 ? values.dim(2) : 0; }
};

using SequenceBatchF = SequenceBatch<float>;
using SequenceBatchD = SequenceBatch<double>;

// Visitor over (name, parameter, gradient) triples.
template <typename T>
using ParamFn = std::function<void(const std::string&, Tensor<T>&, Tensor<T>&)>;

// Uniform(-limit, limit) with limit = sqrt(6 / (fan_in + fan_out)).
template <typename T>
Tensor<T> glorot_uniform(const std::vector<std::size_t>& shape, std::size_t fan_in,
                         std::size_t fan_out, Rng& rng);

// ---------------------------------------------------------------------------
// Embedding lookup layer: row-gather forward, scatter-add backward. The PAD
// row is frozen at zero even when the table is trainable.
template <typename T>
class EmbeddingLayer {
public:
    EmbeddingLayer(Tensor<T> weights, bool trainable);

    SequenceBatch<T> forward(const std::vector<EncodedNote>& batch);
    void backward(const SequenceBatch<T>& grad_out);
    void visit_params(const std::string& prefix, const ParamFn<T>& fn);
    // Unconditional visit (checkpointing needs the table even when frozen).
    void visit_tensors(const std::string& prefix, const ParamFn<T>& fn);

    bool trainable() const { return trainable_; }
    const Tensor<T>& weights() const { return w_; }
    Tensor<T>& weights() { return w_; }
    std::size_t dim() const { return w_.dim(1); }

private:
    Tensor<T> w_, gw_;
    bool trainable_;
    std::vector<EncodedNote> cache_;
};

// ---------------------------------------------------------------------------
// Recurrent cells. Single-step functions mirror the textbook equations on
// 1-D tensors; the sequence classes run batches with masking and BPTT.

template <typename T>
struct LstmParams {
    Tensor<T> w_f, w_i, w_o, w_c;  // d_in x H
    Tensor<T> u_f, u_i, u_o, u_c;  // H x H
    Tensor<T> b_f, b_i, b_o, b_c;  // H

    // Glorot weights, zero biases except forget bias = 1.
    static LstmParams init(std::size_t d_in, std::size_t hidden, Rng& rng);
    std::size_t input_dim() const { return w_f.dim(0); }
    std::size_t hidden() const { return w_f.dim(1); }
};

template <typename T>
struct GruParams {
    Tensor<T> w_z, w_r, w_h;  // d_in x H
    Tensor<T> u_z, u_r, u_h;  // H x H
    Tensor<T> b_z, b_r, b_h;  // H

    static GruParams init(std::size_t d_in, std::size_t hidden, Rng& rng);
    std::size_t input_dim() const { return w_z.dim(0); }
    std::size_t hidden() const { return w_z.dim(1); }
};

// f = sig(W_f x + U_f h + b_f); i, o alike; cand = tanh(W_c x + U_c h + b_c)
// c = f*c_prev + i*cand; h = o*tanh(c)
template <typename T>
std::pair<Tensor<T>, Tensor<T>> lstm_step(const Tensor<T>& x, const Tensor<T>& h_prev,
                                          const Tensor<T>& c_prev, const LstmParams<T>& p);

// z = sig(W_z x + U_z h + b_z); r alike; cand = tanh(W_h x + U_h (r*h) + b_h)
// h = (1-z)*h_prev + z*cand
template <typename T>
Tensor<T> gru_step(const Tensor<T>& x, const Tensor<T>& h_prev, const GruParams<T>& p);

enum class CellKind { lstm, gru };

// A recurrent runner over a SequenceBatch: state advances only over the
// first `length` steps of each example, PAD steps emit zeros. `reverse`
// walks right-to-left over the valid range.
template <typename T>
class SeqCell {
public:
    virtual ~SeqCell() = default;
    virtual SequenceBatch<T> forward(const SequenceBatch<T>& in) = 0;
    virtual SequenceBatch<T> backward(const SequenceBatch<T>& grad_out) = 0;
    virtual void visit_params(const std::string& prefix, const ParamFn<T>& fn) = 0;
    virtual std::size_t hidden() const = 0;
};

template <typename T>
class LstmSeq final : public SeqCell<T> {
public:
    LstmSeq(std::size_t d_in, std::size_t hidden, bool reverse, Rng& rng);
    explicit LstmSeq(LstmParams<T> params, bool reverse = false);

    SequenceBatch<T> forward(const SequenceBatch<T>& in) override;
    SequenceBatch<T> backward(const SequenceBatch<T>& grad_out) override;
    void visit_params(const std::string& prefix, const ParamFn<T>& fn) override;
    std::size_t hidden() const override { return p_.hidden(); }
    const LstmParams<T>& params() const { return p_; }

private:
    LstmParams<T> p_, g_;
    bool reverse_;
    // per-step caches captured by forward for BPTT
    SequenceBatch<T> in_;
    std::vector<Tensor<T>> f_, i_, o_, cand_, c_, h_prev_, c_prev_;
};

template <typename T>
class GruSeq final : public SeqCell<T> {
public:
    GruSeq(std::size_t d_in, std::size_t hidden, bool reverse, Rng& rng);
    explicit GruSeq(GruParams<T> params, bool reverse = false);

    SequenceBatch<T> forward(const SequenceBatch<T>& in) override;
    SequenceBatch<T> backward(const SequenceBatch<T>& grad_out) override;
    void visit_params(const std::string& prefix, const ParamFn<T>& fn) override;
    std::size_t hidden() const override { return p_.hidden(); }
    const GruParams<T>& params() const { return p_; }

private:
    GruParams<T> p_, g_;
    bool reverse_;
    SequenceBatch<T> in_;
    std::vector<Tensor<T>> z_, r_, cand_, h_prev_;
};

template <typename T>
std::unique_ptr<SeqCell<T>> make_cell(CellKind kind, std::size_t d_in, std::size_t hidden,
                                      bool reverse, Rng& rng);

// Forward and backward passes concatenated per timestep: [h_fwd ; h_bwd].
template <typename T>
class Bidirectional {
public:
    Bidirectional(CellKind kind, std::size_t d_in, std::size_t hidden, Rng& rng);

    SequenceBatch<T> forward(const SequenceBatch<T>& in);
    SequenceBatch<T> backward(const SequenceBatch<T>& grad_out);
    void visit_params(const std::string& prefix, const ParamFn<T>& fn);
    std::size_t hidden() const { return fwd_->hidden(); }

private:
    std::unique_ptr<SeqCell<T>> fwd_, bwd_;
};

// ---------------------------------------------------------------------------
// Temporal 1-D convolution, valid mode, cross-correlation (no kernel flip).
template <typename T>
struct Conv1dParams {
    Tensor<T> filters;  // F x k x C_in
    Tensor<T> bias;     // F

    static Conv1dParams init(std::size_t in_channels, std::size_t width, std::size_t filters,
                             Rng& rng);
    std::size_t out_channels() const { return filters.dim(0); }
    std::size_t width() const { return filters.dim(1); }
    std::size_t in_channels() const { return filters.dim(2); }
};

template <typename T>
class Conv1d {
public:
    Conv1d(std::size_t in_channels, std::size_t width, std::size_t filters, Rng& rng);
    explicit Conv1d(Conv1dParams<T> params);

    // Output has T-k+1 steps; per-example valid length is
    // clamp(length - k + 1, 1, T - k + 1) so every example keeps at least
    // one pooled window. Positions past the valid length are zeroed.
    SequenceBatch<T> forward(const SequenceBatch<T>& in);
    SequenceBatch<T> backward(const SequenceBatch<T>& grad_out);
    void visit_params(const std::string& prefix, const ParamFn<T>& fn);
    const Conv1dParams<T>& params() const { return p_; }

private:
    Conv1dParams<T> p_, g_;
    SequenceBatch<T> in_;
    std::vector<std::size_t> out_lengths_;
};

// ---------------------------------------------------------------------------
// Per-channel max over the valid timesteps; gradient routes to the earliest
// maximum position.
template <typename T>
class GlobalMaxPool {
public:
    Tensor<T> forward(const SequenceBatch<T>& in);
    SequenceBatch<T> backward(const Tensor<T>& grad_out);

private:
    std::vector<std::size_t> argmax_;  // B*F flattened time indices
    std::size_t batch_ = 0, steps_ = 0, channels_ = 0;
    std::vector<std::size_t> lengths_;
};

// ---------------------------------------------------------------------------
template <typename T>
class Dense {
public:
    Dense(std::size_t in_dim, std::size_t out_dim, Act act, Rng& rng);
    Dense(Tensor<T> w, Tensor<T> b, Act act);

    Tensor<T> forward(const Tensor<T>& x);
    Tensor<T> backward(const Tensor<T>& grad_out);
    void visit_params(const std::string& prefix, const ParamFn<T>& fn);
    const Tensor<T>& weight() const { return w_; }
    const Tensor<T>& bias() const { return b_; }
    Act activation_kind() const { return act_; }

private:
    Tensor<T> w_, b_, gw_, gb_;
    Act act_;
    Tensor<T> x_, y_;  // caches
};

// ---------------------------------------------------------------------------
// Inverted dropout: zero with probability `rate`, scale survivors by
// 1/(1-rate); identity outside training.
template <typename T>
class Dropout {
public:
    explicit Dropout(double rate);

    Tensor<T> forward(const Tensor<T>& x, bool training, Rng& rng);
    Tensor<T> backward(const Tensor<T>& grad_out);
    double rate() const { return rate_; }

private:
    double rate_;
    Tensor<T> mask_;
    bool identity_ = true;
};

// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_cols(const Tensor<T>& grad, std::size_t left,
                                           std::size_t right);

}  // namespace phenonet
