#include "phenonet/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "phenonet/errors.hpp"

namespace phenonet {

namespace {

template <typename T>
Tensor<T> step_slice(const Tensor<T>& vals, std::size_t t) {
    const std::size_t b = vals.dim(0), s = vals.dim(1), c = vals.dim(2);
    Tensor<T> out({b, c});
    for (std::size_t i = 0; i < b; ++i) {
        std::memcpy(out.data() + i * c, vals.data() + (i * s + t) * c, c * sizeof(T));
    }
    return out;
}

template <typename T>
void add_bias_rows(Tensor<T>& x, const Tensor<T>& bias) {
    const std::size_t b = x.dim(0), m = x.dim(1);
    for (std::size_t i = 0; i < b; ++i) {
        T* row = x.data() + i * m;
        for (std::size_t j = 0; j < m; ++j) row[j] += bias[j];
    }
}

template <typename T>
void colsum_acc(const Tensor<T>& x, Tensor<T>& out) {
    const std::size_t b = x.dim(0), m = x.dim(1);
    for (std::size_t i = 0; i < b; ++i) {
        const T* row = x.data() + i * m;
        for (std::size_t j = 0; j < m; ++j) out[j] += row[j];
    }
}

template <typename T>
void zero_inactive_rows(Tensor<T>& x, const std::vector<char>& active) {
    const std::size_t m = x.dim(1);
    for (std::size_t i = 0; i < x.dim(0); ++i) {
        if (!active[i]) std::fill(x.data() + i * m, x.data() + (i + 1) * m, T(0));
    }
}

template <typename T>
Tensor<T> zeros_like_2d(std::size_t r, std::size_t c) {
    return Tensor<T>({r, c});
}

}  // namespace

template <typename T>
Tensor<T> glorot_uniform(const std::vector<std::size_t>& shape, std::size_t fan_in,
                         std::size_t fan_out, Rng& rng) {
    Tensor<T> out(shape);
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (auto& x : out.raw()) x = static_cast<T>(rng.uniform(-limit, limit));
    return out;
}

template Tensor<float> glorot_uniform(const std::vector<std::size_t>&, std::size_t, std::size_t,
                                      Rng&);
template Tensor<double> glorot_uniform(const std::vector<std::size_t>&, std::size_t, std::size_t,
                                       Rng&);

// ---------------------------------------------------------------------------
// EmbeddingLayer

template <typename T>
EmbeddingLayer<T>::EmbeddingLayer(Tensor<T> weights, bool trainable)
    : w_(std::move(weights)), trainable_(trainable) {
    if (w_.ndim() != 2) {
        throw DimensionError("embedding table must be 2-D, got " + w_.shape_str());
    }
    gw_ = Tensor<T>({w_.dim(0), w_.dim(1)});
}

template <typename T>
SequenceBatch<T> EmbeddingLayer<T>::forward(const std::vector<EncodedNote>& batch) {
    if (batch.empty()) throw DimensionError("embedding forward on an empty batch");
    const std::size_t b = batch.size();
    const std::size_t t = batch[0].ids.size();
    const std::size_t d = w_.dim(1);
    SequenceBatch<T> out;
    out.values = Tensor<T>({b, t, d});
    out.lengths.resize(b);
    for (std::size_t i = 0; i < b; ++i) {
        if (batch[i].ids.size() != t) {
            throw DimensionError("ragged batch: note 0 has " + std::to_string(t) +
                                 " positions, note " + std::to_string(i) + " has " +
                                 std::to_string(batch[i].ids.size()));
        }
        out.lengths[i] = std::min(batch[i].original_length, t);
        for (std::size_t j = 0; j < t; ++j) {
            const std::uint32_t id = batch[i].ids[j];
            if (id >= w_.dim(0)) {
                throw IndexError("embedding id " + std::to_string(id) +
                                 " out of range for table " + w_.shape_str());
            }
            if (id == Vocab::kPad) continue;  // PAD stays a zero vector
            std::memcpy(out.values.data() + (i * t + j) * d, w_.data() + std::size_t(id) * d,
                        d * sizeof(T));
        }
    }
    cache_ = batch;
    return out;
}

template <typename T>
void EmbeddingLayer<T>::backward(const SequenceBatch<T>& grad_out) {
    if (!trainable_) return;
    const std::size_t b = grad_out.batch(), t = grad_out.steps(), d = grad_out.channels();
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < t; ++j) {
            const std::uint32_t id = cache_[i].ids[j];
            if (id == Vocab::kPad) continue;  // PAD row frozen
            const T* src = grad_out.values.data() + (i * t + j) * d;
            T* dst = gw_.data() + std::size_t(id) * d;
            for (std::size_t k = 0; k < d; ++k) dst[k] += src[k];
        }
    }
}

template <typename T>
void EmbeddingLayer<T>::visit_params(const std::string& prefix, const ParamFn<T>& fn) {
    if (trainable_) fn(prefix + ".weight", w_, gw_);
}

template <typename T>
void EmbeddingLayer<T>::visit_tensors(const std::string& prefix, const ParamFn<T>& fn) {
    fn(prefix + ".weight", w_, gw_);
}

template class EmbeddingLayer<float>;
template class EmbeddingLayer<double>;

// ---------------------------------------------------------------------------
// Recurrent parameter initialization

template <typename T>
LstmParams<T> LstmParams<T>::init(std::size_t d_in, std::size_t hidden, Rng& rng) {
    LstmParams<T> p;
    p.w_f = glorot_uniform<T>({d_in, hidden}, d_in, hidden, rng);
    p.w_i = glorot_uniform<T>({d_in, hidden}, d_in, hidden, rng);
    p.w_o = glorot_uniform<T>({d_in, hidden}, d_in, hidden, rng);
    p.w_c = glorot_uniform<T>({d_in, hidden}, d_in, hidden, rng);
    p.u_f = glorot_uniform<T>({hidden, hidden}, hidden, hidden, rng);
    p.u_i = glorot_uniform<T>({hidden, hidden}, hidden, hidden, rng);
    p.u_o = glorot_uniform<T>({hidden, hidden}, hidden, hidden, rng);
    p.u_c = glorot_uniform<T>({hidden, hidden}, hidden, hidden, rng);
    p.b_f = Tensor<T>::full({hidden}, T(1));  // standard forget-gate stabilizer
    p.b_i = Tensor<T>({hidden});
    p.b_o = Tensor<T>({hidden});
    p.b_c = Tensor<T>({hidden});
    return p;
}

template <typename T>
GruParams<T> GruParams<T>::init(std::size_t d_in, std::size_t hidden, Rng& rng) {
    GruParams<T> p;
    p.w_z = glorot_uniform<T>({d_in, hidden}, d_in, hidden, rng);
    p.w_r = glorot_uniform<T>({d_in, hidden}, d_in, hidden, rng);
    p.w_h = glorot_uniform<T>({d_in, hidden}, d_in, hidden, rng);
    p.u_z = glorot_uniform<T>({hidden, hidden}, hidden, hidden, rng);
    p.u_r = glorot_uniform<T>({hidden, hidden}, hidden, hidden, rng);
    p.u_h = glorot_uniform<T>({hidden, hidden}, hidden, hidden, rng);
    p.b_z = Tensor<T>({hidden});
    p.b_r = Tensor<T>({hidden});
    p.b_h = Tensor<T>({hidden});
    return p;
}

template struct LstmParams<float>;
template struct LstmParams<double>;
template struct GruParams<float>;
template struct GruParams<double>;

// ---------------------------------------------------------------------------
// Single-example recurrent steps (1-D tensors)

namespace {

template <typename T>
Tensor<T> affine_1d(const Tensor<T>& x, const Tensor<T>& h, const Tensor<T>& w,
                    const Tensor<T>& u, const Tensor<T>& b) {
    const std::size_t hid = w.dim(1);
    Tensor<T> out({hid});
    for (std::size_t j = 0; j < hid; ++j) {
        T acc = b[j];
        for (std::size_t d = 0; d < x.numel(); ++d) acc += x[d] * w(d, j);
        for (std::size_t k = 0; k < h.numel(); ++k) acc += h[k] * u(k, j);
        out[j] = acc;
    }
    return out;
}

}  // namespace

template <typename T>
std::pair<Tensor<T>, Tensor<T>> lstm_step(const Tensor<T>& x, const Tensor<T>& h_prev,
                                          const Tensor<T>& c_prev, const LstmParams<T>& p) {
    if (x.numel() != p.input_dim() || h_prev.numel() != p.hidden() ||
        c_prev.numel() != p.hidden()) {
        throw DimensionError("lstm_step input shapes disagree with parameters");
    }
    auto f = affine_1d(x, h_prev, p.w_f, p.u_f, p.b_f);
    auto i = affine_1d(x, h_prev, p.w_i, p.u_i, p.b_i);
    auto o = affine_1d(x, h_prev, p.w_o, p.u_o, p.b_o);
    auto cand = affine_1d(x, h_prev, p.w_c, p.u_c, p.b_c);
    Tensor<T> c({p.hidden()}), h({p.hidden()});
    for (std::size_t j = 0; j < p.hidden(); ++j) {
        const T fj = sigmoid_scalar(f[j]);
        const T ij = sigmoid_scalar(i[j]);
        const T oj = sigmoid_scalar(o[j]);
        const T cj = std::tanh(cand[j]);
        c[j] = fj * c_prev[j] + ij * cj;
        h[j] = oj * std::tanh(c[j]);
    }
    return {h, c};
}

template <typename T>
Tensor<T> gru_step(const Tensor<T>& x, const Tensor<T>& h_prev, const GruParams<T>& p) {
    if (x.numel() != p.input_dim() || h_prev.numel() != p.hidden()) {
        throw DimensionError("gru_step input shapes disagree with parameters");
    }
    auto z = affine_1d(x, h_prev, p.w_z, p.u_z, p.b_z);
    auto r = affine_1d(x, h_prev, p.w_r, p.u_r, p.b_r);
    Tensor<T> rh({p.hidden()});
    for (std::size_t j = 0; j < p.hidden(); ++j) rh[j] = sigmoid_scalar(r[j]) * h_prev[j];
    auto cand = affine_1d(x, rh, p.w_h, p.u_h, p.b_h);
    Tensor<T> h({p.hidden()});
    for (std::size_t j = 0; j < p.hidden(); ++j) {
        const T zj = sigmoid_scalar(z[j]);
        h[j] = (T(1) - zj) * h_prev[j] + zj * std::tanh(cand[j]);
    }
    return h;
}

template std::pair<Tensor<float>, Tensor<float>> lstm_step(const Tensor<float>&,
                                                           const Tensor<float>&,
                                                           const Tensor<float>&,
                                                           const LstmParams<float>&);
template std::pair<Tensor<double>, Tensor<double>> lstm_step(const Tensor<double>&,
                                                             const Tensor<double>&,
                                                             const Tensor<double>&,
                                                             const LstmParams<double>&);
template Tensor<float> gru_step(const Tensor<float>&, const Tensor<float>&,
                                const GruParams<float>&);
template Tensor<double> gru_step(const Tensor<double>&, const Tensor<double>&,
                                 const GruParams<double>&);

// ---------------------------------------------------------------------------
// LstmSeq

template <typename T>
LstmSeq<T>::LstmSeq(std::size_t d_in, std::size_t hidden, bool reverse, Rng& rng)
    : p_(LstmParams<T>::init(d_in, hidden, rng)), reverse_(reverse) {
    g_.w_f = Tensor<T>({d_in, hidden});
    g_.w_i = Tensor<T>({d_in, hidden});
    g_.w_o = Tensor<T>({d_in, hidden});
    g_.w_c = Tensor<T>({d_in, hidden});
    g_.u_f = Tensor<T>({hidden, hidden});
    g_.u_i = Tensor<T>({hidden, hidden});
    g_.u_o = Tensor<T>({hidden, hidden});
    g_.u_c = Tensor<T>({hidden, hidden});
    g_.b_f = Tensor<T>({hidden});
    g_.b_i = Tensor<T>({hidden});
    g_.b_o = Tensor<T>({hidden});
    g_.b_c = Tensor<T>({hidden});
}

template <typename T>
LstmSeq<T>::LstmSeq(LstmParams<T> params, bool reverse) : p_(std::move(params)), reverse_(reverse) {
    const std::size_t d_in = p_.input_dim(), hidden = p_.hidden();
    g_.w_f = Tensor<T>({d_in, hidden});
    g_.w_i = Tensor<T>({d_in, hidden});
    g_.w_o = Tensor<T>({d_in, hidden});
    g_.w_c = Tensor<T>({d_in, hidden});
    g_.u_f = Tensor<T>({hidden, hidden});
    g_.u_i = Tensor<T>({hidden, hidden});
    g_.u_o = Tensor<T>({hidden, hidden});
    g_.u_c = Tensor<T>({hidden, hidden});
    g_.b_f = Tensor<T>({hidden});
    g_.b_i = Tensor<T>({hidden});
    g_.b_o = Tensor<T>({hidden});
    g_.b_c = Tensor<T>({hidden});
}

template <typename T>
SequenceBatch<T> LstmSeq<T>::forward(const SequenceBatch<T>& in) {
    const std::size_t b = in.batch(), steps = in.steps(), hid = p_.hidden();
    if (in.channels() != p_.input_dim()) {
        throw DimensionError("lstm input channels " + std::to_string(in.channels()) +
                             " do not match parameter input dim " +
                             std::to_string(p_.input_dim()));
    }
    in_ = in;
    f_.assign(steps, Tensor<T>());
    i_.assign(steps, Tensor<T>());
    o_.assign(steps, Tensor<T>());
    cand_.assign(steps, Tensor<T>());
    c_.assign(steps, Tensor<T>());
    h_prev_.assign(steps, Tensor<T>());
    c_prev_.assign(steps, Tensor<T>());

    SequenceBatch<T> out;
    out.values = Tensor<T>({b, steps, hid});
    out.lengths = in.lengths;

    Tensor<T> h = zeros_like_2d<T>(b, hid);
    Tensor<T> c = zeros_like_2d<T>(b, hid);
    for (std::size_t s = 0; s < steps; ++s) {
        const std::size_t t = reverse_ ? steps - 1 - s : s;
        std::vector<char> active(b);
        bool any = false;
        for (std::size_t e = 0; e < b; ++e) {
            active[e] = t < in.lengths[e];
            any = any || active[e];
        }
        h_prev_[t] = h;
        c_prev_[t] = c;
        if (!any) {
            f_[t] = Tensor<T>({b, hid});
            i_[t] = Tensor<T>({b, hid});
            o_[t] = Tensor<T>({b, hid});
            cand_[t] = Tensor<T>({b, hid});
            c_[t] = c;
            continue;
        }
        const auto x_t = step_slice(in.values, t);
        Tensor<T> af({b, hid}), ai({b, hid}), ao({b, hid}), ac({b, hid});
        matmul_acc(x_t, p_.w_f, af);
        matmul_acc(h, p_.u_f, af);
        add_bias_rows(af, p_.b_f);
        matmul_acc(x_t, p_.w_i, ai);
        matmul_acc(h, p_.u_i, ai);
        add_bias_rows(ai, p_.b_i);
        matmul_acc(x_t, p_.w_o, ao);
        matmul_acc(h, p_.u_o, ao);
        add_bias_rows(ao, p_.b_o);
        matmul_acc(x_t, p_.w_c, ac);
        matmul_acc(h, p_.u_c, ac);
        add_bias_rows(ac, p_.b_c);

        for (auto& v : af.raw()) v = sigmoid_scalar(v);
        for (auto& v : ai.raw()) v = sigmoid_scalar(v);
        for (auto& v : ao.raw()) v = sigmoid_scalar(v);
        for (auto& v : ac.raw()) v = std::tanh(v);

        Tensor<T> c_new({b, hid});
        for (std::size_t e = 0; e < b; ++e) {
            if (!active[e]) continue;
            T* hp = h.data() + e * hid;
            T* cp = c.data() + e * hid;
            T* cn = c_new.data() + e * hid;
            T* outp = out.values.data() + (e * steps + t) * hid;
            const T* fe = af.data() + e * hid;
            const T* ie = ai.data() + e * hid;
            const T* oe = ao.data() + e * hid;
            const T* ce = ac.data() + e * hid;
            for (std::size_t j = 0; j < hid; ++j) {
                cn[j] = fe[j] * cp[j] + ie[j] * ce[j];
                const T hj = oe[j] * std::tanh(cn[j]);
                cp[j] = cn[j];
                hp[j] = hj;
                outp[j] = hj;
            }
        }
        f_[t] = std::move(af);
        i_[t] = std::move(ai);
        o_[t] = std::move(ao);
        cand_[t] = std::move(ac);
        c_[t] = c_new;
    }
    return out;
}

template <typename T>
SequenceBatch<T> LstmSeq<T>::backward(const SequenceBatch<T>& grad_out) {
    const std::size_t b = in_.batch(), steps = in_.steps(), hid = p_.hidden();
    const std::size_t d_in = p_.input_dim();
    SequenceBatch<T> grad_in;
    grad_in.values = Tensor<T>({b, steps, d_in});
    grad_in.lengths = in_.lengths;

    Tensor<T> dh_carry = zeros_like_2d<T>(b, hid);
    Tensor<T> dc_carry = zeros_like_2d<T>(b, hid);
    for (std::size_t s_rev = 0; s_rev < steps; ++s_rev) {
        // undo the forward iteration order
        const std::size_t s = steps - 1 - s_rev;
        const std::size_t t = reverse_ ? steps - 1 - s : s;
        std::vector<char> active(b);
        bool any = false;
        for (std::size_t e = 0; e < b; ++e) {
            active[e] = t < in_.lengths[e];
            any = any || active[e];
        }
        if (!any) continue;

        Tensor<T> dh({b, hid}), dc({b, hid});
        for (std::size_t e = 0; e < b; ++e) {
            if (!active[e]) continue;
            const T* go = grad_out.values.data() + (e * steps + t) * hid;
            const T* dhc = dh_carry.data() + e * hid;
            const T* dcc = dc_carry.data() + e * hid;
            T* dhe = dh.data() + e * hid;
            T* dce = dc.data() + e * hid;
            for (std::size_t j = 0; j < hid; ++j) {
                dhe[j] = go[j] + dhc[j];
                dce[j] = dcc[j];
            }
        }

        const auto& f = f_[t];
        const auto& i = i_[t];
        const auto& o = o_[t];
        const auto& cand = cand_[t];
        const auto& c_now = c_[t];
        const auto& h_prev = h_prev_[t];
        const auto& c_prev = c_prev_[t];

        Tensor<T> dz_f({b, hid}), dz_i({b, hid}), dz_o({b, hid}), dz_c({b, hid});
        for (std::size_t e = 0; e < b; ++e) {
            if (!active[e]) continue;
            const std::size_t off = e * hid;
            T* dhe = dh.data() + off;
            T* dce = dc.data() + off;
            T* dhc = dh_carry.data() + off;
            T* dcc = dc_carry.data() + off;
            for (std::size_t j = 0; j < hid; ++j) {
                const T tc = std::tanh(c_now[off + j]);
                const T d_o = dhe[j] * tc;
                const T dcj = dce[j] + dhe[j] * o[off + j] * (T(1) - tc * tc);
                const T d_f = dcj * c_prev[off + j];
                const T d_i = dcj * cand[off + j];
                const T d_cand = dcj * i[off + j];
                dz_f[off + j] = d_f * f[off + j] * (T(1) - f[off + j]);
                dz_i[off + j] = d_i * i[off + j] * (T(1) - i[off + j]);
                dz_o[off + j] = d_o * o[off + j] * (T(1) - o[off + j]);
                dz_c[off + j] = d_cand * (T(1) - cand[off + j] * cand[off + j]);
                dcc[j] = dcj * f[off + j];  // to c_{t-1}
                dhc[j] = T(0);              // filled by U^T products below
            }
        }

        const auto x_t = step_slice(in_.values, t);
        matmul_tn_acc(x_t, dz_f, g_.w_f);
        matmul_tn_acc(x_t, dz_i, g_.w_i);
        matmul_tn_acc(x_t, dz_o, g_.w_o);
        matmul_tn_acc(x_t, dz_c, g_.w_c);
        matmul_tn_acc(h_prev, dz_f, g_.u_f);
        matmul_tn_acc(h_prev, dz_i, g_.u_i);
        matmul_tn_acc(h_prev, dz_o, g_.u_o);
        matmul_tn_acc(h_prev, dz_c, g_.u_c);
        colsum_acc(dz_f, g_.b_f);
        colsum_acc(dz_i, g_.b_i);
        colsum_acc(dz_o, g_.b_o);
        colsum_acc(dz_c, g_.b_c);

        Tensor<T> dx({b, d_in});
        matmul_nt_acc(dz_f, p_.w_f, dx);
        matmul_nt_acc(dz_i, p_.w_i, dx);
        matmul_nt_acc(dz_o, p_.w_o, dx);
        matmul_nt_acc(dz_c, p_.w_c, dx);
        matmul_nt_acc(dz_f, p_.u_f, dh_carry);
        matmul_nt_acc(dz_i, p_.u_i, dh_carry);
        matmul_nt_acc(dz_o, p_.u_o, dh_carry);
        matmul_nt_acc(dz_c, p_.u_c, dh_carry);

        for (std::size_t e = 0; e < b; ++e) {
            if (!active[e]) continue;
            std::memcpy(grad_in.values.data() + (e * steps + t) * d_in, dx.data() + e * d_in,
                        d_in * sizeof(T));
        }
    }
    return grad_in;
}

template <typename T>
void LstmSeq<T>::visit_params(const std::string& prefix, const ParamFn<T>& fn) {
    fn(prefix + ".w_f", p_.w_f, g_.w_f);
    fn(prefix + ".w_i", p_.w_i, g_.w_i);
    fn(prefix + ".w_o", p_.w_o, g_.w_o);
    fn(prefix + ".w_c", p_.w_c, g_.w_c);
    fn(prefix + ".u_f", p_.u_f, g_.u_f);
    fn(prefix + ".u_i", p_.u_i, g_.u_i);
    fn(prefix + ".u_o", p_.u_o, g_.u_o);
    fn(prefix + ".u_c", p_.u_c, g_.u_c);
    fn(prefix + ".b_f", p_.b_f, g_.b_f);
    fn(prefix + ".b_i", p_.b_i, g_.b_i);
    fn(prefix + ".b_o", p_.b_o, g_.b_o);
    fn(prefix + ".b_c", p_.b_c, g_.b_c);
}

template class LstmSeq<float>;
template class LstmSeq<double>;

// ---------------------------------------------------------------------------
// GruSeq

template <typename T>
GruSeq<T>::GruSeq(std::size_t d_in, std::size_t hidden, bool reverse, Rng& rng)
    : p_(GruParams<T>::init(d_in, hidden, rng)), reverse_(reverse) {
    g_.w_z = Tensor<T>({d_in, hidden});
    g_.w_r = Tensor<T>({d_in, hidden});
    g_.w_h = Tensor<T>({d_in, hidden});
    g_.u_z = Tensor<T>({hidden, hidden});
    g_.u_r = Tensor<T>({hidden, hidden});
    g_.u_h = Tensor<T>({hidden, hidden});
    g_.b_z = Tensor<T>({hidden});
    g_.b_r = Tensor<T>({hidden});
    g_.b_h = Tensor<T>({hidden});
}

template <typename T>
GruSeq<T>::GruSeq(GruParams<T> params, bool reverse) : p_(std::move(params)), reverse_(reverse) {
    const std::size_t d_in = p_.input_dim(), hidden = p_.hidden();
    g_.w_z = Tensor<T>({d_in, hidden});
    g_.w_r = Tensor<T>({d_in, hidden});
    g_.w_h = Tensor<T>({d_in, hidden});
    g_.u_z = Tensor<T>({hidden, hidden});
    g_.u_r = Tensor<T>({hidden, hidden});
    g_.u_h = Tensor<T>({hidden, hidden});
    g_.b_z = Tensor<T>({hidden});
    g_.b_r = Tensor<T>({hidden});
    g_.b_h = Tensor<T>({hidden});
}

template <typename T>
SequenceBatch<T> GruSeq<T>::forward(const SequenceBatch<T>& in) {
    const std::size_t b = in.batch(), steps = in.steps(), hid = p_.hidden();
    if (in.channels() != p_.input_dim()) {
        throw DimensionError("gru input channels " + std::to_string(in.channels()) +
                             " do not match parameter input dim " +
                             std::to_string(p_.input_dim()));
    }
    in_ = in;
    z_.assign(steps, Tensor<T>());
    r_.assign(steps, Tensor<T>());
    cand_.assign(steps, Tensor<T>());
    h_prev_.assign(steps, Tensor<T>());

    SequenceBatch<T> out;
    out.values = Tensor<T>({b, steps, hid});
    out.lengths = in.lengths;

    Tensor<T> h = zeros_like_2d<T>(b, hid);
    for (std::size_t s = 0; s < steps; ++s) {
        const std::size_t t = reverse_ ? steps - 1 - s : s;
        std::vector<char> active(b);
        bool any = false;
        for (std::size_t e = 0; e < b; ++e) {
            active[e] = t < in.lengths[e];
            any = any || active[e];
        }
        h_prev_[t] = h;
        if (!any) {
            z_[t] = Tensor<T>({b, hid});
            r_[t] = Tensor<T>({b, hid});
            cand_[t] = Tensor<T>({b, hid});
            continue;
        }
        const auto x_t = step_slice(in.values, t);
        Tensor<T> az({b, hid}), ar({b, hid});
        matmul_acc(x_t, p_.w_z, az);
        matmul_acc(h, p_.u_z, az);
        add_bias_rows(az, p_.b_z);
        matmul_acc(x_t, p_.w_r, ar);
        matmul_acc(h, p_.u_r, ar);
        add_bias_rows(ar, p_.b_r);
        for (auto& v : az.raw()) v = sigmoid_scalar(v);
        for (auto& v : ar.raw()) v = sigmoid_scalar(v);

        Tensor<T> rh({b, hid});
        for (std::size_t n = 0; n < rh.numel(); ++n) rh[n] = ar[n] * h[n];
        Tensor<T> ah({b, hid});
        matmul_acc(x_t, p_.w_h, ah);
        matmul_acc(rh, p_.u_h, ah);
        add_bias_rows(ah, p_.b_h);
        for (auto& v : ah.raw()) v = std::tanh(v);

        for (std::size_t e = 0; e < b; ++e) {
            if (!active[e]) continue;
            T* hp = h.data() + e * hid;
            T* outp = out.values.data() + (e * steps + t) * hid;
            const T* ze = az.data() + e * hid;
            const T* ce = ah.data() + e * hid;
            for (std::size_t j = 0; j < hid; ++j) {
                const T hj = (T(1) - ze[j]) * hp[j] + ze[j] * ce[j];
                hp[j] = hj;
                outp[j] = hj;
            }
        }
        z_[t] = std::move(az);
        r_[t] = std::move(ar);
        cand_[t] = std::move(ah);
    }
    return out;
}

template <typename T>
SequenceBatch<T> GruSeq<T>::backward(const SequenceBatch<T>& grad_out) {
    const std::size_t b = in_.batch(), steps = in_.steps(), hid = p_.hidden();
    const std::size_t d_in = p_.input_dim();
    SequenceBatch<T> grad_in;
    grad_in.values = Tensor<T>({b, steps, d_in});
    grad_in.lengths = in_.lengths;

    Tensor<T> dh_carry = zeros_like_2d<T>(b, hid);
    for (std::size_t s_rev = 0; s_rev < steps; ++s_rev) {
        const std::size_t s = steps - 1 - s_rev;
        const std::size_t t = reverse_ ? steps - 1 - s : s;
        std::vector<char> active(b);
        bool any = false;
        for (std::size_t e = 0; e < b; ++e) {
            active[e] = t < in_.lengths[e];
            any = any || active[e];
        }
        if (!any) continue;

        const auto& z = z_[t];
        const auto& r = r_[t];
        const auto& cand = cand_[t];
        const auto& h_prev = h_prev_[t];

        Tensor<T> da_z({b, hid}), da_h({b, hid});
        Tensor<T> dh_part({b, hid});
        for (std::size_t e = 0; e < b; ++e) {
            if (!active[e]) continue;
            const std::size_t off = e * hid;
            const T* go = grad_out.values.data() + (e * steps + t) * hid;
            const T* dhc = dh_carry.data() + off;
            for (std::size_t j = 0; j < hid; ++j) {
                const T dh = go[j] + dhc[j];
                const T zj = z[off + j];
                const T cj = cand[off + j];
                da_h[off + j] = dh * zj * (T(1) - cj * cj);
                const T dz = dh * (cj - h_prev[off + j]);
                da_z[off + j] = dz * zj * (T(1) - zj);
                dh_part[off + j] = dh * (T(1) - zj);
            }
        }

        // d(r*h_prev) = da_h @ U_h^T
        Tensor<T> drh({b, hid});
        matmul_nt_acc(da_h, p_.u_h, drh);
        Tensor<T> da_r({b, hid});
        for (std::size_t e = 0; e < b; ++e) {
            if (!active[e]) continue;
            const std::size_t off = e * hid;
            for (std::size_t j = 0; j < hid; ++j) {
                const T rj = r[off + j];
                const T dr = drh[off + j] * h_prev[off + j];
                da_r[off + j] = dr * rj * (T(1) - rj);
                dh_part[off + j] += drh[off + j] * rj;
            }
        }

        const auto x_t = step_slice(in_.values, t);
        Tensor<T> rh({b, hid});
        for (std::size_t n = 0; n < rh.numel(); ++n) rh[n] = r[n] * h_prev[n];

        matmul_tn_acc(x_t, da_z, g_.w_z);
        matmul_tn_acc(x_t, da_r, g_.w_r);
        matmul_tn_acc(x_t, da_h, g_.w_h);
        matmul_tn_acc(h_prev, da_z, g_.u_z);
        matmul_tn_acc(h_prev, da_r, g_.u_r);
        matmul_tn_acc(rh, da_h, g_.u_h);
        colsum_acc(da_z, g_.b_z);
        colsum_acc(da_r, g_.b_r);
        colsum_acc(da_h, g_.b_h);

        Tensor<T> dx({b, d_in});
        matmul_nt_acc(da_z, p_.w_z, dx);
        matmul_nt_acc(da_r, p_.w_r, dx);
        matmul_nt_acc(da_h, p_.w_h, dx);

        Tensor<T> dh_new = dh_part;
        matmul_nt_acc(da_z, p_.u_z, dh_new);
        matmul_nt_acc(da_r, p_.u_r, dh_new);

        for (std::size_t e = 0; e < b; ++e) {
            if (!active[e]) continue;
            std::memcpy(grad_in.values.data() + (e * steps + t) * d_in, dx.data() + e * d_in,
                        d_in * sizeof(T));
            std::memcpy(dh_carry.data() + e * hid, dh_new.data() + e * hid, hid * sizeof(T));
        }
    }
    return grad_in;
}

template <typename T>
void GruSeq<T>::visit_params(const std::string& prefix, const ParamFn<T>& fn) {
    fn(prefix + ".w_z", p_.w_z, g_.w_z);
    fn(prefix + ".w_r", p_.w_r, g_.w_r);
    fn(prefix + ".w_h", p_.w_h, g_.w_h);
    fn(prefix + ".u_z", p_.u_z, g_.u_z);
    fn(prefix + ".u_r", p_.u_r, g_.u_r);
    fn(prefix + ".u_h", p_.u_h, g_.u_h);
    fn(prefix + ".b_z", p_.b_z, g_.b_z);
    fn(prefix + ".b_r", p_.b_r, g_.b_r);
    fn(prefix + ".b_h", p_.b_h, g_.b_h);
}

template class GruSeq<float>;
template class GruSeq<double>;

template <typename T>
std::unique_ptr<SeqCell<T>> make_cell(CellKind kind, std::size_t d_in, std::size_t hidden,
                                      bool reverse, Rng& rng) {
    if (kind == CellKind::lstm) {
        return std::make_unique<LstmSeq<T>>(d_in, hidden, reverse, rng);
    }
    return std::make_unique<GruSeq<T>>(d_in, hidden, reverse, rng);
}

template std::unique_ptr<SeqCell<float>> make_cell(CellKind, std::size_t, std::size_t, bool,
                                                   Rng&);
template std::unique_ptr<SeqCell<double>> make_cell(CellKind, std::size_t, std::size_t, bool,
                                                    Rng&);

// ---------------------------------------------------------------------------
// Bidirectional

template <typename T>
Bidirectional<T>::Bidirectional(CellKind kind, std::size_t d_in, std::size_t hidden, Rng& rng)
    : fwd_(make_cell<T>(kind, d_in, hidden, false, rng)),
      bwd_(make_cell<T>(kind, d_in, hidden, true, rng)) {}

template <typename T>
SequenceBatch<T> Bidirectional<T>::forward(const SequenceBatch<T>& in) {
    const auto of = fwd_->forward(in);
    const auto ob = bwd_->forward(in);
    const std::size_t b = of.batch(), steps = of.steps(), hid = of.channels();
    SequenceBatch<T> out;
    out.values = Tensor<T>({b, steps, 2 * hid});
    out.lengths = in.lengths;
    for (std::size_t e = 0; e < b; ++e) {
        for (std::size_t t = 0; t < steps; ++t) {
            T* dst = out.values.data() + (e * steps + t) * 2 * hid;
            std::memcpy(dst, of.values.data() + (e * steps + t) * hid, hid * sizeof(T));
            std::memcpy(dst + hid, ob.values.data() + (e * steps + t) * hid, hid * sizeof(T));
        }
    }
    return out;
}

template <typename T>
SequenceBatch<T> Bidirectional<T>::backward(const SequenceBatch<T>& grad_out) {
    const std::size_t b = grad_out.batch(), steps = grad_out.steps();
    const std::size_t hid = grad_out.channels() / 2;
    SequenceBatch<T> gf, gb;
    gf.values = Tensor<T>({b, steps, hid});
    gb.values = Tensor<T>({b, steps, hid});
    gf.lengths = grad_out.lengths;
    gb.lengths = grad_out.lengths;
    for (std::size_t e = 0; e < b; ++e) {
        for (std::size_t t = 0; t < steps; ++t) {
            const T* src = grad_out.values.data() + (e * steps + t) * 2 * hid;
            std::memcpy(gf.values.data() + (e * steps + t) * hid, src, hid * sizeof(T));
            std::memcpy(gb.values.data() + (e * steps + t) * hid, src + hid, hid * sizeof(T));
        }
    }
    auto din_f = fwd_->backward(gf);
    const auto din_b = bwd_->backward(gb);
    for (std::size_t n = 0; n < din_f.values.numel(); ++n) {
        din_f.values[n] += din_b.values[n];
    }
    return din_f;
}

template <typename T>
void Bidirectional<T>::visit_params(const std::string& prefix, const ParamFn<T>& fn) {
    fwd_->visit_params(prefix + ".fwd", fn);
    bwd_->visit_params(prefix + ".bwd", fn);
}

template class Bidirectional<float>;
template class Bidirectional<double>;

// ---------------------------------------------------------------------------
// Conv1d

template <typename T>
Conv1dParams<T> Conv1dParams<T>::init(std::size_t in_channels, std::size_t width,
                                      std::size_t filters, Rng& rng) {
    Conv1dParams<T> p;
    p.filters = glorot_uniform<T>({filters, width, in_channels}, width * in_channels, filters,
                                  rng);
    p.bias = Tensor<T>({filters});
    return p;
}

template struct Conv1dParams<float>;
template struct Conv1dParams<double>;

template <typename T>
Conv1d<T>::Conv1d(std::size_t in_channels, std::size_t width, std::size_t filters, Rng& rng)
    : p_(Conv1dParams<T>::init(in_channels, width, filters, rng)) {
    g_.filters = Tensor<T>({filters, width, in_channels});
    g_.bias = Tensor<T>({filters});
}

template <typename T>
Conv1d<T>::Conv1d(Conv1dParams<T> params) : p_(std::move(params)) {
    g_.filters = Tensor<T>({p_.out_channels(), p_.width(), p_.in_channels()});
    g_.bias = Tensor<T>({p_.out_channels()});
}

template <typename T>
SequenceBatch<T> Conv1d<T>::forward(const SequenceBatch<T>& in) {
    const std::size_t b = in.batch(), t_in = in.steps(), c = in.channels();
    const std::size_t k = p_.width(), f = p_.out_channels();
    if (c != p_.in_channels()) {
        throw DimensionError("conv1d input channels " + std::to_string(c) +
                             " do not match filter channels " +
                             std::to_string(p_.in_channels()));
    }
    if (t_in < k) {
        throw DimensionError("conv1d needs at least " + std::to_string(k) +
                             " timesteps, got " + std::to_string(t_in));
    }
    const std::size_t t_out = t_in - k + 1;
    in_ = in;
    out_lengths_.resize(b);

    SequenceBatch<T> out;
    out.values = Tensor<T>({b, t_out, f});
    out.lengths.resize(b);
    for (std::size_t e = 0; e < b; ++e) {
        const std::size_t len = in.lengths[e];
        const std::size_t valid = std::min(t_out, std::max<std::size_t>(1, len >= k ? len - k + 1 : 1));
        out_lengths_[e] = valid;
        out.lengths[e] = valid;
        for (std::size_t t = 0; t < valid; ++t) {
            const T* window = in.values.data() + (e * t_in + t) * c;
            T* dst = out.values.data() + (e * t_out + t) * f;
            for (std::size_t fi = 0; fi < f; ++fi) {
                const T* w = p_.filters.data() + fi * k * c;
                T acc = p_.bias[fi];
                for (std::size_t n = 0; n < k * c; ++n) acc += w[n] * window[n];
                dst[fi] = acc;
            }
        }
    }
    return out;
}

template <typename T>
SequenceBatch<T> Conv1d<T>::backward(const SequenceBatch<T>& grad_out) {
    const std::size_t b = in_.batch(), t_in = in_.steps(), c = in_.channels();
    const std::size_t k = p_.width(), f = p_.out_channels();
    const std::size_t t_out = t_in - k + 1;
    SequenceBatch<T> grad_in;
    grad_in.values = Tensor<T>({b, t_in, c});
    grad_in.lengths = in_.lengths;

    for (std::size_t e = 0; e < b; ++e) {
        for (std::size_t t = 0; t < out_lengths_[e]; ++t) {
            const T* go = grad_out.values.data() + (e * t_out + t) * f;
            const T* window = in_.values.data() + (e * t_in + t) * c;
            T* gwin = grad_in.values.data() + (e * t_in + t) * c;
            for (std::size_t fi = 0; fi < f; ++fi) {
                const T g = go[fi];
                if (g == T(0)) continue;
                g_.bias[fi] += g;
                T* gw = g_.filters.data() + fi * k * c;
                const T* w = p_.filters.data() + fi * k * c;
                for (std::size_t n = 0; n < k * c; ++n) {
                    gw[n] += g * window[n];
                    gwin[n] += g * w[n];
                }
            }
        }
    }
    return grad_in;
}

template <typename T>
void Conv1d<T>::visit_params(const std::string& prefix, const ParamFn<T>& fn) {
    fn(prefix + ".filters", p_.filters, g_.filters);
    fn(prefix + ".bias", p_.bias, g_.bias);
}

template class Conv1d<float>;
template class Conv1d<double>;

// ---------------------------------------------------------------------------
// GlobalMaxPool

template <typename T>
Tensor<T> GlobalMaxPool<T>::forward(const SequenceBatch<T>& in) {
    const std::size_t b = in.batch(), steps = in.steps(), c = in.channels();
    if (steps == 0) throw DimensionError("global max pool over an empty temporal axis");
    batch_ = b;
    steps_ = steps;
    channels_ = c;
    lengths_ = in.lengths;
    argmax_.assign(b * c, 0);

    Tensor<T> out({b, c});
    for (std::size_t e = 0; e < b; ++e) {
        const std::size_t eff = std::max<std::size_t>(1, std::min(in.lengths[e], steps));
        for (std::size_t ch = 0; ch < c; ++ch) {
            T best = in.values[(e * steps + 0) * c + ch];
            std::size_t best_t = 0;
            for (std::size_t t = 1; t < eff; ++t) {
                const T v = in.values[(e * steps + t) * c + ch];
                if (v > best) {  // strict: earliest max wins ties
                    best = v;
                    best_t = t;
                }
            }
            out(e, ch) = best;
            argmax_[e * c + ch] = best_t;
        }
    }
    return out;
}

template <typename T>
SequenceBatch<T> GlobalMaxPool<T>::backward(const Tensor<T>& grad_out) {
    SequenceBatch<T> grad_in;
    grad_in.values = Tensor<T>({batch_, steps_, channels_});
    grad_in.lengths = lengths_;
    for (std::size_t e = 0; e < batch_; ++e) {
        for (std::size_t ch = 0; ch < channels_; ++ch) {
            const std::size_t t = argmax_[e * channels_ + ch];
            grad_in.values[(e * steps_ + t) * channels_ + ch] += grad_out(e, ch);
        }
    }
    return grad_in;
}

template class GlobalMaxPool<float>;
template class GlobalMaxPool<double>;

// ---------------------------------------------------------------------------
// Dense

template <typename T>
Dense<T>::Dense(std::size_t in_dim, std::size_t out_dim, Act act, Rng& rng)
    : w_(glorot_uniform<T>({in_dim, out_dim}, in_dim, out_dim, rng)),
      b_(Tensor<T>({out_dim})),
      gw_(Tensor<T>({in_dim, out_dim})),
      gb_(Tensor<T>({out_dim})),
      act_(act) {}

template <typename T>
Dense<T>::Dense(Tensor<T> w, Tensor<T> b, Act act)
    : w_(std::move(w)), b_(std::move(b)), act_(act) {
    gw_ = Tensor<T>({w_.dim(0), w_.dim(1)});
    gb_ = Tensor<T>({b_.numel()});
}

template <typename T>
Tensor<T> Dense<T>::forward(const Tensor<T>& x) {
    if (x.ndim() != 2 || x.dim(1) != w_.dim(0)) {
        throw DimensionError("dense expects input [B x " + std::to_string(w_.dim(0)) +
                             "], got " + x.shape_str());
    }
    x_ = x;
    Tensor<T> y({x.dim(0), w_.dim(1)});
    matmul_acc(x, w_, y);
    add_bias_rows(y, b_);
    for (auto& v : y.raw()) v = apply_act(v, act_);
    y_ = y;
    return y;
}

template <typename T>
Tensor<T> Dense<T>::backward(const Tensor<T>& grad_out) {
    Tensor<T> dpre = grad_out;
    switch (act_) {
        case Act::sigmoid:
            for (std::size_t n = 0; n < dpre.numel(); ++n) {
                dpre[n] *= y_[n] * (T(1) - y_[n]);
            }
            break;
        case Act::tanh:
            for (std::size_t n = 0; n < dpre.numel(); ++n) {
                dpre[n] *= T(1) - y_[n] * y_[n];
            }
            break;
        case Act::relu:
            for (std::size_t n = 0; n < dpre.numel(); ++n) {
                if (y_[n] <= T(0)) dpre[n] = T(0);
            }
            break;
        case Act::none:
            break;
    }
    matmul_tn_acc(x_, dpre, gw_);
    colsum_acc(dpre, gb_);
    Tensor<T> dx({x_.dim(0), x_.dim(1)});
    matmul_nt_acc(dpre, w_, dx);
    return dx;
}

template <typename T>
void Dense<T>::visit_params(const std::string& prefix, const ParamFn<T>& fn) {
    fn(prefix + ".weight", w_, gw_);
    fn(prefix + ".bias", b_, gb_);
}

template class Dense<float>;
template class Dense<double>;

// ---------------------------------------------------------------------------
// Dropout

template <typename T>
Dropout<T>::Dropout(double rate) : rate_(rate) {
    if (rate < 0.0 || rate >= 1.0) {
        throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
    }
}

template <typename T>
Tensor<T> Dropout<T>::forward(const Tensor<T>& x, bool training, Rng& rng) {
    if (!training || rate_ == 0.0) {
        identity_ = true;
        return x;
    }
    identity_ = false;
    mask_ = Tensor<T>(x.shape());
    const T scale = static_cast<T>(1.0 / (1.0 - rate_));
    Tensor<T> out = x;
    for (std::size_t n = 0; n < x.numel(); ++n) {
        const bool keep = rng.uniform() >= rate_;
        mask_[n] = keep ? scale : T(0);
        out[n] *= mask_[n];
    }
    return out;
}

template <typename T>
Tensor<T> Dropout<T>::backward(const Tensor<T>& grad_out) {
    if (identity_) return grad_out;
    Tensor<T> g = grad_out;
    for (std::size_t n = 0; n < g.numel(); ++n) g[n] *= mask_[n];
    return g;
}

template class Dropout<float>;
template class Dropout<double>;

// ---------------------------------------------------------------------------
// concat / split

template <typename T>
Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b) {
    if (b.empty()) return a;
    if (a.empty()) return b;
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(0) != b.dim(0)) {
        throw DimensionError("concat batch mismatch: " + a.shape_str() + " vs " +
                             b.shape_str());
    }
    const std::size_t rows = a.dim(0), p = a.dim(1), q = b.dim(1);
    Tensor<T> out({rows, p + q});
    for (std::size_t i = 0; i < rows; ++i) {
        std::memcpy(out.data() + i * (p + q), a.data() + i * p, p * sizeof(T));
        std::memcpy(out.data() + i * (p + q) + p, b.data() + i * q, q * sizeof(T));
    }
    return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_cols(const Tensor<T>& grad, std::size_t left,
                                           std::size_t right) {
    if (grad.ndim() != 2 || grad.dim(1) != left + right) {
        throw DimensionError("split_cols expects [B x " + std::to_string(left + right) +
                             "], got " + grad.shape_str());
    }
    const std::size_t rows = grad.dim(0);
    Tensor<T> a({rows, left}), b({rows, right});
    for (std::size_t i = 0; i < rows; ++i) {
        std::memcpy(a.data() + i * left, grad.data() + i * (left + right), left * sizeof(T));
        std::memcpy(b.data() + i * right, grad.data() + i * (left + right) + left,
                    right * sizeof(T));
    }
    return {std::move(a), std::move(b)};
}

template Tensor<float> concat_cols(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> concat_cols(const Tensor<double>&, const Tensor<double>&);
template std::pair<Tensor<float>, Tensor<float>> split_cols(const Tensor<float>&, std::size_t,
                                                            std::size_t);
template std::pair<Tensor<double>, Tensor<double>> split_cols(const Tensor<double>&, std::size_t,
                                                              std::size_t);

}  // namespace phenonet
