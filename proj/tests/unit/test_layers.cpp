#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "phenonet/errors.hpp"
#include "phenonet/layers.hpp"
#include "phenonet/rng.hpp"
#include "phenonet/tensor.hpp"

#include "../support/layer_gradcheck.hpp"

using namespace phenonet;
using testsupport::random_batch;
using testsupport::random_mat;

namespace {

LstmParams<double> zero_lstm(std::size_t d, std::size_t h) {
    LstmParams<double> p;
    p.w_f = Tensor<double>({d, h});
    p.w_i = Tensor<double>({d, h});
    p.w_o = Tensor<double>({d, h});
    p.w_c = Tensor<double>({d, h});
    p.u_f = Tensor<double>({h, h});
    p.u_i = Tensor<double>({h, h});
    p.u_o = Tensor<double>({h, h});
    p.u_c = Tensor<double>({h, h});
    p.b_f = Tensor<double>({h});
    p.b_i = Tensor<double>({h});
    p.b_o = Tensor<double>({h});
    p.b_c = Tensor<double>({h});
    return p;
}

GruParams<double> zero_gru(std::size_t d, std::size_t h) {
    GruParams<double> p;
    p.w_z = Tensor<double>({d, h});
    p.w_r = Tensor<double>({d, h});
    p.w_h = Tensor<double>({d, h});
    p.u_z = Tensor<double>({h, h});
    p.u_r = Tensor<double>({h, h});
    p.u_h = Tensor<double>({h, h});
    p.b_z = Tensor<double>({h});
    p.b_r = Tensor<double>({h});
    p.b_h = Tensor<double>({h});
    return p;
}

Tensor<double> vec(std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor<double>({n}, std::move(v));
}

SequenceBatch<double> batch_1(std::vector<std::vector<double>> steps, std::size_t length) {
    SequenceBatch<double> out;
    const std::size_t t = steps.size(), c = steps[0].size();
    out.values = Tensor<double>({1, t, c});
    out.lengths = {length};
    for (std::size_t s = 0; s < t; ++s) {
        for (std::size_t ch = 0; ch < c; ++ch) out.values(0, s, ch) = steps[s][ch];
    }
    return out;
}

}  // namespace

TEST_CASE("glorot init stays inside the fan-in/fan-out bound") {
    Rng rng(11);
    const auto w = glorot_uniform<double>({20, 30}, 20, 30, rng);
    const double limit = std::sqrt(6.0 / 50.0);
    double spread = 0.0;
    for (const double v : w.raw()) {
        CHECK(std::abs(v) <= limit);
        spread = std::max(spread, std::abs(v));
    }
    CHECK(spread > 0.5 * limit);  // actually fills the range
}

TEST_CASE("lstm_step with all-zero parameters yields zero state") {
    const auto p = zero_lstm(3, 4);
    const auto x = vec({1.0, -2.0, 0.5});
    const auto h0 = Tensor<double>({4});
    const auto c0 = Tensor<double>({4});
    const auto [h, c] = lstm_step(x, h0, c0, p);
    for (std::size_t j = 0; j < 4; ++j) {
        CHECK(h[j] == doctest::Approx(0.0));
        CHECK(c[j] == doctest::Approx(0.0));
    }
}

TEST_CASE("lstm_step output stays strictly inside (-1, 1)") {
    Rng rng(5);
    const auto p = LstmParams<double>::init(3, 6, rng);
    for (int rep = 0; rep < 10; ++rep) {
        Tensor<double> x({3}), h0({6}), c0({6});
        for (auto& v : x.raw()) v = 5.0 * rng.normal();
        for (auto& v : h0.raw()) v = rng.normal();
        for (auto& v : c0.raw()) v = rng.normal();
        const auto [h, c] = lstm_step(x, h0, c0, p);
        for (std::size_t j = 0; j < 6; ++j) CHECK(std::abs(h[j]) < 1.0);
    }
}

TEST_CASE("gru_step with a hugely negative update bias keeps the previous state") {
    Rng rng(9);
    auto p = GruParams<double>::init(3, 4, rng);
    p.b_z.fill(-50.0);
    Tensor<double> x({3}), h0({4});
    for (auto& v : x.raw()) v = rng.normal();
    for (auto& v : h0.raw()) v = rng.normal();
    const auto h = gru_step(x, h0, p);
    for (std::size_t j = 0; j < 4; ++j) CHECK(h[j] == doctest::Approx(h0[j]).epsilon(1e-9));
}

TEST_CASE("gru_step with zero parameters halves the previous state") {
    const auto p = zero_gru(2, 3);
    const auto x = vec({1.0, 2.0});
    const auto h0 = vec({0.4, -0.6, 1.0});
    const auto h = gru_step(x, h0, p);
    for (std::size_t j = 0; j < 3; ++j) CHECK(h[j] == doctest::Approx(0.5 * h0[j]));
}

TEST_CASE("recurrent step shape mismatches throw") {
    Rng rng(3);
    const auto lp = LstmParams<double>::init(3, 4, rng);
    const auto gp = GruParams<double>::init(3, 4, rng);
    CHECK_THROWS_AS(lstm_step(vec({1.0, 2.0}), Tensor<double>({4}), Tensor<double>({4}), lp),
                    DimensionError);
    CHECK_THROWS_AS(gru_step(vec({1.0, 2.0, 3.0}), Tensor<double>({2}), gp), DimensionError);
}

TEST_CASE("LstmSeq matches repeated lstm_step application") {
    Rng rng(21);
    const auto p = LstmParams<double>::init(2, 3, rng);
    auto in = random_batch(rng, 1, 4, 2, /*full_lengths=*/true);
    LstmSeq<double> seq(p);
    const auto out = seq.forward(in);

    Tensor<double> h({3}), c({3});
    for (std::size_t t = 0; t < 4; ++t) {
        Tensor<double> x({2});
        for (std::size_t ch = 0; ch < 2; ++ch) x[ch] = in.values(0, t, ch);
        const auto hc = lstm_step(x, h, c, p);
        h = hc.first;
        c = hc.second;
        for (std::size_t j = 0; j < 3; ++j) {
            CHECK(out.values(0, t, j) == doctest::Approx(h[j]).epsilon(1e-12));
        }
    }
}

TEST_CASE("GruSeq matches repeated gru_step application") {
    Rng rng(22);
    const auto p = GruParams<double>::init(3, 2, rng);
    auto in = random_batch(rng, 1, 5, 3, /*full_lengths=*/true);
    GruSeq<double> seq(p);
    const auto out = seq.forward(in);

    Tensor<double> h({2});
    for (std::size_t t = 0; t < 5; ++t) {
        Tensor<double> x({3});
        for (std::size_t ch = 0; ch < 3; ++ch) x[ch] = in.values(0, t, ch);
        h = gru_step(x, h, p);
        for (std::size_t j = 0; j < 2; ++j) {
            CHECK(out.values(0, t, j) == doctest::Approx(h[j]).epsilon(1e-12));
        }
    }
}

TEST_CASE("batched recurrent forward equals per-example runs") {
    Rng rng(23);
    const auto p = LstmParams<double>::init(3, 4, rng);
    auto in = random_batch(rng, 3, 5, 3);
    LstmSeq<double> seq(p);
    const auto out = seq.forward(in);
    for (std::size_t e = 0; e < 3; ++e) {
        SequenceBatch<double> one;
        one.values = Tensor<double>({1, 5, 3});
        one.lengths = {in.lengths[e]};
        for (std::size_t t = 0; t < 5; ++t) {
            for (std::size_t ch = 0; ch < 3; ++ch) one.values(0, t, ch) = in.values(e, t, ch);
        }
        LstmSeq<double> solo(p);
        const auto ref = solo.forward(one);
        for (std::size_t t = 0; t < 5; ++t) {
            for (std::size_t j = 0; j < 4; ++j) {
                CHECK(out.values(e, t, j) == doctest::Approx(ref.values(0, t, j)).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("recurrent outputs at PAD steps are zero and state freezes at the length") {
    Rng rng(24);
    const auto p = GruParams<double>::init(2, 3, rng);
    auto in = random_batch(rng, 1, 2, 2, /*full_lengths=*/true);

    SequenceBatch<double> padded;
    padded.values = Tensor<double>({1, 5, 2});
    padded.lengths = {2};
    for (std::size_t t = 0; t < 2; ++t) {
        for (std::size_t ch = 0; ch < 2; ++ch) padded.values(0, t, ch) = in.values(0, t, ch);
    }

    GruSeq<double> a(p), b(p);
    const auto short_out = a.forward(in);
    const auto long_out = b.forward(padded);
    for (std::size_t t = 0; t < 2; ++t) {
        for (std::size_t j = 0; j < 3; ++j) {
            CHECK(long_out.values(0, t, j) ==
                  doctest::Approx(short_out.values(0, t, j)).epsilon(1e-12));
        }
    }
    for (std::size_t t = 2; t < 5; ++t) {
        for (std::size_t j = 0; j < 3; ++j) CHECK(long_out.values(0, t, j) == 0.0);
    }
}

TEST_CASE("reversed cell on full-length input mirrors the forward cell") {
    Rng rng(25);
    const auto p = LstmParams<double>::init(2, 3, rng);
    auto in = random_batch(rng, 2, 4, 2, /*full_lengths=*/true);

    SequenceBatch<double> flipped;
    flipped.values = Tensor<double>({2, 4, 2});
    flipped.lengths = in.lengths;
    for (std::size_t e = 0; e < 2; ++e) {
        for (std::size_t t = 0; t < 4; ++t) {
            for (std::size_t ch = 0; ch < 2; ++ch) {
                flipped.values(e, t, ch) = in.values(e, 3 - t, ch);
            }
        }
    }

    LstmSeq<double> rev(p, /*reverse=*/true);
    LstmSeq<double> fwd(p, /*reverse=*/false);
    const auto out_rev = rev.forward(in);
    const auto out_fwd = fwd.forward(flipped);
    for (std::size_t e = 0; e < 2; ++e) {
        for (std::size_t t = 0; t < 4; ++t) {
            for (std::size_t j = 0; j < 3; ++j) {
                CHECK(out_rev.values(e, t, j) ==
                      doctest::Approx(out_fwd.values(e, 3 - t, j)).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("reversed cell with masking starts at the last valid step") {
    Rng rng(26);
    const auto p = LstmParams<double>::init(2, 3, rng);
    auto in = random_batch(rng, 1, 4, 2, /*full_lengths=*/true);
    in.lengths = {2};
    for (std::size_t t = 2; t < 4; ++t) {
        for (std::size_t ch = 0; ch < 2; ++ch) in.values(0, t, ch) = 0.0;
    }

    LstmSeq<double> rev(p, /*reverse=*/true);
    const auto out = rev.forward(in);

    // oracle: step through positions 1 then 0 by hand
    Tensor<double> h({3}), c({3});
    Tensor<double> x1({2}), x0({2});
    for (std::size_t ch = 0; ch < 2; ++ch) {
        x1[ch] = in.values(0, 1, ch);
        x0[ch] = in.values(0, 0, ch);
    }
    auto hc = lstm_step(x1, h, c, p);
    for (std::size_t j = 0; j < 3; ++j) {
        CHECK(out.values(0, 1, j) == doctest::Approx(hc.first[j]).epsilon(1e-12));
    }
    hc = lstm_step(x0, hc.first, hc.second, p);
    for (std::size_t j = 0; j < 3; ++j) {
        CHECK(out.values(0, 0, j) == doctest::Approx(hc.first[j]).epsilon(1e-12));
    }
    for (std::size_t t = 2; t < 4; ++t) {
        for (std::size_t j = 0; j < 3; ++j) CHECK(out.values(0, t, j) == 0.0);
    }
}

TEST_CASE("bidirectional output concatenates forward then backward channels") {
    Rng rng(27);
    Bidirectional<double> bi(CellKind::gru, 2, 3, rng);
    auto in = random_batch(rng, 2, 4, 2);
    const auto out = bi.forward(in);
    CHECK(out.channels() == 6);
    CHECK(out.steps() == 4);
    CHECK(out.batch() == 2);

    // zeroing the backward half leaves the forward channels untouched and
    // turns the last H channels into exact zeros
    Tensor<double> fwd_half({2, 4, 3});
    for (std::size_t e = 0; e < 2; ++e) {
        for (std::size_t t = 0; t < 4; ++t) {
            for (std::size_t j = 0; j < 3; ++j) fwd_half(e, t, j) = out.values(e, t, j);
        }
    }
    bi.visit_params("m", [](const std::string& name, Tensor<double>& p, Tensor<double>&) {
        if (name.find(".bwd") != std::string::npos) p.fill(0.0);
    });
    const auto out2 = bi.forward(in);
    for (std::size_t e = 0; e < 2; ++e) {
        for (std::size_t t = 0; t < 4; ++t) {
            for (std::size_t j = 0; j < 3; ++j) {
                CHECK(out2.values(e, t, j) == doctest::Approx(fwd_half(e, t, j)).epsilon(1e-12));
                CHECK(out2.values(e, t, 3 + j) == 0.0);
            }
        }
    }
}

TEST_CASE("bidirectional handles a single timestep") {
    Rng rng(28);
    Bidirectional<double> bi(CellKind::lstm, 3, 2, rng);
    auto in = random_batch(rng, 2, 1, 3, /*full_lengths=*/true);
    const auto out = bi.forward(in);
    CHECK(out.steps() == 1);
    CHECK(out.channels() == 4);
    bool any_nonzero = false;
    for (const double v : out.values.raw()) any_nonzero = any_nonzero || v != 0.0;
    CHECK(any_nonzero);
}

TEST_CASE("conv1d reproduces the worked example") {
    Conv1dParams<double> p;
    p.filters = Tensor<double>({1, 2, 2}, {1.0, 0.0, 0.0, 1.0});
    p.bias = Tensor<double>({1});
    Conv1d<double> conv(p);
    auto in = batch_1({{1.0, 2.0}, {3.0, 4.0}, {5.0, 6.0}}, 3);
    const auto out = conv.forward(in);
    CHECK(out.steps() == 2);
    CHECK(out.channels() == 1);
    CHECK(out.values(0, 0, 0) == doctest::Approx(5.0));
    CHECK(out.values(0, 1, 0) == doctest::Approx(9.0));
}

TEST_CASE("conv1d with zero filters and bias emits zeros") {
    Conv1dParams<double> p;
    p.filters = Tensor<double>({3, 2, 2});
    p.bias = Tensor<double>({3});
    Conv1d<double> conv(p);
    Rng rng(31);
    auto in = random_batch(rng, 2, 4, 2, /*full_lengths=*/true);
    const auto out = conv.forward(in);
    for (const double v : out.values.raw()) CHECK(v == 0.0);
}

TEST_CASE("conv1d rejects sequences shorter than the filter width") {
    Rng rng(32);
    Conv1d<double> conv(2, 3, 4, rng);
    auto in = random_batch(rng, 1, 2, 2, /*full_lengths=*/true);
    CHECK_THROWS_AS(conv.forward(in), DimensionError);
}

TEST_CASE("conv1d rejects mismatched input channels") {
    Rng rng(33);
    Conv1d<double> conv(3, 2, 4, rng);
    auto in = random_batch(rng, 1, 5, 2, /*full_lengths=*/true);
    CHECK_THROWS_AS(conv.forward(in), DimensionError);
}

TEST_CASE("conv1d clamps per-example valid lengths and zeroes the tail") {
    Rng rng(34);
    Conv1d<double> conv(2, 3, 2, rng);
    auto in = random_batch(rng, 2, 5, 2, /*full_lengths=*/true);
    in.lengths = {5, 2};
    for (std::size_t t = 2; t < 5; ++t) {
        in.values(1, t, 0) = 0.0;
        in.values(1, t, 1) = 0.0;
    }
    const auto out = conv.forward(in);
    CHECK(out.steps() == 3);
    CHECK(out.lengths[0] == 3);
    CHECK(out.lengths[1] == 1);  // shorter than the width still yields one window
    for (std::size_t t = 1; t < 3; ++t) {
        for (std::size_t f = 0; f < 2; ++f) CHECK(out.values(1, t, f) == 0.0);
    }
    bool first_window_nonzero = false;
    for (std::size_t f = 0; f < 2; ++f) {
        first_window_nonzero = first_window_nonzero || out.values(1, 0, f) != 0.0;
    }
    CHECK(first_window_nonzero);
}

TEST_CASE("conv1d agrees with a direct triple-loop oracle") {
    for (std::uint64_t seed = 100; seed < 120; ++seed) {
        Rng rng(seed);
        const std::size_t t = 2 + rng.below(5);
        const std::size_t k = 1 + rng.below(std::min<std::size_t>(t, 3));
        const std::size_t b = 1 + rng.below(3), c = 1 + rng.below(3), f = 1 + rng.below(3);
        Rng init = rng.child("init");
        Conv1d<double> conv(c, k, f, init);
        auto in = random_batch(rng, b, t, c);
        const auto out = conv.forward(in);
        const auto& params = conv.params();
        const std::size_t t_out = t - k + 1;
        REQUIRE(out.steps() == t_out);
        for (std::size_t e = 0; e < b; ++e) {
            const std::size_t len = in.lengths[e];
            const std::size_t valid =
                std::min(t_out, std::max<std::size_t>(1, len >= k ? len - k + 1 : 1));
            REQUIRE(out.lengths[e] == valid);
            for (std::size_t pos = 0; pos < t_out; ++pos) {
                for (std::size_t fi = 0; fi < f; ++fi) {
                    double expect = 0.0;
                    if (pos < valid) {
                        expect = params.bias[fi];
                        for (std::size_t kk = 0; kk < k; ++kk) {
                            for (std::size_t ch = 0; ch < c; ++ch) {
                                expect += params.filters(fi, kk, ch) *
                                          in.values(e, pos + kk, ch);
                            }
                        }
                    }
                    CHECK(out.values(e, pos, fi) == doctest::Approx(expect).epsilon(1e-12));
                }
            }
        }
    }
}

TEST_CASE("global max pool reproduces the worked example") {
    GlobalMaxPool<double> pool;
    auto in = batch_1({{1.0, 5.0}, {3.0, 2.0}}, 2);
    const auto out = pool.forward(in);
    CHECK(out.dim(0) == 1);
    CHECK(out.dim(1) == 2);
    CHECK(out(0, 0) == doctest::Approx(3.0));
    CHECK(out(0, 1) == doctest::Approx(5.0));
}

TEST_CASE("global max pool ignores positions past the valid length") {
    GlobalMaxPool<double> pool;
    auto in = batch_1({{1.0}, {9.0}, {4.0}}, 1);  // only step 0 is valid
    const auto out = pool.forward(in);
    CHECK(out(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("global max pool routes gradient to the earliest maximum") {
    GlobalMaxPool<double> pool;
    auto in = batch_1({{2.0}, {2.0}, {1.0}}, 3);
    pool.forward(in);
    Tensor<double> g({1, 1}, {7.0});
    const auto gin = pool.backward(g);
    CHECK(gin.values(0, 0, 0) == doctest::Approx(7.0));
    CHECK(gin.values(0, 1, 0) == 0.0);
    CHECK(gin.values(0, 2, 0) == 0.0);
}

TEST_CASE("global max pool rejects an empty temporal axis") {
    GlobalMaxPool<double> pool;
    SequenceBatch<double> in;
    in.values = Tensor<double>({2, 0, 3});
    in.lengths = {0, 0};
    CHECK_THROWS_AS(pool.forward(in), DimensionError);
}

TEST_CASE("global max pool agrees with a direct oracle") {
    for (std::uint64_t seed = 300; seed < 320; ++seed) {
        Rng rng(seed);
        const std::size_t b = 1 + rng.below(4), t = 1 + rng.below(6), c = 1 + rng.below(4);
        auto in = random_batch(rng, b, t, c);
        GlobalMaxPool<double> pool;
        const auto out = pool.forward(in);
        for (std::size_t e = 0; e < b; ++e) {
            const std::size_t eff = std::max<std::size_t>(1, std::min(in.lengths[e], t));
            for (std::size_t ch = 0; ch < c; ++ch) {
                double best = in.values(e, 0, ch);
                for (std::size_t s = 1; s < eff; ++s) best = std::max(best, in.values(e, s, ch));
                CHECK(out(e, ch) == doctest::Approx(best).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("dense with zero weights gives the activation of the bias") {
    Dense<double> d(Tensor<double>({3, 2}), Tensor<double>({2}), Act::sigmoid);
    Tensor<double> x({2, 3}, {1.0, -1.0, 2.0, 0.5, 0.0, -2.0});
    const auto y = d.forward(x);
    for (const double v : y.raw()) CHECK(v == doctest::Approx(0.5));
}

TEST_CASE("dense with the identity matrix and no activation passes input through") {
    Tensor<double> eye({3, 3});
    for (std::size_t i = 0; i < 3; ++i) eye(i, i) = 1.0;
    Dense<double> d(eye, Tensor<double>({3}), Act::none);
    Tensor<double> x({2, 3}, {1.0, -1.0, 2.0, 0.5, 0.0, -2.0});
    const auto y = d.forward(x);
    for (std::size_t n = 0; n < x.numel(); ++n) CHECK(y[n] == doctest::Approx(x[n]));
}

TEST_CASE("dense rejects a mismatched input width") {
    Rng rng(41);
    Dense<double> d(4, 2, Act::none, rng);
    Tensor<double> x({2, 3});
    CHECK_THROWS_AS(d.forward(x), DimensionError);
}

TEST_CASE("dropout is the identity when disabled") {
    Rng rng(42);
    auto x = random_mat(rng, 4, 5);

    Dropout<double> off(0.0);
    const auto y0 = off.forward(x, true, rng);
    for (std::size_t n = 0; n < x.numel(); ++n) CHECK(y0[n] == x[n]);

    Dropout<double> eval_only(0.5);
    const auto y1 = eval_only.forward(x, false, rng);
    for (std::size_t n = 0; n < x.numel(); ++n) CHECK(y1[n] == x[n]);
}

TEST_CASE("dropout rejects rates outside [0, 1)") {
    CHECK_THROWS_AS(Dropout<double>(1.0), ConfigError);
    CHECK_THROWS_AS(Dropout<double>(-0.1), ConfigError);
    CHECK_NOTHROW(Dropout<double>(0.0));
    CHECK_NOTHROW(Dropout<double>(0.999));
}

TEST_CASE("dropout zeroes about the requested fraction and preserves the mean") {
    Rng rng(43);
    Tensor<double> x({100, 100});
    x.fill(1.0);
    Dropout<double> drop(0.5);
    const auto y = drop.forward(x, true, rng);
    std::size_t zeros = 0;
    double total = 0.0;
    for (const double v : y.raw()) {
        if (v == 0.0) {
            ++zeros;
        } else {
            CHECK(v == doctest::Approx(2.0));  // survivors scaled by 1/(1-rate)
        }
        total += v;
    }
    const double zero_frac = double(zeros) / double(x.numel());
    CHECK(zero_frac > 0.47);
    CHECK(zero_frac < 0.53);
    CHECK(total / double(x.numel()) == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("dropout backward applies the same mask as forward") {
    Rng rng(44);
    auto x = random_mat(rng, 6, 7);
    Dropout<double> drop(0.4);
    const auto y = drop.forward(x, true, rng);
    Tensor<double> g({6, 7});
    g.fill(1.0);
    const auto gin = drop.backward(g);
    for (std::size_t n = 0; n < x.numel(); ++n) {
        if (y[n] == 0.0) {
            CHECK(gin[n] == 0.0);
        } else {
            CHECK(gin[n] == doctest::Approx(1.0 / 0.6));
        }
    }
}

TEST_CASE("concat_cols glues columns and split_cols undoes it") {
    Tensor<double> a({2, 2}, {1.0, 2.0, 3.0, 4.0});
    Tensor<double> b({2, 1}, {5.0, 6.0});
    const auto joined = concat_cols(a, b);
    REQUIRE(joined.dim(1) == 3);
    CHECK(joined(0, 0) == 1.0);
    CHECK(joined(0, 1) == 2.0);
    CHECK(joined(0, 2) == 5.0);
    CHECK(joined(1, 0) == 3.0);
    CHECK(joined(1, 1) == 4.0);
    CHECK(joined(1, 2) == 6.0);

    const auto [ga, gb] = split_cols(joined, 2, 1);
    for (std::size_t n = 0; n < a.numel(); ++n) CHECK(ga[n] == a[n]);
    for (std::size_t n = 0; n < b.numel(); ++n) CHECK(gb[n] == b[n]);
}

TEST_CASE("concat_cols with an empty side returns the other side") {
    Tensor<double> a({2, 2}, {1.0, 2.0, 3.0, 4.0});
    Tensor<double> empty;
    const auto joined = concat_cols(a, empty);
    for (std::size_t n = 0; n < a.numel(); ++n) CHECK(joined[n] == a[n]);
}

TEST_CASE("concat_cols rejects mismatched batch sizes") {
    Tensor<double> a({2, 2});
    Tensor<double> b({3, 1});
    CHECK_THROWS_AS(concat_cols(a, b), DimensionError);
}

TEST_CASE("embedding gathers rows, zeroes PAD, and reports lengths") {
    Tensor<double> table({4, 2}, {0.0, 0.0, 10.0, 20.0, 1.0, 2.0, 3.0, 4.0});
    EmbeddingLayer<double> emb(table, false);
    EncodedNote note;
    note.ids = {2, 3, 0, 0};
    note.original_length = 2;
    const auto out = emb.forward({note});
    CHECK(out.lengths[0] == 2);
    CHECK(out.values(0, 0, 0) == 1.0);
    CHECK(out.values(0, 0, 1) == 2.0);
    CHECK(out.values(0, 1, 0) == 3.0);
    CHECK(out.values(0, 1, 1) == 4.0);
    for (std::size_t t = 2; t < 4; ++t) {
        CHECK(out.values(0, t, 0) == 0.0);
        CHECK(out.values(0, t, 1) == 0.0);
    }
}

TEST_CASE("embedding rejects ragged batches and out-of-range ids") {
    Tensor<double> table({4, 2});
    EmbeddingLayer<double> emb(table, false);
    EncodedNote a, b;
    a.ids = {1, 2};
    a.original_length = 2;
    b.ids = {1, 2, 3};
    b.original_length = 3;
    CHECK_THROWS_AS(emb.forward({a, b}), DimensionError);
    EncodedNote oob;
    oob.ids = {9, 0};
    oob.original_length = 1;
    CHECK_THROWS_AS(emb.forward({oob}), IndexError);
}

TEST_CASE("embedding backward scatter-adds everywhere except the frozen PAD row") {
    Tensor<double> table({4, 3});
    EmbeddingLayer<double> emb(table, true);
    EncodedNote note;
    note.ids = {2, 2, 0};
    note.original_length = 2;
    emb.forward({note});
    SequenceBatch<double> g;
    g.values = Tensor<double>({1, 3, 3});
    g.values.fill(1.0);
    g.lengths = {2};
    emb.backward(g);

    std::size_t visited = 0;
    emb.visit_params("emb", [&](const std::string& name, Tensor<double>&, Tensor<double>& gw) {
        ++visited;
        CHECK(name == "emb.weight");
        for (std::size_t j = 0; j < 3; ++j) {
            CHECK(gw(0, j) == 0.0);  // PAD row untouched
            CHECK(gw(1, j) == 0.0);  // unreferenced row
            CHECK(gw(2, j) == 2.0);  // referenced twice
            CHECK(gw(3, j) == 0.0);
        }
    });
    CHECK(visited == 1);
}

TEST_CASE("frozen embedding exposes no parameters") {
    Tensor<double> table({4, 3});
    EmbeddingLayer<double> emb(table, false);
    std::size_t visited = 0;
    emb.visit_params("emb", [&](const std::string&, Tensor<double>&, Tensor<double>&) {
        ++visited;
    });
    CHECK(visited == 0);
}

// ---------------------------------------------------------------------------
// finite-difference gradient checks (f64, eps 1e-5, relative error < 1e-4)

TEST_CASE("lstm gradients agree with central differences") {
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        CHECK(testsupport::lstm_gradcheck(seed, false) < 1e-4);
        CHECK(testsupport::lstm_gradcheck(seed + 40, true) < 1e-4);
    }
}

TEST_CASE("gru gradients agree with central differences") {
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        CHECK(testsupport::gru_gradcheck(seed, false) < 1e-4);
        CHECK(testsupport::gru_gradcheck(seed + 40, true) < 1e-4);
    }
}

TEST_CASE("bidirectional gradients agree with central differences") {
    for (std::uint64_t seed = 1; seed <= 2; ++seed) {
        CHECK(testsupport::bidir_gradcheck(CellKind::lstm, seed) < 1e-4);
        CHECK(testsupport::bidir_gradcheck(CellKind::gru, seed + 60) < 1e-4);
    }
}

TEST_CASE("conv1d gradients agree with central differences") {
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
        CHECK(testsupport::conv_gradcheck(seed) < 1e-4);
    }
}

TEST_CASE("global max pool gradients agree with central differences") {
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
        CHECK(testsupport::gmp_gradcheck(seed) < 1e-4);
    }
}

TEST_CASE("dense gradients agree with central differences for every activation") {
    for (std::uint64_t seed = 1; seed <= 2; ++seed) {
        CHECK(testsupport::dense_gradcheck(seed, Act::sigmoid) < 1e-4);
        CHECK(testsupport::dense_gradcheck(seed + 10, Act::tanh) < 1e-4);
        CHECK(testsupport::dense_gradcheck(seed + 20, Act::relu) < 1e-4);
        CHECK(testsupport::dense_gradcheck(seed + 30, Act::none) < 1e-4);
    }
}

TEST_CASE("embedding gradients agree with central differences") {
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        CHECK(testsupport::embedding_gradcheck(seed) < 1e-4);
    }
}

TEST_CASE("dropout gradients agree with central differences") {
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        CHECK(testsupport::dropout_gradcheck(seed) < 1e-4);
    }
}
