#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "doctest.h"
#include "phenonet/errors.hpp"
#include "phenonet/gradcheck.hpp"
#include "phenonet/train.hpp"
#include "phenonet/zoo.hpp"

using namespace phenonet;

namespace {

const Architecture kAllArchs[] = {Architecture::cnn,      Architecture::lstm,
                                  Architecture::gru,      Architecture::bilstm,
                                  Architecture::bigru,    Architecture::cnn_lstm,
                                  Architecture::s_conv_nm, Architecture::is_conv_nm};

template <typename T>
Tensor<T> tiny_table(Rng& rng, std::size_t v, std::size_t d) {
    auto t = glorot_uniform<T>({v, d}, v, d, rng);
    for (std::size_t j = 0; j < d; ++j) t(Vocab::kPad, j) = T(0);
    return t;
}

std::vector<EncodedNote> random_notes(Rng& rng, std::size_t b, std::size_t t, std::size_t v,
                                      std::size_t min_len = 1) {
    std::vector<EncodedNote> notes(b);
    for (auto& n : notes) {
        n.original_length = min_len + rng.below(t - min_len + 1);
        n.ids.assign(t, Vocab::kPad);
        for (std::size_t s = 0; s < n.original_length; ++s) {
            n.ids[s] = static_cast<std::uint32_t>(1 + rng.below(v - 1));
        }
    }
    return notes;
}

LabelMatrix random_targets(Rng& rng, std::size_t b, std::size_t c) {
    LabelMatrix m(b, c);
    for (auto& v : m.data) v = rng.uniform() < 0.5 ? 0 : 1;
    return m;
}

ModelSpec micro_spec(Architecture arch) {
    ModelSpec spec;
    spec.architecture = arch;
    spec.cell = CellKind::gru;
    spec.hidden_units = 3;
    spec.conv_filters = 2;
    spec.filter_width = 2;
    spec.extra_branch_dense = 3;
    spec.dropout_rate = 0.0;  // keep gradients deterministic
    spec.output_units = 2;
    return spec;
}

// closed-form trainable parameter counts (frozen embeddings)
std::size_t lstm_params(std::size_t d, std::size_t h) { return 4 * (d * h + h * h + h); }
std::size_t gru_params(std::size_t d, std::size_t h) { return 3 * (d * h + h * h + h); }
std::size_t cell_params(CellKind c, std::size_t d, std::size_t h) {
    return c == CellKind::lstm ? lstm_params(d, h) : gru_params(d, h);
}
std::size_t conv_params(std::size_t c_in, std::size_t k, std::size_t f) {
    return f * (k * c_in + 1);
}
std::size_t dense_params(std::size_t in, std::size_t out) { return in * out + out; }

std::size_t expected_params(const ModelSpec& s, std::size_t d) {
    const std::size_t h = s.hidden_units, f = s.conv_filters, k = s.filter_width;
    const std::size_t c = s.output_units, e = s.extra_branch_dense;
    switch (s.architecture) {
        case Architecture::cnn: return conv_params(d, k, f) + dense_params(f, c);
        case Architecture::lstm: return lstm_params(d, h) + dense_params(h, c);
        case Architecture::gru: return gru_params(d, h) + dense_params(h, c);
        case Architecture::bilstm: return 2 * lstm_params(d, h) + dense_params(2 * h, c);
        case Architecture::bigru: return 2 * gru_params(d, h) + dense_params(2 * h, c);
        case Architecture::cnn_lstm:
            return conv_params(d, k, f) + lstm_params(f, h) + dense_params(h, c);
        case Architecture::s_conv_nm:
            return 2 * cell_params(s.cell, d, h) + conv_params(2 * h, k, f) +
                   dense_params(f, c);
        case Architecture::is_conv_nm:
            return 2 * cell_params(s.cell, d, h) + conv_params(2 * h, k, f) +
                   conv_params(d, k, f) + dense_params(f, e) + dense_params(f + e, c);
    }
    return 0;
}

}  // namespace

TEST_CASE("architecture names round-trip") {
    for (const auto arch : kAllArchs) {
        CHECK(architecture_from_string(to_string(arch)) == arch);
    }
    CHECK_THROWS_AS(architecture_from_string("transformer"), ConfigError);
}

TEST_CASE("model spec JSON round-trips and validates") {
    ModelSpec spec = micro_spec(Architecture::is_conv_nm);
    spec.cell = CellKind::lstm;
    spec.embeddings_trainable = true;
    const auto doc = model_spec_to_json(spec);
    const auto back = model_spec_from_json(doc);
    CHECK(back.architecture == spec.architecture);
    CHECK(back.cell == spec.cell);
    CHECK(back.hidden_units == spec.hidden_units);
    CHECK(back.conv_filters == spec.conv_filters);
    CHECK(back.filter_width == spec.filter_width);
    CHECK(back.extra_branch_dense == spec.extra_branch_dense);
    CHECK(back.dropout_rate == spec.dropout_rate);
    CHECK(back.output_units == spec.output_units);
    CHECK(back.embeddings_trainable == spec.embeddings_trainable);

    CHECK_THROWS_AS(model_spec_from_json(nlohmann::ordered_json::parse("{}")), ParseError);
    ModelSpec bad = spec;
    bad.output_units = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = spec;
    bad.dropout_rate = 1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("every architecture runs forward with the right output shape") {
    Rng seed_rng(7);
    for (const auto arch : kAllArchs) {
        Rng rng(101);
        auto table = tiny_table<double>(rng, 9, 4);
        Classifier<double> model(micro_spec(arch), table, rng);
        Rng note_rng(55);
        const auto notes = random_notes(note_rng, 3, 6, 9);
        const auto probs = model.forward(notes);
        REQUIRE(probs.dim(0) == 3);
        REQUIRE(probs.dim(1) == 2);
        for (const double p : probs.raw()) {
            CHECK(p > 0.0);
            CHECK(p < 1.0);
        }
    }
}

TEST_CASE("same seed builds identical parameters") {
    for (const auto arch : {Architecture::s_conv_nm, Architecture::is_conv_nm}) {
        Rng rng_a(33), rng_b(33), table_rng(9);
        auto table = tiny_table<double>(table_rng, 8, 3);
        Classifier<double> a(micro_spec(arch), table, rng_a);
        Classifier<double> b(micro_spec(arch), table, rng_b);
        std::vector<double> flat_a, flat_b;
        a.visit_params([&](const std::string&, Tensor<double>& p, Tensor<double>&) {
            flat_a.insert(flat_a.end(), p.raw().begin(), p.raw().end());
        });
        b.visit_params([&](const std::string&, Tensor<double>& p, Tensor<double>&) {
            flat_b.insert(flat_b.end(), p.raw().begin(), p.raw().end());
        });
        REQUIRE(flat_a.size() == flat_b.size());
        CHECK(flat_a == flat_b);
    }
}

TEST_CASE("parameter counts match the closed-form formulas") {
    Rng table_rng(1);
    auto table = tiny_table<double>(table_rng, 11, 5);
    for (const auto arch : kAllArchs) {
        for (const auto cell : {CellKind::lstm, CellKind::gru}) {
            ModelSpec spec = micro_spec(arch);
            spec.cell = cell;
            spec.hidden_units = 4;
            spec.conv_filters = 3;
            spec.output_units = 3;
            Rng rng(5);
            Classifier<double> model(spec, table, rng);
            CHECK(model.param_count() == expected_params(spec, 5));
        }
    }
}

TEST_CASE("parameter counts hold at the published default sizes") {
    ModelSpec spec;  // s_conv_nm, H=512, F=512, k=2, defaults
    spec.output_units = 10;
    Rng table_rng(2);
    auto table = tiny_table<float>(table_rng, 50, 300);
    Rng rng(3);
    Classifier<float> model(spec, table, rng);
    CHECK(model.param_count() == expected_params(spec, 300));
    // d=300, H=512: 2*4*(300*512+512*512+512) + 512*(2*1024+1) + (512*10+10)
    CHECK(model.param_count() == 2u * 4u * (300u * 512u + 512u * 512u + 512u) +
                                     512u * (2u * 1024u + 1u) + (512u * 10u + 10u));
}

TEST_CASE("trainable embeddings add the table to the parameter count") {
    ModelSpec spec = micro_spec(Architecture::cnn);
    Rng table_rng(4);
    auto table = tiny_table<double>(table_rng, 7, 3);
    Rng rng_a(5), rng_b(5);
    Classifier<double> frozen(spec, table, rng_a);
    spec.embeddings_trainable = true;
    Classifier<double> trainable(spec, table, rng_b);
    CHECK(trainable.param_count() == frozen.param_count() + 7 * 3);
}

TEST_CASE("zeroed final layer predicts exactly one half everywhere") {
    for (const auto arch : kAllArchs) {
        Rng rng(61), table_rng(62);
        auto table = tiny_table<double>(table_rng, 9, 4);
        Classifier<double> model(micro_spec(arch), table, rng);
        model.visit_params([](const std::string& name, Tensor<double>& p, Tensor<double>&) {
            if (name.rfind("head.", 0) == 0) p.fill(0.0);
        });
        Rng note_rng(63);
        const auto notes = random_notes(note_rng, 2, 5, 9);
        const auto pred = model.predict(notes, 0.5);
        for (const double p : pred.probabilities.raw()) CHECK(p == doctest::Approx(0.5));
        for (const auto v : pred.labels.data) CHECK(v == 1);  // 0.5 >= 0.5
    }
}

TEST_CASE("probabilities are invariant to PAD extension of the batch") {
    for (const auto arch : kAllArchs) {
        Rng rng(71), table_rng(72), note_rng(73);
        auto table = tiny_table<double>(table_rng, 10, 4);
        Classifier<double> model(micro_spec(arch), table, rng);

        auto notes = random_notes(note_rng, 3, 6, 10, /*min_len=*/2);
        auto padded = notes;
        for (auto& n : padded) n.ids.resize(10, Vocab::kPad);  // longer PAD tail

        const auto a = model.forward(notes);
        const auto b = model.forward(padded);
        REQUIRE(a.numel() == b.numel());
        for (std::size_t i = 0; i < a.numel(); ++i) {
            CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-6));
        }
    }
}

TEST_CASE("threshold endpoints produce all-ones and all-zeros label sets") {
    Rng rng(81), table_rng(82), note_rng(83);
    auto table = tiny_table<double>(table_rng, 9, 3);
    Classifier<double> model(micro_spec(Architecture::s_conv_nm), table, rng);
    const auto notes = random_notes(note_rng, 4, 5, 9);
    const auto low = model.predict(notes, 1e-9);
    for (const auto v : low.labels.data) CHECK(v == 1);
    const auto high = model.predict(notes, 1.0 - 1e-9);
    for (const auto v : high.labels.data) CHECK(v == 0);
    CHECK_THROWS_AS(model.predict(notes, 0.0), ConfigError);
    CHECK_THROWS_AS(model.predict(notes, 1.0), ConfigError);
}

TEST_CASE("predict refuses batches longer than the trained length") {
    Rng rng(91), table_rng(92), note_rng(93);
    auto table = tiny_table<double>(table_rng, 9, 3);
    Classifier<double> model(micro_spec(Architecture::cnn), table, rng);
    model.set_trained_l_max(5);
    const auto ok = random_notes(note_rng, 2, 5, 9);
    CHECK_NOTHROW(model.predict(ok, 0.5));
    const auto too_long = random_notes(note_rng, 2, 7, 9);
    CHECK_THROWS_AS(model.predict(too_long, 0.5), DimensionError);
}

TEST_CASE("confident correct predictions give vanishing loss and gradients") {
    Rng rng(95), table_rng(96), note_rng(97);
    auto table = tiny_table<double>(table_rng, 9, 3);
    Classifier<double> model(micro_spec(Architecture::cnn), table, rng);
    model.visit_params([](const std::string& name, Tensor<double>& p, Tensor<double>&) {
        if (name == "head.bias") p.fill(50.0);  // saturate the sigmoid towards 1
    });
    const auto notes = random_notes(note_rng, 3, 5, 9);
    LabelMatrix targets(3, 2);
    for (auto& v : targets.data) v = 1;
    model.zero_grads();
    const double loss = model.train_step_backward(notes, targets, nullptr);
    CHECK(loss < 1e-6);
    model.visit_params([](const std::string&, Tensor<double>&, Tensor<double>& g) {
        for (const double v : g.raw()) CHECK(std::abs(v) < 1e-5);
    });
}

TEST_CASE("non-binary targets are rejected") {
    Rng rng(98), table_rng(99), note_rng(100);
    auto table = tiny_table<double>(table_rng, 9, 3);
    Classifier<double> model(micro_spec(Architecture::cnn), table, rng);
    const auto notes = random_notes(note_rng, 2, 5, 9);
    LabelMatrix targets(2, 2);
    targets.data[1] = 2;
    CHECK_THROWS_AS(model.train_step_backward(notes, targets, nullptr), ValidationError);
}

TEST_CASE("end-to-end gradients match finite differences on micro models") {
    // d=4, H=3, F=2, T=5, C=2 with trainable embeddings per architecture
    for (const auto arch : kAllArchs) {
        CAPTURE(to_string(arch));
        ModelSpec spec = micro_spec(arch);
        spec.embeddings_trainable = true;
        Rng table_rng(201), rng(202), note_rng(203), target_rng(204);
        auto table = tiny_table<double>(table_rng, 8, 4);
        Classifier<double> model(spec, table, rng);
        const auto notes = random_notes(note_rng, 3, 5, 8, /*min_len=*/2);
        const auto targets = random_targets(target_rng, 3, 2);

        const auto loss_fn = [&]() {
            return bce_loss(model.forward(notes, /*training=*/true, nullptr), targets).first;
        };
        model.zero_grads();
        model.train_step_backward(notes, targets, nullptr);

        std::vector<std::pair<Tensor<double>*, Tensor<double>>> grads;
        model.visit_params([&](const std::string&, Tensor<double>& p, Tensor<double>& g) {
            grads.emplace_back(&p, g);
        });
        double worst = 0.0;
        for (auto& [param, analytic] : grads) {
            worst = std::max(worst, grad_check([&](const Tensor<double>&) { return loss_fn(); },
                                               *param, analytic));
        }
        CHECK(worst < 1e-3);
    }
}

TEST_CASE("is_conv_nm routes gradient into both branches") {
    ModelSpec spec = micro_spec(Architecture::is_conv_nm);
    Rng table_rng(211), rng(212), note_rng(213), target_rng(214);
    auto table = tiny_table<double>(table_rng, 9, 4);
    Classifier<double> model(spec, table, rng);
    const auto notes = random_notes(note_rng, 4, 6, 9, 3);
    const auto targets = random_targets(target_rng, 4, 2);
    model.zero_grads();
    model.train_step_backward(notes, targets, nullptr);
    double trunk_norm = 0.0, branch_norm = 0.0;
    model.visit_params([&](const std::string& name, Tensor<double>&, Tensor<double>& g) {
        double norm = 0.0;
        for (const double v : g.raw()) norm += v * v;
        if (name.rfind("branch_", 0) == 0) {
            branch_norm += norm;
        } else if (name.rfind("bidir.", 0) == 0 || name.rfind("conv.", 0) == 0) {
            trunk_norm += norm;
        }
    });
    CHECK(trunk_norm > 0.0);
    CHECK(branch_norm > 0.0);
}

TEST_CASE("is_conv_nm with a silenced branch reduces to s_conv_nm") {
    Rng table_rng(221);
    auto table = tiny_table<double>(table_rng, 9, 4);

    ModelSpec is_spec = micro_spec(Architecture::is_conv_nm);
    Rng rng_is(222);
    Classifier<double> is_model(is_spec, table, rng_is);

    ModelSpec s_spec = micro_spec(Architecture::s_conv_nm);
    Rng rng_s(223);
    Classifier<double> s_model(s_spec, table, rng_s);

    // copy trunk parameters from the is model into the s model
    std::map<std::string, Tensor<double>*> is_params;
    is_model.visit_params([&](const std::string& name, Tensor<double>& p, Tensor<double>&) {
        is_params[name] = &p;
    });
    s_model.visit_params([&](const std::string& name, Tensor<double>& p, Tensor<double>&) {
        if (name.rfind("bidir.", 0) == 0 || name.rfind("conv.", 0) == 0) {
            p = *is_params.at(name);
        }
    });
    // silence the branch and make the is head agree with the s head on the
    // trunk features (trunk width 2, branch width 3)
    Tensor<double>& is_head_w = *is_params.at("head.weight");
    Tensor<double>& is_head_b = *is_params.at("head.bias");
    for (std::size_t r = 2; r < 5; ++r) {
        for (std::size_t c = 0; c < 2; ++c) is_head_w(r, c) = 0.0;
    }
    is_params.at("branch_dense.weight")->fill(0.0);
    is_params.at("branch_dense.bias")->fill(0.0);
    s_model.visit_params([&](const std::string& name, Tensor<double>& p, Tensor<double>&) {
        if (name == "head.weight") {
            for (std::size_t r = 0; r < 2; ++r) {
                for (std::size_t c = 0; c < 2; ++c) p(r, c) = is_head_w(r, c);
            }
        } else if (name == "head.bias") {
            p = is_head_b;
        }
    });

    Rng note_rng(224);
    const auto notes = random_notes(note_rng, 3, 6, 9, 2);
    const auto a = is_model.forward(notes);
    const auto b = s_model.forward(notes);
    for (std::size_t i = 0; i < a.numel(); ++i) {
        CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
    }
}

TEST_CASE("one optimizer step decreases the loss on random micro instances") {
    std::size_t checked = 0;
    for (const auto arch : kAllArchs) {
        for (std::uint64_t seed = 1; seed <= 7; ++seed) {
            Rng table_rng(seed * 31 + 1), rng(seed * 31 + 2), note_rng(seed * 31 + 3),
                target_rng(seed * 31 + 4);
            auto table = tiny_table<double>(table_rng, 8, 3);
            Classifier<double> model(micro_spec(arch), table, rng);
            const auto notes = random_notes(note_rng, 1, 5, 8, 2);
            const auto targets = random_targets(target_rng, 1, 2);

            model.zero_grads();
            const double before = model.train_step_backward(notes, targets, nullptr);
            double grad_norm = 0.0;
            model.visit_params([&](const std::string&, Tensor<double>&, Tensor<double>& g) {
                for (const double v : g.raw()) grad_norm += v * v;
            });
            Adam<double> opt(0.001);
            opt.step(model);
            const double after = bce_loss(model.forward(notes), targets).first;
            if (grad_norm > 1e-10) {
                CHECK(after < before);
            }
            ++checked;
        }
    }
    CHECK(checked >= 50);
}

TEST_CASE("checkpoints round-trip bitwise and reject tampering") {
    const std::string path = "/tmp/phenonet_test_ckpt.bin";
    const std::string path2 = "/tmp/phenonet_test_ckpt2.bin";
    ModelSpec spec = micro_spec(Architecture::is_conv_nm);
    Rng table_rng(301), rng(302), note_rng(303);
    auto table = tiny_table<float>(table_rng, 9, 4);
    Classifier<float> model(spec, table, rng);
    model.set_trained_l_max(6);

    CheckpointMeta meta;
    meta.vocab_hash = "deadbeefdeadbeef";
    meta.embedding_hash = "0123456789abcdef";
    meta.l_max = 6;
    meta.vocab_size = 9;
    save_checkpoint(path, model, meta);
    save_checkpoint(path2, model, meta);

    // byte-identical writes
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), {});
    const std::string b2((std::istreambuf_iterator<char>(f2)), {});
    CHECK(b1 == b2);
    CHECK(b1.substr(0, 8) == "PHNCKPT1");

    auto [restored, restored_meta] = load_checkpoint<float>(path);
    CHECK(restored_meta.vocab_hash == meta.vocab_hash);
    CHECK(restored_meta.embedding_hash == meta.embedding_hash);
    CHECK(restored_meta.l_max == 6);
    CHECK(restored_meta.vocab_size == 9);
    CHECK(restored.trained_l_max() == 6);
    CHECK(to_string(restored_meta.spec.architecture) == "is_conv_nm");

    const auto notes = random_notes(note_rng, 3, 6, 9);
    const auto a = model.forward(notes);
    const auto b = restored.forward(notes);
    for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);

    // re-saving the restored model is also byte-identical
    save_checkpoint(path2, restored, restored_meta);
    std::ifstream f3(path2, std::ios::binary);
    const std::string b3((std::istreambuf_iterator<char>(f3)), {});
    CHECK(b3 == b1);

    // wrong precision
    CHECK_THROWS_AS(load_checkpoint<double>(path), ParseError);
    // not a checkpoint
    std::ofstream(path2, std::ios::binary) << "PHNCKPT9 garbage";
    CHECK_THROWS_AS(load_checkpoint<float>(path2), ParseError);
    std::remove(path.c_str());
    std::remove(path2.c_str());
}

TEST_CASE("build rejects a degenerate embedding table") {
    Rng rng(401);
    CHECK_THROWS_AS(Classifier<double>(micro_spec(Architecture::cnn),
                                       Tensor<double>({1, 4}), rng),
                    ConfigError);
    CHECK_THROWS_AS(Classifier<double>(micro_spec(Architecture::cnn),
                                       Tensor<double>({5, 0}), rng),
                    ConfigError);
}
