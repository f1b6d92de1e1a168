#include "phenonet/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "phenonet/errors.hpp"
#include "phenonet/rng.hpp"

namespace phenonet {

void TrainConfig::validate() const {
    if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
        throw ConfigError("Adam betas must lie in [0, 1)");
    }
    if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
    if (patience == 0) throw ConfigError("patience must be at least 1");
    if (max_epochs == 0) throw ConfigError("max_epochs must be at least 1");
    if (train_fraction < 0.0 || val_fraction < 0.0 || test_fraction < 0.0 ||
        std::abs(train_fraction + val_fraction + test_fraction - 1.0) > 1e-9) {
        throw ConfigError("split fractions must be non-negative and sum to 1");
    }
    if (folds < 2) throw ConfigError("folds must be at least 2");
    if (!(threshold > 0.0 && threshold < 1.0)) {
        throw ConfigError("threshold must lie strictly inside (0, 1)");
    }
}

Dataset subset(const Dataset& d, const std::vector<std::size_t>& idx) {
    Dataset out;
    out.notes.reserve(idx.size());
    out.labels = LabelMatrix(idx.size(), d.labels.cols);
    for (std::size_t row = 0; row < idx.size(); ++row) {
        const std::size_t i = idx[row];
        if (i >= d.size()) {
            throw IndexError("subset index " + std::to_string(i) + " out of range for " +
                             std::to_string(d.size()) + " records");
        }
        out.notes.push_back(d.notes[i]);
        for (std::size_t c = 0; c < d.labels.cols; ++c) {
            out.labels.at(row, c) = d.labels.at(i, c);
        }
    }
    return out;
}

template <typename T>
std::pair<double, Tensor<T>> bce_loss(const Tensor<T>& p, const LabelMatrix& y) {
    if (p.ndim() != 2 || p.dim(0) != y.rows || p.dim(1) != y.cols) {
        throw DimensionError("probabilities " + p.shape_str() + " do not match targets " +
                             std::to_string(y.rows) + "x" + std::to_string(y.cols));
    }
    for (const std::uint8_t v : y.data) {
        if (v > 1) throw ValidationError("targets must be 0 or 1");
    }
    if (!p.all_finite()) throw NumericError("non-finite probabilities in loss");
    const double n = static_cast<double>(p.numel());
    constexpr double lo = 1e-7, hi = 1.0 - 1e-7;
    double loss = 0.0;
    Tensor<T> grad({p.dim(0), p.dim(1)});
    for (std::size_t i = 0; i < p.numel(); ++i) {
        const double pc = std::min(hi, std::max(lo, static_cast<double>(p[i])));
        const double yi = static_cast<double>(y.data[i]);
        loss -= yi * std::log(pc) + (1.0 - yi) * std::log(1.0 - pc);
        grad[i] = static_cast<T>((-(yi / pc) + (1.0 - yi) / (1.0 - pc)) / n);
    }
    return {loss / n, std::move(grad)};
}

template std::pair<double, Tensor<float>> bce_loss(const Tensor<float>&, const LabelMatrix&);
template std::pair<double, Tensor<double>> bce_loss(const Tensor<double>&, const LabelMatrix&);

// ---------------------------------------------------------------------------

template <typename T>
Adam<T>::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

template <typename T>
void Adam<T>::step(const std::function<void(const ParamFn<T>&)>& visit) {
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    std::size_t visited = 0;
    visit([&](const std::string& name, Tensor<T>& p, Tensor<T>& g) {
        if (!p.same_shape(g)) {
            throw IntegrityError("parameter " + name + " has gradient shape " + g.shape_str() +
                                 ", expected " + p.shape_str());
        }
        auto it = slots_.find(name);
        if (it == slots_.end()) {
            if (t_ > 1) {
                throw IntegrityError("parameter " + name + " appeared after the first step");
            }
            it = slots_.emplace(name, Slot{Tensor<T>(p.shape()), Tensor<T>(p.shape())}).first;
        }
        auto& slot = it->second;
        if (!slot.m.same_shape(p)) {
            throw IntegrityError("parameter " + name + " changed shape from " +
                                 slot.m.shape_str() + " to " + p.shape_str());
        }
        for (std::size_t i = 0; i < p.numel(); ++i) {
            const double gi = static_cast<double>(g[i]);
            const double m = b1_ * static_cast<double>(slot.m[i]) + (1.0 - b1_) * gi;
            const double v = b2_ * static_cast<double>(slot.v[i]) + (1.0 - b2_) * gi * gi;
            slot.m[i] = static_cast<T>(m);
            slot.v[i] = static_cast<T>(v);
            p[i] -= static_cast<T>(lr_ * (m / bc1) / (std::sqrt(v / bc2) + eps_));
        }
        ++visited;
    });
    if (visited != slots_.size()) {
        throw IntegrityError("optimizer saw " + std::to_string(visited) +
                             " parameters but tracks " + std::to_string(slots_.size()));
    }
}

template <typename T>
void Adam<T>::step(Classifier<T>& model) {
    step([&](const ParamFn<T>& fn) { model.visit_params(fn); });
}

template class Adam<float>;
template class Adam<double>;

// ---------------------------------------------------------------------------

SplitIndices split_indices(std::size_t n, double train_fraction, double val_fraction,
                           double test_fraction, std::uint64_t seed) {
    if (train_fraction < 0.0 || val_fraction < 0.0 || test_fraction < 0.0 ||
        std::abs(train_fraction + val_fraction + test_fraction - 1.0) > 1e-9) {
        throw ConfigError("split fractions must be non-negative and sum to 1");
    }
    if (n < 3) {
        throw ConfigError("corpus has " + std::to_string(n) + " records; need at least 3");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng = Rng(seed).child("split");
    rng.shuffle(order);

    std::size_t n_train = static_cast<std::size_t>(
        std::llround(train_fraction * static_cast<double>(n)));
    std::size_t n_val =
        static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n)));
    n_train = std::min(n_train, n);
    n_val = std::min(n_val, n - n_train);

    SplitIndices out;
    out.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                   order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    out.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
    return out;
}

std::vector<std::vector<std::size_t>> kfold_indices(std::size_t n, std::size_t k,
                                                    std::uint64_t seed) {
    if (k < 2) throw ConfigError("k-fold needs k >= 2");
    if (k > n) {
        throw ConfigError("k-fold with k=" + std::to_string(k) + " needs at least " +
                          std::to_string(k) + " records, got " + std::to_string(n));
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng = Rng(seed).child("folds");
    rng.shuffle(order);

    std::vector<std::vector<std::size_t>> folds(k);
    const std::size_t base = n / k, extra = n % k;
    std::size_t pos = 0;
    for (std::size_t f = 0; f < k; ++f) {
        const std::size_t len = base + (f < extra ? 1 : 0);
        folds[f].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                        order.begin() + static_cast<std::ptrdiff_t>(pos + len));
        pos += len;
    }
    return folds;
}

MeanStd mean_std(const std::vector<double>& values) {
    MeanStd out;
    if (values.empty()) return out;
    out.mean = std::accumulate(values.begin(), values.end(), 0.0) /
               static_cast<double>(values.size());
    if (values.size() < 2) return out;
    double ss = 0.0;
    for (const double v : values) ss += (v - out.mean) * (v - out.mean);
    out.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
    return out;
}

std::pair<std::vector<double>, MeanStd> kfold(
    std::size_t n, std::size_t k, std::uint64_t seed,
    const std::function<double(const std::vector<std::size_t>&,
                               const std::vector<std::size_t>&)>& run_fold) {
    const auto folds = kfold_indices(n, k, seed);
    std::vector<double> values;
    values.reserve(k);
    for (std::size_t f = 0; f < k; ++f) {
        std::vector<std::size_t> train_idx;
        train_idx.reserve(n - folds[f].size());
        for (std::size_t other = 0; other < k; ++other) {
            if (other == f) continue;
            train_idx.insert(train_idx.end(), folds[other].begin(), folds[other].end());
        }
        values.push_back(run_fold(train_idx, folds[f]));
    }
    return {values, mean_std(values)};
}

// ---------------------------------------------------------------------------

EarlyStopper::EarlyStopper(std::size_t patience)
    : patience_(patience), best_val_(std::numeric_limits<double>::infinity()) {
    if (patience_ == 0) throw ConfigError("patience must be at least 1");
}

bool EarlyStopper::observe(double val_loss) {
    ++epoch_;
    if (val_loss < best_val_) {
        best_val_ = val_loss;
        best_epoch_ = epoch_;
        bad_ = 0;
        improved_last_ = true;
        return false;
    }
    improved_last_ = false;
    ++bad_;
    return bad_ >= patience_;
}

// ---------------------------------------------------------------------------

namespace {

template <typename T>
std::pair<std::vector<EncodedNote>, LabelMatrix> gather_batch(
    const Dataset& data, const std::vector<std::size_t>& order, std::size_t start,
    std::size_t count) {
    std::vector<EncodedNote> notes;
    notes.reserve(count);
    LabelMatrix labels(count, data.labels.cols);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t idx = order[start + i];
        notes.push_back(data.notes[idx]);
        for (std::size_t c = 0; c < data.labels.cols; ++c) {
            labels.at(i, c) = data.labels.at(idx, c);
        }
    }
    return {std::move(notes), std::move(labels)};
}

}  // namespace

template <typename T>
double eval_loss(Classifier<T>& model, const Dataset& data, std::size_t batch_size) {
    if (data.size() == 0) throw ConfigError("cannot evaluate on an empty dataset");
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    double total = 0.0;
    for (std::size_t start = 0; start < data.size(); start += batch_size) {
        const std::size_t count = std::min(batch_size, data.size() - start);
        auto [notes, labels] = gather_batch<T>(data, order, start, count);
        const auto probs = model.forward(notes, /*training=*/false, nullptr);
        total += bce_loss(probs, labels).first * static_cast<double>(count);
    }
    return total / static_cast<double>(data.size());
}

template double eval_loss(Classifier<float>&, const Dataset&, std::size_t);
template double eval_loss(Classifier<double>&, const Dataset&, std::size_t);

template <typename T>
FitResult fit(Classifier<T>& model, const Dataset& train_set, const Dataset& val_set,
              const TrainConfig& cfg) {
    cfg.validate();
    if (train_set.size() == 0 || val_set.size() == 0) {
        throw ConfigError("fit needs non-empty train and validation sets");
    }

    Rng root(cfg.seed);
    Rng shuffle_rng = root.child("shuffle");
    Rng dropout_rng = root.child("dropout");
    Adam<T> optimizer(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps);
    EarlyStopper stopper(cfg.patience);

    std::vector<std::pair<std::string, Tensor<T>>> best_weights;
    const auto snapshot = [&]() {
        best_weights.clear();
        model.visit_params([&](const std::string& name, Tensor<T>& p, Tensor<T>&) {
            best_weights.emplace_back(name, p);
        });
    };

    FitResult result;
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    const auto t0 = std::chrono::steady_clock::now();

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double total = 0.0;
        std::size_t batch_index = 1;
        for (std::size_t start = 0; start < train_set.size(); start += cfg.batch_size) {
            const std::size_t count = std::min(cfg.batch_size, train_set.size() - start);
            auto [notes, labels] = gather_batch<T>(train_set, order, start, count);
            model.zero_grads();
            double loss = 0.0;
            try {
                loss = model.train_step_backward(notes, labels, &dropout_rng);
            } catch (const NumericError& e) {
                throw NumericError("epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(batch_index) + ": " + e.what());
            }
            if (!std::isfinite(loss)) {
                throw NumericError("non-finite training loss at epoch " +
                                   std::to_string(epoch) + ", batch " +
                                   std::to_string(batch_index));
            }
            optimizer.step(model);
            total += loss * static_cast<double>(count);
            ++batch_index;
        }
        const double train_loss = total / static_cast<double>(train_set.size());
        double val_loss = 0.0;
        try {
            val_loss = eval_loss(model, val_set, cfg.batch_size);
        } catch (const NumericError& e) {
            throw NumericError("epoch " + std::to_string(epoch) +
                               " validation: " + e.what());
        }
        if (!std::isfinite(val_loss)) {
            throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
        }
        const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                                 std::chrono::steady_clock::now() - t0)
                                 .count();
        result.history.push_back({epoch, train_loss, val_loss, elapsed});

        const bool stop = stopper.observe(val_loss);
        if (stopper.improved_last()) snapshot();
        if (stop) {
            result.stopped_early = true;
            break;
        }
    }

    // restore the best-validation weights
    std::size_t cursor = 0;
    model.visit_params([&](const std::string& name, Tensor<T>& p, Tensor<T>&) {
        if (cursor >= best_weights.size() || best_weights[cursor].first != name) {
            throw IntegrityError("parameter set changed during training near " + name);
        }
        p = best_weights[cursor].second;
        ++cursor;
    });

    result.best_epoch = stopper.best_epoch();
    result.best_val_loss = stopper.best_val();
    if (!train_set.notes.empty()) {
        model.set_trained_l_max(train_set.notes[0].ids.size());
    }
    return result;
}

template FitResult fit(Classifier<float>&, const Dataset&, const Dataset&, const TrainConfig&);
template FitResult fit(Classifier<double>&, const Dataset&, const Dataset&,
                       const TrainConfig&);

}  // namespace phenonet
