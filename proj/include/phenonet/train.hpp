#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "phenonet/metrics.hpp"
#include "phenonet/tensor.hpp"
#include "phenonet/textprep.hpp"
#include "phenonet/zoo.hpp"

namespace phenonet {

struct TrainConfig {
    std::size_t batch_size = 64;
    double learning_rate = 0.001;
    double beta1 = 0.9, beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t patience = 3;   // epochs without strict val-loss improvement
    std::size_t max_epochs = 100;
    std::uint64_t seed = 0;
    double train_fraction = 0.6, val_fraction = 0.2, test_fraction = 0.2;
    std::size_t folds = 5;
    double threshold = 0.5;

    void validate() const;  // throws ConfigError
};

// Encoded notes with aligned binary labels.
struct Dataset {
    std::vector<EncodedNote> notes;
    LabelMatrix labels;  // notes.size() x C

    std::size_t size() const { return notes.size(); }
};

Dataset subset(const Dataset& d, const std::vector<std::size_t>& idx);

// Mean binary cross-entropy over all B*C cells with probabilities clamped to
// [1e-7, 1-1e-7]; the gradient is evaluated at the clamped value.
template <typename T>
std::pair<double, Tensor<T>> bce_loss(const Tensor<T>& p, const LabelMatrix& y);

// Adam with bias correction. State is keyed by parameter name; a parameter
// set that changes between steps raises IntegrityError.
template <typename T>
class Adam {
public:
    Adam(double lr = 0.001, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    void step(const std::function<void(const ParamFn<T>&)>& visit);
    void step(Classifier<T>& model);

    std::uint64_t steps_taken() const { return t_; }
    double learning_rate() const { return lr_; }

private:
    struct Slot {
        Tensor<T> m, v;
    };
    std::map<std::string, Slot> slots_;
    std::uint64_t t_ = 0;
    double lr_, b1_, b2_, eps_;
};

// Seeded shuffle then contiguous partition into train/val/test index sets.
struct SplitIndices {
    std::vector<std::size_t> train, val, test;
};
SplitIndices split_indices(std::size_t n, double train_fraction, double val_fraction,
                           double test_fraction, std::uint64_t seed);

// Seeded shuffle into k near-equal folds (first n%k folds get the extra).
std::vector<std::vector<std::size_t>> kfold_indices(std::size_t n, std::size_t k,
                                                    std::uint64_t seed);

struct MeanStd {
    double mean = 0.0, stddev = 0.0;  // sample stddev (n-1); 0 when n < 2
};
MeanStd mean_std(const std::vector<double>& values);

// Runs `run_fold(train_idx, val_idx)` once per fold and aggregates.
std::pair<std::vector<double>, MeanStd> kfold(
    std::size_t n, std::size_t k, std::uint64_t seed,
    const std::function<double(const std::vector<std::size_t>&,
                               const std::vector<std::size_t>&)>& run_fold);

// Strict-decrease early stopping: an epoch whose validation loss does not
// improve on the best seen counts against patience; any improvement resets it.
class EarlyStopper {
public:
    explicit EarlyStopper(std::size_t patience);

    // Returns true when training should stop after this epoch.
    bool observe(double val_loss);

    bool improved_last() const { return improved_last_; }
    std::size_t best_epoch() const { return best_epoch_; }  // 1-based
    double best_val() const { return best_val_; }

private:
    std::size_t patience_;
    std::size_t epoch_ = 0, best_epoch_ = 0, bad_ = 0;
    double best_val_ = 0.0;
    bool improved_last_ = false;
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_loss = 0.0;
    std::int64_t elapsed_ms = 0;
};

struct FitResult {
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;  // 1-based epoch whose weights were restored
    double best_val_loss = 0.0;
    bool stopped_early = false;
};

// Inference-mode loss over a dataset, batched.
template <typename T>
double eval_loss(Classifier<T>& model, const Dataset& data, std::size_t batch_size);

// Epoch loop: seeded shuffle, mini-batches, Adam steps; early stopping on
// `patience` consecutive epochs without a strict val-loss decrease; restores
// the best-epoch weights before returning. Non-finite losses abort with a
// NumericError naming the epoch and batch.
template <typename T>
FitResult fit(Classifier<T>& model, const Dataset& train_set, const Dataset& val_set,
              const TrainConfig& cfg);

}  // namespace phenonet
