#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "phenonet/layers.hpp"
#include "phenonet/metrics.hpp"
#include "phenonet/rng.hpp"
#include "phenonet/tensor.hpp"
#include "phenonet/textprep.hpp"

namespace phenonet {

enum class Architecture { cnn, lstm, gru, bilstm, bigru, cnn_lstm, s_conv_nm, is_conv_nm };

const char* to_string(Architecture a);
Architecture architecture_from_string(const std::string& name);  // ConfigError on unknown

// Hyperparameters that define a classifier's wiring.
struct ModelSpec {
    Architecture architecture = Architecture::s_conv_nm;
    CellKind cell = CellKind::lstm;          // recurrent flavor for s/is variants
    std::size_t hidden_units = 512;          // recurrent state width per direction
    std::size_t conv_filters = 512;
    std::size_t filter_width = 2;
    std::size_t extra_branch_dense = 256;    // is_conv_nm parallel-branch dense width
    double dropout_rate = 0.5;               // is_conv_nm parallel branch only
    std::size_t output_units = 1;            // 1 for binary, C for multi-label
    bool embeddings_trainable = false;

    void validate() const;  // throws ConfigError
    bool uses_recurrent() const;
    bool uses_conv() const;
};

nlohmann::ordered_json model_spec_to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::ordered_json& doc);  // ParseError/ConfigError

template <typename T>
struct Prediction {
    Tensor<T> probabilities;  // B x output_units, each in (0,1)
    LabelMatrix labels;       // probabilities >= threshold
};

// A fully wired classifier. Forward emits sigmoid probabilities; backward
// consumes dL/d(probabilities) and accumulates gradients in every layer.
template <typename T>
class Classifier {
public:
    Classifier(ModelSpec spec, Tensor<T> embedding_table, Rng& rng);

    // `training` enables dropout, which then requires a stream to draw from.
    Tensor<T> forward(const std::vector<EncodedNote>& batch, bool training = false,
                      Rng* dropout_rng = nullptr);
    void backward(const Tensor<T>& grad_probs);

    // Inference-mode forward plus thresholding; threshold must lie in (0,1).
    Prediction<T> predict(const std::vector<EncodedNote>& batch, double threshold = 0.5);

    // Forward in training mode, mean BCE against binary targets, backward.
    double train_step_backward(const std::vector<EncodedNote>& batch,
                               const LabelMatrix& targets, Rng* dropout_rng);

    // Trainable parameters only (feeds the optimizer).
    void visit_params(const ParamFn<T>& fn);
    // Every tensor including a frozen embedding table (feeds checkpoints).
    void visit_all_tensors(const ParamFn<T>& fn);
    void zero_grads();
    std::size_t param_count();  // total trainable scalars

    const ModelSpec& spec() const { return spec_; }
    std::size_t embedding_dim() const { return embed_.dim(); }
    std::size_t vocab_rows() const { return embed_.weights().dim(0); }

    // Longest encoded length this model was trained with; predict refuses
    // longer batches once set. 0 means unknown (no check).
    void set_trained_l_max(std::size_t l) { trained_l_max_ = l; }
    std::size_t trained_l_max() const { return trained_l_max_; }

private:
    ModelSpec spec_;
    EmbeddingLayer<T> embed_;
    std::unique_ptr<SeqCell<T>> cell_;         // lstm/gru baselines, cnn_lstm stage 2
    std::unique_ptr<Bidirectional<T>> bidir_;  // bilstm/bigru, s/is trunk
    std::unique_ptr<Conv1d<T>> conv_;          // cnn, cnn_lstm stage 1, s/is trunk conv
    GlobalMaxPool<T> pool_;
    std::unique_ptr<Conv1d<T>> branch_conv_;   // is_conv_nm parallel branch
    GlobalMaxPool<T> branch_pool_;
    std::unique_ptr<Dropout<T>> branch_drop_;
    std::unique_ptr<Dense<T>> branch_dense_;
    std::unique_ptr<Dense<T>> head_;
    std::size_t trunk_width_ = 0, branch_width_ = 0;
    std::size_t trained_l_max_ = 0;
};

using ClassifierF = Classifier<float>;
using ClassifierD = Classifier<double>;

// ---------------------------------------------------------------------------
// Checkpoint container: magic header, version, JSON metadata (spec, hashes,
// tensor manifest), then raw little-endian tensor payloads in manifest order.
// Writing the same model twice produces byte-identical files.

struct CheckpointMeta {
    ModelSpec spec;
    std::string vocab_hash;      // hex64 content hash of the vocabulary
    std::string embedding_hash;  // hex64 content hash of the embedding source
    std::size_t l_max = 0;
    std::size_t vocab_size = 0;
};

template <typename T>
void save_checkpoint(const std::string& path, Classifier<T>& model, const CheckpointMeta& meta);

template <typename T>
std::pair<Classifier<T>, CheckpointMeta> load_checkpoint(const std::string& path);

}  // namespace phenonet
