#include "phenonet/zoo.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include "phenonet/errors.hpp"
#include "phenonet/train.hpp"

namespace phenonet {

const char* to_string(Architecture a) {
    switch (a) {
        case Architecture::cnn: return "cnn";
        case Architecture::lstm: return "lstm";
        case Architecture::gru: return "gru";
        case Architecture::bilstm: return "bilstm";
        case Architecture::bigru: return "bigru";
        case Architecture::cnn_lstm: return "cnn_lstm";
        case Architecture::s_conv_nm: return "s_conv_nm";
        case Architecture::is_conv_nm: return "is_conv_nm";
    }
    return "?";
}

Architecture architecture_from_string(const std::string& name) {
    static const std::map<std::string, Architecture> table = {
        {"cnn", Architecture::cnn},           {"lstm", Architecture::lstm},
        {"gru", Architecture::gru},           {"bilstm", Architecture::bilstm},
        {"bigru", Architecture::bigru},       {"cnn_lstm", Architecture::cnn_lstm},
        {"s_conv_nm", Architecture::s_conv_nm}, {"is_conv_nm", Architecture::is_conv_nm}};
    const auto it = table.find(name);
    if (it == table.end()) throw ConfigError("unknown architecture '" + name + "'");
    return it->second;
}

bool ModelSpec::uses_recurrent() const {
    switch (architecture) {
        case Architecture::cnn: return false;
        default: return true;
    }
}

bool ModelSpec::uses_conv() const {
    switch (architecture) {
        case Architecture::cnn:
        case Architecture::cnn_lstm:
        case Architecture::s_conv_nm:
        case Architecture::is_conv_nm: return true;
        default: return false;
    }
}

void ModelSpec::validate() const {
    if (output_units == 0) throw ConfigError("output_units must be at least 1");
    if (uses_recurrent() && hidden_units == 0) {
        throw ConfigError("hidden_units must be at least 1");
    }
    if (uses_conv()) {
        if (conv_filters == 0) throw ConfigError("conv_filters must be at least 1");
        if (filter_width == 0) throw ConfigError("filter_width must be at least 1");
    }
    if (architecture == Architecture::is_conv_nm) {
        if (extra_branch_dense == 0) {
            throw ConfigError("extra_branch_dense must be at least 1");
        }
        if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
            throw ConfigError("dropout_rate must lie in [0, 1)");
        }
    }
}

nlohmann::ordered_json model_spec_to_json(const ModelSpec& spec) {
    return {{"architecture", to_string(spec.architecture)},
            {"cell", spec.cell == CellKind::lstm ? "lstm" : "gru"},
            {"hidden_units", spec.hidden_units},
            {"conv_filters", spec.conv_filters},
            {"filter_width", spec.filter_width},
            {"extra_branch_dense", spec.extra_branch_dense},
            {"dropout_rate", spec.dropout_rate},
            {"output_units", spec.output_units},
            {"embeddings_trainable", spec.embeddings_trainable}};
}

ModelSpec model_spec_from_json(const nlohmann::ordered_json& doc) {
    try {
        ModelSpec spec;
        spec.architecture = architecture_from_string(doc.at("architecture").get<std::string>());
        const std::string cell = doc.at("cell").get<std::string>();
        if (cell == "lstm") {
            spec.cell = CellKind::lstm;
        } else if (cell == "gru") {
            spec.cell = CellKind::gru;
        } else {
            throw ConfigError("unknown cell '" + cell + "'");
        }
        spec.hidden_units = doc.at("hidden_units").get<std::size_t>();
        spec.conv_filters = doc.at("conv_filters").get<std::size_t>();
        spec.filter_width = doc.at("filter_width").get<std::size_t>();
        spec.extra_branch_dense = doc.at("extra_branch_dense").get<std::size_t>();
        spec.dropout_rate = doc.at("dropout_rate").get<double>();
        spec.output_units = doc.at("output_units").get<std::size_t>();
        spec.embeddings_trainable = doc.at("embeddings_trainable").get<bool>();
        spec.validate();
        return spec;
    } catch (const nlohmann::ordered_json::exception& e) {
        throw ParseError(std::string("model spec: ") + e.what());
    }
}

// ---------------------------------------------------------------------------

template <typename T>
Classifier<T>::Classifier(ModelSpec spec, Tensor<T> embedding_table, Rng& rng)
    : spec_(spec), embed_(std::move(embedding_table), spec.embeddings_trainable) {
    spec_.validate();
    const Tensor<T>& table = embed_.weights();
    if (table.dim(0) < 2 || table.dim(1) == 0) {
        throw ConfigError("embedding table " + table.shape_str() +
                          " is too small: need at least PAD and UNK rows and one column");
    }
    const std::size_t d = table.dim(1);
    const std::size_t h = spec_.hidden_units;
    const std::size_t f = spec_.conv_filters;
    const std::size_t k = spec_.filter_width;

    Rng r_cell = rng.child("cell");
    Rng r_bidir = rng.child("bidir");
    Rng r_conv = rng.child("conv");
    Rng r_branch_conv = rng.child("branch_conv");
    Rng r_branch_dense = rng.child("branch_dense");
    Rng r_head = rng.child("head");

    switch (spec_.architecture) {
        case Architecture::cnn:
            conv_ = std::make_unique<Conv1d<T>>(d, k, f, r_conv);
            trunk_width_ = f;
            break;
        case Architecture::lstm:
            cell_ = make_cell<T>(CellKind::lstm, d, h, false, r_cell);
            trunk_width_ = h;
            break;
        case Architecture::gru:
            cell_ = make_cell<T>(CellKind::gru, d, h, false, r_cell);
            trunk_width_ = h;
            break;
        case Architecture::bilstm:
            bidir_ = std::make_unique<Bidirectional<T>>(CellKind::lstm, d, h, r_bidir);
            trunk_width_ = 2 * h;
            break;
        case Architecture::bigru:
            bidir_ = std::make_unique<Bidirectional<T>>(CellKind::gru, d, h, r_bidir);
            trunk_width_ = 2 * h;
            break;
        case Architecture::cnn_lstm:
            conv_ = std::make_unique<Conv1d<T>>(d, k, f, r_conv);
            cell_ = make_cell<T>(CellKind::lstm, f, h, false, r_cell);
            trunk_width_ = h;
            break;
        case Architecture::s_conv_nm:
            bidir_ = std::make_unique<Bidirectional<T>>(spec_.cell, d, h, r_bidir);
            conv_ = std::make_unique<Conv1d<T>>(2 * h, k, f, r_conv);
            trunk_width_ = f;
            break;
        case Architecture::is_conv_nm:
            bidir_ = std::make_unique<Bidirectional<T>>(spec_.cell, d, h, r_bidir);
            conv_ = std::make_unique<Conv1d<T>>(2 * h, k, f, r_conv);
            trunk_width_ = f;
            branch_conv_ = std::make_unique<Conv1d<T>>(d, k, f, r_branch_conv);
            branch_drop_ = std::make_unique<Dropout<T>>(spec_.dropout_rate);
            branch_dense_ = std::make_unique<Dense<T>>(f, spec_.extra_branch_dense, Act::relu,
                                                       r_branch_dense);
            branch_width_ = spec_.extra_branch_dense;
            break;
    }
    head_ = std::make_unique<Dense<T>>(trunk_width_ + branch_width_, spec_.output_units,
                                       Act::sigmoid, r_head);
}

template <typename T>
Tensor<T> Classifier<T>::forward(const std::vector<EncodedNote>& batch, bool training,
                                 Rng* dropout_rng) {
    if (batch.empty()) throw DimensionError("forward on an empty batch");
    if (trained_l_max_ != 0 && batch[0].ids.size() > trained_l_max_) {
        throw DimensionError("batch length " + std::to_string(batch[0].ids.size()) +
                             " exceeds the trained maximum of " +
                             std::to_string(trained_l_max_));
    }
    auto seq = embed_.forward(batch);
    Tensor<T> pooled;
    switch (spec_.architecture) {
        case Architecture::cnn:
            pooled = pool_.forward(conv_->forward(seq));
            break;
        case Architecture::lstm:
        case Architecture::gru:
            pooled = pool_.forward(cell_->forward(seq));
            break;
        case Architecture::bilstm:
        case Architecture::bigru:
            pooled = pool_.forward(bidir_->forward(seq));
            break;
        case Architecture::cnn_lstm:
            pooled = pool_.forward(cell_->forward(conv_->forward(seq)));
            break;
        case Architecture::s_conv_nm:
            pooled = pool_.forward(conv_->forward(bidir_->forward(seq)));
            break;
        case Architecture::is_conv_nm: {
            pooled = pool_.forward(conv_->forward(bidir_->forward(seq)));
            auto branch = branch_pool_.forward(branch_conv_->forward(seq));
            if (training && branch_drop_->rate() > 0.0 && dropout_rng == nullptr) {
                throw IntegrityError("training-mode dropout requires an rng stream");
            }
            Rng unused(0);
            branch = branch_drop_->forward(branch, training,
                                           dropout_rng != nullptr ? *dropout_rng : unused);
            branch = branch_dense_->forward(branch);
            pooled = concat_cols(pooled, branch);
            break;
        }
    }
    return head_->forward(pooled);
}

template <typename T>
void Classifier<T>::backward(const Tensor<T>& grad_probs) {
    auto g = head_->backward(grad_probs);
    switch (spec_.architecture) {
        case Architecture::cnn:
            embed_.backward(conv_->backward(pool_.backward(g)));
            break;
        case Architecture::lstm:
        case Architecture::gru:
            embed_.backward(cell_->backward(pool_.backward(g)));
            break;
        case Architecture::bilstm:
        case Architecture::bigru:
            embed_.backward(bidir_->backward(pool_.backward(g)));
            break;
        case Architecture::cnn_lstm:
            embed_.backward(conv_->backward(cell_->backward(pool_.backward(g))));
            break;
        case Architecture::s_conv_nm:
            embed_.backward(bidir_->backward(conv_->backward(pool_.backward(g))));
            break;
        case Architecture::is_conv_nm: {
            auto [g_trunk, g_branch] = split_cols(g, trunk_width_, branch_width_);
            embed_.backward(bidir_->backward(conv_->backward(pool_.backward(g_trunk))));
            auto gb = branch_dense_->backward(g_branch);
            gb = branch_drop_->backward(gb);
            embed_.backward(branch_conv_->backward(branch_pool_.backward(gb)));
            break;
        }
    }
}

template <typename T>
Prediction<T> Classifier<T>::predict(const std::vector<EncodedNote>& batch, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0)) {
        throw ConfigError("threshold must lie strictly inside (0, 1), got " +
                          std::to_string(threshold));
    }
    Prediction<T> out;
    out.probabilities = forward(batch, /*training=*/false, nullptr);
    ensure_finite(out.probabilities, "prediction probabilities");
    out.labels = LabelMatrix(out.probabilities.dim(0), out.probabilities.dim(1));
    for (std::size_t r = 0; r < out.labels.rows; ++r) {
        for (std::size_t c = 0; c < out.labels.cols; ++c) {
            out.labels.at(r, c) =
                static_cast<double>(out.probabilities(r, c)) >= threshold ? 1 : 0;
        }
    }
    return out;
}

template <typename T>
double Classifier<T>::train_step_backward(const std::vector<EncodedNote>& batch,
                                          const LabelMatrix& targets, Rng* dropout_rng) {
    const auto probs = forward(batch, /*training=*/true, dropout_rng);
    auto [loss, grad] = bce_loss(probs, targets);
    backward(grad);
    return loss;
}

template <typename T>
void Classifier<T>::visit_params(const ParamFn<T>& fn) {
    embed_.visit_params("embedding", fn);
    if (cell_) cell_->visit_params("cell", fn);
    if (bidir_) bidir_->visit_params("bidir", fn);
    if (conv_) conv_->visit_params("conv", fn);
    if (branch_conv_) branch_conv_->visit_params("branch_conv", fn);
    if (branch_dense_) branch_dense_->visit_params("branch_dense", fn);
    head_->visit_params("head", fn);
}

template <typename T>
void Classifier<T>::visit_all_tensors(const ParamFn<T>& fn) {
    embed_.visit_tensors("embedding", fn);
    if (cell_) cell_->visit_params("cell", fn);
    if (bidir_) bidir_->visit_params("bidir", fn);
    if (conv_) conv_->visit_params("conv", fn);
    if (branch_conv_) branch_conv_->visit_params("branch_conv", fn);
    if (branch_dense_) branch_dense_->visit_params("branch_dense", fn);
    head_->visit_params("head", fn);
}

template <typename T>
void Classifier<T>::zero_grads() {
    visit_params([](const std::string&, Tensor<T>&, Tensor<T>& g) { g.fill(T(0)); });
}

template <typename T>
std::size_t Classifier<T>::param_count() {
    std::size_t n = 0;
    visit_params([&](const std::string&, Tensor<T>& p, Tensor<T>&) { n += p.numel(); });
    return n;
}

template class Classifier<float>;
template class Classifier<double>;

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'P', 'H', 'N', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
const char* dtype_name() {
    return sizeof(T) == 4 ? "f32" : "f64";
}

}  // namespace

template <typename T>
void save_checkpoint(const std::string& path, Classifier<T>& model,
                     const CheckpointMeta& meta) {
    nlohmann::ordered_json doc;
    doc["dtype"] = dtype_name<T>();
    doc["spec"] = model_spec_to_json(model.spec());
    doc["vocab_hash"] = meta.vocab_hash;
    doc["embedding_hash"] = meta.embedding_hash;
    doc["l_max"] = meta.l_max != 0 ? meta.l_max : model.trained_l_max();
    doc["vocab_size"] = meta.vocab_size != 0 ? meta.vocab_size : model.vocab_rows();

    std::vector<Tensor<T>*> payloads;
    nlohmann::ordered_json manifest = nlohmann::ordered_json::array();
    model.visit_all_tensors([&](const std::string& name, Tensor<T>& p, Tensor<T>&) {
        manifest.push_back({{"name", name}, {"shape", p.shape()}});
        payloads.push_back(&p);
    });
    doc["tensors"] = std::move(manifest);

    const std::string header = doc.dump();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ParseError(path + ": cannot open for writing");
    out.write(kMagic, sizeof(kMagic));
    const std::uint32_t version = kVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    const std::uint64_t json_len = header.size();
    out.write(reinterpret_cast<const char*>(&json_len), sizeof(json_len));
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const Tensor<T>* t : payloads) {
        out.write(reinterpret_cast<const char*>(t->data()),
                  static_cast<std::streamsize>(t->numel() * sizeof(T)));
    }
    if (!out) throw ParseError(path + ": write failed");
}

template <typename T>
std::pair<Classifier<T>, CheckpointMeta> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path + ": cannot open");
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw ParseError(path + ": not a checkpoint file (bad magic)");
    }
    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (!in || version != kVersion) {
        throw ParseError(path + ": unsupported checkpoint version " + std::to_string(version));
    }
    std::uint64_t json_len = 0;
    in.read(reinterpret_cast<char*>(&json_len), sizeof(json_len));
    std::string header(json_len, '\0');
    in.read(header.data(), static_cast<std::streamsize>(json_len));
    if (!in) throw ParseError(path + ": truncated header");

    nlohmann::ordered_json doc;
    try {
        doc = nlohmann::ordered_json::parse(header);
    } catch (const nlohmann::ordered_json::exception& e) {
        throw ParseError(path + ": bad metadata: " + e.what());
    }
    if (doc.at("dtype").get<std::string>() != dtype_name<T>()) {
        throw ParseError(path + ": checkpoint dtype " + doc.at("dtype").get<std::string>() +
                         " does not match the requested precision");
    }
    CheckpointMeta meta;
    meta.spec = model_spec_from_json(doc.at("spec"));
    meta.vocab_hash = doc.at("vocab_hash").get<std::string>();
    meta.embedding_hash = doc.at("embedding_hash").get<std::string>();
    meta.l_max = doc.at("l_max").get<std::size_t>();
    meta.vocab_size = doc.at("vocab_size").get<std::size_t>();

    std::map<std::string, Tensor<T>> tensors;
    std::vector<std::string> order;
    for (const auto& entry : doc.at("tensors")) {
        const std::string name = entry.at("name").get<std::string>();
        const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
        Tensor<T> t(shape);
        in.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.numel() * sizeof(T)));
        if (!in) throw ParseError(path + ": truncated tensor payload for " + name);
        tensors.emplace(name, std::move(t));
        order.push_back(name);
    }

    const auto table_it = tensors.find("embedding.weight");
    if (table_it == tensors.end()) {
        throw ParseError(path + ": checkpoint is missing the embedding table");
    }
    Rng scratch(0);
    Classifier<T> model(meta.spec, table_it->second, scratch);
    std::size_t restored = 0;
    model.visit_all_tensors([&](const std::string& name, Tensor<T>& p, Tensor<T>&) {
        const auto it = tensors.find(name);
        if (it == tensors.end()) {
            throw IntegrityError(path + ": checkpoint has no tensor named " + name);
        }
        if (!p.same_shape(it->second)) {
            throw IntegrityError(path + ": tensor " + name + " has shape " +
                                 it->second.shape_str() + ", expected " + p.shape_str());
        }
        p = it->second;
        ++restored;
    });
    if (restored != tensors.size()) {
        throw IntegrityError(path + ": checkpoint carries " +
                             std::to_string(tensors.size()) + " tensors but the model has " +
                             std::to_string(restored));
    }
    model.set_trained_l_max(meta.l_max);
    return {std::move(model), meta};
}

template void save_checkpoint(const std::string&, Classifier<float>&, const CheckpointMeta&);
template void save_checkpoint(const std::string&, Classifier<double>&, const CheckpointMeta&);
template std::pair<Classifier<float>, CheckpointMeta> load_checkpoint(const std::string&);
template std::pair<Classifier<double>, CheckpointMeta> load_checkpoint(const std::string&);

}  // namespace phenonet
