#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace phenonet {

// Dense row-major matrix of {0,1} entries: predicted or true label sets.
struct LabelMatrix {
    std::size_t rows = 0, cols = 0;
    std::vector<std::uint8_t> data;  // rows * cols entries

    LabelMatrix() = default;
    LabelMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0) {}

    std::uint8_t& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    std::uint8_t at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

struct LabelCounts {
    std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
};

// Per-label confusion tallies; tp+fp+tn+fn == examples for every label.
struct ConfusionCounts {
    std::vector<LabelCounts> labels;
    std::uint64_t examples = 0;

    std::size_t num_labels() const { return labels.size(); }
};

struct Prf1 {
    double precision = 0.0, recall = 0.0, f1 = 0.0;
};

struct Aggregates {
    Prf1 micro, macro;
};

// Tally per-label confusion counts. Throws DimensionError on shape mismatch
// and ValidationError if any entry is not 0 or 1.
ConfusionCounts count(const LabelMatrix& pred, const LabelMatrix& truth);

// recall = TP/(TP+FN), precision = TP/(TP+FP), F1 = 2PR/(P+R).
// Any zero denominator yields 0 for that metric.
Prf1 prf1(const LabelCounts& c);

// Micro metrics from counts summed across labels; macro metrics as unweighted
// means of per-label values. Both F1s are harmonic means of the corresponding
// aggregated precision and recall — macro F1 is NOT the mean of per-label F1s.
Aggregates micro_macro(const ConfusionCounts& c);

// Full evaluation document: counts, per-label metrics, aggregates, and
// caller-supplied metadata (seed, config hashes, preprocessing steps).
struct MetricsReport {
    ConfusionCounts counts;
    std::vector<Prf1> per_label;
    Prf1 micro, macro;
    nlohmann::ordered_json metadata;
};

MetricsReport make_report(const LabelMatrix& pred, const LabelMatrix& truth,
                          nlohmann::ordered_json metadata);

// Lossless JSON round-trip: to -> from -> to is byte-identical and metric
// values recompute exactly from the embedded integer counts.
nlohmann::ordered_json report_to_json(const MetricsReport& report);
MetricsReport report_from_json(const nlohmann::ordered_json& doc);

// Delimited table (one row per label plus micro/macro rows) for spreadsheets.
std::string report_to_csv(const MetricsReport& report);

}  // namespace phenonet
