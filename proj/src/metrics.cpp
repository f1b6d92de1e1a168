#include "phenonet/metrics.hpp"

#include <cstdio>

#include "phenonet/errors.hpp"

namespace phenonet {

ConfusionCounts count(const LabelMatrix& pred, const LabelMatrix& truth) {
    if (pred.rows != truth.rows || pred.cols != truth.cols) {
        throw DimensionError("prediction matrix " + std::to_string(pred.rows) + "x" +
                             std::to_string(pred.cols) + " does not match truth " +
                             std::to_string(truth.rows) + "x" + std::to_string(truth.cols));
    }
    for (const std::uint8_t v : pred.data) {
        if (v > 1) throw ValidationError("prediction entries must be 0 or 1");
    }
    for (const std::uint8_t v : truth.data) {
        if (v > 1) throw ValidationError("truth entries must be 0 or 1");
    }
    ConfusionCounts out;
    out.examples = pred.rows;
    out.labels.assign(pred.cols, LabelCounts{});
    for (std::size_t r = 0; r < pred.rows; ++r) {
        for (std::size_t c = 0; c < pred.cols; ++c) {
            const bool p = pred.at(r, c) != 0;
            const bool t = truth.at(r, c) != 0;
            auto& l = out.labels[c];
            if (p && t) {
                ++l.tp;
            } else if (p && !t) {
                ++l.fp;
            } else if (!p && t) {
                ++l.fn;
            } else {
                ++l.tn;
            }
        }
    }
    return out;
}

namespace {

double ratio(std::uint64_t num, std::uint64_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

double harmonic(double p, double r) {
    return (p + r) == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

}  // namespace

Prf1 prf1(const LabelCounts& c) {
    Prf1 out;
    out.precision = ratio(c.tp, c.tp + c.fp);
    out.recall = ratio(c.tp, c.tp + c.fn);
    out.f1 = harmonic(out.precision, out.recall);
    return out;
}

Aggregates micro_macro(const ConfusionCounts& c) {
    Aggregates out;
    std::uint64_t tp = 0, fp = 0, fn = 0;
    double p_sum = 0.0, r_sum = 0.0;
    for (const auto& l : c.labels) {
        tp += l.tp;
        fp += l.fp;
        fn += l.fn;
        const auto per = prf1(l);
        p_sum += per.precision;
        r_sum += per.recall;
    }
    out.micro.precision = ratio(tp, tp + fp);
    out.micro.recall = ratio(tp, tp + fn);
    out.micro.f1 = harmonic(out.micro.precision, out.micro.recall);

    const double n = c.labels.empty() ? 1.0 : static_cast<double>(c.labels.size());
    out.macro.precision = p_sum / n;
    out.macro.recall = r_sum / n;
    out.macro.f1 = harmonic(out.macro.precision, out.macro.recall);
    return out;
}

MetricsReport make_report(const LabelMatrix& pred, const LabelMatrix& truth,
                          nlohmann::ordered_json metadata) {
    MetricsReport report;
    report.counts = count(pred, truth);
    report.per_label.reserve(report.counts.labels.size());
    for (const auto& l : report.counts.labels) report.per_label.push_back(prf1(l));
    const auto agg = micro_macro(report.counts);
    report.micro = agg.micro;
    report.macro = agg.macro;
    report.metadata = std::move(metadata);
    return report;
}

namespace {

nlohmann::ordered_json prf1_json(const Prf1& m) {
    return {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}};
}

Prf1 prf1_from(const nlohmann::ordered_json& j) {
    Prf1 m;
    m.precision = j.at("precision").get<double>();
    m.recall = j.at("recall").get<double>();
    m.f1 = j.at("f1").get<double>();
    return m;
}

}  // namespace

nlohmann::ordered_json report_to_json(const MetricsReport& report) {
    nlohmann::ordered_json doc;
    doc["labels"] = report.counts.num_labels();
    doc["examples"] = report.counts.examples;
    nlohmann::ordered_json counts = nlohmann::ordered_json::array();
    for (const auto& l : report.counts.labels) {
        counts.push_back({{"tp", l.tp}, {"fp", l.fp}, {"tn", l.tn}, {"fn", l.fn}});
    }
    doc["counts"] = std::move(counts);
    nlohmann::ordered_json per_label = nlohmann::ordered_json::array();
    for (const auto& m : report.per_label) per_label.push_back(prf1_json(m));
    doc["per_label"] = std::move(per_label);
    doc["micro"] = prf1_json(report.micro);
    doc["macro"] = prf1_json(report.macro);
    doc["metadata"] = report.metadata;
    return doc;
}

MetricsReport report_from_json(const nlohmann::ordered_json& doc) {
    try {
        MetricsReport report;
        report.counts.examples = doc.at("examples").get<std::uint64_t>();
        for (const auto& j : doc.at("counts")) {
            LabelCounts l;
            l.tp = j.at("tp").get<std::uint64_t>();
            l.fp = j.at("fp").get<std::uint64_t>();
            l.tn = j.at("tn").get<std::uint64_t>();
            l.fn = j.at("fn").get<std::uint64_t>();
            report.counts.labels.push_back(l);
        }
        if (doc.at("labels").get<std::size_t>() != report.counts.num_labels()) {
            throw ParseError("metrics report: label count disagrees with counts array");
        }
        for (const auto& j : doc.at("per_label")) report.per_label.push_back(prf1_from(j));
        report.micro = prf1_from(doc.at("micro"));
        report.macro = prf1_from(doc.at("macro"));
        report.metadata = doc.at("metadata");
        return report;
    } catch (const nlohmann::ordered_json::exception& e) {
        throw ParseError(std::string("metrics report: ") + e.what());
    }
}

std::string report_to_csv(const MetricsReport& report) {
    std::string out = "label,tp,fp,tn,fn,precision,recall,f1\n";
    char buf[160];
    const auto row = [&](const std::string& name, const LabelCounts* c, const Prf1& m) {
        if (c != nullptr) {
            std::snprintf(buf, sizeof(buf), "%s,%llu,%llu,%llu,%llu,%.6f,%.6f,%.6f\n",
                          name.c_str(), static_cast<unsigned long long>(c->tp),
                          static_cast<unsigned long long>(c->fp),
                          static_cast<unsigned long long>(c->tn),
                          static_cast<unsigned long long>(c->fn), m.precision, m.recall, m.f1);
        } else {
            std::snprintf(buf, sizeof(buf), "%s,,,,,%.6f,%.6f,%.6f\n", name.c_str(),
                          m.precision, m.recall, m.f1);
        }
        out += buf;
    };
    for (std::size_t c = 0; c < report.per_label.size(); ++c) {
        row(std::to_string(c), &report.counts.labels[c], report.per_label[c]);
    }
    row("micro", nullptr, report.micro);
    row("macro", nullptr, report.macro);
    return out;
}

}  // namespace phenonet
