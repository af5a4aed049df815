#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "vaesynth/dataio/csv.hpp"
#include "vaesynth/errors.hpp"

namespace vaesynth::evalkit {

/// counts[actual][predicted].
struct ConfusionMatrix {
    std::vector<std::vector<std::uint64_t>> counts;

    explicit ConfusionMatrix(std::size_t classes = 0) : counts(classes, std::vector<std::uint64_t>(classes, 0)) {}

    std::size_t size() const noexcept { return counts.size(); }
    void add(std::size_t actual, std::size_t predicted) { ++counts.at(actual).at(predicted); }

    std::uint64_t total() const noexcept {
        std::uint64_t t = 0;
        for (const auto& r : counts) {
            for (auto v : r) t += v;
        }
        return t;
    }
    std::uint64_t trace() const noexcept {
        std::uint64_t t = 0;
        for (std::size_t i = 0; i < counts.size(); ++i) t += counts[i][i];
        return t;
    }

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::uint64_t support = 0;  // actual count
};

struct MetricsReport {
    std::vector<ClassMetrics> per_class;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
    double accuracy = 0.0;
};

/// One-vs-rest precision TP/(TP+FP), recall TP/(TP+FN), F1 = 2PR/(P+R); every zero
/// denominator yields 0. Macro values are unweighted class means.
inline MetricsReport metrics_from_confusion(const ConfusionMatrix& m) {
    const std::size_t k = m.size();
    const auto total = m.total();
    if (total == 0) throw ValidationError("metrics_from_confusion: empty confusion matrix");
    MetricsReport r;
    r.per_class.resize(k);
    for (std::size_t c = 0; c < k; ++c) {
        const double tp = static_cast<double>(m.counts[c][c]);
        double col = 0.0, row = 0.0;
        for (std::size_t o = 0; o < k; ++o) {
            col += static_cast<double>(m.counts[o][c]);
            row += static_cast<double>(m.counts[c][o]);
        }
        auto& cm = r.per_class[c];
        cm.precision = col > 0.0 ? tp / col : 0.0;
        cm.recall = row > 0.0 ? tp / row : 0.0;
        cm.f1 = cm.precision + cm.recall > 0.0 ? 2.0 * cm.precision * cm.recall / (cm.precision + cm.recall) : 0.0;
        cm.support = static_cast<std::uint64_t>(row);
        r.macro_precision += cm.precision;
        r.macro_recall += cm.recall;
        r.macro_f1 += cm.f1;
    }
    if (k > 0) {
        r.macro_precision /= static_cast<double>(k);
        r.macro_recall /= static_cast<double>(k);
        r.macro_f1 /= static_cast<double>(k);
    }
    r.accuracy = static_cast<double>(m.trace()) / static_cast<double>(total);
    return r;
}

inline nlohmann::json metrics_to_json(const MetricsReport& r, const ConfusionMatrix& m,
                                      const std::vector<std::string>& classes) {
    nlohmann::json per = nlohmann::json::array();
    for (std::size_t c = 0; c < r.per_class.size(); ++c) {
        per.push_back({{"class", classes.at(c)},
                       {"precision", r.per_class[c].precision},
                       {"recall", r.per_class[c].recall},
                       {"f1", r.per_class[c].f1},
                       {"support", r.per_class[c].support}});
    }
    return {{"classes", classes},
            {"per_class", per},
            {"macro_precision", r.macro_precision},
            {"macro_recall", r.macro_recall},
            {"macro_f1", r.macro_f1},
            {"accuracy", r.accuracy},
            {"confusion", m.counts}};
}

inline void write_metrics_csv(const MetricsReport& r, const std::vector<std::string>& classes,
                              const std::filesystem::path& path) {
    std::vector<dataio::CsvRow> rows;
    for (std::size_t c = 0; c < r.per_class.size(); ++c) {
        const auto& cm = r.per_class[c];
        rows.push_back({classes.at(c), cm.precision, cm.recall, cm.f1, static_cast<long long>(cm.support)});
    }
    dataio::write_csv(rows, {"class", "precision", "recall", "f1", "support"}, path);
}

}  // namespace vaesynth::evalkit
