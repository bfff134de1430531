#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ids {

/// Binary attack-vs-normal counts. Positive = any attack class.
struct ConfusionCounts {
    std::uint64_t tp = 0, tn = 0, fp = 0, fn = 0;

    std::uint64_t total() const { return tp + tn + fp + fn; }

    ConfusionCounts& operator+=(const ConfusionCounts& o) {
        tp += o.tp;
        tn += o.tn;
        fp += o.fp;
        fn += o.fn;
        return *this;
    }
};

/// pred/truth are 0 (normal) / 1 (attack) views of the class predictions.
ConfusionCounts confusion_binary(const std::vector<int>& pred_binary,
                                 const std::vector<int>& true_binary);

/// Multi-class predictions + normal class id variant.
ConfusionCounts confusion_binary_classes(const std::vector<int>& pred_classes,
                                         const std::vector<int>& true_classes, int normal_id);

/// A rate with an explicit undefined state for zero denominators.
struct Rate {
    std::optional<double> value;  // fraction in [0,1]
    std::int64_t num = 0, den = 0;

    bool defined() const { return value.has_value(); }
    /// Percentage rounded half-up to 2 decimals, via exact integer
    /// arithmetic so published tables reproduce bit-for-bit.
    std::string display_pct() const;
};

Rate make_rate(std::int64_t num, std::int64_t den);

struct MetricsReport {
    Rate multiclass_acc;  // correct multi-class predictions / N
    ConfusionCounts counts;
    Rate dr;         // TP/(TP+FN)
    Rate far;        // FP/(FP+TN)
    Rate precision;  // TP/(TP+FP)
    Rate recall;     // == dr
    Rate f1;         // 2PR/(P+R) over the two-decimal displayed precision/recall
    double runtime_seconds = 0.0;

    std::string to_json() const;
    std::string to_text() const;  // aligned plain-text table
};

/// Derives the full report from binary counts plus the independent
/// multi-class correct count.
MetricsReport compute_metrics(const ConfusionCounts& counts, std::uint64_t multiclass_correct,
                              std::uint64_t n);

}  // namespace ids
