#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ids {

enum class DetectionLayer { Edge, Fog, Cloud };

std::string layer_name(DetectionLayer layer);
DetectionLayer layer_from_name(const std::string& name);

struct Alert {
    DetectionLayer layer = DetectionLayer::Edge;
    double timestamp = 0.0;  // native dataset time units
    int predicted_class = 0;
    std::string record_id;
};

struct CorrelationConfig {
    double threshold = 0.0;
    std::vector<double> thresholds_to_sweep{56000, 58000, 60000, 62000};
    std::vector<int> classes_in_scope;  // empty means every class seen
};

struct MatchedGroup {
    int predicted_class = 0;
    Alert edge, fog, cloud;
    double span = 0.0;  // max(t) - min(t)
};

struct CorrelationResult {
    std::vector<MatchedGroup> groups;
    std::map<int, std::size_t> matched_per_class;
    std::map<int, std::size_t> detected_totals;  // per class
    // Alerts that never joined a group, per layer.
    std::map<std::string, std::vector<Alert>> unmatched;

    std::optional<double> tdr(int cls) const;
    std::optional<double> overall_tdr() const;  // detection-weighted mean
};

/// Greedy earliest-first matching. Per class, repeatedly consume the
/// earliest feasible triple (one alert per layer, same class,
/// max(t)-min(t) <= threshold), where "earliest" orders triples by
/// (min t, max t, edge id, fog id, cloud id). Deterministic for fixed input.
CorrelationResult correlate(const std::vector<Alert>& edge_alerts,
                            const std::vector<Alert>& fog_alerts,
                            const std::vector<Alert>& cloud_alerts,
                            const CorrelationConfig& config);

/// Overrides the default detected-totals census (max per-class alert count
/// over the three layers) with explicit per-class totals.
void apply_detected_totals(CorrelationResult& result, const std::map<int, std::size_t>& totals);

struct SweepRow {
    double threshold = 0.0;
    std::map<int, std::optional<double>> tdr_per_class;
    std::optional<double> overall;
};

/// Runs correlate once per threshold (ascending). TDR is checked to be
/// non-decreasing in the threshold.
std::vector<SweepRow> sweep_thresholds(const std::vector<Alert>& edge_alerts,
                                       const std::vector<Alert>& fog_alerts,
                                       const std::vector<Alert>& cloud_alerts,
                                       const CorrelationConfig& config);

std::string sweep_to_text(const std::vector<SweepRow>& rows);
std::string sweep_to_json(const std::vector<SweepRow>& rows);

/// Alert input: CSV (layer,timestamp,class,record_id with header) or
/// line-delimited JSON objects with the same fields (.json/.jsonl).
std::vector<Alert> load_alerts(const std::string& path);

}  // namespace ids
