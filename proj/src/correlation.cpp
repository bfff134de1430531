#include "ids/correlation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace ids {

std::string layer_name(DetectionLayer layer) {
    switch (layer) {
        case DetectionLayer::Edge: return "edge";
        case DetectionLayer::Fog: return "fog";
        case DetectionLayer::Cloud: return "cloud";
    }
    throw std::invalid_argument("bad layer");
}

DetectionLayer layer_from_name(const std::string& name) {
    if (name == "edge") return DetectionLayer::Edge;
    if (name == "fog") return DetectionLayer::Fog;
    if (name == "cloud") return DetectionLayer::Cloud;
    throw std::invalid_argument("unknown layer: " + name);
}

std::optional<double> CorrelationResult::tdr(int cls) const {
    auto t = detected_totals.find(cls);
    if (t == detected_totals.end() || t->second == 0) return std::nullopt;
    auto m = matched_per_class.find(cls);
    std::size_t matched = m == matched_per_class.end() ? 0 : m->second;
    if (matched > t->second)
        throw std::logic_error("TDR: matched exceeds detected total");
    return static_cast<double>(matched) / static_cast<double>(t->second);
}

std::optional<double> CorrelationResult::overall_tdr() const {
    std::size_t matched = 0, total = 0;
    for (const auto& [cls, tot] : detected_totals) {
        total += tot;
        auto m = matched_per_class.find(cls);
        matched += m == matched_per_class.end() ? 0 : m->second;
    }
    if (total == 0) return std::nullopt;
    return static_cast<double>(matched) / static_cast<double>(total);
}

namespace {

bool alert_before(const Alert& a, const Alert& b) {
    if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
    return a.record_id < b.record_id;
}

struct Pool {
    std::vector<Alert> alerts;  // sorted by (timestamp, record_id)
    std::vector<bool> used;

    // indices of unconsumed alerts with timestamp in [lo, hi]
    std::vector<std::size_t> window(double lo, double hi) const {
        std::vector<std::size_t> out;
        auto it = std::lower_bound(alerts.begin(), alerts.end(), lo,
                                   [](const Alert& a, double v) { return a.timestamp < v; });
        for (std::size_t i = static_cast<std::size_t>(it - alerts.begin());
             i < alerts.size() && alerts[i].timestamp <= hi; ++i)
            if (!used[i]) out.push_back(i);
        return out;
    }
};

struct Triple {
    std::size_t e, f, c;
    double min_t, max_t;
};

// key = (min_t, max_t, edge id, fog id, cloud id)
bool triple_less(const Triple& a, const Triple& b, const Pool& E, const Pool& F, const Pool& C) {
    if (a.min_t != b.min_t) return a.min_t < b.min_t;
    if (a.max_t != b.max_t) return a.max_t < b.max_t;
    if (E.alerts[a.e].record_id != E.alerts[b.e].record_id)
        return E.alerts[a.e].record_id < E.alerts[b.e].record_id;
    if (F.alerts[a.f].record_id != F.alerts[b.f].record_id)
        return F.alerts[a.f].record_id < F.alerts[b.f].record_id;
    return C.alerts[a.c].record_id < C.alerts[b.c].record_id;
}

// Greedy earliest-first matching for one class.
std::vector<MatchedGroup> match_class(Pool& E, Pool& F, Pool& C, double th, int cls) {
    std::vector<MatchedGroup> groups;
    while (true) {
        // earliest anchor time that admits any feasible triple
        std::optional<Triple> best;
        // gather all unconsumed alerts across layers, ascending by time
        struct Anchor {
            double t;
            int layer;
            std::size_t idx;
        };
        std::vector<Anchor> anchors;
        for (std::size_t i = 0; i < E.alerts.size(); ++i)
            if (!E.used[i]) anchors.push_back({E.alerts[i].timestamp, 0, i});
        for (std::size_t i = 0; i < F.alerts.size(); ++i)
            if (!F.used[i]) anchors.push_back({F.alerts[i].timestamp, 1, i});
        for (std::size_t i = 0; i < C.alerts.size(); ++i)
            if (!C.used[i]) anchors.push_back({C.alerts[i].timestamp, 2, i});
        std::sort(anchors.begin(), anchors.end(),
                  [](const Anchor& a, const Anchor& b) { return a.t < b.t; });

        std::optional<double> t0;
        for (const Anchor& a : anchors) {
            if (t0 && a.t > *t0) break;  // only anchors at the earliest feasible time compete
            // partners live in [a.t, a.t + th]; both being in that window
            // bounds the whole triple span by th
            Pool* others[2];
            if (a.layer == 0) { others[0] = &F; others[1] = &C; }
            else if (a.layer == 1) { others[0] = &E; others[1] = &C; }
            else { others[0] = &E; others[1] = &F; }
            auto w1 = others[0]->window(a.t, a.t + th);
            auto w2 = others[1]->window(a.t, a.t + th);
            if (w1.empty() || w2.empty()) continue;
            if (!t0) t0 = a.t;
            for (std::size_t i : w1)
                for (std::size_t j : w2) {
                    Triple tr;
                    if (a.layer == 0) { tr.e = a.idx; tr.f = i; tr.c = j; }
                    else if (a.layer == 1) { tr.e = i; tr.f = a.idx; tr.c = j; }
                    else { tr.e = i; tr.f = j; tr.c = a.idx; }
                    double mn = std::min({E.alerts[tr.e].timestamp, F.alerts[tr.f].timestamp,
                                          C.alerts[tr.c].timestamp});
                    double mx = std::max({E.alerts[tr.e].timestamp, F.alerts[tr.f].timestamp,
                                          C.alerts[tr.c].timestamp});
                    if (mn != a.t) continue;  // counted when its own min element anchors it
                    tr.min_t = mn;
                    tr.max_t = mx;
                    if (!best || triple_less(tr, *best, E, F, C)) best = tr;
                }
        }
        if (!best) break;
        E.used[best->e] = F.used[best->f] = C.used[best->c] = true;
        MatchedGroup g;
        g.predicted_class = cls;
        g.edge = E.alerts[best->e];
        g.fog = F.alerts[best->f];
        g.cloud = C.alerts[best->c];
        g.span = best->max_t - best->min_t;
        groups.push_back(std::move(g));
    }
    return groups;
}

}  // namespace

CorrelationResult correlate(const std::vector<Alert>& edge_alerts,
                            const std::vector<Alert>& fog_alerts,
                            const std::vector<Alert>& cloud_alerts,
                            const CorrelationConfig& config) {
    if (config.threshold < 0.0) throw std::invalid_argument("correlate: negative threshold");
    std::set<int> scope(config.classes_in_scope.begin(), config.classes_in_scope.end());

    std::set<int> classes;
    auto check = [&](const std::vector<Alert>& alerts, DetectionLayer expect) {
        for (const Alert& a : alerts) {
            if (!std::isfinite(a.timestamp))
                throw std::invalid_argument("correlate: non-finite timestamp");
            if (a.layer != expect)
                throw std::invalid_argument("correlate: alert in wrong layer stream");
            if (!scope.empty() && !scope.contains(a.predicted_class))
                throw std::invalid_argument("correlate: unknown class index " +
                                            std::to_string(a.predicted_class));
            classes.insert(a.predicted_class);
        }
    };
    check(edge_alerts, DetectionLayer::Edge);
    check(fog_alerts, DetectionLayer::Fog);
    check(cloud_alerts, DetectionLayer::Cloud);

    CorrelationResult result;
    for (int cls : classes) {
        Pool E, F, C;
        auto fill = [cls](Pool& p, const std::vector<Alert>& src) {
            for (const Alert& a : src)
                if (a.predicted_class == cls) p.alerts.push_back(a);
            std::sort(p.alerts.begin(), p.alerts.end(), alert_before);
            p.used.assign(p.alerts.size(), false);
        };
        fill(E, edge_alerts);
        fill(F, fog_alerts);
        fill(C, cloud_alerts);

        result.detected_totals[cls] =
            std::max({E.alerts.size(), F.alerts.size(), C.alerts.size()});

        auto groups = match_class(E, F, C, config.threshold, cls);
        result.matched_per_class[cls] = groups.size();
        for (auto& g : groups) result.groups.push_back(std::move(g));

        auto census = [&result](const Pool& p, const std::string& name) {
            for (std::size_t i = 0; i < p.alerts.size(); ++i)
                if (!p.used[i]) result.unmatched[name].push_back(p.alerts[i]);
        };
        census(E, "edge");
        census(F, "fog");
        census(C, "cloud");
    }
    return result;
}

void apply_detected_totals(CorrelationResult& result, const std::map<int, std::size_t>& totals) {
    for (const auto& [cls, total] : totals) {
        auto m = result.matched_per_class.find(cls);
        std::size_t matched = m == result.matched_per_class.end() ? 0 : m->second;
        if (matched > total)
            throw std::invalid_argument("detected total below matched count for class " +
                                        std::to_string(cls));
        result.detected_totals[cls] = total;
    }
}

std::vector<SweepRow> sweep_thresholds(const std::vector<Alert>& edge_alerts,
                                       const std::vector<Alert>& fog_alerts,
                                       const std::vector<Alert>& cloud_alerts,
                                       const CorrelationConfig& config) {
    if (config.thresholds_to_sweep.empty())
        throw std::invalid_argument("sweep_thresholds: empty threshold list");
    if (!std::is_sorted(config.thresholds_to_sweep.begin(), config.thresholds_to_sweep.end()))
        throw std::invalid_argument("sweep_thresholds: thresholds must be ascending");

    std::vector<SweepRow> rows;
    std::map<int, std::size_t> prev_matched;
    for (double th : config.thresholds_to_sweep) {
        CorrelationConfig c = config;
        c.threshold = th;
        CorrelationResult r = correlate(edge_alerts, fog_alerts, cloud_alerts, c);
        SweepRow row;
        row.threshold = th;
        for (const auto& [cls, total] : r.detected_totals) {
            row.tdr_per_class[cls] = r.tdr(cls);
            std::size_t m = r.matched_per_class[cls];
            if (auto it = prev_matched.find(cls); it != prev_matched.end() && m < it->second)
                throw std::logic_error("sweep_thresholds: matched count decreased at threshold " +
                                       std::to_string(th));
            prev_matched[cls] = m;
        }
        row.overall = r.overall_tdr();
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string sweep_to_text(const std::vector<SweepRow>& rows) {
    std::ostringstream out;
    std::set<int> classes;
    for (const auto& r : rows)
        for (const auto& [cls, _] : r.tdr_per_class) classes.insert(cls);
    out << "threshold";
    for (int cls : classes) out << "\tclass_" << cls;
    out << "\toverall\n";
    auto fmt = [](const std::optional<double>& v) {
        if (!v) return std::string("—");
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.4f", *v);
        return std::string(buf);
    };
    for (const auto& r : rows) {
        out << r.threshold;
        for (int cls : classes) {
            auto it = r.tdr_per_class.find(cls);
            out << "\t" << fmt(it == r.tdr_per_class.end() ? std::nullopt : it->second);
        }
        out << "\t" << fmt(r.overall) << "\n";
    }
    return out.str();
}

std::string sweep_to_json(const std::vector<SweepRow>& rows) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : rows) {
        nlohmann::json jr;
        jr["threshold"] = r.threshold;
        nlohmann::json per = nlohmann::json::object();
        for (const auto& [cls, v] : r.tdr_per_class) {
            if (v)
                per[std::to_string(cls)] = *v;
            else
                per[std::to_string(cls)] = nullptr;
        }
        jr["tdr_per_class"] = std::move(per);
        if (r.overall)
            jr["overall"] = *r.overall;
        else
            jr["overall"] = nullptr;
        j.push_back(std::move(jr));
    }
    return j.dump(2);
}

std::vector<Alert> load_alerts(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read alert file: " + path);
    std::vector<Alert> alerts;
    const bool jsonl = path.ends_with(".json") || path.ends_with(".jsonl");
    std::string line;
    if (jsonl) {
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            nlohmann::json j = nlohmann::json::parse(line);
            Alert a;
            a.layer = layer_from_name(j.at("layer").get<std::string>());
            a.timestamp = j.at("timestamp").get<double>();
            a.predicted_class = j.at("class").get<int>();
            a.record_id = j.at("record_id").get<std::string>();
            alerts.push_back(std::move(a));
        }
        return alerts;
    }
    // CSV with a header naming layer, timestamp, class, record_id
    if (!std::getline(in, line)) return alerts;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) header.push_back(field);
    }
    auto col = [&header](const std::string& name) {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw std::runtime_error("alert file missing column: " + name);
    };
    const std::size_t li = col("layer"), ti = col("timestamp"), ci = col("class"),
                      ri = col("record_id");
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() < header.size()) throw std::runtime_error("ragged alert row");
        Alert a;
        a.layer = layer_from_name(fields[li]);
        a.timestamp = std::stod(fields[ti]);
        a.predicted_class = std::stoi(fields[ci]);
        a.record_id = fields[ri];
        alerts.push_back(std::move(a));
    }
    return alerts;
}

}  // namespace ids
