#include "ids/metrics.hpp"

#include <stdexcept>

#include <json.hpp>

namespace ids {

ConfusionCounts confusion_binary(const std::vector<int>& pred_binary,
                                 const std::vector<int>& true_binary) {
    if (pred_binary.size() != true_binary.size())
        throw std::invalid_argument("confusion_binary: length mismatch");
    ConfusionCounts c;
    for (std::size_t i = 0; i < pred_binary.size(); ++i) {
        bool p = pred_binary[i] != 0, t = true_binary[i] != 0;
        if (p && t)
            ++c.tp;
        else if (!p && !t)
            ++c.tn;
        else if (p && !t)
            ++c.fp;
        else
            ++c.fn;
    }
    return c;
}

ConfusionCounts confusion_binary_classes(const std::vector<int>& pred_classes,
                                         const std::vector<int>& true_classes, int normal_id) {
    if (pred_classes.size() != true_classes.size())
        throw std::invalid_argument("confusion_binary: length mismatch");
    std::vector<int> p(pred_classes.size()), t(true_classes.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = pred_classes[i] == normal_id ? 0 : 1;
        t[i] = true_classes[i] == normal_id ? 0 : 1;
    }
    return confusion_binary(p, t);
}

Rate make_rate(std::int64_t num, std::int64_t den) {
    Rate r;
    r.num = num;
    r.den = den;
    if (den != 0) r.value = static_cast<double>(num) / static_cast<double>(den);
    return r;
}

std::string Rate::display_pct() const {
    if (!defined()) return "—";  // em dash marks an undefined rate
    // round-half-up of num/den * 10^4 in exact integer arithmetic
    std::int64_t scaled = (num * 20000 + den) / (2 * den);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%lld.%02lld", static_cast<long long>(scaled / 100),
                  static_cast<long long>(scaled % 100));
    return buf;
}

MetricsReport compute_metrics(const ConfusionCounts& counts, std::uint64_t multiclass_correct,
                              std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("compute_metrics: N must be positive");
    if (counts.total() != n)
        throw std::invalid_argument("compute_metrics: counts inconsistent with N");
    MetricsReport r;
    r.counts = counts;
    auto i64 = [](std::uint64_t v) { return static_cast<std::int64_t>(v); };
    r.multiclass_acc = make_rate(i64(multiclass_correct), i64(n));
    r.dr = make_rate(i64(counts.tp), i64(counts.tp + counts.fn));
    r.far = make_rate(i64(counts.fp), i64(counts.fp + counts.tn));
    r.precision = make_rate(i64(counts.tp), i64(counts.tp + counts.fp));
    r.recall = r.dr;
    // F1 = 2PR/(P+R) over precision/recall as printed (rounded half-up to two
    // decimals): the published tables were produced from the rounded columns,
    // and the exact-count ratio disagrees with them in the last digit.
    if (r.precision.defined() && r.recall.defined()) {
        auto hundredths = [](const Rate& x) { return (x.num * 20000 + x.den) / (2 * x.den); };
        std::int64_t p = hundredths(r.precision), rec = hundredths(r.recall);
        r.f1 = p + rec > 0 ? make_rate(2 * p * rec, 10000 * (p + rec)) : make_rate(0, 1);
    }
    return r;
}

namespace {

nlohmann::json rate_json(const Rate& r) {
    nlohmann::json j;
    j["num"] = r.num;
    j["den"] = r.den;
    if (r.defined()) {
        j["value"] = *r.value;
        j["display_pct"] = r.display_pct();
    } else {
        j["value"] = nullptr;
        j["display_pct"] = r.display_pct();
    }
    return j;
}

}  // namespace

std::string MetricsReport::to_json() const {
    nlohmann::json j;
    j["format"] = "ids-metrics";
    j["version"] = 1;
    j["acc"] = rate_json(multiclass_acc);
    j["tp"] = counts.tp;
    j["tn"] = counts.tn;
    j["fp"] = counts.fp;
    j["fn"] = counts.fn;
    j["dr"] = rate_json(dr);
    j["far"] = rate_json(far);
    j["precision"] = rate_json(precision);
    j["recall"] = rate_json(recall);
    j["f1"] = rate_json(f1);
    j["runtime_seconds"] = runtime_seconds;
    return j.dump(2);
}

std::string MetricsReport::to_text() const {
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "%-8s %10s %10s %10s %10s %8s %8s %10s %8s %8s\n"
                  "%-8s %10llu %10llu %10llu %10llu %8s %8s %10s %8s %8s\n",
                  "ACC%", "TP", "TN", "FP", "FN", "DR%", "FAR%", "Prec%", "Rec%", "F1",
                  multiclass_acc.display_pct().c_str(), static_cast<unsigned long long>(counts.tp),
                  static_cast<unsigned long long>(counts.tn),
                  static_cast<unsigned long long>(counts.fp),
                  static_cast<unsigned long long>(counts.fn), dr.display_pct().c_str(),
                  far.display_pct().c_str(), precision.display_pct().c_str(),
                  recall.display_pct().c_str(), f1.display_pct().c_str());
    return buf;
}

}  // namespace ids
