#include "ids/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace ids {

namespace {

bool parse_number(const std::string& s, double* out) {
    if (s.empty()) return false;
    const char* b = s.data();
    const char* e = b + s.size();
    double v;
    auto [ptr, ec] = std::from_chars(b, e, v);
    if (ec != std::errc{} || ptr != e) return false;
    if (out) *out = v;
    return true;
}

std::vector<std::string> split_csv_line(const std::string& line, char delim) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"' && cur.empty()) {
            quoted = true;
        } else if (c == delim) {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

}  // namespace

std::size_t RawTable::col_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i] == name) return i;
    throw std::invalid_argument("column not found: " + name);
}

RawTable parse_csv(std::istream& in, const CsvOptions& options) {
    RawTable t;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() && in.peek() == EOF) break;
        auto fields = split_csv_line(line, options.delimiter);
        if (first && options.header) {
            t.columns = std::move(fields);
            first = false;
            continue;
        }
        if (first) {
            t.columns.resize(fields.size());
            for (std::size_t i = 0; i < fields.size(); ++i) t.columns[i] = "c" + std::to_string(i);
            first = false;
        }
        if (fields.size() != t.columns.size())
            throw std::runtime_error("ragged row: expected " + std::to_string(t.columns.size()) +
                                     " fields, got " + std::to_string(fields.size()));
        t.rows.push_back(std::move(fields));
    }
    if (t.rows.empty()) throw std::runtime_error("no rows");
    if (!options.label_column.empty()) t.col_index(options.label_column);  // throws if absent

    // All-or-nothing numeric typing per column; missing cells do not vote.
    t.numeric.assign(t.columns.size(), true);
    for (std::size_t c = 0; c < t.columns.size(); ++c) {
        bool any = false;
        for (const auto& row : t.rows) {
            if (row[c].empty()) continue;
            any = true;
            if (!parse_number(row[c], nullptr)) {
                t.numeric[c] = false;
                break;
            }
        }
        if (!any) t.numeric[c] = false;
    }
    return t;
}

RawTable ingest_csv(const std::string& path, const CsvOptions& options) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read file: " + path);
    return parse_csv(in, options);
}

RawTable normalize_content(const RawTable& table, CleanReport* report) {
    RawTable out;
    out.columns = table.columns;
    out.numeric = table.numeric;
    CleanReport rep;
    std::set<std::vector<std::string>> seen;
    for (const auto& row : table.rows) {
        bool missing = std::any_of(row.begin(), row.end(),
                                   [](const std::string& c) { return c.empty(); });
        if (missing) {
            ++rep.nulls_dropped;
            continue;
        }
        if (!seen.insert(row).second) {
            ++rep.duplicates_dropped;
            continue;
        }
        out.rows.push_back(row);
    }
    if (report) *report = rep;
    return out;
}

FeatureSchema fit_schema(const RawTable& train, const std::string& label_column,
                         const std::string& normal_label) {
    if (train.rows.empty()) throw std::invalid_argument("fit_schema: empty training table");
    const std::size_t label = train.col_index(label_column);
    FeatureSchema schema;
    schema.label_col = label;
    schema.normal_label = normal_label;
    schema.columns.resize(train.columns.size());

    for (std::size_t c = 0; c < train.columns.size(); ++c) {
        ColumnSchema& col = schema.columns[c];
        col.name = train.columns[c];
        if (c == label) {
            col.kind = ColumnKind::Label;
        } else {
            col.kind = train.numeric[c] ? ColumnKind::Numeric : ColumnKind::Categorical;
        }
        if (col.kind == ColumnKind::Numeric) {
            const double n = static_cast<double>(train.rows.size());
            double mean = 0.0;
            for (const auto& row : train.rows) {
                double v = 0.0;
                parse_number(row[c], &v);
                mean += v;
            }
            mean /= n;
            double var = 0.0;
            for (const auto& row : train.rows) {
                double v = 0.0;
                parse_number(row[c], &v);
                var += (v - mean) * (v - mean);
            }
            var /= n;  // population
            col.stats.mean = mean;
            col.stats.std = std::sqrt(var);
            col.stats.constant = (col.stats.std == 0.0);
        } else {
            for (const auto& row : train.rows) {
                if (!col.index.contains(row[c])) {
                    col.index[row[c]] = col.vocab.size();
                    col.vocab.push_back(row[c]);
                }
            }
        }
    }
    const ColumnSchema& lc = schema.columns[label];
    if (auto it = lc.index.find(normal_label); it != lc.index.end())
        schema.normal_id = it->second;
    return schema;
}

EncodedDataset transform(const RawTable& table, const FeatureSchema& schema) {
    if (table.columns.size() != schema.columns.size())
        throw std::invalid_argument("transform: column-set mismatch");
    for (std::size_t c = 0; c < table.columns.size(); ++c)
        if (table.columns[c] != schema.columns[c].name)
            throw std::invalid_argument("transform: column-set mismatch at '" + table.columns[c] + "'");

    const std::size_t N = table.rows.size();
    const std::size_t F = schema.encoded_width();
    EncodedDataset ds;
    ds.features = Tensor::zeros({N, F});
    ds.labels.resize(N);
    ds.schema_fingerprint = schema.fingerprint();

    for (std::size_t n = 0; n < N; ++n) {
        const auto& row = table.rows[n];
        std::size_t f = 0;
        for (std::size_t c = 0; c < schema.columns.size(); ++c) {
            const ColumnSchema& col = schema.columns[c];
            if (col.kind == ColumnKind::Label) {
                auto it = col.index.find(row[c]);
                if (it == col.index.end())
                    throw std::runtime_error("transform: unknown label value '" + row[c] + "'");
                ds.labels[n] = static_cast<int>(it->second);
                continue;
            }
            double v;
            if (col.kind == ColumnKind::Numeric) {
                double x = 0.0;
                if (!parse_number(row[c], &x))
                    throw std::runtime_error("transform: non-numeric cell '" + row[c] +
                                             "' in numeric column '" + col.name + "'");
                v = col.stats.constant ? 0.0 : (x - col.stats.mean) / col.stats.std;
            } else {
                auto it = col.index.find(row[c]);
                v = static_cast<double>(it == col.index.end() ? col.vocab.size() : it->second);
            }
            ds.features.at(n, f++) = v;
        }
    }
    return ds;
}

std::vector<int> binary_label_view(const std::vector<int>& labels, const FeatureSchema& schema) {
    std::vector<int> out(labels.size());
    const int normal = schema.normal_id ? static_cast<int>(*schema.normal_id) : -1;
    for (std::size_t i = 0; i < labels.size(); ++i) out[i] = (labels[i] == normal) ? 0 : 1;
    return out;
}

std::uint64_t fnv1a64(const std::string& text) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string FeatureSchema::to_json() const {
    nlohmann::json j;
    j["format"] = "ids-schema";
    j["version"] = 1;
    j["label_col"] = label_col;
    j["normal_label"] = normal_label;
    if (normal_id)
        j["normal_id"] = *normal_id;
    else
        j["normal_id"] = nullptr;
    nlohmann::json cols = nlohmann::json::array();
    for (const auto& c : columns) {
        nlohmann::json jc;
        jc["name"] = c.name;
        jc["kind"] = c.kind == ColumnKind::Numeric     ? "numeric"
                     : c.kind == ColumnKind::Categorical ? "categorical"
                                                         : "label";
        if (c.kind == ColumnKind::Numeric) {
            jc["mean"] = c.stats.mean;
            jc["std"] = c.stats.std;
            jc["constant"] = c.stats.constant;
        } else {
            jc["vocab"] = c.vocab;
        }
        cols.push_back(std::move(jc));
    }
    j["columns"] = std::move(cols);
    return j.dump(2);
}

FeatureSchema FeatureSchema::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    if (j.value("format", "") != "ids-schema")
        throw std::runtime_error("not a schema document");
    FeatureSchema s;
    s.label_col = j.at("label_col").get<std::size_t>();
    s.normal_label = j.at("normal_label").get<std::string>();
    if (!j.at("normal_id").is_null()) s.normal_id = j.at("normal_id").get<std::size_t>();
    for (const auto& jc : j.at("columns")) {
        ColumnSchema c;
        c.name = jc.at("name").get<std::string>();
        std::string kind = jc.at("kind").get<std::string>();
        c.kind = kind == "numeric"     ? ColumnKind::Numeric
                 : kind == "categorical" ? ColumnKind::Categorical
                                         : ColumnKind::Label;
        if (c.kind == ColumnKind::Numeric) {
            c.stats.mean = jc.at("mean").get<double>();
            c.stats.std = jc.at("std").get<double>();
            c.stats.constant = jc.at("constant").get<bool>();
        } else {
            c.vocab = jc.at("vocab").get<std::vector<std::string>>();
            for (std::size_t i = 0; i < c.vocab.size(); ++i) c.index[c.vocab[i]] = i;
        }
        s.columns.push_back(std::move(c));
    }
    return s;
}

std::string FeatureSchema::fingerprint() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(to_json())));
    return buf;
}

void FeatureSchema::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write schema: " + path);
    out << to_json() << "\n";
}

FeatureSchema FeatureSchema::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read schema: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

namespace {
constexpr char kCacheMagic[4] = {'I', 'D', 'S', 'M'};
constexpr std::uint32_t kCacheVersion = 1;
}  // namespace

void save_dataset_cache(const EncodedDataset& ds, std::size_t num_classes, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write cache: " + path);
    out.write(kCacheMagic, 4);
    std::uint32_t ver = kCacheVersion;
    std::uint64_t n = ds.size(), f = ds.features.cols(), k = num_classes;
    out.write(reinterpret_cast<const char*>(&ver), sizeof ver);
    out.write(reinterpret_cast<const char*>(&n), sizeof n);
    out.write(reinterpret_cast<const char*>(&f), sizeof f);
    out.write(reinterpret_cast<const char*>(&k), sizeof k);
    std::uint64_t fp_len = ds.schema_fingerprint.size();
    out.write(reinterpret_cast<const char*>(&fp_len), sizeof fp_len);
    out.write(ds.schema_fingerprint.data(), static_cast<std::streamsize>(fp_len));
    out.write(reinterpret_cast<const char*>(ds.features.data.data()),
              static_cast<std::streamsize>(ds.features.data.size() * sizeof(double)));
    for (int label : ds.labels) {
        std::int32_t v = label;
        out.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
}

EncodedDataset load_dataset_cache(const std::string& path, std::size_t* num_classes) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read cache: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kCacheMagic, 4) != 0)
        throw std::runtime_error("bad cache magic: " + path);
    std::uint32_t ver = 0;
    std::uint64_t n = 0, f = 0, k = 0;
    in.read(reinterpret_cast<char*>(&ver), sizeof ver);
    if (ver != kCacheVersion) throw std::runtime_error("unsupported cache version");
    in.read(reinterpret_cast<char*>(&n), sizeof n);
    in.read(reinterpret_cast<char*>(&f), sizeof f);
    in.read(reinterpret_cast<char*>(&k), sizeof k);
    std::uint64_t fp_len = 0;
    in.read(reinterpret_cast<char*>(&fp_len), sizeof fp_len);
    EncodedDataset ds;
    ds.schema_fingerprint.resize(fp_len);
    in.read(ds.schema_fingerprint.data(), static_cast<std::streamsize>(fp_len));
    ds.features = Tensor::zeros({static_cast<std::size_t>(n), static_cast<std::size_t>(f)});
    in.read(reinterpret_cast<char*>(ds.features.data.data()),
            static_cast<std::streamsize>(n * f * sizeof(double)));
    ds.labels.resize(n);
    for (auto& label : ds.labels) {
        std::int32_t v = 0;
        in.read(reinterpret_cast<char*>(&v), sizeof v);
        label = v;
    }
    if (!in) throw std::runtime_error("truncated cache: " + path);
    if (num_classes) *num_classes = static_cast<std::size_t>(k);
    return ds;
}

}  // namespace ids
