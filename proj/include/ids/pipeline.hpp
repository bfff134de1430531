#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ids/tensor.hpp"

namespace ids {

enum class ColumnKind { Numeric, Categorical, Label };

/// Rectangular table of raw cells. A cell is the original text; empty text
/// is a missing value. Column typing is all-or-nothing: a column is numeric
/// only if every non-missing cell parses as a number.
struct RawTable {
    std::vector<std::string> columns;
    std::vector<bool> numeric;  // per column, from the typing rule above
    std::vector<std::vector<std::string>> rows;

    std::size_t col_index(const std::string& name) const;
};

struct CsvOptions {
    char delimiter = ',';
    bool header = true;
    std::string label_column;  // validated to exist when non-empty
};

RawTable ingest_csv(const std::string& path, const CsvOptions& options = {});
RawTable parse_csv(std::istream& in, const CsvOptions& options);

struct CleanReport {
    std::size_t nulls_dropped = 0;
    std::size_t duplicates_dropped = 0;
};

/// Drops rows with any missing cell, then exact duplicate rows keeping the
/// first occurrence. Row order is otherwise preserved.
RawTable normalize_content(const RawTable& table, CleanReport* report = nullptr);

struct NumericStats {
    double mean = 0.0;
    double std = 0.0;  // population (1/N)
    bool constant = false;
};

struct ColumnSchema {
    std::string name;
    ColumnKind kind = ColumnKind::Numeric;
    NumericStats stats;                // numeric columns
    std::vector<std::string> vocab;    // categorical/label, first-occurrence order
    std::map<std::string, std::size_t> index;  // value -> position in vocab
};

/// Fitted vocabularies and standardization moments. Fitted on the training
/// split only; the unseen-category sentinel is the vocabulary size.
struct FeatureSchema {
    std::vector<ColumnSchema> columns;  // in table order, label included
    std::size_t label_col = 0;
    std::string normal_label;
    std::optional<std::size_t> normal_id;  // absent for attack-only splits

    std::size_t encoded_width() const { return columns.size() - 1; }
    std::size_t num_classes() const { return columns[label_col].vocab.size(); }
    std::string fingerprint() const;  // stable hash of the serialized schema

    std::string to_json() const;
    static FeatureSchema from_json(const std::string& text);
    void save(const std::string& path) const;
    static FeatureSchema load(const std::string& path);
};

FeatureSchema fit_schema(const RawTable& train, const std::string& label_column,
                         const std::string& normal_label);

struct EncodedDataset {
    Tensor features;              // [N, F]
    std::vector<int> labels;      // < num_classes
    std::string schema_fingerprint;

    std::size_t size() const { return labels.size(); }
};

EncodedDataset transform(const RawTable& table, const FeatureSchema& schema);

/// Normal -> 0, any attack class -> 1.
std::vector<int> binary_label_view(const std::vector<int>& labels, const FeatureSchema& schema);

// Flat binary matrix cache: magic "IDSM", version, N, F, K, doubles, labels.
void save_dataset_cache(const EncodedDataset& ds, std::size_t num_classes, const std::string& path);
EncodedDataset load_dataset_cache(const std::string& path, std::size_t* num_classes = nullptr);

std::uint64_t fnv1a64(const std::string& text);

}  // namespace ids
