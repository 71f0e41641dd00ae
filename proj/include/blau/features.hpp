#pragma once
// Attribute schemas, attribute tables, dyadic feature maps and their
// standardization.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace blau {

enum class ColumnKind { continuous, ordinal, categorical, mixed_membership, location };

std::string_view to_string(ColumnKind kind);
ColumnKind parse_column_kind(std::string_view text);

struct ColumnSpec {
    std::string name;
    ColumnKind kind = ColumnKind::continuous;
    std::string group;                // mixed_membership only
    std::vector<std::string> levels;  // ordinal only: labels in rank order
};

/// Column layout of an attribute row. Each column occupies one slot of the
/// flat row vector, except locations which take two (x, y).
class AttributeSchema {
public:
    AttributeSchema() = default;
    explicit AttributeSchema(std::vector<ColumnSpec> columns);

    const std::vector<ColumnSpec>& columns() const { return columns_; }
    std::size_t width() const { return width_; }

    std::optional<std::size_t> find(std::string_view name) const;
    const ColumnSpec& column(std::string_view name) const;
    /// First slot of the named column.
    std::size_t slot(std::string_view name) const;
    /// Slots of every member column of a mixed-membership group.
    std::vector<std::size_t> group_slots(std::string_view group) const;
    /// Rank of an ordinal label (0-based); throws for unknown labels.
    double ordinal_rank(std::string_view column, std::string_view label) const;

private:
    std::vector<ColumnSpec> columns_;
    std::vector<std::size_t> slots_;
    std::size_t width_ = 0;
};

/// A row of attribute values laid out per AttributeSchema. Missing values are NaN.
using AttributeRow = std::vector<double>;

/// A sample of individuals from Blau space.
struct AttributeTable {
    AttributeSchema schema;
    std::vector<std::string> ids;
    std::vector<AttributeRow> rows;
    std::optional<std::vector<double>> weights;
    /// Category labels per slot for categorical columns (code = index).
    std::vector<std::vector<std::string>> categories;

    std::size_t size() const { return rows.size(); }
    double weight(std::size_t i) const { return weights ? (*weights)[i] : 1.0; }
    std::optional<std::size_t> index_of(std::string_view id) const;

    /// Checks row widths, weights and mixed-membership sums.
    void validate() const;
    /// Rows without any missing value.
    AttributeTable complete_cases() const;
    /// Rescales each mixed-membership group of each row to sum to one.
    void normalize_memberships();
};

bool row_complete(std::span<const double> row);

enum class FeatureKind {
    bias,
    abs_diff,
    mismatch,
    ordinal_abs_diff,
    mixed_l1,
    ordinal_distance,
    squared_diff,
};

std::string_view to_string(FeatureKind kind);
FeatureKind parse_feature_kind(std::string_view text);

/// f = a * d + b for a metric d. Required by the metric checker.
struct AffineMetric {
    double a = 1.0;
    double b = 0.0;
};

struct FeatureSpec {
    std::string name;
    FeatureKind kind = FeatureKind::bias;
    std::string source;               // column name, or group name for mixed_l1
    std::vector<double> thresholds;   // ordinal_distance only
    std::optional<AffineMetric> affine;
    std::optional<bool> binary;       // defaults to true for mismatch
};

/// An ordered list of feature maps f_l(x, y) resolved against a schema.
class FeatureConfig {
public:
    FeatureConfig() = default;
    FeatureConfig(const AttributeSchema& schema, std::vector<FeatureSpec> entries);

    std::size_t size() const { return entries_.size(); }
    const std::vector<FeatureSpec>& entries() const { return entries_; }
    const FeatureSpec& entry(std::size_t l) const { return entries_[l]; }
    bool is_binary(std::size_t l) const { return binary_[l]; }
    bool is_bias(std::size_t l) const { return entries_[l].kind == FeatureKind::bias; }
    std::vector<std::string> names() const;
    std::optional<std::size_t> find(std::string_view name) const;
    std::size_t schema_width() const { return schema_width_; }

    /// Writes the raw feature vector for (x, y) into out (size() entries).
    void evaluate(std::span<const double> x, std::span<const double> y,
                  std::span<double> out) const;

private:
    std::vector<FeatureSpec> entries_;
    std::vector<std::vector<std::size_t>> slots_;
    std::vector<bool> binary_;
    std::size_t schema_width_ = 0;
};

std::vector<double> evaluate_features(std::span<const double> x, std::span<const double> y,
                                      const FeatureConfig& config);

struct FeatureScale {
    double mean = 0.0;
    double scale = 1.0;
    bool is_binary = false;
    bool is_bias = false;
};

/// Per-feature centering and scaling. Non-binary features are divided by twice
/// their standard deviation; binary features are centered only.
struct Standardization {
    std::vector<FeatureScale> features;
    std::string provenance;

    std::size_t size() const { return features.size(); }
    void apply_in_place(std::span<double> f) const;

    static Standardization identity(const FeatureConfig& config);
};

Standardization fit_standardization(std::span<const std::vector<double>> sample,
                                    const FeatureConfig& config,
                                    std::string provenance = {});

std::vector<double> apply_standardization(std::span<const double> features,
                                          const Standardization& s);

}  // namespace blau
