#pragma once
// File formats: delimited text for tables, records, parameters and chains; a
// JSON model config (schema + features); a compact binary matrix block.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "blau/features.hpp"
#include "blau/inference.hpp"
#include "blau/kernel.hpp"
#include "blau/segregation.hpp"

namespace blau {

/// Shortest representation that parses back to the same double.
std::string format_double(double v);
double parse_double(const std::string& text);

struct DelimitedTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::optional<std::size_t> find(const std::string& name) const;
    std::size_t column(const std::string& name) const;  // throws IoError when absent
};

/// Comma-separated, one header row, no quoting. Blank lines are skipped.
DelimitedTable parse_delimited(std::istream& in);
DelimitedTable read_delimited(const std::string& path);
void write_delimited(std::ostream& out, const std::vector<std::string>& header,
                     const std::vector<std::vector<std::string>>& rows);

struct ModelConfig {
    AttributeSchema schema;
    FeatureConfig features;
};

/// {
///   "schema":   {"columns": [{"name": "age", "kind": "continuous"}, ...]},
///   "features": [{"name": "bias", "kind": "bias"},
///                {"name": "age", "kind": "abs_diff", "column": "age",
///                 "affine": {"a": 1, "b": 0}}, ...]
/// }
ModelConfig parse_model_config(const std::string& json_text);
ModelConfig load_model_config(const std::string& path);

/// Header: id, one column per schema column (locations as name.x, name.y),
/// optional "weight". Empty fields and "NA" are missing. Ordinal cells hold a
/// declared level label or its 0-based rank; categorical cells any label.
AttributeTable parse_attribute_table(std::istream& in, const AttributeSchema& schema);
AttributeTable load_attribute_table(const std::string& path, const AttributeSchema& schema);

/// Header: ego_id, alter_id, A, w_ego, w_alter, then one column per feature.
void write_records(std::ostream& out, const std::vector<DyadRecord>& records,
                   const std::vector<std::string>& feature_names);
std::vector<DyadRecord> parse_records(std::istream& in, std::vector<std::string>* feature_names = nullptr);
std::vector<DyadRecord> read_records(const std::string& path, std::vector<std::string>* feature_names = nullptr);

/// Two-column pair list with header (e.g. ego_id, alter_id).
std::vector<IdPair> read_id_pairs(const std::string& path);

/// Header: feature, value.
void write_params(std::ostream& out, const KernelParams& params);
KernelParams parse_params(std::istream& in);
KernelParams read_params(const std::string& path);

/// Header: feature, mean, scale, binary, bias.
void write_standardization(std::ostream& out, const Standardization& s, const std::vector<std::string>& names);
Standardization read_standardization(const std::string& path, const FeatureConfig& config);

/// Header: one column per parameter; one row per draw.
void write_chain(std::ostream& out, const std::vector<std::string>& names, const Eigen::MatrixXd& draws);
Eigen::MatrixXd read_chain(const std::string& path, std::vector<std::string>* names = nullptr);

/// Square matrix with an id column and one column per id.
void write_matrix_csv(std::ostream& out, const std::vector<std::string>& ids, const Eigen::MatrixXd& m);
std::pair<std::vector<std::string>, Eigen::MatrixXd> read_matrix_csv(const std::string& path);

/// "BLAUMAT1", uint64 n, n ids (uint32 length + bytes), n*n row-major float64,
/// all little-endian.
void write_matrix_binary(std::ostream& out, const std::vector<std::string>& ids, const Eigen::MatrixXd& m);
std::pair<std::vector<std::string>, Eigen::MatrixXd> read_matrix_binary(std::istream& in);
/// Dispatches on the binary magic.
std::pair<std::vector<std::string>, Eigen::MatrixXd> read_matrix(const std::string& path);

/// 64-bit FNV-1a of the bytes, as 16 hex digits.
std::string fnv1a_hex(const std::string& bytes);
std::string read_file(const std::string& path);

}  // namespace blau
