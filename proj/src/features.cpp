#include "blau/features.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "blau/errors.hpp"
#include "blau/geosample.hpp"

namespace blau {

std::string_view to_string(ColumnKind kind) {
    switch (kind) {
        case ColumnKind::continuous: return "continuous";
        case ColumnKind::ordinal: return "ordinal";
        case ColumnKind::categorical: return "categorical";
        case ColumnKind::mixed_membership: return "mixed_membership";
        case ColumnKind::location: return "location";
    }
    return "?";
}

ColumnKind parse_column_kind(std::string_view text) {
    for (auto k : {ColumnKind::continuous, ColumnKind::ordinal, ColumnKind::categorical,
                   ColumnKind::mixed_membership, ColumnKind::location})
        if (to_string(k) == text) return k;
    throw ConfigError("unknown column kind '" + std::string(text) + "'");
}

AttributeSchema::AttributeSchema(std::vector<ColumnSpec> columns) : columns_(std::move(columns)) {
    std::set<std::string> seen;
    for (const auto& c : columns_) {
        if (c.name.empty()) throw ConfigError("schema column with empty name");
        if (!seen.insert(c.name).second)
            throw ConfigError("duplicate schema column '" + c.name + "'");
        if (c.kind == ColumnKind::mixed_membership && c.group.empty())
            throw ConfigError("mixed_membership column '" + c.name + "' has no group");
        if (c.kind == ColumnKind::ordinal && c.levels.empty())
            throw ConfigError("ordinal column '" + c.name + "' declares no levels");
        slots_.push_back(width_);
        width_ += c.kind == ColumnKind::location ? 2 : 1;
    }
    std::set<std::string> groups;
    for (const auto& c : columns_)
        if (c.kind == ColumnKind::mixed_membership) groups.insert(c.group);
    for (const auto& g : groups)
        if (group_slots(g).size() < 2)
            throw ConfigError("mixed_membership group '" + g + "' needs at least 2 columns");
}

std::optional<std::size_t> AttributeSchema::find(std::string_view name) const {
    for (std::size_t i = 0; i < columns_.size(); ++i)
        if (columns_[i].name == name) return i;
    return std::nullopt;
}

const ColumnSpec& AttributeSchema::column(std::string_view name) const {
    auto i = find(name);
    if (!i) throw ConfigError("unknown column '" + std::string(name) + "'");
    return columns_[*i];
}

std::size_t AttributeSchema::slot(std::string_view name) const {
    auto i = find(name);
    if (!i) throw ConfigError("unknown column '" + std::string(name) + "'");
    return slots_[*i];
}

std::vector<std::size_t> AttributeSchema::group_slots(std::string_view group) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < columns_.size(); ++i)
        if (columns_[i].kind == ColumnKind::mixed_membership && columns_[i].group == group)
            out.push_back(slots_[i]);
    return out;
}

double AttributeSchema::ordinal_rank(std::string_view column_name, std::string_view label) const {
    const auto& c = column(column_name);
    auto it = std::find(c.levels.begin(), c.levels.end(), label);
    if (it == c.levels.end())
        throw ConfigError("unknown level '" + std::string(label) + "' for ordinal column '" +
                          c.name + "'");
    return static_cast<double>(it - c.levels.begin());
}

bool row_complete(std::span<const double> row) {
    return std::none_of(row.begin(), row.end(), [](double v) { return std::isnan(v); });
}

std::optional<std::size_t> AttributeTable::index_of(std::string_view id) const {
    for (std::size_t i = 0; i < ids.size(); ++i)
        if (ids[i] == id) return i;
    return std::nullopt;
}

namespace {

std::vector<std::vector<std::size_t>> membership_groups(const AttributeSchema& schema) {
    std::vector<std::string> names;
    for (const auto& c : schema.columns())
        if (c.kind == ColumnKind::mixed_membership &&
            std::find(names.begin(), names.end(), c.group) == names.end())
            names.push_back(c.group);
    std::vector<std::vector<std::size_t>> out;
    for (const auto& g : names) out.push_back(schema.group_slots(g));
    return out;
}

}  // namespace

void AttributeTable::validate() const {
    if (ids.size() != rows.size()) throw ConfigError("attribute table: ids and rows differ in length");
    for (std::size_t i = 0; i < rows.size(); ++i)
        if (rows[i].size() != schema.width())
            throw ConfigError("attribute row '" + ids[i] + "' does not match the schema");
    if (weights) {
        if (weights->size() != rows.size()) throw ConfigError("attribute table: weight count mismatch");
        for (double w : *weights)
            if (!(w > 0.0) || !std::isfinite(w))
                throw ConfigError("attribute table: weights must be strictly positive");
    }
    for (const auto& group : membership_groups(schema)) {
        for (std::size_t i = 0; i < rows.size(); ++i) {
            double sum = 0.0;
            for (auto s : group) {
                double v = rows[i][s];
                if (v < 0.0) throw ConfigError("negative membership for '" + ids[i] + "'");
                sum += v;
            }
            if (!std::isnan(sum) && std::abs(sum - 1.0) > 1e-9)
                throw ConfigError("memberships of '" + ids[i] + "' do not sum to 1");
        }
    }
}

void AttributeTable::normalize_memberships() {
    for (const auto& group : membership_groups(schema)) {
        for (std::size_t i = 0; i < rows.size(); ++i) {
            double sum = 0.0;
            for (auto s : group) sum += rows[i][s];
            if (std::isnan(sum)) continue;
            if (!(sum > 0.0))
                throw ConfigError("memberships of '" + ids[i] + "' are all zero");
            for (auto s : group) rows[i][s] /= sum;
        }
    }
}

AttributeTable AttributeTable::complete_cases() const {
    AttributeTable out;
    out.schema = schema;
    out.categories = categories;
    if (weights) out.weights.emplace();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!row_complete(rows[i])) continue;
        out.ids.push_back(ids[i]);
        out.rows.push_back(rows[i]);
        if (weights) out.weights->push_back((*weights)[i]);
    }
    return out;
}

std::string_view to_string(FeatureKind kind) {
    switch (kind) {
        case FeatureKind::bias: return "bias";
        case FeatureKind::abs_diff: return "abs_diff";
        case FeatureKind::mismatch: return "mismatch";
        case FeatureKind::ordinal_abs_diff: return "ordinal_abs_diff";
        case FeatureKind::mixed_l1: return "mixed_l1";
        case FeatureKind::ordinal_distance: return "ordinal_distance";
        case FeatureKind::squared_diff: return "squared_diff";
    }
    return "?";
}

FeatureKind parse_feature_kind(std::string_view text) {
    for (auto k : {FeatureKind::bias, FeatureKind::abs_diff, FeatureKind::mismatch,
                   FeatureKind::ordinal_abs_diff, FeatureKind::mixed_l1,
                   FeatureKind::ordinal_distance, FeatureKind::squared_diff})
        if (to_string(k) == text) return k;
    throw ConfigError("unknown feature kind '" + std::string(text) + "'");
}

FeatureConfig::FeatureConfig(const AttributeSchema& schema, std::vector<FeatureSpec> entries)
    : entries_(std::move(entries)), schema_width_(schema.width()) {
    if (entries_.empty() || entries_.front().kind != FeatureKind::bias)
        throw ConfigError("feature config must start with a bias feature");
    std::set<std::string> names;
    for (std::size_t l = 0; l < entries_.size(); ++l) {
        const auto& e = entries_[l];
        if (!names.insert(e.name).second) throw ConfigError("duplicate feature '" + e.name + "'");
        if (l > 0 && e.kind == FeatureKind::bias)
            throw ConfigError("feature '" + e.name + "': only one bias feature is allowed");
        if (e.affine && !(e.affine->a > 0.0))
            throw ConfigError("feature '" + e.name + "': affine scale a must be positive");

        auto require_kind = [&](std::initializer_list<ColumnKind> allowed) {
            const auto& c = schema.column(e.source);
            if (std::find(allowed.begin(), allowed.end(), c.kind) == allowed.end())
                throw ConfigError("feature '" + e.name + "': column '" + e.source + "' has kind " +
                                  std::string(to_string(c.kind)));
            return schema.slot(e.source);
        };

        std::vector<std::size_t> slots;
        switch (e.kind) {
            case FeatureKind::bias: break;
            case FeatureKind::abs_diff:
            case FeatureKind::squared_diff:
                slots.push_back(require_kind({ColumnKind::continuous}));
                break;
            case FeatureKind::ordinal_abs_diff:
                slots.push_back(require_kind({ColumnKind::ordinal}));
                break;
            case FeatureKind::mismatch:
                slots.push_back(require_kind({ColumnKind::categorical, ColumnKind::ordinal}));
                break;
            case FeatureKind::mixed_l1:
                slots = schema.group_slots(e.source);
                if (slots.empty())
                    throw ConfigError("feature '" + e.name + "': unknown membership group '" +
                                      e.source + "'");
                break;
            case FeatureKind::ordinal_distance: {
                auto s = require_kind({ColumnKind::location});
                slots = {s, s + 1};
                DistanceBins{e.thresholds}.validate();
                break;
            }
        }
        slots_.push_back(std::move(slots));
        bool binary = e.binary.value_or(e.kind == FeatureKind::mismatch);
        binary_.push_back(binary && e.kind != FeatureKind::bias);
    }
}

std::vector<std::string> FeatureConfig::names() const {
    std::vector<std::string> out;
    for (const auto& e : entries_) out.push_back(e.name);
    return out;
}

std::optional<std::size_t> FeatureConfig::find(std::string_view name) const {
    for (std::size_t l = 0; l < entries_.size(); ++l)
        if (entries_[l].name == name) return l;
    return std::nullopt;
}

void FeatureConfig::evaluate(std::span<const double> x, std::span<const double> y,
                             std::span<double> out) const {
    if (x.size() != schema_width_ || y.size() != schema_width_)
        throw ConfigError("attribute row does not match the feature schema");
    if (out.size() != entries_.size()) throw ConfigError("feature output has the wrong length");
    for (std::size_t l = 0; l < entries_.size(); ++l) {
        const auto& slots = slots_[l];
        for (auto s : slots)
            if (std::isnan(x[s]) || std::isnan(y[s]))
                throw ConfigError("missing attribute value for feature '" + entries_[l].name + "'");
        double v = 0.0;
        switch (entries_[l].kind) {
            case FeatureKind::bias: v = 1.0; break;
            case FeatureKind::abs_diff:
            case FeatureKind::ordinal_abs_diff: v = std::abs(x[slots[0]] - y[slots[0]]); break;
            case FeatureKind::squared_diff: {
                double d = x[slots[0]] - y[slots[0]];
                v = d * d;
                break;
            }
            case FeatureKind::mismatch: v = x[slots[0]] != y[slots[0]] ? 1.0 : 0.0; break;
            case FeatureKind::mixed_l1:
                for (auto s : slots) v += std::abs(x[s] - y[s]);
                v *= 0.5;
                break;
            case FeatureKind::ordinal_distance: {
                Point a{x[slots[0]], x[slots[1]]}, b{y[slots[0]], y[slots[1]]};
                v = static_cast<double>(ordinal_distance(a, b, DistanceBins{entries_[l].thresholds}));
                break;
            }
        }
        out[l] = v;
    }
}

std::vector<double> evaluate_features(std::span<const double> x, std::span<const double> y,
                                      const FeatureConfig& config) {
    std::vector<double> f(config.size());
    config.evaluate(x, y, f);
    return f;
}

void Standardization::apply_in_place(std::span<double> f) const {
    if (f.size() != features.size())
        throw ConfigError("standardization: expected " + std::to_string(features.size()) +
                          " features, got " + std::to_string(f.size()));
    for (std::size_t l = 0; l < f.size(); ++l) {
        const auto& s = features[l];
        if (s.is_bias) continue;
        f[l] = (f[l] - s.mean) / s.scale;
    }
}

Standardization Standardization::identity(const FeatureConfig& config) {
    Standardization s;
    s.provenance = "identity";
    for (std::size_t l = 0; l < config.size(); ++l)
        s.features.push_back({0.0, 1.0, config.is_binary(l), config.is_bias(l)});
    return s;
}

Standardization fit_standardization(std::span<const std::vector<double>> sample,
                                    const FeatureConfig& config, std::string provenance) {
    if (sample.empty()) throw ConfigError("standardization: empty reference sample");
    const std::size_t p = config.size();
    Standardization out;
    out.provenance = std::move(provenance);
    const double n = static_cast<double>(sample.size());
    for (std::size_t l = 0; l < p; ++l) {
        FeatureScale fs{0.0, 1.0, config.is_binary(l), config.is_bias(l)};
        if (!fs.is_bias) {
            double mean = 0.0;
            for (const auto& f : sample) {
                if (f.size() != p) throw ConfigError("standardization: feature vector length mismatch");
                mean += f[l];
            }
            mean /= n;
            double ss = 0.0;
            for (const auto& f : sample) ss += (f[l] - mean) * (f[l] - mean);
            const double sd = std::sqrt(ss / n);
            if (!(sd > 0.0))
                throw ConfigError("standardization: feature '" + config.entry(l).name +
                                  "' has zero variance in the reference sample");
            fs.mean = mean;
            fs.scale = fs.is_binary ? 1.0 : 2.0 * sd;
        }
        out.features.push_back(fs);
    }
    return out;
}

std::vector<double> apply_standardization(std::span<const double> features,
                                          const Standardization& s) {
    std::vector<double> out(features.begin(), features.end());
    s.apply_in_place(out);
    return out;
}

}  // namespace blau
