#include "blau/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "blau/errors.hpp"

namespace blau {

std::string format_double(double v) {
    if (v == 0.0) v = 0.0;  // no "-0" in text output
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::array<char, 64> buf{};
    auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

double parse_double(const std::string& raw) {
    const auto b = raw.find_first_not_of(" \t\r");
    const std::string text = b == std::string::npos ? std::string() : raw.substr(b, raw.find_last_not_of(" \t\r") - b + 1);
    if (text == "nan" || text == "NA" || text.empty()) return std::numeric_limits<double>::quiet_NaN();
    if (text == "inf") return std::numeric_limits<double>::infinity();
    if (text == "-inf") return -std::numeric_limits<double>::infinity();
    double v = 0.0;
    const char* first = text.data();
    if (*first == '+') ++first;
    auto res = std::from_chars(first, text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size())
        throw IoError("not a number: '" + text + "'");
    return v;
}

std::optional<std::size_t> DelimitedTable::find(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return i;
    return std::nullopt;
}

std::size_t DelimitedTable::column(const std::string& name) const {
    auto i = find(name);
    if (!i) throw IoError("missing column '" + name + "'");
    return *i;
}

namespace {

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
        std::size_t start = cell.find_first_not_of(' ');
        out.push_back(start == std::string::npos ? std::string{} : cell.substr(start));
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    return in;
}

}  // namespace

DelimitedTable parse_delimited(std::istream& in) {
    DelimitedTable t;
    std::string line;
    bool have_header = false;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto cells = split(line);
        if (!have_header) {
            t.header = std::move(cells);
            have_header = true;
            continue;
        }
        if (cells.size() != t.header.size())
            throw IoError("line " + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                          " fields, got " + std::to_string(cells.size()));
        t.rows.push_back(std::move(cells));
    }
    if (!have_header) throw IoError("delimited file has no header");
    return t;
}

DelimitedTable read_delimited(const std::string& path) {
    auto in = open_in(path);
    try {
        return parse_delimited(in);
    } catch (const IoError& e) {
        throw IoError(path + ": " + e.what());
    }
}

void write_delimited(std::ostream& out, const std::vector<std::string>& header,
                     const std::vector<std::vector<std::string>>& rows) {
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
        out << '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
}

ModelConfig parse_model_config(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text, nullptr, true, true);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("model config is not valid JSON: ") + e.what());
    }
    try {
        std::vector<ColumnSpec> cols;
        for (const auto& c : j.at("schema").at("columns")) {
            ColumnSpec spec;
            spec.name = c.at("name").get<std::string>();
            spec.kind = parse_column_kind(c.at("kind").get<std::string>());
            if (c.contains("group")) spec.group = c.at("group").get<std::string>();
            if (c.contains("levels")) spec.levels = c.at("levels").get<std::vector<std::string>>();
            cols.push_back(std::move(spec));
        }
        AttributeSchema schema(std::move(cols));
        std::vector<FeatureSpec> feats;
        for (const auto& f : j.at("features")) {
            FeatureSpec spec;
            spec.name = f.at("name").get<std::string>();
            spec.kind = parse_feature_kind(f.at("kind").get<std::string>());
            if (f.contains("column")) spec.source = f.at("column").get<std::string>();
            if (f.contains("group")) spec.source = f.at("group").get<std::string>();
            if (f.contains("thresholds")) spec.thresholds = f.at("thresholds").get<std::vector<double>>();
            if (f.contains("affine"))
                spec.affine = AffineMetric{f.at("affine").at("a").get<double>(), f.at("affine").value("b", 0.0)};
            if (f.contains("binary")) spec.binary = f.at("binary").get<bool>();
            feats.push_back(std::move(spec));
        }
        FeatureConfig features(schema, std::move(feats));
        return {std::move(schema), std::move(features)};
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("model config: ") + e.what());
    }
}

std::string read_file(const std::string& path) {
    auto in = open_in(path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ModelConfig load_model_config(const std::string& path) { return parse_model_config(read_file(path)); }

AttributeTable parse_attribute_table(std::istream& in, const AttributeSchema& schema) {
    const DelimitedTable t = parse_delimited(in);
    AttributeTable out;
    out.schema = schema;
    out.categories.resize(schema.width());
    const std::size_t id_col = t.column("id");
    const auto weight_col = t.find("weight");
    if (weight_col) out.weights.emplace();

    struct Source {
        std::size_t cell;
        std::size_t slot;
        const ColumnSpec* spec;
    };
    std::vector<Source> sources;
    for (const auto& c : schema.columns()) {
        const std::size_t slot = schema.slot(c.name);
        if (c.kind == ColumnKind::location) {
            sources.push_back({t.column(c.name + ".x"), slot, &c});
            sources.push_back({t.column(c.name + ".y"), slot + 1, &c});
        } else {
            sources.push_back({t.column(c.name), slot, &c});
        }
    }
    auto missing = [](const std::string& s) { return s.empty() || s == "NA"; };
    for (const auto& row : t.rows) {
        AttributeRow values(schema.width(), std::numeric_limits<double>::quiet_NaN());
        for (const auto& src : sources) {
            const std::string& cell = row[src.cell];
            if (missing(cell)) continue;
            switch (src.spec->kind) {
                case ColumnKind::categorical: {
                    auto& labels = out.categories[src.slot];
                    auto it = std::find(labels.begin(), labels.end(), cell);
                    if (it == labels.end()) {
                        labels.push_back(cell);
                        it = labels.end() - 1;
                    }
                    values[src.slot] = static_cast<double>(it - labels.begin());
                    break;
                }
                case ColumnKind::ordinal: {
                    const auto& levels = src.spec->levels;
                    auto it = std::find(levels.begin(), levels.end(), cell);
                    if (it != levels.end()) {
                        values[src.slot] = static_cast<double>(it - levels.begin());
                    } else {
                        double rank = -1.0;
                        try {
                            rank = parse_double(cell);
                        } catch (const IoError&) {
                        }
                        if (rank != std::floor(rank) || rank < 0 || rank >= static_cast<double>(levels.size()))
                            throw ConfigError("unknown level '" + cell + "' for ordinal column '" + src.spec->name + "'");
                        values[src.slot] = rank;
                    }
                    break;
                }
                default: values[src.slot] = parse_double(cell);
            }
        }
        out.ids.push_back(row[id_col]);
        out.rows.push_back(std::move(values));
        if (weight_col) out.weights->push_back(parse_double(row[*weight_col]));
    }
    out.normalize_memberships();
    out.validate();
    return out;
}

AttributeTable load_attribute_table(const std::string& path, const AttributeSchema& schema) {
    auto in = open_in(path);
    return parse_attribute_table(in, schema);
}

void write_records(std::ostream& out, const std::vector<DyadRecord>& records,
                   const std::vector<std::string>& feature_names) {
    std::vector<std::string> header{"ego_id", "alter_id", "A", "w_ego", "w_alter"};
    header.insert(header.end(), feature_names.begin(), feature_names.end());
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : records) {
        if (static_cast<std::size_t>(r.features.size()) != feature_names.size())
            throw ConfigError("record feature count does not match the feature names");
        std::vector<std::string> row{r.ego_id, r.alter_id, std::to_string(r.edge), format_double(r.w_ego),
                                     format_double(r.w_alter)};
        for (Eigen::Index l = 0; l < r.features.size(); ++l) row.push_back(format_double(r.features[l]));
        rows.push_back(std::move(row));
    }
    write_delimited(out, header, rows);
}

std::vector<DyadRecord> parse_records(std::istream& in, std::vector<std::string>* feature_names) {
    const DelimitedTable t = parse_delimited(in);
    const std::size_t ego = t.column("ego_id"), alter = t.column("alter_id"), a = t.column("A");
    const auto we = t.find("w_ego"), wa = t.find("w_alter");
    std::vector<std::size_t> feature_cols;
    std::vector<std::string> names;
    for (std::size_t c = 0; c < t.header.size(); ++c) {
        const auto& h = t.header[c];
        if (h == "ego_id" || h == "alter_id" || h == "A" || h == "w_ego" || h == "w_alter") continue;
        feature_cols.push_back(c);
        names.push_back(h);
    }
    if (feature_cols.empty()) throw IoError("records have no feature columns");
    std::vector<DyadRecord> out;
    for (const auto& row : t.rows) {
        DyadRecord r;
        r.ego_id = row[ego];
        r.alter_id = row[alter];
        const double edge = parse_double(row[a]);
        if (edge != 0.0 && edge != 1.0) throw IoError("record edge indicator must be 0 or 1");
        r.edge = static_cast<int>(edge);
        if (we) r.w_ego = parse_double(row[*we]);
        if (wa) r.w_alter = parse_double(row[*wa]);
        r.features.resize(static_cast<Eigen::Index>(feature_cols.size()));
        for (std::size_t l = 0; l < feature_cols.size(); ++l)
            r.features[static_cast<Eigen::Index>(l)] = parse_double(row[feature_cols[l]]);
        out.push_back(std::move(r));
    }
    validate_records(out, feature_cols.size());
    if (feature_names) *feature_names = names;
    return out;
}

std::vector<DyadRecord> read_records(const std::string& path, std::vector<std::string>* feature_names) {
    auto in = open_in(path);
    return parse_records(in, feature_names);
}

std::vector<IdPair> read_id_pairs(const std::string& path) {
    const DelimitedTable t = read_delimited(path);
    if (t.header.size() < 2) throw IoError(path + ": expected two id columns");
    std::vector<IdPair> out;
    for (const auto& row : t.rows) out.emplace_back(row[0], row[1]);
    return out;
}

void write_params(std::ostream& out, const KernelParams& params) {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t l = 0; l < params.size(); ++l)
        rows.push_back({l < params.names.size() ? params.names[l] : "theta" + std::to_string(l),
                        format_double(params.theta[static_cast<Eigen::Index>(l)])});
    write_delimited(out, {"feature", "value"}, rows);
}

KernelParams parse_params(std::istream& in) {
    const DelimitedTable t = parse_delimited(in);
    const std::size_t name = t.column("feature"), value = t.column("value");
    KernelParams p;
    p.theta.resize(static_cast<Eigen::Index>(t.rows.size()));
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        p.names.push_back(t.rows[i][name]);
        p.theta[static_cast<Eigen::Index>(i)] = parse_double(t.rows[i][value]);
    }
    p.validate();
    return p;
}

KernelParams read_params(const std::string& path) {
    auto in = open_in(path);
    return parse_params(in);
}

void write_standardization(std::ostream& out, const Standardization& s, const std::vector<std::string>& names) {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t l = 0; l < s.size(); ++l) {
        const auto& f = s.features[l];
        rows.push_back({names.at(l), format_double(f.mean), format_double(f.scale), f.is_binary ? "1" : "0",
                        f.is_bias ? "1" : "0"});
    }
    write_delimited(out, {"feature", "mean", "scale", "binary", "bias"}, rows);
}

Standardization read_standardization(const std::string& path, const FeatureConfig& config) {
    const DelimitedTable t = read_delimited(path);
    const std::size_t name = t.column("feature"), mean = t.column("mean"), scale = t.column("scale"),
                      binary = t.column("binary"), bias = t.column("bias");
    if (t.rows.size() != config.size()) throw ConfigError("standardization does not match the feature config");
    Standardization s;
    s.provenance = path;
    for (std::size_t l = 0; l < t.rows.size(); ++l) {
        const auto& row = t.rows[l];
        if (row[name] != config.entry(l).name)
            throw ConfigError("standardization feature '" + row[name] + "' does not match '" + config.entry(l).name + "'");
        FeatureScale f{parse_double(row[mean]), parse_double(row[scale]), row[binary] == "1", row[bias] == "1"};
        if (!(f.scale > 0.0)) throw ConfigError("standardization scale must be positive");
        s.features.push_back(f);
    }
    return s;
}

void write_chain(std::ostream& out, const std::vector<std::string>& names, const Eigen::MatrixXd& draws) {
    std::vector<std::vector<std::string>> rows;
    rows.reserve(static_cast<std::size_t>(draws.rows()));
    for (Eigen::Index s = 0; s < draws.rows(); ++s) {
        std::vector<std::string> row;
        for (Eigen::Index l = 0; l < draws.cols(); ++l) row.push_back(format_double(draws(s, l)));
        rows.push_back(std::move(row));
    }
    write_delimited(out, names, rows);
}

Eigen::MatrixXd read_chain(const std::string& path, std::vector<std::string>* names) {
    const DelimitedTable t = read_delimited(path);
    Eigen::MatrixXd draws(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(t.header.size()));
    for (std::size_t s = 0; s < t.rows.size(); ++s)
        for (std::size_t l = 0; l < t.header.size(); ++l)
            draws(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(l)) = parse_double(t.rows[s][l]);
    if (names) *names = t.header;
    return draws;
}

void write_matrix_csv(std::ostream& out, const std::vector<std::string>& ids, const Eigen::MatrixXd& m) {
    std::vector<std::string> header{"id"};
    header.insert(header.end(), ids.begin(), ids.end());
    std::vector<std::vector<std::string>> rows;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        std::vector<std::string> row{ids[static_cast<std::size_t>(i)]};
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(format_double(m(i, j)));
        rows.push_back(std::move(row));
    }
    write_delimited(out, header, rows);
}

std::pair<std::vector<std::string>, Eigen::MatrixXd> read_matrix_csv(const std::string& path) {
    const DelimitedTable t = read_delimited(path);
    if (t.header.empty() || t.header[0] != "id") throw IoError(path + ": matrix must start with an id column");
    const std::size_t n = t.rows.size();
    if (t.header.size() != n + 1) throw IoError(path + ": matrix is not square");
    std::vector<std::string> ids(t.header.begin() + 1, t.header.end());
    Eigen::MatrixXd m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        if (t.rows[i][0] != ids[i]) throw IoError(path + ": row ids do not match column ids");
        for (std::size_t j = 0; j < n; ++j)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = parse_double(t.rows[i][j + 1]);
    }
    return {std::move(ids), std::move(m)};
}

namespace {

constexpr char kMagic[8] = {'B', 'L', 'A', 'U', 'M', 'A', 'T', '1'};

template <typename T>
void put_le(std::ostream& out, T v) {
    static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw IoError("binary matrix: truncated");
    return v;
}

}  // namespace

void write_matrix_binary(std::ostream& out, const std::vector<std::string>& ids, const Eigen::MatrixXd& m) {
    if (m.rows() != m.cols() || static_cast<std::size_t>(m.rows()) != ids.size())
        throw ConfigError("binary matrix: ids and matrix shape disagree");
    out.write(kMagic, sizeof kMagic);
    put_le<std::uint64_t>(out, ids.size());
    for (const auto& id : ids) {
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(id.size()));
        out.write(id.data(), static_cast<std::streamsize>(id.size()));
    }
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) put_le<double>(out, m(i, j));
}

std::pair<std::vector<std::string>, Eigen::MatrixXd> read_matrix_binary(std::istream& in) {
    char magic[8];
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
        throw IoError("binary matrix: bad magic");
    const auto n = get_le<std::uint64_t>(in);
    std::vector<std::string> ids(n);
    for (auto& id : ids) {
        const auto len = get_le<std::uint32_t>(in);
        id.resize(len);
        if (!in.read(id.data(), len)) throw IoError("binary matrix: truncated");
    }
    Eigen::MatrixXd m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = get_le<double>(in);
    return {std::move(ids), std::move(m)};
}

std::pair<std::vector<std::string>, Eigen::MatrixXd> read_matrix(const std::string& path) {
    auto in = open_in(path);
    char magic[8] = {};
    in.read(magic, sizeof magic);
    if (in.gcount() == sizeof magic && std::memcmp(magic, kMagic, sizeof magic) == 0) {
        in.seekg(0);
        return read_matrix_binary(in);
    }
    return read_matrix_csv(path);
}

std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream ss;
    ss << std::hex;
    ss.width(16);
    ss.fill('0');
    ss << h;
    return ss.str();
}

}  // namespace blau
