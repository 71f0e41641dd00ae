// blau: command-line front end.
//
//   blau simulate     synthetic unit-square network + case-control ego dataset
//   blau fit          MAP / Laplace fit of the kernel, optional MH chain
//   blau segregation  separation matrix, isolation or strain
//   blau embed        classical MDS of a separation matrix, smoothed fields
//   blau coverage     credible-region coverage over synthetic replications
//   blau geo-sample   population-weighted home locations
//
// Every command writes its outputs plus manifest.json into --out.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "blau/embedding.hpp"
#include "blau/errors.hpp"
#include "blau/geosample.hpp"
#include "blau/inference.hpp"
#include "blau/io.hpp"
#include "blau/random.hpp"
#include "blau/segregation.hpp"
#include "blau/synthgen.hpp"

using namespace blau;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "0.1.0";

struct Globals {
    std::uint64_t seed = 0;
    unsigned threads = 0;
    std::string config;
    std::string out = ".";
};

// Collects what a command read and wrote, then writes manifest.json.
class Manifest {
public:
    Manifest(std::string command, const Globals& g) : command_(std::move(command)), g_(g) {
        start_ = std::chrono::steady_clock::now();
        if (!g.config.empty()) input(g.config);
    }
    void input(const std::string& path) { inputs_.push_back(path); }
    void seed(const std::string& name, std::uint64_t s) { seeds_[name] = s; }
    void set(const std::string& key, json value) { extra_[key] = std::move(value); }

    fs::path output(const std::string& name) {
        fs::create_directories(g_.out);
        auto p = fs::path(g_.out) / name;
        outputs_.push_back(p.string());
        return p;
    }

    void write(const std::vector<std::string>& argv) {
        json m;
        m["command"] = command_;
        m["version"] = kVersion;
        m["config_digest"] = g_.config.empty() ? fnv1a_hex("") : fnv1a_hex(read_file(g_.config));
        m["arguments"] = argv;
        m["seeds"] = seeds_;
        m["seeds"]["seed"] = g_.seed;
        m["threads"] = g_.threads;
        m["inputs"] = inputs_;
        m["outputs"] = outputs_;
        for (auto& [k, v] : extra_.items()) m[k] = v;
        m["wall_time_seconds"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        fs::create_directories(g_.out);
        std::ofstream f(fs::path(g_.out) / "manifest.json");
        if (!f) throw IoError("cannot write manifest in '" + g_.out + "'");
        f << m.dump(2) << "\n";
    }

private:
    std::string command_;
    const Globals& g_;
    std::chrono::steady_clock::time_point start_;
    std::vector<std::string> inputs_, outputs_;
    json seeds_ = json::object();
    json extra_ = json::object();
};

std::ofstream open_out(const fs::path& p, bool binary = false) {
    std::ofstream f(p, binary ? std::ios::binary : std::ios::out);
    if (!f) throw IoError("cannot write '" + p.string() + "'");
    return f;
}

std::vector<double> parse_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_double(item));
    return out;
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::string join(const Eigen::VectorXd& v) {
    std::string s;
    for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
    return s;
}

json to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

// ---------------------------------------------------------------------------
// Synthetic settings: an optional "synthetic" object in --config, then flags.

struct SyntheticFlags {
    std::optional<std::size_t> n, egos;
    std::optional<double> ratio, theta_sd, student_dof;
    std::string theta_mean;
};

void add_synthetic_flags(CLI::App* cmd, SyntheticFlags& f) {
    cmd->add_option("--n", f.n, "population size");
    cmd->add_option("--egos", f.egos, "number of egos (respondents)");
    cmd->add_option("--ratio", f.ratio, "negatives per positive");
    cmd->add_option("--theta-mean", f.theta_mean, "mean of theta as bias,dx1,dx2");
    cmd->add_option("--theta-sd", f.theta_sd, "sd of theta around the mean");
    cmd->add_option("--student-t", f.student_dof, "draw theta from a Student t with this many dof");
}

SyntheticConfig synthetic_config(const Globals& g, const SyntheticFlags& f) {
    SyntheticConfig c;
    if (!g.config.empty()) {
        json j;
        try {
            j = json::parse(read_file(g.config), nullptr, true, true);
        } catch (const json::exception& e) {
            throw ConfigError(g.config + ": " + e.what());
        }
        if (j.contains("synthetic")) {
            const auto& s = j["synthetic"];
            try {
                c.n = s.value("n", c.n);
                c.egos = s.value("egos", c.egos);
                c.negatives_per_positive = s.value("negatives_per_positive", c.negatives_per_positive);
                c.theta_sd = s.value("theta_sd", c.theta_sd);
                if (s.contains("theta_mean")) c.theta_mean = to_vector(s["theta_mean"].get<std::vector<double>>());
                if (s.value("theta_distribution", "normal") == "student_t") {
                    c.theta_distribution = ThetaDistribution::student_t;
                    c.student_dof = s.value("student_dof", c.student_dof);
                }
            } catch (const json::exception& e) {
                throw ConfigError(g.config + ": synthetic: " + e.what());
            }
        }
    }
    if (f.n) c.n = *f.n;
    if (f.egos) c.egos = *f.egos;
    if (f.ratio) c.negatives_per_positive = *f.ratio;
    if (f.theta_sd) c.theta_sd = *f.theta_sd;
    if (!f.theta_mean.empty()) c.theta_mean = to_vector(parse_list(f.theta_mean));
    if (f.student_dof) {
        c.theta_distribution = ThetaDistribution::student_t;
        c.student_dof = *f.student_dof;
    }
    if (c.theta_mean.size() != 3) throw ConfigError("theta mean needs 3 entries (bias, dx1, dx2)");
    c.seed = g.seed;
    c.validate();
    return c;
}

// The model config matching the unit-square design, so simulated files feed
// straight into fit and segregation.
json unit_square_model_json() {
    return {{"schema", {{"columns", {{{"name", "x1"}, {"kind", "continuous"}}, {{"name", "x2"}, {"kind", "continuous"}}}}}},
            {"features",
             {{{"name", "bias"}, {"kind", "bias"}},
              {{"name", "dx1"}, {"kind", "abs_diff"}, {"column", "x1"}, {"affine", {{"a", 1}, {"b", 0}}}},
              {{"name", "dx2"}, {"kind", "abs_diff"}, {"column", "x2"}, {"affine", {{"a", 1}, {"b", 0}}}}}}};
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
    SyntheticFlags syn;
    std::string theta;
    bool draw_theta = false;
};

void cmd_simulate(const Globals& g, const SimulateArgs& a, Manifest& m) {
    auto cfg = synthetic_config(g, a.syn);
    Eigen::VectorXd theta = a.theta.empty() ? cfg.theta_mean : to_vector(parse_list(a.theta));
    if (theta.size() != 3) throw ConfigError("--theta needs 3 entries (bias, dx1, dx2)");
    if (a.draw_theta) {
        Rng rng(derive_seed(g.seed, 0));
        std::normal_distribution<double> normal;
        std::student_t_distribution<double> student(cfg.student_dof);
        for (Eigen::Index l = 0; l < 3; ++l)
            theta[l] += cfg.theta_sd * (cfg.theta_distribution == ThetaDistribution::normal ? normal(rng) : student(rng));
    }
    const auto pos_seed = derive_seed(g.seed, 1), net_seed = derive_seed(g.seed, 2), ego_seed = derive_seed(g.seed, 3);
    m.seed("positions", pos_seed);
    m.seed("network", net_seed);
    m.seed("egos", ego_seed);

    auto positions = unit_square_positions(cfg.n, pos_seed);
    auto kernel = unit_square_kernel(theta);
    auto graph = generate_network(positions, kernel, net_seed, g.threads);

    {
        std::vector<std::vector<std::string>> rows;
        for (std::size_t i = 0; i < positions.size(); ++i)
            rows.push_back({positions.ids[i], format_double(positions.rows[i][0]), format_double(positions.rows[i][1])});
        auto f = open_out(m.output("positions.csv"));
        write_delimited(f, {"id", "x1", "x2"}, rows);
    }
    {
        std::vector<std::vector<std::string>> rows;
        for (const auto& [i, j] : graph.edges) rows.push_back({std::to_string(i), std::to_string(j)});
        auto f = open_out(m.output("edges.csv"));
        write_delimited(f, {"source", "target"}, rows);
    }
    {
        auto f = open_out(m.output("theta.csv"));
        write_params(f, kernel.params());
    }
    {
        auto f = open_out(m.output("model.json"));
        f << unit_square_model_json().dump(2) << "\n";
    }
    {
        auto f = open_out(m.output("standardization.csv"));
        write_standardization(f, unit_square_standardization(), kernel.config().names());
    }
    json summary = {{"n", cfg.n}, {"edges", graph.edges.size()}, {"mean_degree", graph.mean_degree()},
                    {"theta", to_json(theta)}};
    if (cfg.egos > 0 && !graph.edges.empty()) {
        auto sample = sample_ego_dataset(graph, positions, kernel, cfg.egos, cfg.negatives_per_positive, ego_seed);
        auto f = open_out(m.output("records.csv"));
        write_records(f, sample.records, kernel.config().names());
        summary["egos"] = cfg.egos;
        summary["positives"] = sample.positives;
        summary["negatives"] = sample.negatives;
    } else {
        std::cerr << "warning: no edges, no ego dataset written\n";
    }
    m.set("summary", summary);
    std::printf("%zu nodes, %zu edges, mean degree %.4f\n", cfg.n, graph.edges.size(), graph.mean_degree());
}

// ---------------------------------------------------------------------------

struct FitArgs {
    std::string records, attributes, nominations, controls, standardization;
    double control_ratio = 3.0;
    std::optional<double> r0, r1, population_size, mean_degree;
    bool weighted = false;
    std::optional<double> winsorize;
    double bias_scale = 10.0, scale = 2.5;
    bool mcmc = false;
    std::size_t draws = 10000, burn_in = 1000;
    double tolerance = 1e-6;
    int max_iterations = 10000;
};

// Random distinct pairs of respondents (ids appearing as egos) as controls.
std::vector<IdPair> sample_controls(const std::vector<IdPair>& nominations, std::size_t count, std::uint64_t seed) {
    std::vector<std::string> egos;
    std::set<std::string> seen;
    for (const auto& [e, a] : nominations)
        if (seen.insert(e).second) egos.push_back(e);
    const std::size_t available = egos.size() * (egos.size() - 1) / 2;
    if (egos.size() < 2) throw ConfigError("need at least two respondents to sample control pairs");
    count = std::min(count, available);
    std::set<std::pair<std::size_t, std::size_t>> taken;
    Rng rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, egos.size() - 1);
    std::vector<IdPair> out;
    while (out.size() < count) {
        auto i = pick(rng), j = pick(rng);
        if (i == j) continue;
        if (!taken.insert(std::minmax(i, j)).second) continue;
        out.emplace_back(egos[i], egos[j]);
    }
    return out;
}

// Clips per-person weights at a percentile; a person's weight is shared by
// every record they appear in.
void winsorize_records(std::vector<DyadRecord>& records, double percentile) {
    std::map<std::string, double> weight;
    for (const auto& r : records) {
        weight.emplace(r.ego_id, r.w_ego);
        weight.emplace(r.alter_id, r.w_alter);
    }
    std::vector<double> w;
    for (const auto& [id, v] : weight) w.push_back(v);
    auto clipped = winsorize_weights(w, percentile);
    std::size_t k = 0;
    for (auto& [id, v] : weight) v = clipped[k++];
    for (auto& r : records) {
        r.w_ego = weight[r.ego_id];
        r.w_alter = weight[r.alter_id];
    }
}

void write_hessian(const fs::path& p, const std::vector<std::string>& names, const Eigen::MatrixXd& h) {
    auto f = open_out(p);
    write_matrix_csv(f, names, h);
}

void cmd_fit(const Globals& g, const FitArgs& a, Manifest& m) {
    std::vector<DyadRecord> records;
    std::vector<std::string> names;
    if (!a.records.empty()) {
        m.input(a.records);
        records = read_records(a.records, &names);
    } else {
        if (a.attributes.empty() || a.nominations.empty())
            throw ConfigError("fit needs --records, or --attributes and --nominations with --config");
        if (g.config.empty()) throw ConfigError("fit from attributes needs --config");
        auto model = load_model_config(g.config);
        m.input(a.attributes);
        m.input(a.nominations);
        auto table = load_attribute_table(a.attributes, model.schema);
        auto nominations = read_id_pairs(a.nominations);
        std::vector<IdPair> controls;
        if (!a.controls.empty()) {
            m.input(a.controls);
            controls = read_id_pairs(a.controls);
        } else {
            const auto s = derive_seed(g.seed, 10);
            m.seed("controls", s);
            controls = sample_controls(nominations,
                                       static_cast<std::size_t>(std::llround(a.control_ratio * nominations.size())), s);
        }
        Standardization st;
        if (!a.standardization.empty()) {
            m.input(a.standardization);
            st = read_standardization(a.standardization, model.features);
        } else {
            st = fit_standardization(control_features(table, model.features, controls), model.features,
                                     "control pairs of " + a.attributes);
        }
        auto built = build_records(table, model.features, st, nominations, controls);
        if (built.dropped > 0) std::cerr << "dropped " << built.dropped << " dyads with missing attributes\n";
        records = std::move(built.records);
        names = model.features.names();
        auto f = open_out(m.output("standardization.csv"));
        write_standardization(f, st, names);
        auto rf = open_out(m.output("records.csv"));
        write_records(rf, records, names);
        m.set("dropped_dyads", built.dropped);
    }
    if (records.empty()) throw ConfigError("no records to fit");
    if (a.winsorize) winsorize_records(records, *a.winsorize);

    PrevalenceRatio r;
    if (a.r0 || a.r1) {
        if (!a.r0 || !a.r1) throw ConfigError("--r0 and --r1 go together");
        r = {*a.r0, *a.r1};
    } else if (a.population_size || a.mean_degree) {
        if (!a.population_size || !a.mean_degree) throw ConfigError("--population-size and --mean-degree go together");
        r = estimate_prevalence_ratio(records, *a.population_size, *a.mean_degree, a.weighted);
    }
    r.validate();

    const std::size_t p = names.size();
    auto prior = PriorSpec::defaults(p, a.bias_scale, a.scale);
    LikelihoodOptions lik;
    lik.weighted = a.weighted;
    OptimizerOptions opt;
    opt.gradient_tolerance = a.tolerance;
    opt.max_iterations = a.max_iterations;
    KernelParams init{Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p)), names};
    auto fit = fit_map(records, r, prior, init, opt, lik);
    fit.map.names = names;

    {
        auto f = open_out(m.output("params.csv"));
        write_params(f, fit.map);
    }
    write_hessian(m.output("hessian.csv"), names, fit.hessian);

    LikelihoodOptions with_c = lik, without_c = lik;
    without_c.include_constant = false;
    json meta = {{"records", records.size()},
                 {"r0", r.r0},
                 {"r1", r.r1},
                 {"weighted", a.weighted},
                 {"prior_scales", to_json(prior.scales)},
                 {"log_posterior", fit.log_posterior},
                 {"log_likelihood", observed_log_likelihood(records, fit.map.theta, r, with_c)},
                 {"log_likelihood_without_constant", observed_log_likelihood(records, fit.map.theta, r, without_c)},
                 {"gradient_norm", fit.gradient_norm},
                 {"iterations", fit.iterations}};
    if (a.winsorize) meta["winsorize_percentile"] = *a.winsorize;

    if (a.mcmc) {
        const auto s = derive_seed(g.seed, 20);
        m.seed("mcmc", s);
        auto chain = sample_posterior(records, r, prior, fit.map, default_proposal_covariance(fit.hessian), a.draws,
                                      a.burn_in, s, lik);
        auto f = open_out(m.output("chain.csv"));
        write_chain(f, names, chain.draws);
        json side = {{"seed", chain.seed},
                     {"acceptance_rate", chain.acceptance_rate},
                     {"draws", a.draws},
                     {"burn_in", chain.burn_in},
                     {"r0", r.r0},
                     {"r1", r.r1},
                     {"prior_scales", to_json(prior.scales)},
                     {"names", names}};
        auto sf = open_out(m.output("chain.meta.json"));
        sf << side.dump(2) << "\n";
        meta["acceptance_rate"] = chain.acceptance_rate;
    }
    {
        auto f = open_out(m.output("fit.meta.json"));
        f << meta.dump(2) << "\n";
    }
    m.set("r", {{"r0", r.r0}, {"r1", r.r1}});
    const Eigen::VectorXd sd = fit.laplace_covariance().diagonal().cwiseSqrt();
    for (std::size_t l = 0; l < p; ++l)
        std::printf("%-16s %12.6f  (sd %.6f)\n", names[l].c_str(), fit.map.theta[static_cast<Eigen::Index>(l)],
                    sd[static_cast<Eigen::Index>(l)]);
}

// ---------------------------------------------------------------------------

struct SegregationArgs {
    std::string attributes, params, standardization, chain, stat = "strain";
    std::vector<std::string> exclude;
    std::optional<std::size_t> pairs_subsample, exact_limit;
    double posterior_quantiles = 0.95;
    bool binary = false;
    bool complete_only = true;
};

void cmd_segregation(const Globals& g, const SegregationArgs& a, Manifest& m) {
    if (g.config.empty()) throw ConfigError("segregation needs --config");
    auto model = load_model_config(g.config);
    m.input(a.attributes);
    m.input(a.params);
    auto table = load_attribute_table(a.attributes, model.schema);
    if (a.complete_only) {
        const auto before = table.size();
        table = table.complete_cases();
        if (table.size() < before) std::cerr << "dropped " << before - table.size() << " incomplete rows\n";
    }
    auto params = read_params(a.params);
    Standardization st = Standardization::identity(model.features);
    if (!a.standardization.empty()) {
        m.input(a.standardization);
        st = read_standardization(a.standardization, model.features);
    }
    LogisticKernel kernel(model.features, st, params);
    if (!a.exclude.empty()) kernel = kernel.without(a.exclude);
    m.set("excluded_features", a.exclude);

    if (a.stat == "separation") {
        auto sm = separation_matrix(table, kernel, g.threads);
        if (a.binary) {
            auto f = open_out(m.output("separation.bin"), true);
            write_matrix_binary(f, sm.ids, sm.values);
        } else {
            auto f = open_out(m.output("separation.csv"));
            write_matrix_csv(f, sm.ids, sm.values);
        }
        m.set("asymmetry", sm.asymmetry());
        std::printf("%zu x %zu separation matrix, max asymmetry %.3g\n", sm.size(), sm.size(), sm.asymmetry());
    } else if (a.stat == "isolation") {
        auto iso = isolation_of_members(table, kernel, g.threads);
        std::vector<std::vector<std::string>> rows;
        for (std::size_t i = 0; i < table.size(); ++i) rows.push_back({table.ids[i], format_double(iso.values[i])});
        auto f = open_out(m.output("isolation.csv"));
        write_delimited(f, {"id", "isolation"}, rows);
        auto sf = open_out(m.output("isolation_summary.csv"));
        write_delimited(sf, {"statistic", "value"},
                        {{"mean", format_double(iso.mean)},
                         {"max", format_double(iso.max)},
                         {"argmax", table.ids[iso.argmax]}});
        std::printf("mean isolation %.6f, max %.6f (%s)\n", iso.mean, iso.max, table.ids[iso.argmax].c_str());
    } else if (a.stat == "strain") {
        StrainOptions opt;
        opt.seed = derive_seed(g.seed, 30);
        opt.threads = g.threads;
        if (a.pairs_subsample) opt.subsample_pairs = *a.pairs_subsample;
        if (a.exact_limit) opt.exact_limit = *a.exact_limit;
        Eigen::MatrixXd draws;
        if (!a.chain.empty()) {
            m.input(a.chain);
            std::vector<std::string> names;
            draws = read_chain(a.chain, &names);
            if (names != model.features.names()) throw ConfigError("chain parameter names do not match the config");
            opt.posterior = &draws;
            opt.interval_mass = a.posterior_quantiles;
        }
        m.seed("pairs", opt.seed);
        auto s = social_strain(table, kernel, opt);
        std::vector<std::string> header{"feature", "contribution"};
        if (!s.uncertainty.empty()) header.insert(header.end(), {"median", "lower", "upper"});
        std::vector<std::vector<std::string>> rows;
        for (std::size_t l = 0; l < s.features.size(); ++l) {
            std::vector<std::string> row{s.features[l], format_double(s.contributions[l])};
            if (!s.uncertainty.empty())
                for (double v : {s.uncertainty[l].median, s.uncertainty[l].lower, s.uncertainty[l].upper})
                    row.push_back(format_double(v));
            rows.push_back(std::move(row));
        }
        std::vector<std::string> total{"total", format_double(s.total)};
        if (s.total_uncertainty)
            for (double v : {s.total_uncertainty->median, s.total_uncertainty->lower, s.total_uncertainty->upper})
                total.push_back(format_double(v));
        else if (!s.uncertainty.empty())
            total.insert(total.end(), 3, "NA");
        rows.push_back(std::move(total));
        auto f = open_out(m.output("strain.csv"));
        write_delimited(f, header, rows);
        m.set("strain", {{"total", s.total}, {"pairs", s.pairs}, {"subsampled", s.subsampled}});
        std::printf("strain %.6f over %zu pairs%s\n", s.total, s.pairs, s.subsampled ? " (subsampled)" : "");
    } else {
        throw ConfigError("unknown --stat '" + a.stat + "' (separation, isolation, strain)");
    }
}

// ---------------------------------------------------------------------------

struct EmbedArgs {
    std::string matrix, values;
    std::vector<std::string> columns;
    std::size_t k = 2;
    std::size_t grid = 50;
    std::optional<double> bandwidth;
};

void cmd_embed(const Globals&, const EmbedArgs& a, Manifest& m) {
    m.input(a.matrix);
    auto [ids, d] = read_matrix(a.matrix);
    auto e = classical_mds(ids, d, a.k);
    {
        std::vector<std::string> header{"id"};
        for (std::size_t c = 0; c < a.k; ++c) header.push_back("dim" + std::to_string(c + 1));
        std::vector<std::vector<std::string>> rows;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            std::vector<std::string> row{ids[i]};
            for (Eigen::Index c = 0; c < e.coordinates.cols(); ++c)
                row.push_back(format_double(e.coordinates(static_cast<Eigen::Index>(i), c)));
            rows.push_back(std::move(row));
        }
        auto f = open_out(m.output("embedding.csv"));
        write_delimited(f, header, rows);
    }
    {
        std::vector<std::vector<std::string>> rows;
        for (Eigen::Index c = 0; c < e.eigenvalues.size(); ++c)
            rows.push_back({std::to_string(c + 1), format_double(e.eigenvalues[c])});
        auto f = open_out(m.output("eigenvalues.csv"));
        write_delimited(f, {"dimension", "eigenvalue"}, rows);
    }
    m.set("fit", {{"stress", e.stress}, {"strain", e.strain}, {"negative_mass", e.negative_mass}});
    std::printf("stress %.6g, strain %.6g, negative eigenvalue mass %.6g\n", e.stress, e.strain, e.negative_mass);
    if (e.negative_mass > 0.0) std::cerr << "note: input is not Euclidean; negative dimensions were zeroed\n";
    if (a.values.empty()) return;

    // Smoothed fields of per-id values over the embedding.
    m.input(a.values);
    auto t = read_delimited(a.values);
    const std::size_t id_col = t.column("id");
    std::vector<std::string> cols = a.columns;
    if (cols.empty())
        for (std::size_t c = 0; c < t.header.size(); ++c)
            if (c != id_col) cols.push_back(t.header[c]);
    std::map<std::string, std::size_t> row_of;
    for (std::size_t i = 0; i < t.rows.size(); ++i) row_of[t.rows[i][id_col]] = i;

    std::vector<std::vector<std::string>> field_rows, profile_rows;
    std::vector<std::string> field_header{"dim1", "dim2"}, profile_header{"dim1"};
    const bool planar = a.k >= 2;
    const std::size_t g = std::max<std::size_t>(a.grid, 2);
    std::vector<std::vector<std::optional<double>>> field, mean, sd;
    Eigen::MatrixXd query;
    std::vector<double> line;
    for (const auto& col : cols) {
        const std::size_t c = t.column(col);
        std::vector<Eigen::Index> use;
        std::vector<double> vals;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            auto it = row_of.find(ids[i]);
            if (it == row_of.end()) continue;
            const double v = parse_double(t.rows[it->second][c]);
            if (std::isnan(v)) continue;
            use.push_back(static_cast<Eigen::Index>(i));
            vals.push_back(v);
        }
        if (vals.empty()) throw ConfigError("no values of '" + col + "' match embedded ids");
        Eigen::MatrixXd pts(static_cast<Eigen::Index>(use.size()), planar ? 2 : 1);
        for (std::size_t i = 0; i < use.size(); ++i)
            pts.row(static_cast<Eigen::Index>(i)) = e.coordinates.row(use[i]).head(pts.cols());
        const double h = a.bandwidth ? *a.bandwidth : silverman_bandwidth(pts);
        if (query.size() == 0) {
            const Eigen::VectorXd lo = e.coordinates.colwise().minCoeff(), hi = e.coordinates.colwise().maxCoeff();
            for (std::size_t i = 0; i < g; ++i) line.push_back(lo[0] + (hi[0] - lo[0]) * i / (g - 1.0));
            if (planar) {
                query.resize(static_cast<Eigen::Index>(g * g), 2);
                for (std::size_t i = 0; i < g; ++i)
                    for (std::size_t j = 0; j < g; ++j)
                        query.row(static_cast<Eigen::Index>(i * g + j))
                            << line[i], lo[1] + (hi[1] - lo[1]) * j / (g - 1.0);
            }
        }
        if (planar) field.push_back(kernel_smooth(pts, vals, query, h));
        std::vector<double> coord(use.size());
        for (std::size_t i = 0; i < use.size(); ++i) coord[i] = e.coordinates(use[i], 0);
        auto prof = conditional_profile(coord, vals, line, h);
        mean.push_back(prof.mean);
        sd.push_back(prof.sd);
        field_header.push_back(col);
        profile_header.push_back(col + "_mean");
        profile_header.push_back(col + "_sd");
    }
    auto cell = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("NA"); };
    if (planar) {
        for (Eigen::Index q = 0; q < query.rows(); ++q) {
            std::vector<std::string> row{format_double(query(q, 0)), format_double(query(q, 1))};
            for (const auto& f : field) row.push_back(cell(f[static_cast<std::size_t>(q)]));
            field_rows.push_back(std::move(row));
        }
        auto f = open_out(m.output("field.csv"));
        write_delimited(f, field_header, field_rows);
    }
    for (std::size_t i = 0; i < line.size(); ++i) {
        std::vector<std::string> row{format_double(line[i])};
        for (std::size_t c = 0; c < cols.size(); ++c) {
            row.push_back(cell(mean[c][i]));
            row.push_back(cell(sd[c][i]));
        }
        profile_rows.push_back(std::move(row));
    }
    auto f = open_out(m.output("profile.csv"));
    write_delimited(f, profile_header, profile_rows);
}

// ---------------------------------------------------------------------------

struct CoverageArgs {
    SyntheticFlags syn;
    std::size_t replications = 250;
    std::string alphas;
};

void cmd_coverage(const Globals& g, const CoverageArgs& a, Manifest& m) {
    auto cfg = synthetic_config(g, a.syn);
    auto alphas = a.alphas.empty() ? default_alpha_grid() : parse_list(a.alphas);
    auto report = run_coverage(cfg, a.replications, alphas, g.seed, g.threads);
    {
        std::vector<std::vector<std::string>> rows;
        for (std::size_t k = 0; k < alphas.size(); ++k)
            rows.push_back({format_double(alphas[k]), format_double(report.lambda[k]), format_double(report.se[k]),
                            std::to_string(report.effective)});
        auto f = open_out(m.output("coverage.csv"));
        write_delimited(f, {"alpha", "lambda", "se", "n_effective"}, rows);
    }
    {
        std::vector<std::vector<std::string>> rows;
        for (std::size_t r = 0; r < report.outcomes.size(); ++r) {
            const auto& o = report.outcomes[r];
            rows.push_back({std::to_string(r), o.ok ? "1" : "0", o.ok ? format_double(o.chi2) : "NA",
                            format_double(o.mean_degree), std::to_string(o.positives), std::to_string(o.negatives),
                            o.ok ? join(o.theta_true) : "NA", o.ok ? join(o.theta_map) : "NA"});
        }
        // theta columns hold comma-joined vectors, so use ';' inside them.
        for (auto& row : rows)
            for (std::size_t c = 6; c < 8; ++c) std::replace(row[c].begin(), row[c].end(), ',', ';');
        auto f = open_out(m.output("replications.csv"));
        write_delimited(f, {"replication", "ok", "chi2", "mean_degree", "positives", "negatives", "theta_true", "theta_map"},
                        rows);
    }
    m.set("failures", report.failures);
    std::printf("%zu replications, %zu failed\n", report.replications, report.failures);
    for (std::size_t k = 0; k < alphas.size(); ++k)
        std::printf("alpha %.3f  lambda %.3f  se %.3f\n", alphas[k], report.lambda[k], report.se[k]);
}

// ---------------------------------------------------------------------------

struct GeoArgs {
    std::string regions;
    std::size_t count = 1000;
    std::size_t pairs = 0;
    std::string thresholds = "1,5,50";
};

void cmd_geo_sample(const Globals& g, const GeoArgs& a, Manifest& m) {
    m.input(a.regions);
    auto regions = load_regions(a.regions);
    LocationSampler sampler(regions);
    const auto s = derive_seed(g.seed, 40);
    m.seed("locations", s);
    Rng rng(s);
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < a.count; ++i) {
        auto loc = sampler.sample(rng);
        rows.push_back({std::to_string(i), sampler.regions()[loc.region].id, format_double(loc.point.x),
                        format_double(loc.point.y)});
    }
    auto f = open_out(m.output("locations.csv"));
    write_delimited(f, {"draw", "region", "x", "y"}, rows);
    m.set("acceptance_rate", sampler.acceptance_rate());
    if (a.pairs > 0) {
        DistanceBins bins{parse_list(a.thresholds)};
        const auto ps = derive_seed(g.seed, 41);
        m.seed("pairs", ps);
        auto levels = sample_control_distance_feature(regions, bins, a.pairs, ps);
        std::vector<std::vector<std::string>> lrows;
        for (std::size_t i = 0; i < levels.size(); ++i) lrows.push_back({std::to_string(i), std::to_string(levels[i])});
        auto lf = open_out(m.output("distance_levels.csv"));
        write_delimited(lf, {"pair", "level"}, lrows);
    }
    std::printf("%zu locations, acceptance rate %.4f\n", a.count, sampler.acceptance_rate());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Blau-space connectivity kernels: fit, segregation statistics, embedding"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);
    Globals g;
    app.add_option("--seed", g.seed, "random seed")->capture_default_str();
    app.add_option("--threads", g.threads, "worker threads (0 = all cores)")->capture_default_str();
    app.add_option("--config", g.config, "model config (JSON)");
    app.add_option("--out", g.out, "output directory")->capture_default_str();
    // Globals are also accepted after the subcommand name.
    auto globals = [&](CLI::App* cmd) {
        cmd->fallthrough();
        return cmd;
    };

    SimulateArgs sim;
    auto* simulate = globals(app.add_subcommand("simulate", "synthetic network and ego dataset"));
    add_synthetic_flags(simulate, sim.syn);
    simulate->add_option("--theta", sim.theta, "kernel parameters bias,dx1,dx2 (default: the mean)");
    simulate->add_flag("--draw-theta", sim.draw_theta, "draw theta around the mean instead");

    FitArgs fit;
    auto* fitc = globals(app.add_subcommand("fit", "fit the kernel to case-control records"));
    fitc->add_option("--records", fit.records, "records file");
    fitc->add_option("--attributes", fit.attributes, "attribute table (with --nominations)");
    fitc->add_option("--nominations", fit.nominations, "ego,alter pairs");
    fitc->add_option("--controls", fit.controls, "control pairs of respondents");
    fitc->add_option("--control-ratio", fit.control_ratio, "controls per nomination when sampling them")->capture_default_str();
    fitc->add_option("--standardization", fit.standardization, "reuse a standardization instead of fitting one");
    fitc->add_option("--r0", fit.r0, "prevalence ratio for non-edges");
    fitc->add_option("--r1", fit.r1, "prevalence ratio for edges");
    fitc->add_option("--population-size", fit.population_size, "population size for estimating r");
    fitc->add_option("--mean-degree", fit.mean_degree, "population mean degree for estimating r");
    fitc->add_flag("--weighted", fit.weighted, "weighted pseudo-likelihood");
    fitc->add_option("--winsorize", fit.winsorize, "clip weights at this percentile, e.g. 0.95")
        ->check(CLI::Range(0.0, 1.0));
    fitc->add_option("--prior-bias-scale", fit.bias_scale, "Cauchy scale of the bias")->capture_default_str();
    fitc->add_option("--prior-scale", fit.scale, "Cauchy scale of other parameters")->capture_default_str();
    fitc->add_flag("--mcmc", fit.mcmc, "also draw a Metropolis-Hastings chain");
    fitc->add_option("--draws", fit.draws, "chain length after burn-in")->capture_default_str();
    fitc->add_option("--burn-in", fit.burn_in, "discarded draws")->capture_default_str();
    fitc->add_option("--tolerance", fit.tolerance, "gradient tolerance")->capture_default_str();
    fitc->add_option("--max-iterations", fit.max_iterations, "optimizer iteration cap")->capture_default_str();

    SegregationArgs seg;
    auto* segc = globals(app.add_subcommand("segregation", "separation, isolation or strain"));
    segc->add_option("--attributes", seg.attributes, "attribute table")->required();
    segc->add_option("--params", seg.params, "fitted parameters (params.csv)")->required();
    segc->add_option("--standardization", seg.standardization, "feature standardization");
    segc->add_option("--stat", seg.stat, "separation | isolation | strain")->capture_default_str();
    segc->add_option("--exclude-feature", seg.exclude, "drop a feature's contribution (repeatable)");
    segc->add_option("--pairs-subsample", seg.pairs_subsample, "pairs drawn when the population is large");
    segc->add_option("--exact-limit", seg.exact_limit, "largest population using every pair");
    segc->add_option("--chain", seg.chain, "posterior draws for strain intervals");
    segc->add_option("--posterior-quantiles", seg.posterior_quantiles, "central interval mass")
        ->capture_default_str()
        ->check(CLI::Range(0.0, 1.0));
    segc->add_flag("--binary", seg.binary, "write the separation matrix in binary");

    EmbedArgs emb;
    auto* embc = globals(app.add_subcommand("embed", "classical MDS of a separation matrix"));
    embc->add_option("--matrix", emb.matrix, "separation matrix (csv or binary)")->required();
    embc->add_option("-k,--dimensions", emb.k, "embedding dimension")->capture_default_str();
    embc->add_option("--values", emb.values, "per-id values to smooth over the embedding");
    embc->add_option("--columns", emb.columns, "value columns (default: all)")->delimiter(',');
    embc->add_option("--grid", emb.grid, "grid points per axis")->capture_default_str();
    embc->add_option("--bandwidth", emb.bandwidth, "smoothing bandwidth (default: rule of thumb)");

    CoverageArgs cov;
    auto* covc = globals(app.add_subcommand("coverage", "coverage of Laplace credible regions"));
    add_synthetic_flags(covc, cov.syn);
    covc->add_option("--replications", cov.replications, "synthetic datasets")->capture_default_str();
    covc->add_option("--alphas", cov.alphas, "credible levels, comma separated (default 0, 0.05, ..., 1)");

    GeoArgs geo;
    auto* geoc = globals(app.add_subcommand("geo-sample", "sample home locations from regions"));
    geoc->add_option("--regions", geo.regions, "regions (JSON lines)")->required();
    geoc->add_option("--count", geo.count, "locations to draw")->capture_default_str();
    geoc->add_option("--pairs", geo.pairs, "also draw this many location pairs as distance levels");
    geoc->add_option("--thresholds", geo.thresholds, "distance thresholds")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    const std::vector<std::string> args(argv + 1, argv + argc);
    try {
        auto run = [&](const char* name, auto&& body) {
            Manifest m(name, g);
            body(m);
            m.write(args);
        };
        if (*simulate) run("simulate", [&](Manifest& m) { cmd_simulate(g, sim, m); });
        if (*fitc) run("fit", [&](Manifest& m) { cmd_fit(g, fit, m); });
        if (*segc) run("segregation", [&](Manifest& m) { cmd_segregation(g, seg, m); });
        if (*embc) run("embed", [&](Manifest& m) { cmd_embed(g, emb, m); });
        if (*covc) run("coverage", [&](Manifest& m) { cmd_coverage(g, cov, m); });
        if (*geoc) run("geo-sample", [&](Manifest& m) { cmd_geo_sample(g, geo, m); });
    } catch (const NonConvergenceError& e) {
        std::cerr << "error: " << e.what() << " (gradient norm " << e.gradient_norm() << ")\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::logic_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
