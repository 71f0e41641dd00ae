#include "blau/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include <boost/math/distributions/chi_squared.hpp>

#include "blau/errors.hpp"
#include "blau/parallel.hpp"
#include "blau/random.hpp"

namespace blau {

void SyntheticConfig::validate() const {
    if (n < 2) throw ConfigError("synthetic config: n must be at least 2");
    if (egos > n) throw ConfigError("synthetic config: more egos than nodes");
    if (egos < 2) throw ConfigError("synthetic config: need at least 2 egos");
    if (!(negatives_per_positive >= 1.0)) throw ConfigError("synthetic config: negatives_per_positive must be >= 1");
    if (theta_mean.size() != 3) throw ConfigError("synthetic config: theta_mean must have 3 entries");
    if (!(theta_sd >= 0.0)) throw ConfigError("synthetic config: theta_sd must be non-negative");
    if (theta_distribution == ThetaDistribution::student_t && !(student_dof > 0.0))
        throw ConfigError("synthetic config: student_dof must be positive");
}

double Graph::mean_degree() const {
    return n == 0 ? 0.0 : 2.0 * static_cast<double>(edges.size()) / static_cast<double>(n);
}

std::vector<std::size_t> Graph::degrees() const {
    std::vector<std::size_t> d(n, 0);
    for (const auto& [a, b] : edges) {
        ++d[a];
        ++d[b];
    }
    return d;
}

AttributeTable unit_square_positions(std::size_t n, std::uint64_t seed) {
    AttributeTable t;
    t.schema = AttributeSchema({{"x1", ColumnKind::continuous, {}, {}}, {"x2", ColumnKind::continuous, {}, {}}});
    Rng rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    t.ids.reserve(n);
    t.rows.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        t.ids.push_back(std::to_string(i));
        const double a = u(rng);
        const double b = u(rng);
        t.rows.push_back({a, b});
    }
    t.categories.resize(t.schema.width());
    return t;
}

FeatureConfig unit_square_features() {
    AttributeSchema schema({{"x1", ColumnKind::continuous, {}, {}}, {"x2", ColumnKind::continuous, {}, {}}});
    return FeatureConfig(schema, {
                                     {"bias", FeatureKind::bias, {}, {}, {}, {}},
                                     {"dx1", FeatureKind::abs_diff, "x1", {}, AffineMetric{1.0, 0.0}, false},
                                     {"dx2", FeatureKind::abs_diff, "x2", {}, AffineMetric{1.0, 0.0}, false},
                                 });
}

Standardization unit_square_standardization() {
    Standardization s;
    s.provenance = "analytic: |u - v| for independent uniform u, v";
    const double scale = std::sqrt(2.0) / 3.0;  // twice the sd 1/(3 sqrt 2)
    s.features = {{0.0, 1.0, false, true}, {1.0 / 3.0, scale, false, false}, {1.0 / 3.0, scale, false, false}};
    return s;
}

LogisticKernel unit_square_kernel(const Eigen::VectorXd& theta) {
    auto config = unit_square_features();
    KernelParams params{theta, config.names()};
    return LogisticKernel(std::move(config), unit_square_standardization(), std::move(params));
}

Graph generate_network(const AttributeTable& positions, const LogisticKernel& kernel, std::uint64_t seed,
                       unsigned threads) {
    const std::size_t n = positions.size();
    if (n > std::numeric_limits<std::uint32_t>::max()) throw ConfigError("generate_network: too many nodes");
    std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> rows(n);
    parallel_blocks(n, threads, [&](std::size_t begin, std::size_t end) {
        std::vector<double> f(kernel.size());
        for (std::size_t i = begin; i < end; ++i) {
            Rng rng(derive_seed(seed, i));
            for (std::size_t j = i + 1; j < n; ++j) {
                kernel.features(positions.rows[i], positions.rows[j], f);
                const double p = sigmoid(linear_predictor(f, kernel.params()));
                if (uniform_open(rng) < p)
                    rows[i].emplace_back(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j));
            }
        }
    });
    Graph g;
    g.n = n;
    for (auto& r : rows) g.edges.insert(g.edges.end(), r.begin(), r.end());
    return g;
}

namespace {

std::uint64_t pair_key(std::size_t a, std::size_t b) {
    if (a > b) std::swap(a, b);
    return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint64_t>(b);
}

DyadRecord make_record(const AttributeTable& positions, const LogisticKernel& kernel, std::size_t ego,
                       std::size_t alter, int edge) {
    DyadRecord r;
    r.ego_id = positions.ids[ego];
    r.alter_id = positions.ids[alter];
    r.edge = edge;
    auto f = kernel.features(positions.rows[ego], positions.rows[alter]);
    r.features = Eigen::Map<const Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(f.size()));
    return r;
}

}  // namespace

EgoSample sample_ego_dataset(const Graph& graph, const AttributeTable& positions, const LogisticKernel& kernel,
                             std::size_t egos, double negatives_per_positive, std::uint64_t seed) {
    if (positions.size() != graph.n) throw ConfigError("ego sample: positions do not match the graph");
    if (egos < 2 || egos > graph.n) throw ConfigError("ego sample: ego count must lie in [2, n]");
    if (!(negatives_per_positive >= 1.0)) throw ConfigError("ego sample: negative ratio must be >= 1");
    Rng rng(seed);

    // partial Fisher-Yates
    std::vector<std::size_t> order(graph.n);
    for (std::size_t i = 0; i < graph.n; ++i) order[i] = i;
    for (std::size_t i = 0; i < egos; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, graph.n - 1);
        std::swap(order[i], order[pick(rng)]);
    }
    EgoSample out;
    out.egos.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(egos));
    std::vector<char> is_ego(graph.n, 0);
    for (auto e : out.egos) is_ego[e] = 1;

    std::unordered_set<std::uint64_t> edge_keys;
    for (const auto& [a, b] : graph.edges) {
        if (!is_ego[a] && !is_ego[b]) continue;
        edge_keys.insert(pair_key(a, b));
        const std::size_t ego = is_ego[a] ? a : b;
        const std::size_t alter = ego == a ? b : a;
        out.records.push_back(make_record(positions, kernel, ego, alter, 1));
    }
    out.positives = out.records.size();
    if (out.positives == 0) throw ConfigError("ego sample: no positive examples (degenerate dataset)");

    std::vector<std::pair<std::size_t, std::size_t>> candidates;
    for (std::size_t a = 0; a < egos; ++a)
        for (std::size_t b = a + 1; b < egos; ++b)
            if (!edge_keys.contains(pair_key(out.egos[a], out.egos[b])))
                candidates.emplace_back(out.egos[a], out.egos[b]);

    const auto wanted = static_cast<std::size_t>(std::llround(negatives_per_positive * static_cast<double>(out.positives)));
    std::size_t take = candidates.size();
    if (wanted < candidates.size()) {
        for (std::size_t i = 0; i < wanted; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, candidates.size() - 1);
            std::swap(candidates[i], candidates[pick(rng)]);
        }
        take = wanted;
    }
    for (std::size_t i = 0; i < take; ++i)
        out.records.push_back(make_record(positions, kernel, candidates[i].first, candidates[i].second, 0));
    out.negatives = take;
    return out;
}

double chi_squared_statistic(const Eigen::VectorXd& theta_true, const Eigen::VectorXd& theta_map,
                             const Eigen::MatrixXd& hessian) {
    if (theta_true.size() != theta_map.size() || hessian.rows() != theta_map.size() ||
        hessian.cols() != theta_map.size())
        throw ConfigError("chi-squared statistic: dimension mismatch");
    Eigen::LLT<Eigen::MatrixXd> llt(hessian);
    if (llt.info() != Eigen::Success) throw NumericError("chi-squared statistic: Hessian is not positive definite");
    const Eigen::VectorXd d = theta_true - theta_map;
    return d.dot(hessian * d);
}

double chi_squared_quantile(double prob, double dof) {
    if (!(prob >= 0.0 && prob <= 1.0)) throw std::domain_error("chi-squared quantile: probability outside [0, 1]");
    if (prob == 0.0) return 0.0;
    if (prob == 1.0) return std::numeric_limits<double>::infinity();
    return boost::math::quantile(boost::math::chi_squared_distribution<double>(dof), prob);
}

ReplicationOutcome run_replication(const SyntheticConfig& config, std::uint64_t seed, unsigned threads) {
    config.validate();
    ReplicationOutcome out;
    Rng rng(derive_seed(seed, 0));
    out.theta_true = config.theta_mean;
    std::normal_distribution<double> normal;
    std::student_t_distribution<double> student(config.student_dof);
    for (Eigen::Index l = 0; l < out.theta_true.size(); ++l) {
        const double z = config.theta_distribution == ThetaDistribution::normal ? normal(rng) : student(rng);
        out.theta_true[l] += config.theta_sd * z;
    }
    try {
        const auto positions = unit_square_positions(config.n, derive_seed(seed, 1));
        const auto kernel = unit_square_kernel(out.theta_true);
        const auto graph = generate_network(positions, kernel, derive_seed(seed, 2), threads);
        out.mean_degree = graph.mean_degree();
        auto sample = sample_ego_dataset(graph, positions, kernel, config.egos, config.negatives_per_positive,
                                         derive_seed(seed, 3));
        out.positives = sample.positives;
        out.negatives = sample.negatives;
        const auto r = estimate_prevalence_ratio(sample.records, static_cast<double>(config.n), out.mean_degree);
        KernelParams init{Eigen::VectorXd::Zero(3), kernel.config().names()};
        auto fit = fit_map(sample.records, r, PriorSpec::defaults(3), init);
        out.theta_map = fit.map.theta;
        out.hessian = fit.hessian;
        out.chi2 = chi_squared_statistic(out.theta_true, out.theta_map, out.hessian);
        out.ok = true;
    } catch (const NumericError& e) {
        out.failure = e.what();
    } catch (const ConfigError& e) {
        out.failure = e.what();
    }
    return out;
}

std::vector<double> default_alpha_grid() {
    std::vector<double> a;
    for (int i = 0; i <= 20; ++i) a.push_back(i / 20.0);
    return a;
}

CoverageReport run_coverage(const SyntheticConfig& config, std::size_t replications,
                            const std::vector<double>& alphas, std::uint64_t seed, unsigned threads) {
    config.validate();
    if (replications < 10) throw ConfigError("coverage: need at least 10 replications");
    for (double a : alphas)
        if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("coverage: alpha outside [0, 1]");
    CoverageReport report;
    report.alphas = alphas;
    report.replications = replications;
    report.outcomes.resize(replications);
    parallel_blocks(replications, threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t r = begin; r < end; ++r) report.outcomes[r] = run_replication(config, derive_seed(seed, r), 1);
    });
    for (const auto& o : report.outcomes) (o.ok ? report.effective : report.failures)++;
    const auto p = static_cast<double>(config.theta_mean.size());
    for (double a : alphas) {
        const double q = chi_squared_quantile(a, p);
        std::size_t inside = 0;
        for (const auto& o : report.outcomes)
            if (o.ok && o.chi2 <= q) ++inside;
        const double lambda = report.effective == 0 ? 0.0
                                                    : static_cast<double>(inside) / static_cast<double>(report.effective);
        report.lambda.push_back(lambda);
        report.se.push_back(report.effective == 0
                                ? 0.0
                                : std::sqrt(lambda * (1.0 - lambda) / static_cast<double>(report.effective)));
    }
    return report;
}

}  // namespace blau
