#pragma once
// Synthetic networks from a connectivity kernel, case-control ego datasets
// sampled from them, and the credible-interval coverage analysis built on top.

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "blau/features.hpp"
#include "blau/inference.hpp"
#include "blau/kernel.hpp"

namespace blau {

enum class ThetaDistribution { normal, student_t };

struct SyntheticConfig {
    std::size_t n = 2000;
    std::size_t egos = 100;
    double negatives_per_positive = 3.0;
    Eigen::VectorXd theta_mean = (Eigen::VectorXd(3) << -7.0, 0.0, 0.0).finished();
    double theta_sd = 1.0;
    ThetaDistribution theta_distribution = ThetaDistribution::normal;
    double student_dof = 5.0;  // student_t only
    std::uint64_t seed = 0;

    void validate() const;
};

/// Undirected simple graph over nodes 0..n-1; edges stored with first < second.
struct Graph {
    std::size_t n = 0;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;

    double mean_degree() const;
    std::vector<std::size_t> degrees() const;
};

/// n points uniform in the unit square as an attribute table with continuous
/// columns "x1" and "x2" and ids "0".."n-1".
AttributeTable unit_square_positions(std::size_t n, std::uint64_t seed);

/// Bias plus absolute coordinate differences. The standardization is analytic:
/// for independent uniforms, |u - v| has mean 1/3 and sd 1/(3 sqrt 2).
FeatureConfig unit_square_features();
Standardization unit_square_standardization();
LogisticKernel unit_square_kernel(const Eigen::VectorXd& theta);

/// Each unordered pair becomes an edge independently with the kernel's
/// probability. Deterministic in `seed` regardless of `threads`.
Graph generate_network(const AttributeTable& positions, const LogisticKernel& kernel,
                       std::uint64_t seed, unsigned threads = 0);

struct EgoSample {
    std::vector<std::size_t> egos;
    std::vector<DyadRecord> records;
    std::size_t positives = 0;
    std::size_t negatives = 0;
};

/// Samples `egos` respondents, takes all their incident edges as positives and
/// negatives_per_positive times as many distinct non-adjacent respondent pairs
/// as negatives (all available pairs when there are too few).
EgoSample sample_ego_dataset(const Graph& graph, const AttributeTable& positions,
                             const LogisticKernel& kernel, std::size_t egos,
                             double negatives_per_positive, std::uint64_t seed);

/// (theta - theta_map)^T H (theta - theta_map)
double chi_squared_statistic(const Eigen::VectorXd& theta_true, const Eigen::VectorXd& theta_map,
                             const Eigen::MatrixXd& hessian);

/// Quantile of the chi-squared distribution; 0 at prob 0 and +inf at prob 1.
double chi_squared_quantile(double prob, double dof);

struct ReplicationOutcome {
    bool ok = false;
    std::string failure;
    Eigen::VectorXd theta_true;
    Eigen::VectorXd theta_map;
    Eigen::MatrixXd hessian;
    double chi2 = 0.0;
    double mean_degree = 0.0;
    std::size_t positives = 0;
    std::size_t negatives = 0;
};

/// One draw of theta, network, ego dataset, MAP fit and chi-squared statistic.
ReplicationOutcome run_replication(const SyntheticConfig& config, std::uint64_t seed, unsigned threads = 1);

struct CoverageReport {
    std::vector<double> alphas;
    std::vector<double> lambda;  // fraction with chi2 <= quantile(alpha)
    std::vector<double> se;      // sqrt(lambda (1 - lambda) / effective)
    std::size_t replications = 0;
    std::size_t failures = 0;
    std::size_t effective = 0;
    std::vector<ReplicationOutcome> outcomes;
};

/// Coverage of Laplace credible ellipsoids; replication r uses derive_seed(seed, r).
CoverageReport run_coverage(const SyntheticConfig& config, std::size_t replications,
                            const std::vector<double>& alphas, std::uint64_t seed, unsigned threads = 0);

std::vector<double> default_alpha_grid();

}  // namespace blau
