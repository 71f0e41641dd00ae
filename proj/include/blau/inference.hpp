#pragma once
// Bayesian inference of logistic kernel parameters from ego-network
// (case-control) data.
//
// The observed-data likelihood of a dyad sampled with state-dependent
// inclusion probabilities is
//
//   P(A | f, theta, I = 1) = rho^A (1 - rho)^(1 - A) r(A) / [r0 (1 - rho) + r1 rho]
//
// with r(a) the ratio between the sample and population prevalence of dyad
// state a. Everything is evaluated through softplus so that it
// stays finite for extreme linear predictors.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "blau/features.hpp"
#include "blau/kernel.hpp"

namespace blau {

struct DyadRecord {
    std::string ego_id;
    std::string alter_id;
    int edge = 0;  // A in {0, 1}
    double w_ego = 1.0;
    double w_alter = 1.0;
    Eigen::VectorXd features;  // standardized

    /// Pseudo-likelihood weight w_ego * {A + (1 - A) * w_alter}.
    double weight() const { return w_ego * (edge == 1 ? 1.0 : w_alter); }
};

void validate_records(std::span<const DyadRecord> records, std::size_t p);

struct PrevalenceRatio {
    double r0 = 1.0;
    double r1 = 1.0;

    void validate() const;
};

struct PriorSpec {
    Eigen::VectorXd scales;  // Cauchy scale per parameter

    /// Bias scale 10, every other parameter 2.5.
    static PriorSpec defaults(std::size_t p, double bias_scale = 10.0, double scale = 2.5);
    void validate() const;
};

struct LikelihoodOptions {
    bool weighted = false;
    /// Keep the theta-independent term A log r1 + (1 - A) log r0.
    bool include_constant = true;
};

double observed_log_likelihood(std::span<const DyadRecord> records, const Eigen::VectorXd& theta,
                               const PrevalenceRatio& r, const LikelihoodOptions& options = {});

Eigen::VectorXd observed_log_likelihood_gradient(std::span<const DyadRecord> records,
                                                 const Eigen::VectorXd& theta,
                                                 const PrevalenceRatio& r,
                                                 const LikelihoodOptions& options = {});

/// Sum of -log(1 + (theta_l / alpha_l)^2); the normalizing constant is dropped.
double log_prior(const Eigen::VectorXd& theta, const PriorSpec& prior);
Eigen::VectorXd log_prior_gradient(const Eigen::VectorXd& theta, const PriorSpec& prior);

/// r1 = s / pi and r0 = (1 - s) / (1 - pi), where s is the (weighted) fraction
/// of edges among the records and pi = mean_degree / (n - 1).
PrevalenceRatio estimate_prevalence_ratio(std::span<const DyadRecord> records, double population_size,
                                          double mean_degree, bool weighted = false);

/// Clips weights above the given percentile (linear interpolation between
/// order statistics) and rescales them to sum to their count.
std::vector<double> winsorize_weights(std::span<const double> weights, double percentile = 0.95);

/// A differentiable log density over parameter vectors.
struct LogDensity {
    std::function<double(const Eigen::VectorXd&)> value;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> gradient;
};

/// Log posterior of the kernel parameters. Holds a view of `records`, which
/// must outlive the returned object.
LogDensity make_log_posterior(std::span<const DyadRecord> records, const PrevalenceRatio& r,
                              const PriorSpec& prior, const LikelihoodOptions& options = {});

struct OptimizerOptions {
    double gradient_tolerance = 1e-6;  // infinity norm
    int max_iterations = 10000;
    double hessian_step = 1e-4;        // relative finite-difference step
};

struct MaximizeResult {
    Eigen::VectorXd argmax;
    double value = 0.0;
    double gradient_norm = 0.0;
    int iterations = 0;
};

/// BFGS ascent with backtracking line search. Throws NonConvergenceError when
/// max_iterations is exhausted.
MaximizeResult maximize(const LogDensity& density, const Eigen::VectorXd& init,
                        const OptimizerOptions& options = {});

/// -d^2 log p by central differences of the analytic gradient, symmetrized.
Eigen::MatrixXd negative_hessian(const LogDensity& density, const Eigen::VectorXd& at,
                                 double relative_step = 1e-4);

struct PosteriorChain {
    Eigen::MatrixXd draws;  // draws x p
    double acceptance_rate = 0.0;
    std::uint64_t seed = 0;
    std::size_t burn_in = 0;
};

/// Random-walk Metropolis-Hastings with a fixed Gaussian proposal.
PosteriorChain metropolis_hastings(const LogDensity& density, const Eigen::VectorXd& init,
                                   const Eigen::MatrixXd& proposal_cov, std::size_t draws,
                                   std::size_t burn_in, std::uint64_t seed);

/// (2.38^2 / p) H^-1
Eigen::MatrixXd default_proposal_covariance(const Eigen::MatrixXd& hessian);

struct PosteriorResult {
    KernelParams map;
    Eigen::MatrixXd hessian;  // of the negative log posterior at the MAP
    double log_posterior = 0.0;
    double gradient_norm = 0.0;
    int iterations = 0;
    std::optional<PosteriorChain> chain;

    /// Laplace approximation covariance H^-1.
    Eigen::MatrixXd laplace_covariance() const;
};

PosteriorResult fit_map(std::span<const DyadRecord> records, const PrevalenceRatio& r,
                        const PriorSpec& prior, const KernelParams& init,
                        const OptimizerOptions& options = {}, const LikelihoodOptions& likelihood = {});

PosteriorChain sample_posterior(std::span<const DyadRecord> records, const PrevalenceRatio& r,
                                const PriorSpec& prior, const KernelParams& init,
                                const Eigen::MatrixXd& proposal_cov, std::size_t draws,
                                std::size_t burn_in, std::uint64_t seed,
                                const LikelihoodOptions& likelihood = {});

/// Case-control records from an attribute table: each nomination (ego, alter)
/// is a positive, each control pair of respondents a negative. Dyads touching
/// a row with a missing attribute are dropped and counted.
struct RecordBuild {
    std::vector<DyadRecord> records;
    std::size_t dropped = 0;
};

using IdPair = std::pair<std::string, std::string>;

/// Raw (unstandardized) feature vectors of complete control pairs, used as the
/// standardization reference sample.
std::vector<std::vector<double>> control_features(const AttributeTable& table, const FeatureConfig& config,
                                                  std::span<const IdPair> controls);

RecordBuild build_records(const AttributeTable& table, const FeatureConfig& config,
                          const Standardization& standardization, std::span<const IdPair> nominations,
                          std::span<const IdPair> controls);

}  // namespace blau
