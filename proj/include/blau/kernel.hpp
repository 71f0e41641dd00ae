#pragma once
// Connectivity kernels: the logistic kernel over standardized dyad features and
// the two-probability stochastic block model.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "blau/features.hpp"

namespace blau {

double logit(double p);
double sigmoid(double t);
/// log(1 + exp(t)) without overflow or loss of precision for large |t|.
double softplus(double t);
/// log sigma(t) = -softplus(-t).
double log_sigmoid(double t);
double log_sum_exp(double a, double b);

/// Coefficients of the logistic kernel; entry 0 multiplies the bias feature.
struct KernelParams {
    Eigen::VectorXd theta;
    std::vector<std::string> names;

    std::size_t size() const { return static_cast<std::size_t>(theta.size()); }
    void validate() const;
};

/// True iff every non-bias coefficient is strictly negative.
bool is_homophilous(const KernelParams& params);

double linear_predictor(std::span<const double> features, const KernelParams& params);
double logistic_edge_probability(std::span<const double> features, const KernelParams& params);

/// A feature configuration, its standardization and coefficients bundled
/// together. Everything works in log-odds internally.
class LogisticKernel {
public:
    LogisticKernel(FeatureConfig config, Standardization standardization, KernelParams params);

    const FeatureConfig& config() const { return config_; }
    const Standardization& standardization() const { return standardization_; }
    const KernelParams& params() const { return params_; }
    std::size_t size() const { return config_.size(); }

    /// Standardized feature vector written into out.
    void features(std::span<const double> x, std::span<const double> y, std::span<double> out) const;
    std::vector<double> features(std::span<const double> x, std::span<const double> y) const;
    double log_odds(std::span<const double> x, std::span<const double> y) const;
    double probability(std::span<const double> x, std::span<const double> y) const;

    LogisticKernel with_params(KernelParams params) const;
    /// Copy with the named features' coefficients set to zero.
    LogisticKernel without(std::span<const std::string> feature_names) const;

private:
    FeatureConfig config_;
    Standardization standardization_;
    KernelParams params_;
};

struct SbmSpec {
    double rho_same = 0.0;
    double rho_diff = 0.0;
    std::vector<double> block_probs;

    std::size_t blocks() const { return block_probs.size(); }
    /// logit(rho_same) - logit(rho_diff)
    double log_odds_gap() const;
    void validate() const;
};

/// Blocks are 0-based.
double sbm_edge_probability(std::size_t x, std::size_t y, const SbmSpec& spec);

}  // namespace blau
