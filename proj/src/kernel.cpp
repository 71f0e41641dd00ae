#include "blau/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "blau/errors.hpp"

namespace blau {

double logit(double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("logit: probability outside (0, 1)");
    return std::log(p) - std::log1p(-p);
}

double sigmoid(double t) {
    if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
}

double softplus(double t) {
    if (t > 0.0) return t + std::log1p(std::exp(-t));
    return std::log1p(std::exp(t));
}

double log_sigmoid(double t) { return -softplus(-t); }

double log_sum_exp(double a, double b) {
    const double m = std::max(a, b);
    if (m == -INFINITY) return m;
    return m + std::log1p(std::exp(std::min(a, b) - m));
}

void KernelParams::validate() const {
    for (Eigen::Index i = 0; i < theta.size(); ++i)
        if (!std::isfinite(theta[i])) throw ConfigError("kernel parameters must be finite");
    if (!names.empty() && names.size() != size())
        throw ConfigError("kernel parameter names do not match the parameter count");
}

bool is_homophilous(const KernelParams& params) {
    for (Eigen::Index l = 1; l < params.theta.size(); ++l)
        if (!(params.theta[l] < 0.0)) return false;
    return true;
}

double linear_predictor(std::span<const double> features, const KernelParams& params) {
    if (features.size() != params.size())
        throw ConfigError("kernel: feature vector length " + std::to_string(features.size()) +
                          " does not match " + std::to_string(params.size()) + " parameters");
    double eta = 0.0;
    for (std::size_t l = 0; l < features.size(); ++l) eta += params.theta[static_cast<Eigen::Index>(l)] * features[l];
    return eta;
}

double logistic_edge_probability(std::span<const double> features, const KernelParams& params) {
    return sigmoid(linear_predictor(features, params));
}

LogisticKernel::LogisticKernel(FeatureConfig config, Standardization standardization,
                               KernelParams params)
    : config_(std::move(config)), standardization_(std::move(standardization)),
      params_(std::move(params)) {
    if (standardization_.size() != config_.size())
        throw ConfigError("standardization does not match the feature config");
    if (params_.size() != config_.size())
        throw ConfigError("kernel has " + std::to_string(params_.size()) + " parameters but " +
                          std::to_string(config_.size()) + " features");
    params_.validate();
    if (params_.names.empty()) params_.names = config_.names();
    if (params_.names != config_.names())
        throw ConfigError("kernel parameter names do not match the feature names");
}

void LogisticKernel::features(std::span<const double> x, std::span<const double> y,
                              std::span<double> out) const {
    config_.evaluate(x, y, out);
    standardization_.apply_in_place(out);
}

std::vector<double> LogisticKernel::features(std::span<const double> x, std::span<const double> y) const {
    std::vector<double> f(size());
    features(x, y, f);
    return f;
}

double LogisticKernel::log_odds(std::span<const double> x, std::span<const double> y) const {
    return linear_predictor(features(x, y), params_);
}

double LogisticKernel::probability(std::span<const double> x, std::span<const double> y) const {
    return sigmoid(log_odds(x, y));
}

LogisticKernel LogisticKernel::with_params(KernelParams params) const {
    return LogisticKernel(config_, standardization_, std::move(params));
}

LogisticKernel LogisticKernel::without(std::span<const std::string> feature_names) const {
    KernelParams p = params_;
    for (const auto& name : feature_names) {
        auto l = config_.find(name);
        if (!l) throw ConfigError("cannot exclude unknown feature '" + name + "'");
        p.theta[static_cast<Eigen::Index>(*l)] = 0.0;
    }
    return with_params(std::move(p));
}

double SbmSpec::log_odds_gap() const { return logit(rho_same) - logit(rho_diff); }

void SbmSpec::validate() const {
    if (block_probs.size() < 2) throw ConfigError("SBM needs at least 2 blocks");
    if (!(rho_same > 0.0 && rho_same < 1.0) || !(rho_diff > 0.0 && rho_diff < 1.0))
        throw ConfigError("SBM probabilities must lie in (0, 1)");
    if (!(rho_diff < rho_same)) throw ConfigError("SBM must be homophilous (rho_diff < rho_same)");
    double total = 0.0;
    for (double p : block_probs) {
        if (!(p >= 0.0)) throw ConfigError("SBM block probabilities must be non-negative");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-12) throw ConfigError("SBM block probabilities must sum to 1");
}

double sbm_edge_probability(std::size_t x, std::size_t y, const SbmSpec& spec) {
    if (x >= spec.blocks() || y >= spec.blocks()) throw std::out_of_range("SBM block index out of range");
    return x == y ? spec.rho_same : spec.rho_diff;
}

}  // namespace blau
