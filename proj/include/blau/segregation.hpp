#pragma once
// Social separation, isolation and strain under a logistic connectivity
// kernel, the stochastic block model closed forms, and sampled checks of the
// (semi)metric properties of the separation.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "blau/features.hpp"
#include "blau/kernel.hpp"
#include "blau/random.hpp"

namespace blau {

/// logit rho(y, y) - logit rho(x, y): how much less likely y is to befriend x
/// than someone identical to y, in log odds.
double social_separation(std::span<const double> x, std::span<const double> y,
                         const LogisticKernel& kernel);

/// Per-feature terms theta_l (f_l(y, y) - f_l(x, y)); they sum to the separation.
std::vector<double> separation_contributions(std::span<const double> x, std::span<const double> y,
                                             const LogisticKernel& kernel);

/// Weighted mean separation between x and the population. When x is the
/// population row `self`, that row is excluded.
double social_isolation(std::span<const double> x, const AttributeTable& population,
                        const LogisticKernel& kernel, std::optional<std::size_t> self = std::nullopt);

struct IsolationSummary {
    std::vector<double> values;  // one per population member
    double mean = 0.0;           // utilitarian aggregate
    double max = 0.0;            // most isolated member
    std::size_t argmax = 0;
};

IsolationSummary isolation_of_members(const AttributeTable& population, const LogisticKernel& kernel,
                                      unsigned threads = 0);

struct SeparationMatrix {
    std::vector<std::string> ids;
    Eigen::MatrixXd values;  // values(i, j) = separation(x_i, x_j)
    KernelParams theta_used;

    std::size_t size() const { return ids.size(); }
    /// Largest |values(i, j) - values(j, i)|.
    double asymmetry() const;
};

SeparationMatrix separation_matrix(const AttributeTable& population, const LogisticKernel& kernel,
                                   unsigned threads = 0);

struct FeatureInterval {
    double median = 0.0;
    double lower = 0.0;
    double upper = 0.0;
};

struct StrainReport {
    std::vector<std::string> features;
    double total = 0.0;                  // accumulated from pairwise separations
    std::vector<double> contributions;   // per feature
    std::size_t pairs = 0;
    bool subsampled = false;
    std::optional<double> interval_mass; // e.g. 0.95
    std::vector<FeatureInterval> uncertainty;  // per feature, from posterior draws
    std::optional<FeatureInterval> total_uncertainty;

    double contribution_sum() const;
};

struct StrainOptions {
    /// Populations up to this size use every distinct pair.
    std::size_t exact_limit = 2000;
    /// Pairs drawn uniformly (with replacement) above exact_limit.
    std::size_t subsample_pairs = 2'000'000;
    std::uint64_t seed = 0;
    /// Posterior draws (draws x p) for per-feature credible intervals.
    const Eigen::MatrixXd* posterior = nullptr;
    double interval_mass = 0.95;
    unsigned threads = 0;
};

StrainReport social_strain(const AttributeTable& population, const LogisticKernel& kernel,
                           const StrainOptions& options = {});

/// Draws one attribute row.
using AttributeSampler = std::function<AttributeRow(Rng&)>;

struct Violation {
    std::string kind;  // non_negativity | symmetry | identity | indiscernibles | triangle | affine_offset
    std::string feature;  // set for per-feature checks
    double amount = 0.0;
};

struct ViolationReport {
    std::size_t trials = 0;
    bool homophilous = false;
    std::size_t non_negativity = 0;
    std::size_t symmetry = 0;
    std::size_t identity = 0;
    std::size_t indiscernibles = 0;
    std::size_t triangle = 0;
    std::size_t affine_offset = 0;
    std::vector<Violation> examples;  // first few violations

    std::size_t total() const {
        return non_negativity + symmetry + identity + indiscernibles + triangle + affine_offset;
    }
    bool empty() const { return total() == 0; }
};

/// Samples attribute triples and counts violations of non-negativity,
/// symmetry and identity of indiscernibles.
ViolationReport check_semimetric(const LogisticKernel& kernel, const AttributeSampler& sampler,
                                 std::size_t trials, std::uint64_t seed = 0);

/// As check_semimetric, plus the triangle inequality. Every non-bias feature
/// must declare affine metric metadata.
ViolationReport check_metric(const LogisticKernel& kernel, const AttributeSampler& sampler,
                             std::size_t trials, std::uint64_t seed = 0);

// Stochastic block model closed forms.
double sbm_separation(std::size_t x, std::size_t y, const SbmSpec& spec);
double sbm_isolation(std::size_t x, const SbmSpec& spec);
/// 1 - sum_x P(x)^2
double dispersion_index(std::span<const double> block_probs);
double sbm_strain(const SbmSpec& spec);

}  // namespace blau
