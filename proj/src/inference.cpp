#include "blau/inference.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_map>

#include "blau/errors.hpp"
#include "blau/random.hpp"

namespace blau {

void validate_records(std::span<const DyadRecord> records, std::size_t p) {
    for (const auto& r : records) {
        if (r.edge != 0 && r.edge != 1) throw ConfigError("dyad record: edge indicator must be 0 or 1");
        if (!(r.w_ego > 0.0) || !(r.w_alter > 0.0) || !std::isfinite(r.w_ego) || !std::isfinite(r.w_alter))
            throw ConfigError("dyad record: weights must be positive and finite");
        if (static_cast<std::size_t>(r.features.size()) != p)
            throw ConfigError("dyad record: expected " + std::to_string(p) + " features, got " +
                              std::to_string(r.features.size()));
        if (!r.features.allFinite()) throw ConfigError("dyad record: non-finite feature value");
    }
}

void PrevalenceRatio::validate() const {
    if (!(r0 > 0.0) || !(r1 > 0.0) || !std::isfinite(r0) || !std::isfinite(r1))
        throw ConfigError("prevalence ratio must be positive and finite");
}

PriorSpec PriorSpec::defaults(std::size_t p, double bias_scale, double scale) {
    PriorSpec s;
    s.scales = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(p), scale);
    if (p > 0) s.scales[0] = bias_scale;
    return s;
}

void PriorSpec::validate() const {
    for (Eigen::Index l = 0; l < scales.size(); ++l)
        if (!(scales[l] > 0.0) || !std::isfinite(scales[l]))
            throw ConfigError("prior scales must be positive");
}

double observed_log_likelihood(std::span<const DyadRecord> records, const Eigen::VectorXd& theta,
                               const PrevalenceRatio& r, const LikelihoodOptions& options) {
    r.validate();
    validate_records(records, static_cast<std::size_t>(theta.size()));
    const double log_r0 = std::log(r.r0), log_r1 = std::log(r.r1);
    // A log rho + (1 - A) log(1 - rho) + A log r1 + (1 - A) log r0
    //   - log[r0 (1 - rho) + r1 rho]
    // collapses to log sigmoid(+-(eta + log r1 - log r0)). Evaluating that
    // directly avoids the cancellation between log r and the log-sum-exp that
    // costs relative precision when the term is close to zero.
    const double offset = log_r1 - log_r0;
    double total = 0.0;
    for (const auto& rec : records) {
        const double eta = theta.dot(rec.features) + offset;
        double term = rec.edge == 1 ? -softplus(-eta) : -softplus(eta);
        if (!options.include_constant) term -= rec.edge == 1 ? log_r1 : log_r0;
        total += options.weighted ? rec.weight() * term : term;
    }
    return total;
}

Eigen::VectorXd observed_log_likelihood_gradient(std::span<const DyadRecord> records,
                                                 const Eigen::VectorXd& theta, const PrevalenceRatio& r,
                                                 const LikelihoodOptions& options) {
    r.validate();
    validate_records(records, static_cast<std::size_t>(theta.size()));
    // d/d eta of the per-dyad term is A - sigmoid(eta + log(r1 / r0)).
    const double offset = std::log(r.r1) - std::log(r.r0);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(theta.size());
    for (const auto& rec : records) {
        const double eta = theta.dot(rec.features);
        double score = static_cast<double>(rec.edge) - sigmoid(eta + offset);
        if (options.weighted) score *= rec.weight();
        grad.noalias() += score * rec.features;
    }
    return grad;
}

double log_prior(const Eigen::VectorXd& theta, const PriorSpec& prior) {
    if (prior.scales.size() != theta.size()) throw ConfigError("prior has the wrong number of scales");
    double lp = 0.0;
    for (Eigen::Index l = 0; l < theta.size(); ++l) {
        const double z = theta[l] / prior.scales[l];
        lp -= std::log1p(z * z);
    }
    return lp;
}

Eigen::VectorXd log_prior_gradient(const Eigen::VectorXd& theta, const PriorSpec& prior) {
    if (prior.scales.size() != theta.size()) throw ConfigError("prior has the wrong number of scales");
    Eigen::VectorXd g(theta.size());
    for (Eigen::Index l = 0; l < theta.size(); ++l) {
        const double a2 = prior.scales[l] * prior.scales[l];
        g[l] = -2.0 * theta[l] / (a2 + theta[l] * theta[l]);
    }
    return g;
}

PrevalenceRatio estimate_prevalence_ratio(std::span<const DyadRecord> records, double population_size,
                                          double mean_degree, bool weighted) {
    if (!(population_size >= 2.0)) throw ConfigError("prevalence ratio: population size must be at least 2");
    if (!(mean_degree > 0.0) || !(mean_degree < population_size - 1.0))
        throw ConfigError("prevalence ratio: mean degree must lie in (0, n - 1)");
    if (records.empty()) throw ConfigError("prevalence ratio: no records");
    double pos = 0.0, all = 0.0;
    for (const auto& r : records) {
        const double w = weighted ? r.weight() : 1.0;
        all += w;
        if (r.edge == 1) pos += w;
    }
    if (pos == 0.0 || pos == all)
        throw ConfigError("prevalence ratio: records contain only one dyad state");
    const double s = pos / all;
    const double pi = mean_degree / (population_size - 1.0);
    return {(1.0 - s) / (1.0 - pi), s / pi};
}

std::vector<double> winsorize_weights(std::span<const double> weights, double percentile) {
    if (weights.empty()) throw ConfigError("winsorize: no weights");
    if (!(percentile > 0.0 && percentile <= 1.0)) throw ConfigError("winsorize: percentile outside (0, 1]");
    for (double w : weights)
        if (!(w > 0.0) || !std::isfinite(w)) throw ConfigError("winsorize: weights must be positive");
    std::vector<double> sorted(weights.begin(), weights.end());
    std::sort(sorted.begin(), sorted.end());
    const double pos = percentile * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double cap = sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);

    std::vector<double> out(weights.begin(), weights.end());
    double sum = 0.0;
    for (auto& w : out) sum += (w = std::min(w, cap));
    const double factor = static_cast<double>(out.size()) / sum;
    for (auto& w : out) w *= factor;
    return out;
}

LogDensity make_log_posterior(std::span<const DyadRecord> records, const PrevalenceRatio& r,
                              const PriorSpec& prior, const LikelihoodOptions& options) {
    r.validate();
    prior.validate();
    return {
        [=](const Eigen::VectorXd& theta) {
            return observed_log_likelihood(records, theta, r, options) + log_prior(theta, prior);
        },
        [=](const Eigen::VectorXd& theta) -> Eigen::VectorXd {
            return observed_log_likelihood_gradient(records, theta, r, options) +
                   log_prior_gradient(theta, prior);
        },
    };
}

Eigen::MatrixXd negative_hessian(const LogDensity& density, const Eigen::VectorXd& at,
                                 double relative_step) {
    const Eigen::Index p = at.size();
    Eigen::MatrixXd h(p, p);
    for (Eigen::Index l = 0; l < p; ++l) {
        const double step = relative_step * std::max(1.0, std::abs(at[l]));
        Eigen::VectorXd up = at, down = at;
        up[l] += step;
        down[l] -= step;
        h.col(l) = -(density.gradient(up) - density.gradient(down)) / (up[l] - down[l]);
    }
    return 0.5 * (h + h.transpose());
}

namespace {

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

MaximizeResult maximize(const LogDensity& density, const Eigen::VectorXd& init,
                        const OptimizerOptions& options) {
    const Eigen::Index p = init.size();
    if (!init.allFinite()) throw ConfigError("optimizer: initial value is not finite");

    Eigen::VectorXd x = init;
    double f = density.value(x);
    Eigen::VectorXd g = density.gradient(x);
    if (!std::isfinite(f) || !g.allFinite()) throw NumericError("optimizer: objective not finite at the initial value");

    MaximizeResult result{x, f, g.lpNorm<Eigen::Infinity>(), 0};
    if (result.gradient_norm < options.gradient_tolerance) return result;

    // Start from the local curvature when it is usable.
    Eigen::MatrixXd inv_curv = Eigen::MatrixXd::Identity(p, p);
    {
        Eigen::LLT<Eigen::MatrixXd> llt(negative_hessian(density, x, options.hessian_step));
        if (llt.info() == Eigen::Success) inv_curv = llt.solve(Eigen::MatrixXd::Identity(p, p));
    }

    constexpr double armijo = 1e-4;
    for (int it = 1; it <= options.max_iterations; ++it) {
        Eigen::VectorXd dir = inv_curv * g;
        double slope = g.dot(dir);
        if (!(slope > 0.0)) {
            inv_curv.setIdentity();
            dir = g;
            slope = g.dot(g);
        }

        const double noise = 1e-12 * (1.0 + std::abs(f));
        double t = 1.0;
        bool accepted = false;
        Eigen::VectorXd x_new, g_new;
        double f_new = f;
        for (int k = 0; k < 60; ++k, t *= 0.5) {
            x_new = x + t * dir;
            f_new = density.value(x_new);
            if (!std::isfinite(f_new)) continue;
            if (f_new >= f + armijo * t * slope) {
                g_new = density.gradient(x_new);
                accepted = true;
                break;
            }
            if (f_new >= f - noise) {
                // Near the optimum the objective is flat to rounding; accept if
                // the gradient still shrinks.
                g_new = density.gradient(x_new);
                if (g_new.lpNorm<Eigen::Infinity>() < g.lpNorm<Eigen::Infinity>()) {
                    accepted = true;
                    break;
                }
            }
        }
        if (!accepted) {
            throw NonConvergenceError("optimizer: line search failed", to_std(x),
                                      g.lpNorm<Eigen::Infinity>());
        }

        const Eigen::VectorXd s = x_new - x;
        const Eigen::VectorXd y = g - g_new;  // gradient change of -f
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            const double rho = 1.0 / sy;
            const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(p, p);
            inv_curv = (id - rho * s * y.transpose()) * inv_curv * (id - rho * y * s.transpose()) +
                       rho * s * s.transpose();
        }
        x = x_new;
        f = f_new;
        g = g_new;
        result = {x, f, g.lpNorm<Eigen::Infinity>(), it};
        if (result.gradient_norm < options.gradient_tolerance) return result;
    }
    throw NonConvergenceError("optimizer: no convergence after " + std::to_string(options.max_iterations) +
                                  " iterations",
                              to_std(x), g.lpNorm<Eigen::Infinity>());
}

PosteriorChain metropolis_hastings(const LogDensity& density, const Eigen::VectorXd& init,
                                   const Eigen::MatrixXd& proposal_cov, std::size_t draws,
                                   std::size_t burn_in, std::uint64_t seed) {
    const Eigen::Index p = init.size();
    if (proposal_cov.rows() != p || proposal_cov.cols() != p)
        throw ConfigError("proposal covariance has the wrong shape");
    Eigen::LLT<Eigen::MatrixXd> llt(proposal_cov);
    if (llt.info() != Eigen::Success || !(llt.matrixL().toDenseMatrix().diagonal().array() > 0.0).all())
        throw NumericError("proposal covariance is not positive definite");
    const Eigen::MatrixXd chol = llt.matrixL();

    Rng rng(seed);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> uniform;

    Eigen::VectorXd x = init;
    double lp = density.value(x);
    if (!std::isfinite(lp)) throw NumericError("metropolis-hastings: log density not finite at the start");

    PosteriorChain chain;
    chain.seed = seed;
    chain.burn_in = burn_in;
    chain.draws.resize(static_cast<Eigen::Index>(draws), p);
    std::size_t accepted = 0;
    Eigen::VectorXd z(p);
    for (std::size_t it = 0; it < burn_in + draws; ++it) {
        for (Eigen::Index l = 0; l < p; ++l) z[l] = normal(rng);
        Eigen::VectorXd proposal = x + chol * z;
        const double lp_prop = density.value(proposal);
        // symmetric proposal: accept with probability min(1, exp(delta))
        const double u = uniform(rng);
        const bool accept = std::isfinite(lp_prop) && std::log(u) < lp_prop - lp;
        if (accept) {
            x = std::move(proposal);
            lp = lp_prop;
        }
        if (it >= burn_in) {
            chain.draws.row(static_cast<Eigen::Index>(it - burn_in)) = x.transpose();
            if (accept) ++accepted;
        }
    }
    chain.acceptance_rate = draws == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(draws);
    return chain;
}

Eigen::MatrixXd default_proposal_covariance(const Eigen::MatrixXd& hessian) {
    Eigen::LLT<Eigen::MatrixXd> llt(hessian);
    if (llt.info() != Eigen::Success) throw NumericError("Hessian is not positive definite");
    const auto p = static_cast<double>(hessian.rows());
    Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(hessian.rows(), hessian.cols()));
    return (2.38 * 2.38 / p) * 0.5 * (cov + cov.transpose());
}

Eigen::MatrixXd PosteriorResult::laplace_covariance() const {
    Eigen::LLT<Eigen::MatrixXd> llt(hessian);
    if (llt.info() != Eigen::Success) throw NumericError("Hessian is not positive definite");
    return llt.solve(Eigen::MatrixXd::Identity(hessian.rows(), hessian.cols()));
}

PosteriorResult fit_map(std::span<const DyadRecord> records, const PrevalenceRatio& r,
                        const PriorSpec& prior, const KernelParams& init,
                        const OptimizerOptions& options, const LikelihoodOptions& likelihood) {
    if (records.empty()) throw ConfigError("fit: no records");
    init.validate();
    validate_records(records, init.size());
    const LogDensity density = make_log_posterior(records, r, prior, likelihood);
    const MaximizeResult m = maximize(density, init.theta, options);
    PosteriorResult out;
    out.map = {m.argmax, init.names};
    out.hessian = negative_hessian(density, m.argmax, options.hessian_step);
    out.log_posterior = m.value;
    out.gradient_norm = m.gradient_norm;
    out.iterations = m.iterations;
    return out;
}

PosteriorChain sample_posterior(std::span<const DyadRecord> records, const PrevalenceRatio& r,
                                const PriorSpec& prior, const KernelParams& init,
                                const Eigen::MatrixXd& proposal_cov, std::size_t draws,
                                std::size_t burn_in, std::uint64_t seed,
                                const LikelihoodOptions& likelihood) {
    if (records.empty()) throw ConfigError("sample: no records");
    init.validate();
    validate_records(records, init.size());
    const LogDensity density = make_log_posterior(records, r, prior, likelihood);
    return metropolis_hastings(density, init.theta, proposal_cov, draws, burn_in, seed);
}

namespace {

std::unordered_map<std::string, std::size_t> index_ids(const AttributeTable& table) {
    std::unordered_map<std::string, std::size_t> idx;
    for (std::size_t i = 0; i < table.ids.size(); ++i)
        if (!idx.emplace(table.ids[i], i).second)
            throw ConfigError("attribute table: duplicate id '" + table.ids[i] + "'");
    return idx;
}

std::size_t lookup(const std::unordered_map<std::string, std::size_t>& idx, const std::string& id) {
    auto it = idx.find(id);
    if (it == idx.end()) throw ConfigError("unknown individual '" + id + "'");
    return it->second;
}

}  // namespace

std::vector<std::vector<double>> control_features(const AttributeTable& table, const FeatureConfig& config,
                                                  std::span<const IdPair> controls) {
    const auto idx = index_ids(table);
    std::vector<std::vector<double>> out;
    for (const auto& [a, b] : controls) {
        const auto i = lookup(idx, a), j = lookup(idx, b);
        if (!row_complete(table.rows[i]) || !row_complete(table.rows[j])) continue;
        out.push_back(evaluate_features(table.rows[i], table.rows[j], config));
    }
    return out;
}

RecordBuild build_records(const AttributeTable& table, const FeatureConfig& config,
                          const Standardization& standardization, std::span<const IdPair> nominations,
                          std::span<const IdPair> controls) {
    const auto idx = index_ids(table);
    RecordBuild out;
    auto add = [&](const IdPair& pair, int edge) {
        const auto i = lookup(idx, pair.first), j = lookup(idx, pair.second);
        if (!row_complete(table.rows[i]) || !row_complete(table.rows[j])) {
            ++out.dropped;
            return;
        }
        auto f = evaluate_features(table.rows[i], table.rows[j], config);
        standardization.apply_in_place(f);
        DyadRecord rec;
        rec.ego_id = pair.first;
        rec.alter_id = pair.second;
        rec.edge = edge;
        rec.w_ego = table.weight(i);
        rec.w_alter = table.weight(j);
        rec.features = Eigen::Map<const Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(f.size()));
        out.records.push_back(std::move(rec));
    };
    for (const auto& n : nominations) add(n, 1);
    for (const auto& c : controls) add(c, 0);
    return out;
}

}  // namespace blau
