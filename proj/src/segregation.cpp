#include "blau/segregation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "blau/errors.hpp"
#include "blau/parallel.hpp"

namespace blau {

namespace {

// f(y, y) - f(x, y), standardized.
void feature_gap(const LogisticKernel& k, std::span<const double> x, std::span<const double> y,
                 std::span<double> same, std::span<double> gap) {
    k.features(y, y, same);
    k.features(x, y, gap);
    for (std::size_t l = 0; l < gap.size(); ++l) gap[l] = same[l] - gap[l];
}

double dot(const KernelParams& p, std::span<const double> v) {
    double s = 0.0;
    for (std::size_t l = 0; l < v.size(); ++l) s += p.theta[static_cast<Eigen::Index>(l)] * v[l];
    return s;
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) return std::nan("");
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

FeatureInterval summarize(std::vector<double> v, double mass) {
    std::sort(v.begin(), v.end());
    return {quantile_sorted(v, 0.5), quantile_sorted(v, 0.5 * (1.0 - mass)),
            quantile_sorted(v, 0.5 * (1.0 + mass))};
}

}  // namespace

double social_separation(std::span<const double> x, std::span<const double> y,
                         const LogisticKernel& kernel) {
    std::vector<double> same(kernel.size()), gap(kernel.size());
    feature_gap(kernel, x, y, same, gap);
    return dot(kernel.params(), gap);
}

std::vector<double> separation_contributions(std::span<const double> x, std::span<const double> y,
                                             const LogisticKernel& kernel) {
    std::vector<double> same(kernel.size()), gap(kernel.size());
    feature_gap(kernel, x, y, same, gap);
    for (std::size_t l = 0; l < gap.size(); ++l) gap[l] *= kernel.params().theta[static_cast<Eigen::Index>(l)];
    return gap;
}

double social_isolation(std::span<const double> x, const AttributeTable& population,
                        const LogisticKernel& kernel, std::optional<std::size_t> self) {
    double num = 0.0, den = 0.0;
    std::vector<double> same(kernel.size()), gap(kernel.size());
    for (std::size_t j = 0; j < population.size(); ++j) {
        if (self && *self == j) continue;
        feature_gap(kernel, x, population.rows[j], same, gap);
        const double w = population.weight(j);
        num += w * dot(kernel.params(), gap);
        den += w;
    }
    if (!(den > 0.0)) throw ConfigError("social isolation: empty population");
    return num / den;
}

IsolationSummary isolation_of_members(const AttributeTable& population, const LogisticKernel& kernel,
                                      unsigned threads) {
    if (population.size() < 2) throw ConfigError("social isolation: need at least 2 individuals");
    IsolationSummary out;
    out.values.resize(population.size());
    parallel_blocks(population.size(), threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i)
            out.values[i] = social_isolation(population.rows[i], population, kernel, i);
    });
    double wsum = 0.0;
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        out.mean += population.weight(i) * out.values[i];
        wsum += population.weight(i);
    }
    out.mean /= wsum;
    auto it = std::max_element(out.values.begin(), out.values.end());
    out.max = *it;
    out.argmax = static_cast<std::size_t>(it - out.values.begin());
    return out;
}

double SeparationMatrix::asymmetry() const {
    return (values - values.transpose()).cwiseAbs().maxCoeff();
}

SeparationMatrix separation_matrix(const AttributeTable& population, const LogisticKernel& kernel,
                                   unsigned threads) {
    const std::size_t n = population.size();
    SeparationMatrix m;
    m.ids = population.ids;
    m.theta_used = kernel.params();
    m.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    parallel_blocks(n, threads, [&](std::size_t begin, std::size_t end) {
        std::vector<double> same(kernel.size()), gap(kernel.size());
        for (std::size_t i = begin; i < end; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (i == j) continue;
                feature_gap(kernel, population.rows[i], population.rows[j], same, gap);
                m.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                    dot(kernel.params(), gap);
            }
        }
    });
    return m;
}

double StrainReport::contribution_sum() const {
    return std::accumulate(contributions.begin(), contributions.end(), 0.0);
}

StrainReport social_strain(const AttributeTable& population, const LogisticKernel& kernel,
                           const StrainOptions& options) {
    const std::size_t n = population.size();
    const std::size_t p = kernel.size();
    if (n < 2) throw ConfigError("social strain: need at least 2 individuals");

    // Per-block sums of the feature gaps and of the separation, reduced in
    // block order so the result does not depend on the thread count.
    struct Partial {
        std::vector<double> gap;
        double separation = 0.0;
        std::size_t pairs = 0;
    };
    auto accumulate_pair = [&](Partial& acc, std::size_t i, std::size_t j, std::vector<double>& same,
                               std::vector<double>& gap) {
        feature_gap(kernel, population.rows[i], population.rows[j], same, gap);
        for (std::size_t l = 0; l < p; ++l) acc.gap[l] += gap[l];
        acc.separation += dot(kernel.params(), gap);
        ++acc.pairs;
    };

    StrainReport report;
    report.features = kernel.config().names();
    std::vector<Partial> partials;

    if (n <= options.exact_limit) {
        partials.assign(n, Partial{std::vector<double>(p, 0.0)});
        parallel_blocks(n, options.threads, [&](std::size_t begin, std::size_t end) {
            std::vector<double> same(p), gap(p);
            for (std::size_t i = begin; i < end; ++i)
                for (std::size_t j = i + 1; j < n; ++j) accumulate_pair(partials[i], i, j, same, gap);
        });
    } else {
        constexpr std::size_t chunk = 16384;
        const std::size_t total = options.subsample_pairs;
        if (total == 0) throw ConfigError("social strain: pair subsample size must be positive");
        const std::size_t chunks = (total + chunk - 1) / chunk;
        partials.assign(chunks, Partial{std::vector<double>(p, 0.0)});
        report.subsampled = true;
        parallel_blocks(chunks, options.threads, [&](std::size_t begin, std::size_t end) {
            std::vector<double> same(p), gap(p);
            for (std::size_t c = begin; c < end; ++c) {
                Rng rng(derive_seed(options.seed, c));
                std::uniform_int_distribution<std::size_t> pick(0, n - 1);
                const std::size_t count = std::min(chunk, total - c * chunk);
                for (std::size_t k = 0; k < count; ++k) {
                    std::size_t i = pick(rng), j = pick(rng);
                    while (j == i) j = pick(rng);
                    accumulate_pair(partials[c], std::min(i, j), std::max(i, j), same, gap);
                }
            }
        });
    }

    std::vector<double> mean_gap(p, 0.0);
    double separation = 0.0;
    std::size_t pairs = 0;
    for (const auto& part : partials) {
        for (std::size_t l = 0; l < p; ++l) mean_gap[l] += part.gap[l];
        separation += part.separation;
        pairs += part.pairs;
    }
    for (auto& g : mean_gap) g /= static_cast<double>(pairs);
    report.pairs = pairs;
    report.total = separation / static_cast<double>(pairs);
    report.contributions.resize(p);
    for (std::size_t l = 0; l < p; ++l)
        report.contributions[l] = kernel.params().theta[static_cast<Eigen::Index>(l)] * mean_gap[l];

    if (options.posterior) {
        const Eigen::MatrixXd& draws = *options.posterior;
        if (static_cast<std::size_t>(draws.cols()) != p)
            throw ConfigError("social strain: posterior draws have the wrong number of parameters");
        if (draws.rows() == 0) throw ConfigError("social strain: empty posterior sample");
        report.interval_mass = options.interval_mass;
        std::vector<double> totals(static_cast<std::size_t>(draws.rows()), 0.0);
        for (std::size_t l = 0; l < p; ++l) {
            std::vector<double> v(static_cast<std::size_t>(draws.rows()));
            for (Eigen::Index s = 0; s < draws.rows(); ++s) {
                v[static_cast<std::size_t>(s)] = draws(s, static_cast<Eigen::Index>(l)) * mean_gap[l];
                totals[static_cast<std::size_t>(s)] += v[static_cast<std::size_t>(s)];
            }
            report.uncertainty.push_back(summarize(std::move(v), options.interval_mass));
        }
        report.total_uncertainty = summarize(std::move(totals), options.interval_mass);
    }
    return report;
}

namespace {

struct Checker {
    const LogisticKernel& kernel;
    ViolationReport report;
    std::vector<double> same, gap;

    explicit Checker(const LogisticKernel& k) : kernel(k), same(k.size()), gap(k.size()) {
        report.homophilous = is_homophilous(k.params());
    }

    double separation(std::span<const double> x, std::span<const double> y) {
        feature_gap(kernel, x, y, same, gap);
        return dot(kernel.params(), gap);
    }

    static double tolerance(double a, double b) { return 1e-12 * (1.0 + std::abs(a) + std::abs(b)); }

    void note(const std::string& kind, double amount, const std::string& feature = {}) {
        if (report.examples.size() < 16) report.examples.push_back({kind, feature, amount});
    }

    bool distinguishable(std::span<const double> x, std::span<const double> y) {
        std::vector<double> fxy(kernel.size()), fyy(kernel.size());
        kernel.config().evaluate(x, y, fxy);
        kernel.config().evaluate(y, y, fyy);
        for (std::size_t l = 0; l < fxy.size(); ++l)
            if (!kernel.config().is_bias(l) && fxy[l] != fyy[l]) return true;
        return false;
    }

    void semimetric(std::span<const double> x, std::span<const double> y) {
        const double xy = separation(x, y);
        const double yx = separation(y, x);
        const double xx = separation(x, x);
        if (xy < -tolerance(xy, 0.0)) {
            ++report.non_negativity;
            note("non_negativity", xy);
        }
        if (std::abs(xy - yx) > tolerance(xy, yx)) {
            ++report.symmetry;
            note("symmetry", xy - yx);
        }
        if (std::abs(xx) > tolerance(xx, 0.0)) {
            ++report.identity;
            note("identity", xx);
        }
        if (std::abs(xy) <= tolerance(xy, 0.0) && distinguishable(x, y)) {
            ++report.indiscernibles;
            note("indiscernibles", xy);
        }
    }

    void triangle(std::span<const double> x, std::span<const double> y, std::span<const double> z) {
        const double xz = separation(x, z);
        const double xy = separation(x, y);
        const double yz = separation(y, z);
        const double excess = xz - (xy + yz);
        if (excess > tolerance(xz, xy + yz)) {
            ++report.triangle;
            // name the first feature whose own inequality fails
            auto cxz = separation_contributions(x, z, kernel);
            auto cxy = separation_contributions(x, y, kernel);
            auto cyz = separation_contributions(y, z, kernel);
            std::string feature;
            for (std::size_t l = 0; l < cxz.size(); ++l)
                if (cxz[l] - (cxy[l] + cyz[l]) > tolerance(cxz[l], cxy[l] + cyz[l])) {
                    feature = kernel.config().entry(l).name;
                    break;
                }
            note("triangle", excess, feature);
        }
    }

    void affine_offset(std::span<const double> x) {
        std::vector<double> f(kernel.size());
        kernel.config().evaluate(x, x, f);
        for (std::size_t l = 0; l < f.size(); ++l) {
            const auto& e = kernel.config().entry(l);
            if (!e.affine) continue;
            if (std::abs(f[l] - e.affine->b) > tolerance(f[l], e.affine->b)) {
                ++report.affine_offset;
                note("affine_offset", f[l] - e.affine->b, e.name);
            }
        }
    }
};

}  // namespace

ViolationReport check_semimetric(const LogisticKernel& kernel, const AttributeSampler& sampler,
                                 std::size_t trials, std::uint64_t seed) {
    Checker c(kernel);
    Rng rng(seed);
    for (std::size_t t = 0; t < trials; ++t) {
        AttributeRow x = sampler(rng);
        AttributeRow y = sampler(rng);
        c.semimetric(x, y);
    }
    c.report.trials = trials;
    return c.report;
}

ViolationReport check_metric(const LogisticKernel& kernel, const AttributeSampler& sampler,
                             std::size_t trials, std::uint64_t seed) {
    for (std::size_t l = 0; l < kernel.size(); ++l) {
        const auto& e = kernel.config().entry(l);
        if (e.kind != FeatureKind::bias && !e.affine)
            throw ConfigError("metric check: feature '" + e.name + "' declares no affine metric metadata");
    }
    Checker c(kernel);
    Rng rng(seed);
    for (std::size_t t = 0; t < trials; ++t) {
        AttributeRow x = sampler(rng);
        AttributeRow y = sampler(rng);
        AttributeRow z = sampler(rng);
        c.semimetric(x, y);
        c.triangle(x, y, z);
        c.affine_offset(x);
    }
    c.report.trials = trials;
    return c.report;
}

double sbm_separation(std::size_t x, std::size_t y, const SbmSpec& spec) {
    if (x >= spec.blocks() || y >= spec.blocks()) throw std::out_of_range("SBM block index out of range");
    return x == y ? 0.0 : spec.log_odds_gap();
}

double sbm_isolation(std::size_t x, const SbmSpec& spec) {
    if (x >= spec.blocks()) throw std::out_of_range("SBM block index out of range");
    return (1.0 - spec.block_probs[x]) * spec.log_odds_gap();
}

double dispersion_index(std::span<const double> block_probs) {
    double s = 0.0;
    for (double p : block_probs) s += p * p;
    return 1.0 - s;
}

double sbm_strain(const SbmSpec& spec) { return dispersion_index(spec.block_probs) * spec.log_odds_gap(); }

}  // namespace blau
