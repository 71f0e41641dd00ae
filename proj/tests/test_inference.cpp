#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "blau/errors.hpp"
#include "blau/inference.hpp"
#include "blau/random.hpp"

using namespace blau;

namespace {

DyadRecord record(int edge, std::initializer_list<double> f, double w_ego = 1.0, double w_alter = 1.0) {
    DyadRecord r;
    r.ego_id = "e";
    r.alter_id = "a";
    r.edge = edge;
    r.w_ego = w_ego;
    r.w_alter = w_alter;
    r.features = Eigen::VectorXd::Map(std::data(f), static_cast<Eigen::Index>(f.size()));
    return r;
}

Eigen::VectorXd vec(std::initializer_list<double> v) {
    return Eigen::VectorXd::Map(std::data(v), static_cast<Eigen::Index>(v.size()));
}

// Plain probability arithmetic. rho and 1 - rho come from separate
// expressions, and log P goes through log1p when P is close to 1, so the
// reference keeps full relative precision.
double direct_log_likelihood(const std::vector<DyadRecord>& recs, const Eigen::VectorXd& theta,
                             const PrevalenceRatio& r) {
    double total = 0.0;
    for (const auto& rec : recs) {
        const double eta = theta.dot(rec.features);
        const double rho = 1.0 / (1.0 + std::exp(-eta));
        const double rho_c = 1.0 / (1.0 + std::exp(eta));
        const double num = rec.edge == 1 ? rho * r.r1 : rho_c * r.r0;
        const double other = rec.edge == 1 ? rho_c * r.r0 : rho * r.r1;
        const double prob = num / (num + other);
        total += prob < 0.5 ? std::log(prob) : std::log1p(-other / (num + other));
    }
    return total;
}

std::vector<DyadRecord> random_records(Rng& rng, std::size_t n, std::size_t p, bool weights) {
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> u(0.2, 3.0);
    std::bernoulli_distribution coin(0.4);
    std::vector<DyadRecord> out;
    for (std::size_t i = 0; i < n; ++i) {
        DyadRecord r;
        r.edge = coin(rng) ? 1 : 0;
        r.features.resize(static_cast<Eigen::Index>(p));
        r.features[0] = 1.0;
        for (std::size_t l = 1; l < p; ++l) r.features[static_cast<Eigen::Index>(l)] = g(rng);
        if (weights) {
            r.w_ego = u(rng);
            r.w_alter = u(rng);
        }
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace

TEST_CASE("observed likelihood values") {
    SUBCASE("single dyad with r = (1, 2)") {
        std::vector<DyadRecord> recs{record(1, {0.0})};
        const double ll = observed_log_likelihood(recs, vec({0.3}), {1.0, 2.0});
        CHECK(ll == doctest::Approx(-0.4054651081081644).epsilon(1e-14));
        LikelihoodOptions no_const;
        no_const.include_constant = false;
        CHECK(observed_log_likelihood(recs, vec({0.3}), {1.0, 2.0}, no_const) ==
              doctest::Approx(-0.4054651081081644 - std::log(2.0)).epsilon(1e-14));
    }
    SUBCASE("r = (1, 1) is the plain logistic likelihood") {
        Rng rng(1);
        auto recs = random_records(rng, 50, 3, false);
        auto theta = vec({-0.5, 0.8, -1.1});
        double plain = 0.0;
        for (const auto& r : recs) {
            const double eta = theta.dot(r.features);
            plain += r.edge ? std::log(sigmoid(eta)) : std::log(sigmoid(-eta));
        }
        CHECK(observed_log_likelihood(recs, theta, {1.0, 1.0}) == doctest::Approx(plain).epsilon(1e-13));
    }
    SUBCASE("deep negative predictor") {
        std::vector<DyadRecord> recs{record(0, {1.0})};
        const double ll = observed_log_likelihood(recs, vec({-50.0}), {1.0, 1.0});
        CHECK(std::abs(ll - (-1.928749847963917783e-22)) <= 1e-12);
        CHECK(ll == doctest::Approx(-1.928749847963917783e-22).epsilon(1e-12));
    }
    SUBCASE("finite at extreme predictors") {
        for (double eta : {-700.0, 700.0, -1000.0, 1000.0})
            for (int a : {0, 1}) {
                std::vector<DyadRecord> recs{record(a, {1.0})};
                CHECK(std::isfinite(observed_log_likelihood(recs, vec({eta}), {0.75, 277.6})));
                CHECK(observed_log_likelihood_gradient(recs, vec({eta}), {0.75, 277.6}).allFinite());
            }
    }
    SUBCASE("stable agrees with direct evaluation") {
        Rng rng(2);
        std::uniform_real_distribution<double> eta(-20.0, 20.0), lr(-6.0, 6.0);
        for (int t = 0; t < 2000; ++t) {
            PrevalenceRatio r{std::exp(lr(rng)), std::exp(lr(rng))};
            std::vector<DyadRecord> recs{record(t % 2, {1.0})};
            auto theta = vec({eta(rng)});
            const double stable = observed_log_likelihood(recs, theta, r);
            const double direct = direct_log_likelihood(recs, theta, r);
            CHECK(std::abs(stable - direct) <= 1e-9 * std::max(std::abs(direct), 1e-300));
        }
    }
    SUBCASE("weights") {
        std::vector<DyadRecord> recs{record(1, {1.0, 0.5}, 2.0, 5.0), record(0, {1.0, -0.5}, 2.0, 3.0)};
        auto theta = vec({-1.0, 0.4});
        PrevalenceRatio r{0.8, 3.0};
        LikelihoodOptions w;
        w.weighted = true;
        const double a = observed_log_likelihood(std::span(recs).first(1), theta, r);
        const double b = observed_log_likelihood(std::span(recs).last(1), theta, r);
        CHECK(observed_log_likelihood(recs, theta, r, w) == doctest::Approx(2.0 * a + 6.0 * b).epsilon(1e-14));
        CHECK(recs[0].weight() == 2.0);
        CHECK(recs[1].weight() == 6.0);
    }
    SUBCASE("common factor in r shifts the likelihood by a constant") {
        Rng rng(3);
        auto recs = random_records(rng, 40, 2, false);
        PrevalenceRatio r{0.7, 12.0}, scaled{0.7 * 5.0, 12.0 * 5.0};
        LikelihoodOptions no_const;
        no_const.include_constant = false;
        for (double t : {-2.0, -0.5, 1.0}) {
            auto theta = vec({t, 0.3});
            CHECK(observed_log_likelihood(recs, theta, r, no_const) -
                      observed_log_likelihood(recs, theta, scaled, no_const) ==
                  doctest::Approx(40.0 * std::log(5.0)).epsilon(1e-12));
            CHECK(observed_log_likelihood(recs, theta, r) ==
                  doctest::Approx(observed_log_likelihood(recs, theta, scaled)).epsilon(1e-12));
        }
    }
    SUBCASE("invalid input") {
        std::vector<DyadRecord> recs{record(1, {1.0, 0.0})};
        CHECK_THROWS_AS(observed_log_likelihood(recs, vec({1.0}), {1, 1}), ConfigError);
        CHECK_THROWS_AS(observed_log_likelihood(recs, vec({1.0, 0.0}), {0, 1}), ConfigError);
        recs[0].features[1] = NAN;
        CHECK_THROWS_AS(observed_log_likelihood(recs, vec({1.0, 0.0}), {1, 1}), ConfigError);
        recs[0].features[1] = 0.0;
        recs[0].edge = 2;
        CHECK_THROWS_AS(observed_log_likelihood(recs, vec({1.0, 0.0}), {1, 1}), ConfigError);
        recs[0].edge = 1;
        recs[0].w_alter = 0.0;
        CHECK_THROWS_AS(observed_log_likelihood(recs, vec({1.0, 0.0}), {1, 1}), ConfigError);
    }
}

TEST_CASE("likelihood gradient") {
    SUBCASE("logistic score for a single dyad") {
        std::vector<DyadRecord> recs{record(1, {1.0, 0.7, -2.0})};
        auto theta = vec({-0.3, 0.2, 0.5});
        const double rho = sigmoid(theta.dot(recs[0].features));
        auto g = observed_log_likelihood_gradient(recs, theta, {1, 1});
        for (int l = 0; l < 3; ++l) CHECK(g[l] == doctest::Approx((1.0 - rho) * recs[0].features[l]));
    }
    SUBCASE("mirrored dataset has zero bias gradient at zero") {
        Rng rng(4);
        auto recs = random_records(rng, 30, 3, false);
        auto mirrored = recs;
        for (auto r : recs) {
            r.edge = 1 - r.edge;
            r.features.tail(2) *= -1.0;
            mirrored.push_back(r);
        }
        auto g = observed_log_likelihood_gradient(mirrored, Eigen::VectorXd::Zero(3), {1, 1});
        CHECK(std::abs(g[0]) < 1e-12);
    }
    SUBCASE("matches central differences") {
        Rng rng(5);
        std::normal_distribution<double> nd;
        std::uniform_real_distribution<double> lr(-4.0, 4.0);
        for (int t = 0; t < 50; ++t) {
            const bool weighted = t % 2 == 1;
            auto recs = random_records(rng, 25, 4, weighted);
            auto theta = vec({nd(rng), nd(rng), nd(rng), nd(rng)});
            PrevalenceRatio r{std::exp(lr(rng)), std::exp(lr(rng))};
            LikelihoodOptions opt;
            opt.weighted = weighted;
            auto g = observed_log_likelihood_gradient(recs, theta, r, opt);
            for (int l = 0; l < 4; ++l) {
                const double h = 1e-5;
                auto up = theta, down = theta;
                up[l] += h;
                down[l] -= h;
                const double fd = (observed_log_likelihood(recs, up, r, opt) -
                                   observed_log_likelihood(recs, down, r, opt)) /
                                  (2 * h);
                CHECK(std::abs(fd - g[l]) <= 1e-5 * std::max(1.0, std::abs(g[l])));
            }
        }
    }
}

TEST_CASE("prior") {
    auto prior = PriorSpec::defaults(3);
    CHECK(prior.scales[0] == 10.0);
    CHECK(prior.scales[1] == 2.5);
    CHECK(log_prior(Eigen::VectorXd::Zero(3), prior) == 0.0);
    CHECK(log_prior(vec({10.0, 2.5, -2.5}), prior) == doctest::Approx(-3.0 * std::log(2.0)));
    CHECK(log_prior_gradient(Eigen::VectorXd::Zero(3), prior).isZero(0.0));
    auto theta = vec({3.0, -1.0, 0.4});
    auto g = log_prior_gradient(theta, prior);
    for (int l = 0; l < 3; ++l) {
        auto up = theta, down = theta;
        up[l] += 1e-6;
        down[l] -= 1e-6;
        CHECK(g[l] == doctest::Approx((log_prior(up, prior) - log_prior(down, prior)) / 2e-6).epsilon(1e-7));
    }
    PriorSpec bad{vec({1.0, 0.0})};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    CHECK_THROWS_AS(log_prior(vec({1.0}), prior), ConfigError);
}

TEST_CASE("prevalence ratio") {
    SUBCASE("one positive per three negatives") {
        std::vector<DyadRecord> recs;
        for (int i = 0; i < 40; ++i) recs.push_back(record(1, {1.0}));
        for (int i = 0; i < 120; ++i) recs.push_back(record(0, {1.0}));
        auto r = estimate_prevalence_ratio(recs, 2000, 1.8);
        CHECK(1.8 / 1999.0 == doctest::Approx(9.004502251125563e-4).epsilon(1e-15));
        CHECK(r.r1 == doctest::Approx(277.6388888888889).epsilon(1e-14));
        CHECK(r.r0 == doctest::Approx(0.7506759463248548).epsilon(1e-14));
    }
    SUBCASE("representative sample") {
        std::vector<DyadRecord> recs{record(1, {1.0}), record(0, {1.0}), record(0, {1.0}), record(0, {1.0})};
        auto r = estimate_prevalence_ratio(recs, 5, 1.0);
        CHECK(r.r0 == doctest::Approx(1.0));
        CHECK(r.r1 == doctest::Approx(1.0));
    }
    SUBCASE("weighted fraction") {
        std::vector<DyadRecord> recs{record(1, {1.0}, 3.0), record(0, {1.0}, 1.0, 1.0)};
        auto r = estimate_prevalence_ratio(recs, 11, 5.0, true);
        CHECK(r.r1 == doctest::Approx(0.75 / 0.5));
    }
    SUBCASE("errors") {
        std::vector<DyadRecord> ones{record(1, {1.0}), record(1, {1.0})};
        CHECK_THROWS_AS(estimate_prevalence_ratio(ones, 100, 2.0), ConfigError);
        std::vector<DyadRecord> mixed{record(1, {1.0}), record(0, {1.0})};
        CHECK_THROWS_AS(estimate_prevalence_ratio(mixed, 100, 0.0), ConfigError);
        CHECK_THROWS_AS(estimate_prevalence_ratio(mixed, 100, 99.0), ConfigError);
        CHECK_THROWS_AS(estimate_prevalence_ratio(mixed, 1, 0.5), ConfigError);
    }
}

TEST_CASE("winsorized weights") {
    std::vector<double> equal(7, 3.0);
    for (double w : winsorize_weights(equal)) CHECK(w == doctest::Approx(1.0));

    std::vector<double> outlier(100, 1.0);
    outlier.push_back(1000.0);
    auto w = winsorize_weights(outlier);
    CHECK(w.size() == 101);
    for (double v : w) CHECK(v == doctest::Approx(1.0));

    std::vector<double> spread;
    for (int i = 1; i <= 40; ++i) spread.push_back(i);
    auto once = winsorize_weights(spread);
    double sum = 0.0;
    for (double v : once) sum += v;
    CHECK(sum == doctest::Approx(40.0));
    // 95th percentile of 1..40 by linear interpolation is 38.05.
    CHECK(once.back() / once.front() == doctest::Approx(38.05));
    CHECK(once[38] == once[39]);

    // Already normalized with the top 10% tied at the maximum: unchanged.
    std::vector<double> tied;
    for (int i = 1; i <= 36; ++i) tied.push_back(i);
    for (int i = 0; i < 4; ++i) tied.push_back(40.0);
    double total = 0.0;
    for (double v : tied) total += v;
    for (auto& v : tied) v *= 40.0 / total;
    auto again = winsorize_weights(tied);
    for (std::size_t i = 0; i < tied.size(); ++i) CHECK(again[i] == doctest::Approx(tied[i]).epsilon(1e-14));

    CHECK_THROWS_AS(winsorize_weights(std::vector<double>{1.0, 0.0}), ConfigError);
    CHECK_THROWS_AS(winsorize_weights(std::vector<double>{}), ConfigError);
}

TEST_CASE("optimizer and Hessian") {
    // Gaussian stub: log p = -1/2 (x - m)^T A (x - m).
    Eigen::MatrixXd a(3, 3);
    a << 4, 1, 0, 1, 3, 0.5, 0, 0.5, 2;
    Eigen::VectorXd m = vec({1.5, -2.0, 0.25});
    LogDensity gauss{[&](const Eigen::VectorXd& x) { return -0.5 * (x - m).dot(a * (x - m)); },
                     [&](const Eigen::VectorXd& x) -> Eigen::VectorXd { return -a * (x - m); }};
    auto res = maximize(gauss, Eigen::VectorXd::Zero(3));
    CHECK((res.argmax - m).lpNorm<Eigen::Infinity>() < 1e-8);
    CHECK(res.gradient_norm < 1e-6);
    auto h = negative_hessian(gauss, res.argmax);
    CHECK((h - a).lpNorm<Eigen::Infinity>() < 1e-8);
    CHECK((h - h.transpose()).lpNorm<Eigen::Infinity>() == 0.0);

    auto again = maximize(gauss, m);
    CHECK(again.iterations <= 1);

    OptimizerOptions tight;
    tight.max_iterations = 1;
    tight.gradient_tolerance = 0.0;
    LogDensity rosen{[](const Eigen::VectorXd& x) {
                         return -(100 * std::pow(x[1] - x[0] * x[0], 2) + std::pow(1 - x[0], 2));
                     },
                     [](const Eigen::VectorXd& x) -> Eigen::VectorXd {
                         Eigen::VectorXd g(2);
                         g[0] = -(-400 * x[0] * (x[1] - x[0] * x[0]) - 2 * (1 - x[0]));
                         g[1] = -(200 * (x[1] - x[0] * x[0]));
                         return g;
                     }};
    try {
        maximize(rosen, vec({-1.2, 1.0}), tight);
        FAIL("expected non-convergence");
    } catch (const NonConvergenceError& e) {
        CHECK(e.last_iterate().size() == 2);
        CHECK(e.gradient_norm() > 0.0);
    }
    CHECK((maximize(rosen, vec({-1.2, 1.0})).argmax - vec({1.0, 1.0})).norm() < 1e-5);
}

TEST_CASE("fit_map on case-control data") {
    Rng rng(6);
    std::normal_distribution<double> g;
    auto truth = vec({-1.0, -0.8, 0.5});
    std::vector<DyadRecord> recs;
    for (int i = 0; i < 3000; ++i) {
        DyadRecord r;
        r.features = vec({1.0, g(rng), g(rng)});
        r.edge = std::bernoulli_distribution(sigmoid(truth.dot(r.features)))(rng) ? 1 : 0;
        recs.push_back(r);
    }
    KernelParams init{Eigen::VectorXd::Zero(3), {"bias", "a", "b"}};
    auto prior = PriorSpec::defaults(3);
    auto fit = fit_map(recs, {1, 1}, prior, init);
    CHECK(fit.gradient_norm < 1e-6);
    CHECK(fit.map.names == init.names);
    CHECK((fit.hessian - fit.hessian.transpose()).lpNorm<Eigen::Infinity>() <= 1e-8);
    auto post = make_log_posterior(recs, {1, 1}, prior);
    CHECK(fit.log_posterior >= post.value(init.theta));
    auto cov = fit.laplace_covariance();
    for (int l = 0; l < 3; ++l) CHECK(std::abs(fit.map.theta[l] - truth[l]) < 4.0 * std::sqrt(cov(l, l)));

    // Common factors in r only move the constant: same argmax.
    auto f1 = fit_map(recs, {0.5, 2.0}, prior, init);
    auto f2 = fit_map(recs, {1.5, 6.0}, prior, init);
    CHECK((f1.map.theta - f2.map.theta).lpNorm<Eigen::Infinity>() < 1e-6);
    // A prevalence ratio shifts only the intercept when features are unrelated to sampling.
    CHECK(f1.map.theta[0] == doctest::Approx(fit.map.theta[0] - std::log(4.0)).epsilon(1e-3));

    std::vector<DyadRecord> none;
    CHECK_THROWS_AS(fit_map(none, {1, 1}, prior, init), ConfigError);
}

TEST_CASE("Metropolis-Hastings") {
    LogDensity normal2{[](const Eigen::VectorXd& x) { return -0.5 * x.squaredNorm(); },
                       [](const Eigen::VectorXd& x) -> Eigen::VectorXd { return -x; }};
    Eigen::MatrixXd cov = default_proposal_covariance(Eigen::MatrixXd::Identity(2, 2));
    CHECK(cov(0, 0) == doctest::Approx(2.38 * 2.38 / 2));
    auto chain = metropolis_hastings(normal2, Eigen::VectorXd::Zero(2), cov, 50000, 1000, 42);
    CHECK(chain.draws.rows() == 50000);
    CHECK(chain.acceptance_rate > 0.0);
    CHECK(chain.acceptance_rate < 1.0);
    for (int l = 0; l < 2; ++l) {
        auto col = chain.draws.col(l);
        const double mean = col.mean();
        const double var = (col.array() - mean).square().mean();
        // Autocorrelation inflates the se of the mean; a random-walk chain at
        // this scale has an integrated autocorrelation time of roughly 8.
        const double se = std::sqrt(8.0 / 50000.0);
        CHECK(std::abs(mean) < 3.0 * se);
        CHECK(std::abs(var - 1.0) < 0.1);
    }
    auto again = metropolis_hastings(normal2, Eigen::VectorXd::Zero(2), cov, 50000, 1000, 42);
    CHECK((again.draws.array() == chain.draws.array()).all());
    CHECK(again.acceptance_rate == chain.acceptance_rate);

    Eigen::MatrixXd bad(2, 2);
    bad << 1, 2, 2, 1;
    CHECK_THROWS_AS(metropolis_hastings(normal2, Eigen::VectorXd::Zero(2), bad, 10, 0, 1), NumericError);
    CHECK_THROWS_AS(default_proposal_covariance(bad), NumericError);
    CHECK_THROWS_AS(metropolis_hastings(normal2, Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(3, 3), 10, 0, 1),
                    ConfigError);

    // Point mass outside a box: every proposal leaving it is rejected.
    LogDensity box{[](const Eigen::VectorXd& x) { return x.cwiseAbs().maxCoeff() < 1.0 ? 0.0 : -INFINITY; },
                   [](const Eigen::VectorXd& x) -> Eigen::VectorXd { return Eigen::VectorXd::Zero(x.size()); }};
    auto boxed = metropolis_hastings(box, Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2), 5000, 0, 3);
    CHECK(boxed.draws.cwiseAbs().maxCoeff() < 1.0);
    CHECK(boxed.acceptance_rate == doctest::Approx(0.35).epsilon(0.3));
}

TEST_CASE("records from an attribute table") {
    AttributeSchema s({{"age", ColumnKind::continuous, "", {}}, {"g", ColumnKind::categorical, "", {}}});
    FeatureConfig cfg(s, {{"bias", FeatureKind::bias, "", {}, {}, {}},
                          {"age", FeatureKind::abs_diff, "age", {}, {}, {}},
                          {"g", FeatureKind::mismatch, "g", {}, {}, {}}});
    AttributeTable t;
    t.schema = s;
    t.ids = {"a", "b", "c", "d"};
    t.rows = {{20, 0}, {30, 1}, {50, 0}, {NAN, 1}};
    t.weights = std::vector<double>{1.0, 2.0, 0.5, 1.0};

    std::vector<IdPair> noms{{"a", "b"}, {"c", "d"}};
    std::vector<IdPair> controls{{"a", "c"}, {"b", "c"}, {"b", "d"}};
    auto ref = control_features(t, cfg, controls);
    REQUIRE(ref.size() == 2);
    CHECK(ref[0] == std::vector<double>{1, 30, 0});
    auto st = fit_standardization(ref, cfg);
    auto built = build_records(t, cfg, st, noms, controls);
    CHECK(built.dropped == 2);
    REQUIRE(built.records.size() == 3);
    CHECK(built.records[0].edge == 1);
    CHECK(built.records[0].ego_id == "a");
    CHECK(built.records[0].w_alter == 2.0);
    CHECK(built.records[1].edge == 0);
    CHECK(built.records[1].features[0] == 1.0);
    CHECK(built.records[1].features[1] == doctest::Approx((30.0 - 25.0) / 10.0));

    std::vector<IdPair> unknown{{"a", "zz"}};
    CHECK_THROWS_AS(build_records(t, cfg, st, unknown, controls), ConfigError);
}
