#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "blau/errors.hpp"
#include "blau/random.hpp"
#include "blau/synthgen.hpp"

using namespace blau;

namespace {

Eigen::VectorXd theta3(double a, double b, double c) { return (Eigen::VectorXd(3) << a, b, c).finished(); }

std::set<std::pair<std::string, std::string>> edge_names(const Graph& g) {
    std::set<std::pair<std::string, std::string>> s;
    for (const auto& [a, b] : g.edges) {
        s.emplace(std::to_string(a), std::to_string(b));
        s.emplace(std::to_string(b), std::to_string(a));
    }
    return s;
}

}  // namespace

TEST_CASE("unit square design") {
    auto pos = unit_square_positions(500, 1);
    CHECK(pos.size() == 500);
    CHECK(pos.ids[17] == "17");
    for (const auto& r : pos.rows) {
        CHECK(r[0] >= 0.0);
        CHECK(r[0] < 1.0);
    }
    CHECK(unit_square_positions(500, 1).rows == pos.rows);

    // |u - v| for independent uniforms: mean 1/3, sd 1/(3 sqrt 2).
    auto cfg = unit_square_features();
    auto st = unit_square_standardization();
    CHECK(cfg.names() == std::vector<std::string>{"bias", "dx1", "dx2"});
    CHECK(st.features[1].mean == doctest::Approx(1.0 / 3.0));
    CHECK(st.features[1].scale == doctest::Approx(2.0 / (3.0 * std::sqrt(2.0))));
    Rng rng(2);
    std::uniform_real_distribution<double> u;
    double m = 0, ss = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        double d = std::abs(u(rng) - u(rng));
        m += d;
        ss += d * d;
    }
    m /= n;
    CHECK(m == doctest::Approx(1.0 / 3.0).epsilon(0.01));
    CHECK(std::sqrt(ss / n - m * m) == doctest::Approx(1.0 / (3.0 * std::sqrt(2.0))).epsilon(0.01));
    CHECK(unit_square_kernel(theta3(-7, 0, 0)).probability(pos.rows[0], pos.rows[1]) ==
          doctest::Approx(9.110511944006454e-4).epsilon(1e-14));
}

TEST_CASE("network generation") {
    auto pos = unit_square_positions(300, 3);
    SUBCASE("extremes") {
        CHECK(generate_network(pos, unit_square_kernel(theta3(-700, 0, 0)), 1).edges.empty());
        auto full = generate_network(pos, unit_square_kernel(theta3(700, 0, 0)), 1);
        CHECK(full.edges.size() == 300 * 299 / 2);
        CHECK(full.mean_degree() == 299.0);
    }
    SUBCASE("no self loops, ordered pairs, thread independence") {
        auto k = unit_square_kernel(theta3(-3, -1, -0.5));
        auto a = generate_network(pos, k, 7, 1);
        auto b = generate_network(pos, k, 7, 4);
        CHECK(a.edges == b.edges);
        for (const auto& [i, j] : a.edges) CHECK(i < j);
        CHECK(generate_network(pos, k, 8, 1).edges != a.edges);
        auto d = a.degrees();
        std::size_t sum = 0;
        for (auto v : d) sum += v;
        CHECK(sum == 2 * a.edges.size());
    }
    SUBCASE("edge frequency matches the kernel per probability bucket") {
        auto k = unit_square_kernel(theta3(-1.5, -1.0, -0.7));
        auto small = unit_square_positions(80, 4);
        const int reps = 200;
        std::vector<double> expected(5, 0.0), observed(5, 0.0), var(5, 0.0);
        std::vector<std::vector<int>> bucket(80, std::vector<int>(80));
        for (int i = 0; i < 80; ++i)
            for (int j = i + 1; j < 80; ++j) {
                const double p = k.probability(small.rows[i], small.rows[j]);
                bucket[i][j] = std::min(4, static_cast<int>(p / 0.1));
                expected[bucket[i][j]] += reps * p;
                var[bucket[i][j]] += reps * p * (1 - p);
            }
        for (int r = 0; r < reps; ++r)
            for (const auto& [i, j] : generate_network(small, k, derive_seed(99, r)).edges) observed[bucket[i][j]] += 1;
        for (int b = 0; b < 5; ++b) {
            if (expected[b] == 0.0) continue;
            CHECK(std::abs(observed[b] - expected[b]) <= 3.0 * std::sqrt(var[b]));
        }
    }
}

TEST_CASE("ego datasets") {
    auto pos = unit_square_positions(400, 5);
    auto k = unit_square_kernel(theta3(-3.5, -0.5, -0.5));
    auto g = generate_network(pos, k, 6);
    auto edges = edge_names(g);

    auto s = sample_ego_dataset(g, pos, k, 40, 3.0, 7);
    CHECK(s.egos.size() == 40);
    CHECK(std::set<std::size_t>(s.egos.begin(), s.egos.end()).size() == 40);
    CHECK(s.positives + s.negatives == s.records.size());
    std::set<std::size_t> egos(s.egos.begin(), s.egos.end());

    std::size_t incident = 0;
    for (const auto& [a, b] : g.edges)
        if (egos.contains(a) || egos.contains(b)) ++incident;
    CHECK(s.positives == incident);

    std::set<std::pair<std::string, std::string>> negatives;
    for (const auto& r : s.records) {
        const auto key = std::make_pair(r.ego_id, r.alter_id);
        CHECK(egos.contains(std::stoul(r.ego_id)));
        if (r.edge == 1) {
            CHECK(edges.contains(key));
        } else {
            CHECK_FALSE(edges.contains(key));
            CHECK(egos.contains(std::stoul(r.alter_id)));
            CHECK(negatives.insert(std::minmax(r.ego_id, r.alter_id)).second);
        }
        CHECK(r.features[0] == 1.0);
    }
    std::size_t ego_edges = 0;
    for (const auto& [a, b] : g.edges)
        if (egos.contains(a) && egos.contains(b)) ++ego_edges;
    const std::size_t available = 40 * 39 / 2 - ego_edges;
    CHECK(s.negatives == std::min(available, 3 * s.positives));

    auto again = sample_ego_dataset(g, pos, k, 40, 3.0, 7);
    CHECK(again.egos == s.egos);
    REQUIRE(again.records.size() == s.records.size());
    for (std::size_t i = 0; i < s.records.size(); ++i) CHECK(again.records[i].alter_id == s.records[i].alter_id);
}

TEST_CASE("ego dataset ratios") {
    // A star around node 0 with 40 leaves, plus many isolated nodes: with
    // every node an ego, 40 positives and far more non-adjacent pairs.
    const std::size_t n = 60;
    auto pos = unit_square_positions(n, 1);
    auto k = unit_square_kernel(theta3(-7, 0, 0));
    Graph star;
    star.n = n;
    for (std::uint32_t j = 1; j <= 40; ++j) star.edges.emplace_back(0, j);
    auto s = sample_ego_dataset(star, pos, k, n, 3.0, 2);
    CHECK(s.positives == 40);
    CHECK(s.negatives == 120);

    // Two egos joined by an edge: no negative pair exists.
    Graph pair;
    pair.n = 2;
    pair.edges = {{0, 1}};
    auto pos2 = unit_square_positions(2, 1);
    auto p2 = sample_ego_dataset(pair, pos2, k, 2, 3.0, 1);
    CHECK(p2.positives == 1);
    CHECK(p2.negatives == 0);

    // Two egos, the edge running to a third node: exactly the single pair.
    Graph three;
    three.n = 3;
    three.edges = {{0, 2}, {1, 2}};
    auto pos3 = unit_square_positions(3, 1);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto t = sample_ego_dataset(three, pos3, k, 2, 3.0, seed);
        bool egos_adjacent = std::set<std::size_t>(t.egos.begin(), t.egos.end()).contains(2);
        CHECK(t.negatives == (egos_adjacent ? 0u : 1u));
    }

    Graph empty;
    empty.n = 10;
    CHECK_THROWS_AS(sample_ego_dataset(empty, unit_square_positions(10, 1), k, 5, 3.0, 1), ConfigError);
    CHECK_THROWS_AS(sample_ego_dataset(star, pos, k, 5, 0.5, 1), ConfigError);
    CHECK_THROWS_AS(sample_ego_dataset(star, pos, k, 61, 3.0, 1), ConfigError);
}

TEST_CASE("chi-squared statistic and quantiles") {
    auto id = Eigen::MatrixXd::Identity(3, 3);
    CHECK(chi_squared_statistic(theta3(1, 2, 3), theta3(1, 2, 3), id) == 0.0);
    CHECK(chi_squared_statistic(theta3(1, 0, 0), theta3(0, 0, 0), id) == 1.0);
    Eigen::MatrixXd h = Eigen::Vector3d(4, 1, 1).asDiagonal();
    CHECK(chi_squared_statistic(theta3(0.5, 1, 0), theta3(0, 0, 0), h) == doctest::Approx(2.0));
    Eigen::MatrixXd bad = -id;
    CHECK_THROWS_AS(chi_squared_statistic(theta3(0, 0, 0), theta3(0, 0, 0), bad), NumericError);

    // Tabulated values.
    CHECK(chi_squared_quantile(0.5, 3) == doctest::Approx(2.365974).epsilon(1e-6));
    CHECK(chi_squared_quantile(0.95, 3) == doctest::Approx(7.814728).epsilon(1e-6));
    CHECK(chi_squared_quantile(0.99, 3) == doctest::Approx(11.344867).epsilon(1e-6));
    CHECK(chi_squared_quantile(0.05, 3) == doctest::Approx(0.351846).epsilon(1e-5));
    CHECK(chi_squared_quantile(0.95, 1) == doctest::Approx(3.841459).epsilon(1e-6));
    CHECK(chi_squared_quantile(0.9, 10) == doctest::Approx(15.987179).epsilon(1e-6));
    CHECK(chi_squared_quantile(0.0, 3) == 0.0);
    CHECK(std::isinf(chi_squared_quantile(1.0, 3)));
}

TEST_CASE("coverage plumbing") {
    SyntheticConfig cfg;
    cfg.n = 300;
    cfg.egos = 60;
    cfg.theta_mean = theta3(-4, 0, 0);
    auto report = run_coverage(cfg, 12, {0.0, 0.5, 1.0}, 11, 2);
    CHECK(report.replications == 12);
    CHECK(report.effective + report.failures == 12);
    REQUIRE(report.effective > 0);
    CHECK(report.lambda[0] == 0.0);
    CHECK(report.lambda[2] == 1.0);
    CHECK(report.lambda[1] >= 0.0);
    CHECK(report.lambda[1] <= 1.0);
    if (report.lambda[1] > 0.0 && report.lambda[1] < 1.0) CHECK(report.se[1] > 0.0);
    for (const auto& o : report.outcomes)
        if (!o.ok) CHECK_FALSE(o.failure.empty());

    auto again = run_coverage(cfg, 12, {0.0, 0.5, 1.0}, 11, 1);
    CHECK(again.lambda == report.lambda);
    for (std::size_t r = 0; r < 12; ++r) CHECK(again.outcomes[r].chi2 == report.outcomes[r].chi2);

    CHECK_THROWS_AS(run_coverage(cfg, 9, {0.5}, 1), ConfigError);
    CHECK_THROWS_AS(run_coverage(cfg, 10, {1.5}, 1), ConfigError);

    cfg.theta_distribution = ThetaDistribution::student_t;
    auto heavy = run_replication(cfg, 3);
    CHECK(heavy.theta_true.size() == 3);

    SyntheticConfig bad;
    bad.egos = 3000;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = {};
    bad.negatives_per_positive = 0.5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}
