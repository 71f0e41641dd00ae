#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "blau/errors.hpp"
#include "blau/features.hpp"

using namespace blau;

namespace {

AttributeSchema survey_schema() {
    return AttributeSchema({
        {"age", ColumnKind::continuous, "", {}},
        {"educ", ColumnKind::ordinal, "", {"none", "school", "degree"}},
        {"religion", ColumnKind::categorical, "", {}},
        {"white", ColumnKind::mixed_membership, "eth", {}},
        {"black", ColumnKind::mixed_membership, "eth", {}},
        {"asian", ColumnKind::mixed_membership, "eth", {}},
        {"home", ColumnKind::location, "", {}},
    });
}

FeatureConfig survey_features(const AttributeSchema& s) {
    return FeatureConfig(s, {
                                {"bias", FeatureKind::bias, "", {}, std::nullopt, std::nullopt},
                                {"age", FeatureKind::abs_diff, "age", {}, AffineMetric{1, 0}, std::nullopt},
                                {"educ", FeatureKind::ordinal_abs_diff, "educ", {}, AffineMetric{1, 0}, std::nullopt},
                                {"religion", FeatureKind::mismatch, "religion", {}, AffineMetric{1, 0}, std::nullopt},
                                {"eth", FeatureKind::mixed_l1, "eth", {}, AffineMetric{1, 0}, std::nullopt},
                                {"dist", FeatureKind::ordinal_distance, "home", {1, 5, 50}, AffineMetric{1, 1},
                                 std::nullopt},
                            });
}

// age, educ, religion, white, black, asian, home.x, home.y
AttributeRow row(double age, double educ, double rel, double w, double b, double a, double hx = 0,
                 double hy = 0) {
    return {age, educ, rel, w, b, a, hx, hy};
}

AttributeRow random_row(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0, 1);
    std::uniform_int_distribution<int> k(0, 2);
    double w = u(rng), b = u(rng), a = u(rng), s = w + b + a;
    return row(18 + 70 * u(rng), k(rng), k(rng), w / s, b / s, a / s, 100 * u(rng), 100 * u(rng));
}

}  // namespace

TEST_CASE("schema layout and validation") {
    auto s = survey_schema();
    CHECK(s.width() == 8);
    CHECK(s.slot("home") == 6);
    CHECK(s.group_slots("eth") == std::vector<std::size_t>{3, 4, 5});
    CHECK(s.ordinal_rank("educ", "degree") == 2.0);
    CHECK_THROWS_AS(s.ordinal_rank("educ", "phd"), ConfigError);
    CHECK_THROWS_AS(AttributeSchema({{"a", ColumnKind::continuous, "", {}}, {"a", ColumnKind::continuous, "", {}}}),
                    ConfigError);
    CHECK_THROWS_AS(AttributeSchema({{"w", ColumnKind::mixed_membership, "g", {}}}), ConfigError);
    CHECK_THROWS_AS(AttributeSchema({{"o", ColumnKind::ordinal, "", {}}}), ConfigError);
    CHECK(parse_column_kind("location") == ColumnKind::location);
    CHECK_THROWS_AS(parse_column_kind("blob"), ConfigError);
}

TEST_CASE("attribute table validation and membership normalization") {
    AttributeTable t;
    t.schema = survey_schema();
    t.ids = {"a", "b"};
    t.rows = {row(30, 1, 0, 2, 2, 0), row(40, 2, 1, 0, 0, 3)};
    t.normalize_memberships();
    CHECK(t.rows[0][3] == doctest::Approx(0.5));
    CHECK(t.rows[1][5] == doctest::Approx(1.0));
    CHECK_NOTHROW(t.validate());
    t.weights = std::vector<double>{1.0, 0.0};
    CHECK_THROWS_AS(t.validate(), ConfigError);
    t.weights = std::vector<double>{1.0, 2.0};
    CHECK(t.weight(1) == 2.0);
    CHECK(t.index_of("b") == std::size_t{1});

    t.rows[1][0] = std::nan("");
    auto complete = t.complete_cases();
    CHECK(complete.size() == 1);
    CHECK(complete.ids[0] == "a");
    CHECK(complete.weights->size() == 1);
}

TEST_CASE("feature maps") {
    auto s = survey_schema();
    auto cfg = survey_features(s);

    SUBCASE("mixed membership distances") {
        AttributeSchema two({{"white", ColumnKind::mixed_membership, "eth", {}},
                             {"black", ColumnKind::mixed_membership, "eth", {}}});
        FeatureConfig c2(two, {{"bias", FeatureKind::bias, "", {}, {}, {}},
                               {"eth", FeatureKind::mixed_l1, "eth", {}, {}, {}}});
        CHECK(evaluate_features(AttributeRow{1, 0}, AttributeRow{0, 1}, c2)[1] == 1.0);

        auto f = evaluate_features(row(30, 0, 0, 0, 1, 0), row(30, 0, 0, 0, 0.5, 0.5), cfg);
        CHECK(f[4] == doctest::Approx(0.5).epsilon(1e-15));
    }
    SUBCASE("age difference") {
        auto f = evaluate_features(row(34, 0, 0, 1, 0, 0), row(27, 0, 0, 1, 0, 0), cfg);
        CHECK(f[1] == 7.0);
    }
    SUBCASE("identical rows") {
        auto x = row(50, 2, 1, 0.2, 0.3, 0.5, 3, 4);
        auto f = evaluate_features(x, x, cfg);
        CHECK(f[0] == 1.0);
        for (std::size_t l = 1; l < 5; ++l) CHECK(f[l] == 0.0);
        CHECK(f[5] == 1.0);  // ordinal distance level 1 at zero distance
    }
    SUBCASE("ordinal ranks, mismatch, distance levels") {
        auto f = evaluate_features(row(30, 0, 0, 1, 0, 0, 0, 0), row(30, 2, 1, 1, 0, 0, 3, 0), cfg);
        CHECK(f[2] == 2.0);
        CHECK(f[3] == 1.0);
        CHECK(f[5] == 2.0);
    }
    SUBCASE("missing values and width mismatch throw") {
        auto x = row(30, 0, 0, 1, 0, 0);
        auto y = x;
        y[0] = std::nan("");
        CHECK_THROWS_AS(evaluate_features(x, y, cfg), ConfigError);
        CHECK_THROWS_AS(evaluate_features(AttributeRow{1, 2}, x, cfg), ConfigError);
    }
    CHECK(cfg.is_binary(3));
    CHECK_FALSE(cfg.is_binary(1));
    CHECK(cfg.is_bias(0));
    CHECK(cfg.find("eth") == std::size_t{4});
}

TEST_CASE("feature config validation") {
    auto s = survey_schema();
    using FS = FeatureSpec;
    CHECK_THROWS_AS(FeatureConfig(s, {FS{"age", FeatureKind::abs_diff, "age", {}, {}, {}}}), ConfigError);
    CHECK_THROWS_AS(FeatureConfig(s, {FS{"bias", FeatureKind::bias, "", {}, {}, {}},
                                      FS{"b2", FeatureKind::bias, "", {}, {}, {}}}),
                    ConfigError);
    CHECK_THROWS_AS(FeatureConfig(s, {FS{"bias", FeatureKind::bias, "", {}, {}, {}},
                                      FS{"age", FeatureKind::abs_diff, "age", {}, AffineMetric{0, 0}, {}}}),
                    ConfigError);
    CHECK_THROWS_AS(FeatureConfig(s, {FS{"bias", FeatureKind::bias, "", {}, {}, {}},
                                      FS{"rel", FeatureKind::abs_diff, "religion", {}, {}, {}}}),
                    ConfigError);
    CHECK_THROWS_AS(FeatureConfig(s, {FS{"bias", FeatureKind::bias, "", {}, {}, {}},
                                      FS{"x", FeatureKind::abs_diff, "nope", {}, {}, {}}}),
                    ConfigError);
    CHECK_THROWS_AS(FeatureConfig(s, {FS{"bias", FeatureKind::bias, "", {}, {}, {}},
                                      FS{"d", FeatureKind::ordinal_distance, "home", {5, 1}, {}, {}}}),
                    ConfigError);
}

TEST_CASE("feature properties over random rows") {
    auto s = survey_schema();
    auto cfg = survey_features(s);
    std::mt19937_64 rng(7);
    for (int t = 0; t < 2000; ++t) {
        auto x = random_row(rng), y = random_row(rng), z = random_row(rng);
        auto fxy = evaluate_features(x, y, cfg);
        auto fyx = evaluate_features(y, x, cfg);
        auto fxz = evaluate_features(x, z, cfg);
        auto fyz = evaluate_features(y, z, cfg);
        CHECK(fxy == fyx);
        CHECK(fxy[1] >= 0.0);
        CHECK((fxy[3] == 0.0 || fxy[3] == 1.0));
        CHECK(fxy[4] >= 0.0);
        CHECK(fxy[4] <= 1.0 + 1e-12);
        for (std::size_t l = 1; l < cfg.size(); ++l) {
            const auto& a = *cfg.entry(l).affine;
            auto d = [&](const std::vector<double>& f) { return (f[l] - a.b) / a.a; };
            if (cfg.entry(l).kind == FeatureKind::ordinal_distance) continue;  // levels are not a metric
            CHECK(d(fxz) <= d(fxy) + d(fyz) + 1e-12);
        }
    }
}

TEST_CASE("standardization") {
    AttributeSchema s({{"v", ColumnKind::continuous, "", {}}, {"c", ColumnKind::categorical, "", {}}});
    FeatureConfig cfg(s, {{"bias", FeatureKind::bias, "", {}, {}, {}},
                          {"v", FeatureKind::abs_diff, "v", {}, {}, {}},
                          {"c", FeatureKind::mismatch, "c", {}, {}, {}}});

    SUBCASE("population sd, twice-sd scale") {
        std::vector<std::vector<double>> sample{{1, 0, 0}, {1, 2, 1}, {1, 4, 0}};
        auto st = fit_standardization(sample, cfg, "test");
        CHECK(st.features[1].mean == doctest::Approx(2.0));
        CHECK(st.features[1].scale == doctest::Approx(2.0 * std::sqrt(8.0 / 3.0)));
        CHECK(st.features[2].scale == 1.0);
        CHECK(st.features[2].mean == doctest::Approx(1.0 / 3.0));
        CHECK(st.features[0].mean == 0.0);
        CHECK(st.features[0].scale == 1.0);
        const double expected = -0.6123724356957945;
        CHECK(apply_standardization(sample[0], st)[1] == doctest::Approx(expected).epsilon(1e-13));
        CHECK(apply_standardization(sample[1], st)[1] == 0.0);
        CHECK(apply_standardization(sample[2], st)[1] == doctest::Approx(-expected).epsilon(1e-13));
        CHECK(apply_standardization(sample[0], st)[0] == 1.0);
        CHECK(apply_standardization(sample[0], st)[2] == doctest::Approx(-1.0 / 3.0));
    }
    SUBCASE("zero variance names the feature") {
        std::vector<std::vector<double>> sample{{1, 0, 0}, {1, 2, 0}};
        try {
            fit_standardization(sample, cfg);
            FAIL("expected an error");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find("'c'") != std::string::npos);
        }
        CHECK_THROWS_AS(fit_standardization(std::vector<std::vector<double>>{}, cfg), ConfigError);
    }
    SUBCASE("fit then apply gives mean 0 and sd 0.5; refit is idempotent") {
        std::mt19937_64 rng(3);
        std::normal_distribution<double> g(5, 3);
        std::bernoulli_distribution b(0.3);
        std::vector<std::vector<double>> sample;
        for (int i = 0; i < 500; ++i) sample.push_back({1.0, std::abs(g(rng)), b(rng) ? 1.0 : 0.0});
        auto st = fit_standardization(sample, cfg);
        std::vector<std::vector<double>> z;
        for (const auto& f : sample) z.push_back(apply_standardization(f, st));
        double m1 = 0, m2 = 0, ss = 0;
        for (const auto& f : z) m1 += f[1], m2 += f[2];
        m1 /= 500, m2 /= 500;
        for (const auto& f : z) ss += (f[1] - m1) * (f[1] - m1);
        CHECK(std::abs(m1) < 1e-12);
        CHECK(std::abs(m2) < 1e-12);
        CHECK(std::sqrt(ss / 500) == doctest::Approx(0.5).epsilon(1e-12));

        auto again = fit_standardization(z, cfg);
        CHECK(std::abs(again.features[1].mean) < 1e-12);
        CHECK(again.features[1].scale == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("apply") {
        Standardization st;
        st.features = {{0, 1, false, true}, {3, 2, false, false}};
        CHECK(apply_standardization(std::vector<double>{1, 5}, st) == std::vector<double>{1, 1});
        CHECK(apply_standardization(std::vector<double>{1, 3}, st) == std::vector<double>{1, 0});
        CHECK_THROWS_AS(apply_standardization(std::vector<double>{1}, st), ConfigError);
        auto id = Standardization::identity(cfg);
        CHECK(apply_standardization(std::vector<double>{1, 0.25, 1}, id) == std::vector<double>{1, 0.25, 1});
    }
}
