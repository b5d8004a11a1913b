#include <doctest.h>

#include <cmath>
#include <random>

#include "fieldtest/simulate.hpp"
#include "fieldtest/stats.hpp"

using namespace fieldtest;

namespace {

ResponseMatrix from_scored(const MatrixXi& scored)
{
    ResponseMatrix r;
    for (Eigen::Index i = 0; i < scored.rows(); ++i) r.examinee_ids.push_back("e" + std::to_string(i));
    for (Eigen::Index j = 0; j < scored.cols(); ++j) r.item_ids.push_back("i" + std::to_string(j));
    r.scored = scored;
    r.chosen = scored; // key 1 on two-option items
    return r;
}

MatrixXi coin_flips(Eigen::Index n, Eigen::Index k, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    MatrixXi m(n, k);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < k; ++j) m(i, j) = static_cast<int>(rng() >> 63);
    return m;
}

VectorXd vec(std::initializer_list<double> v)
{
    VectorXd x(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double d : v) x(i++) = d;
    return x;
}

} // namespace

TEST_CASE("proportion correct of constant columns")
{
    MatrixXi s(3, 2);
    s << 1, 0, 1, 0, 1, 0;
    VectorXd p = proportion_correct(from_scored(s));
    CHECK(p(0) == 1.0);
    CHECK(p(1) == 0.0);
}

TEST_CASE("item-total correlation: hand-computed 4 x 3 dataset")
{
    MatrixXi s(4, 3);
    s << 1, 1, 1, 1, 1, 0, 1, 0, 0, 0, 0, 0;
    auto r = item_total_correlation(from_scored(s), true);
    // item 1 = {1,1,1,0}, rest = {2,1,0,0}: cov .75, var .75 and 2.75 (sums of squares)
    REQUIRE(r[0].has_value());
    CHECK(std::abs(*r[0] - std::sqrt(3.0 / 11.0)) <= 1e-12);
}

TEST_CASE("item-total correlation: two identical items and a constant item")
{
    MatrixXi s(5, 3);
    s << 1, 1, 1, 0, 0, 1, 1, 1, 1, 0, 0, 1, 1, 1, 1;
    auto r = item_total_correlation(from_scored(s), true);
    // With two items the rest score of item 0 is item 1 plus the constant column.
    CHECK(std::abs(*r[0] - 1.0) <= 1e-12);
    CHECK(std::abs(*r[1] - 1.0) <= 1e-12);
    CHECK_FALSE(r[2].has_value());
}

TEST_CASE("item-total correlation: independent item is near zero")
{
    auto r = item_total_correlation(from_scored(coin_flips(100000, 10, 3)), true);
    for (const auto& v : r) CHECK(std::abs(*v) <= 0.02);
}

TEST_CASE("property: uncorrected item-total exceeds corrected on positive-discrimination data")
{
    SyntheticBank s = field_test_bank(15, 4);
    VectorXd theta = draw_thetas(3000, GroupDist{0, 1}, 5);
    ResponseMatrix r = gen_responses_2pl(theta, s.bank, s.params, 1.7, 6);
    auto corrected = item_total_correlation(r, true);
    auto raw = item_total_correlation(r, false);
    for (std::size_t j = 0; j < raw.size(); ++j) CHECK(*raw[j] >= *corrected[j]);
}

TEST_CASE("cronbach alpha: duplicated columns give exactly one")
{
    MatrixXi col = coin_flips(200, 1, 8);
    for (int k = 2; k <= 6; ++k) {
        MatrixXi s = col.replicate(1, k);
        CHECK(std::abs(cronbach_alpha(from_scored(s)) - 1.0) <= 1e-12);
    }
}

TEST_CASE("cronbach alpha: independent columns tend to zero")
{
    CHECK(std::abs(cronbach_alpha(from_scored(coin_flips(100000, 10, 9)))) <= 0.05);
}

TEST_CASE("cronbach alpha: hand formula and error paths")
{
    MatrixXi s(4, 3);
    s << 1, 1, 1, 1, 1, 0, 1, 0, 0, 0, 0, 0;
    // item variances .1875, .25, .1875; totals {3,2,1,0} variance 1.25
    CHECK(std::abs(cronbach_alpha(from_scored(s)) - 1.5 * (1.0 - 0.625 / 1.25)) <= 1e-12);
    MatrixXi flat = MatrixXi::Ones(4, 3);
    CHECK_THROWS_AS(cronbach_alpha(from_scored(flat)), ValidationError);
    CHECK_THROWS_AS(cronbach_alpha(from_scored(MatrixXi::Ones(4, 1))), ValidationError);
}

TEST_CASE("bias and rmse: hand examples")
{
    CHECK(bias(vec({1, 2, 3}), vec({1, 1, 1})) == 1.0);
    CHECK(std::abs(rmse(vec({1, 2, 3}), vec({1, 1, 1})) - std::sqrt(5.0 / 3.0)) <= 1e-12);
    CHECK(bias(vec({2.5}), vec({2.0})) == 0.5);
    CHECK(rmse(vec({2.5}), vec({2.0})) == 0.5);
    CHECK(bias(vec({4, 5}), vec({4, 5})) == 0.0);
    CHECK(rmse(vec({4, 5}), vec({4, 5})) == 0.0);
    CHECK_THROWS_AS(bias(vec({1, 2}), vec({1})), ValidationError);
}

TEST_CASE("property: rmse^2 = bias^2 + variance of differences")
{
    std::mt19937_64 rng(12);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int rep = 0; rep < 200; ++rep) {
        const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng() % 50);
        VectorXd x(n), y(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            x(i) = normal(rng) * 3.0;
            y(i) = normal(rng) + 0.5;
        }
        VectorXd diff = x - y;
        double var = (diff.array() - diff.mean()).square().mean();
        double b = bias(x, y), r = rmse(x, y);
        CHECK(std::abs(r * r - (b * b + var)) <= 1e-12 * (1.0 + r * r));
        CHECK(r >= std::abs(b) - 1e-15);
    }
}

TEST_CASE("spearman: ties use average ranks")
{
    CHECK(std::abs(spearman(vec({1, 2, 2, 4}), vec({1, 3, 2, 4})) - 4.5 / std::sqrt(22.5)) <= 1e-12);
    VectorXd ranks = average_ranks(vec({3, 1, 3, 3, 2}));
    CHECK(ranks(0) == 4.0);
    CHECK(ranks(1) == 1.0);
    CHECK(ranks(4) == 2.0);
}

TEST_CASE("spearman: reversed order is -1; constant input is an error")
{
    CHECK(spearman(vec({1, 2, 3, 4, 5}), vec({9, 7, 5, 3, 1})) == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK_THROWS_AS(spearman(vec({1, 1, 1}), vec({1, 2, 3})), ValidationError);
    CHECK_THROWS_AS(spearman(vec({1}), vec({1})), ValidationError);
}

TEST_CASE("property: spearman is invariant under strictly increasing transforms")
{
    std::mt19937_64 rng(21);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int rep = 0; rep < 100; ++rep) {
        VectorXd x(30), y(30);
        for (Eigen::Index i = 0; i < 30; ++i) {
            x(i) = std::round(normal(rng) * 4.0) / 4.0; // force ties
            y(i) = x(i) + normal(rng);
        }
        double base = spearman(x, y);
        CHECK(spearman(x.array().exp().matrix(), y) == base);
        CHECK(spearman(x, y.array().cube().matrix()) == base);
    }
}

TEST_CASE("describe: mean, sample sd, median, extremes")
{
    Descriptives d = describe(vec({4, 1, 3, 2}));
    CHECK(d.mean == 2.5);
    CHECK(std::abs(d.sd - std::sqrt(5.0 / 3.0)) <= 1e-12);
    CHECK(d.median == 2.5);
    CHECK(d.min == 1.0);
    CHECK(d.max == 4.0);
}

TEST_CASE("compare: identical calibrations")
{
    SyntheticBank s = field_test_bank(29, 1);
    VectorXd theta = draw_thetas(500, GroupDist{0, 1}, 2);
    CttTable ctt = ctt_table(gen_responses_2pl(theta, s.bank, s.params, 1.7, 3));
    ComparisonSummary c = compare_calibrations(s.params, s.params, &ctt, &ctt, theta, theta, {});
    for (const char* stat : {"theta", "a", "b"}) {
        CHECK(*c.at(stat).bias == 0.0);
        CHECK(*c.at(stat).rmse == 0.0);
        CHECK(*c.at(stat).spearman == doctest::Approx(1.0).epsilon(1e-14));
    }
    for (const char* stat : {"proportion_correct", "item_total_r"}) {
        CHECK_FALSE(c.at(stat).bias.has_value());
        CHECK_FALSE(c.at(stat).rmse.has_value());
        CHECK(*c.at(stat).spearman == doctest::Approx(1.0).epsilon(1e-14));
    }
}

TEST_CASE("compare: excluding an extreme difficulty reduces RMSE(b) and is recorded")
{
    SyntheticBank s = field_test_bank(29, 1);
    ParamSet cand = s.params;
    for (auto& p : cand) p.b += 0.1;
    cand[21].b = 22.55;
    VectorXd none(0);
    ComparisonSummary all = compare_calibrations(s.params, cand, nullptr, nullptr, none, none, {});
    ComparisonSummary cut = compare_calibrations(s.params, cand, nullptr, nullptr, none, none, {"item22"});
    CHECK(*cut.at("b").rmse < *all.at("b").rmse);
    CHECK(cut.excluded_ids == std::vector<std::string>{"item22"});
    CHECK(cut.at("b").n == 28);
    CHECK_THROWS_AS(compare_calibrations(s.params, cand, nullptr, nullptr, none, none, {"nope"}), ValidationError);
}

TEST_CASE("compare: undefined item statistics are listed as missing")
{
    MatrixXi s(4, 3);
    s << 1, 1, 1, 1, 1, 0, 1, 0, 0, 0, 0, 1;
    CttTable ref = ctt_table(from_scored(s));
    MatrixXi s2 = s;
    s2.col(2).setOnes();
    CttTable cand = ctt_table(from_scored(s2));
    ParamSet p{{"i0", 1, 0}, {"i1", 1, 0.5}, {"i2", 1, 1}};
    VectorXd none(0);
    ComparisonSummary c = compare_calibrations(p, p, &ref, &cand, none, none, {});
    CHECK(c.at("item_total_r").missing_ids == std::vector<std::string>{"i2"});
    CHECK(c.at("item_total_r").n == 2);
    CHECK(c.at("proportion_correct").n == 3);
    CHECK(c.at("a").n == 3);
}
