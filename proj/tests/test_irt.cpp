#include <doctest.h>

#include <cmath>
#include <random>

#include <boost/multiprecision/cpp_dec_float.hpp>

#include "fieldtest/irt.hpp"
#include "fieldtest/simulate.hpp"
#include "fieldtest/stats.hpp"

using namespace fieldtest;
using boost::multiprecision::cpp_dec_float_50;

namespace {

double oracle_prob(double theta, double a, double b, double d)
{
    const cpp_dec_float_50 z = cpp_dec_float_50(d) * cpp_dec_float_50(a) * (cpp_dec_float_50(theta) - cpp_dec_float_50(b));
    return cpp_dec_float_50(1 / (1 + exp(-z))).convert_to<double>();
}

// Direct log-likelihood with long double and explicit logs, no shared helpers.
long double oracle_loglik(const VectorXi& u, const VectorXd& a, const VectorXd& b, double d, double theta)
{
    long double sum = 0.0L;
    for (Eigen::Index j = 0; j < u.size(); ++j) {
        long double p = 1.0L / (1.0L + std::exp(-(long double)d * a(j) * ((long double)theta - b(j))));
        sum += u(j) ? std::log(p) : std::log(1.0L - p);
    }
    return sum;
}

EngineConfig fast_config()
{
    EngineConfig c;
    c.n_examinees = 2000;
    return c;
}

ResponseMatrix simulate_reference(const SyntheticBank& s, std::size_t n, std::uint64_t seed)
{
    VectorXd theta = draw_thetas(n, GroupDist{0, 1}, seed);
    return gen_responses_2pl(theta, s.bank, s.params, 1.7, seed + 1000);
}

ResponseMatrix duplicated(const ResponseMatrix& r)
{
    ResponseMatrix d;
    d.item_ids = r.item_ids;
    d.examinee_ids = r.examinee_ids;
    for (const auto& id : r.examinee_ids) d.examinee_ids.push_back(id + "_copy");
    d.chosen.resize(2 * r.n_examinees(), r.n_items());
    d.chosen << r.chosen, r.chosen;
    d.scored.resize(2 * r.n_examinees(), r.n_items());
    d.scored << r.scored, r.scored;
    return d;
}

} // namespace

TEST_CASE("prob_2pl: midpoint, flat item and a high-precision value")
{
    CHECK(prob_2pl(0.3, 2.0, 0.3, 1.7) == 0.5);
    CHECK(prob_2pl(-4.0, 0.0, 1.0, 1.7) == 0.5);
    CHECK(prob_2pl(9.0, 0.0, 1.0, 1.7) == 0.5);
    CHECK(std::abs(prob_2pl(1.0, 1.0, 0.0, 1.7) - oracle_prob(1.0, 1.0, 0.0, 1.7)) <= 1e-15);
    CHECK(prob_2pl(1.0, 1.0, 0.0, 1.7) == doctest::Approx(0.845535).epsilon(1e-6));
}

TEST_CASE("prob_2pl: array form agrees with scalar form")
{
    Eigen::ArrayXd theta = Eigen::ArrayXd::LinSpaced(21, -5, 5);
    Eigen::ArrayXd p = prob_2pl(theta, 0.8, 0.25, 1.7);
    for (Eigen::Index i = 0; i < theta.size(); ++i) CHECK(p(i) == prob_2pl(theta(i), 0.8, 0.25, 1.7));
}

TEST_CASE("property: prob_2pl matches the 50-digit oracle and is strictly increasing")
{
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> th(-6, 6), aa(0.01, 5), bb(-10, 25);
    for (int k = 0; k < 300; ++k) {
        double t = th(rng), a = aa(rng), b = bb(rng);
        double p = prob_2pl(t, a, b, 1.7);
        CHECK(std::abs(p - oracle_prob(t, a, b, 1.7)) <= 1e-12);
        CHECK(p >= 0.0);
        CHECK(p <= 1.0);
        CHECK(prob_2pl(t + 0.01, a, b, 1.7) >= p);
    }
}

TEST_CASE("property: point symmetry and D scaling hold exactly")
{
    std::mt19937_64 rng(6);
    for (int k = 0; k < 1000; ++k) {
        // dyadic grid keeps 2b - theta and its difference from b exact
        double t = std::ldexp(double(int64_t(rng() % 8192) - 4096), -9);
        double b = std::ldexp(double(int64_t(rng() % 8192) - 4096), -9);
        double a = 0.01 + double(rng() % 1000) / 200.0;
        CHECK(prob_2pl(t, a, b, 1.7) + prob_2pl(2 * b - t, a, b, 1.7) == 1.0);
        CHECK(prob_2pl(t, a, b, 1.7) == prob_2pl(t, 1.7 * a, b, 1.0));
    }
}

TEST_CASE("loglik: empty, single item and a 29-item pattern")
{
    VectorXi none(0);
    VectorXd e(0);
    CHECK(loglik<double>(none, e, e, 1.7, 0.3) == 0.0);

    VectorXi one(1);
    one << 1;
    VectorXd a1(1), b1(1);
    a1 << 1.0;
    b1 << 0.4;
    CHECK(std::abs(loglik<double>(one, a1, b1, 1.7, 0.4) - std::log(0.5)) <= 1e-15);

    SyntheticBank s = field_test_bank(29, 3);
    VectorXd a = discriminations(s.params), b = difficulties(s.params);
    std::mt19937_64 rng(4);
    for (int rep = 0; rep < 20; ++rep) {
        VectorXi u(29);
        for (Eigen::Index j = 0; j < 29; ++j) u(j) = static_cast<int>(rng() & 1);
        double theta = double(rep) / 4.0 - 2.5;
        CHECK(std::abs(loglik<double>(u, a, b, 1.7, theta) - double(oracle_loglik(u, a, b, 1.7, theta))) <= 1e-12);
    }
}

TEST_CASE("quadrature: symmetric, shifts with the group, reproduces the mean")
{
    EngineConfig c;
    QuadratureGrid g = make_quadrature(c, GroupDist{0, 1});
    REQUIRE(g.nodes.size() == 61);
    CHECK(g.nodes(0) == -6.0);
    CHECK(g.nodes(60) == 6.0);
    CHECK(std::abs(g.weights.sum() - 1.0) <= 1e-12);
    for (Eigen::Index q = 0; q < 30; ++q) CHECK(std::abs(g.weights(q) - g.weights(60 - q)) <= 1e-15);
    for (Eigen::Index q = 1; q < 61; ++q) CHECK(g.nodes(q) > g.nodes(q - 1));

    QuadratureGrid shifted = make_quadrature(c, GroupDist{1, 1});
    Eigen::Index i0, i1;
    g.weights.maxCoeff(&i0);
    shifted.weights.maxCoeff(&i1);
    CHECK(i1 > i0);
    CHECK(std::abs(shifted.weights.dot(shifted.nodes) - 1.0) < 1e-6);
    CHECK(std::abs(g.weights.dot(g.nodes)) < 1e-6);
}

TEST_CASE("property: item objective gradient matches central differences")
{
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    EngineConfig c;
    const VectorXd nodes = make_quadrature(c, GroupDist{}).nodes;
    for (int k = 0; k < 100; ++k) {
        VectorXd n = (VectorXd::Random(61).array() + 1.5) * 100.0;
        VectorXd r = n.array() * (VectorXd::Random(61).array() * 0.5 + 0.5);
        ItemObjective obj(nodes, r, n, 1.7);
        double a = 0.05 + 2.5 * unif(rng), b = -3 + 6 * unif(rng);
        Eigen::Vector2d g = obj.gradient(a, b);
        const double h = 1e-5;
        double fa = (obj.value(a + h, b) - obj.value(a - h, b)) / (2 * h);
        double fb = (obj.value(a, b + h) - obj.value(a, b - h)) / (2 * h);
        CHECK(std::abs(fa - g(0)) <= 1e-5 * std::max(1.0, std::abs(g(0))));
        CHECK(std::abs(fb - g(1)) <= 1e-5 * std::max(1.0, std::abs(g(1))));
    }
}

TEST_CASE("item maximizer: expected counts generated by the model recover the truth")
{
    EngineConfig c;
    QuadratureGrid g = make_quadrature(c, GroupDist{0, 1});
    for (auto [a, b] : {std::pair{0.66, 0.05}, std::pair{1.2, -0.97}, std::pair{0.19, 2.14}}) {
        VectorXd n = 5000.0 * g.weights;
        VectorXd r = n.array() * prob_2pl(g.nodes.array(), a, b, 1.7);
        ItemObjective obj(g.nodes, r, n, 1.7);
        ItemParams2PL fit = maximize_item(obj, {"x", 1.0, 0.0}, ItemBounds{}, 200);
        CHECK(std::abs(fit.a - a) <= 1e-6);
        CHECK(std::abs(fit.b - b) <= 1e-6);
        CHECK(obj.value(fit.a, fit.b) >= obj.value(1.0, 0.0));
    }
}

TEST_CASE("item maximizer: respects bounds")
{
    EngineConfig c;
    QuadratureGrid g = make_quadrature(c, GroupDist{0, 1});
    VectorXd n = 1000.0 * g.weights;
    VectorXd r = n.array() * prob_2pl(g.nodes.array(), 8.0, 0.0, 1.7);
    ItemParams2PL fit = maximize_item(ItemObjective(g.nodes, r, n, 1.7), {"x", 1.0, 0.0}, ItemBounds{}, 200);
    CHECK(fit.a == 5.0);
    CHECK(std::abs(fit.b) < 1e-3);
}

TEST_CASE("free fit: recovers generating parameters")
{
    SyntheticBank s = field_test_bank(29, 17);
    ResponseMatrix r = simulate_reference(s, 5000, 21);
    FitResult fit = fit_2pl_mml(r, EngineConfig{});
    CHECK(fit.converged);
    VectorXd a_true = discriminations(s.params), b_true = difficulties(s.params);
    VectorXd a_hat = discriminations(fit.params), b_hat = difficulties(fit.params);
    CHECK(pearson(a_true, a_hat) >= 0.90);
    CHECK(rmse(b_hat, b_true) <= 0.15);
    CHECK(rmse(a_hat, a_true) <= 0.10);
    CHECK(fit.group.mean == 0.0);
    CHECK(fit.group.sd == 1.0);
}

TEST_CASE("free fit: marginal log-likelihood never decreases")
{
    SyntheticBank s = field_test_bank(12, 2);
    ResponseMatrix r = simulate_reference(s, 1500, 3);
    EngineConfig c = fast_config();
    c.em_tol = 1e-7;
    FitResult fit = fit_2pl_mml(r, c);
    REQUIRE(fit.loglik_trace.size() > 3);
    for (std::size_t t = 1; t < fit.loglik_trace.size(); ++t)
        CHECK(fit.loglik_trace[t] >= fit.loglik_trace[t - 1] - 1e-8);
    CHECK(fit.loglik >= fit.loglik_trace.back() - 1e-8);
}

TEST_CASE("free fit: a coin-flip item gets near-zero discrimination")
{
    SyntheticBank s = field_test_bank(10, 4);
    ResponseMatrix r = simulate_reference(s, 5000, 6);
    std::mt19937_64 rng(7);
    const int key = s.bank.items[3].key;
    for (Eigen::Index i = 0; i < r.n_examinees(); ++i) {
        const bool correct = (rng() >> 63) != 0;
        r.chosen(i, 3) = correct ? key : (key + 1) % 4;
        r.scored(i, 3) = correct ? 1 : 0;
    }
    FitResult fit = fit_2pl_mml(r, EngineConfig{});
    CHECK(fit.params[3].a >= 0.01);
    CHECK(fit.params[3].a <= 0.1);
}

TEST_CASE("free fit: replicating every examinee leaves estimates unchanged")
{
    SyntheticBank s = field_test_bank(8, 9);
    ResponseMatrix r = simulate_reference(s, 800, 10);
    FitResult once = fit_2pl_mml(r, EngineConfig{});
    FitResult twice = fit_2pl_mml(duplicated(r), EngineConfig{});
    for (std::size_t j = 0; j < once.params.size(); ++j) {
        CHECK(std::abs(once.params[j].a - twice.params[j].a) <= 1e-8);
        CHECK(std::abs(once.params[j].b - twice.params[j].b) <= 1e-8);
    }
}

TEST_CASE("free fit: D = 1 reproduces D = 1.7 with a scaled by 1.7")
{
    SyntheticBank s = field_test_bank(8, 12);
    ResponseMatrix r = simulate_reference(s, 1000, 13);
    EngineConfig c17;
    c17.em_tol = 1e-9;
    c17.max_em_iter = 5000;
    EngineConfig c1 = c17;
    c1.scaling_d = 1.0;
    FitResult f17 = fit_2pl_mml(r, c17);
    FitResult f1 = fit_2pl_mml(r, c1);
    for (std::size_t j = 0; j < f1.params.size(); ++j) {
        CHECK(std::abs(f1.params[j].a - 1.7 * f17.params[j].a) <= 1e-6);
        CHECK(std::abs(f1.params[j].b - f17.params[j].b) <= 1e-6);
    }
    CHECK(std::abs(f1.loglik - f17.loglik) <= 1e-6);
}

TEST_CASE("free fit: degenerate columns are named errors")
{
    SyntheticBank s = field_test_bank(5, 1);
    ResponseMatrix r = simulate_reference(s, 200, 2);
    r.scored.col(2).setOnes();
    r.chosen.col(2).setConstant(s.bank.items[2].key);
    try {
        fit_2pl_mml(r, EngineConfig{});
        FAIL("expected an estimation error");
    } catch (const EstimationError& e) {
        CHECK(std::string(e.what()).find("item03") != std::string::npos);
    }
}

TEST_CASE("anchored fit: recovers the target item and the reference group")
{
    SyntheticBank s = field_test_bank(29, 17);
    ResponseMatrix r = simulate_reference(s, 5000, 31);
    for (std::size_t target : {0u, 14u, 28u}) {
        AnchoredFit fit = fit_anchored_item(r, s.params, s.params[target].item_id, EngineConfig{});
        CHECK(fit.converged);
        CHECK(std::abs(fit.params.a - s.params[target].a) <= 0.1);
        CHECK(std::abs(fit.params.b - s.params[target].b) <= 0.15);
        CHECK(std::abs(fit.group.mean) <= 0.05);
        CHECK(std::abs(fit.group.sd - 1.0) <= 0.05);
        for (std::size_t t = 1; t < fit.loglik_trace.size(); ++t)
            CHECK(fit.loglik_trace[t] >= fit.loglik_trace[t - 1] - 1e-8);
    }
}

TEST_CASE("anchored fit: estimates do not depend on column order")
{
    SyntheticBank s = field_test_bank(10, 3);
    ResponseMatrix r = simulate_reference(s, 1500, 4);
    std::vector<AnchoredFit> all = fit_anchored_all(r, s.params, EngineConfig{});
    REQUIRE(all.size() == 10);

    ResponseMatrix rev = r;
    std::reverse(rev.item_ids.begin(), rev.item_ids.end());
    rev.chosen = r.chosen.rowwise().reverse();
    rev.scored = r.scored.rowwise().reverse();
    std::vector<AnchoredFit> all_rev = fit_anchored_all(rev, s.params, EngineConfig{});
    for (std::size_t j = 0; j < 10; ++j) {
        CHECK(all[j].params.item_id == all_rev[9 - j].params.item_id);
        CHECK(std::abs(all[j].params.a - all_rev[9 - j].params.a) <= 1e-6);
        CHECK(std::abs(all[j].params.b - all_rev[9 - j].params.b) <= 1e-6);
    }
}

TEST_CASE("anchored fit: missing anchors and unknown targets are errors")
{
    SyntheticBank s = field_test_bank(5, 3);
    ResponseMatrix r = simulate_reference(s, 300, 4);
    ParamSet partial(s.params.begin(), s.params.begin() + 3);
    CHECK_THROWS_AS(fit_anchored_item(r, partial, "item01", EngineConfig{}), ValidationError);
    CHECK_THROWS_AS(fit_anchored_item(r, s.params, "nope", EngineConfig{}), ValidationError);
}

TEST_CASE("MAP: empty pattern returns the prior mean")
{
    VectorXi none(0);
    VectorXd e(0);
    MapResult m = map_score(none, e, e, 1.7, 0.0, 100.0);
    CHECK(m.theta == 0.0);
    CHECK(m.se == doctest::Approx(10.0));
}

TEST_CASE("MAP: single correct item matches a grid-search oracle")
{
    VectorXi u(1);
    u << 1;
    VectorXd a(1), b(1);
    a << 1.0;
    b << 0.0;
    MapResult m = map_score(u, a, b, 1.7, 0.0, 100.0);

    double best = 0.0, best_f = -1e300;
    for (int k = 0; k <= 100000; ++k) {
        double t = -10.0 + k * 2e-4;
        double f = std::log(oracle_prob(t, 1.0, 0.0, 1.7)) - t * t / 200.0;
        if (f > best_f) {
            best_f = f;
            best = t;
        }
    }
    CHECK(std::abs(m.theta - best) <= 1e-3);
    CHECK(m.theta == doctest::Approx(2.48).epsilon(0.01));
    CHECK_FALSE(m.used_grid);
}

TEST_CASE("MAP: perfect scores stay finite")
{
    SyntheticBank s = field_test_bank(29, 1);
    VectorXd a = discriminations(s.params), b = difficulties(s.params);
    MapResult top = map_score(VectorXi::Ones(29), a, b, 1.7, 0.0, 100.0);
    MapResult bottom = map_score(VectorXi::Zero(29), a, b, 1.7, 0.0, 100.0);
    CHECK(std::isfinite(top.theta));
    CHECK(top.theta > 3.0);
    CHECK(top.theta < 40.0);
    CHECK(bottom.theta < -3.0);
    CHECK(bottom.theta > -40.0);
}

TEST_CASE("MAP: converges toward the ML estimate as the prior widens")
{
    SyntheticBank s = field_test_bank(29, 1);
    VectorXd a = discriminations(s.params), b = difficulties(s.params);
    VectorXi u = VectorXi::Zero(29);
    for (Eigen::Index j = 0; j < 29; j += 2) u(j) = 1;

    // ML by bisection on the score function
    auto score = [&](double t) {
        double g = 0.0;
        for (Eigen::Index j = 0; j < 29; ++j) g += 1.7 * a(j) * (u(j) - oracle_prob(t, a(j), b(j), 1.7));
        return g;
    };
    double lo = -10, hi = 10;
    for (int k = 0; k < 200; ++k) {
        double mid = 0.5 * (lo + hi);
        (score(mid) > 0 ? lo : hi) = mid;
    }
    const double ml = 0.5 * (lo + hi);
    const double d2 = std::abs(map_score(u, a, b, 1.7, 0.0, 1e2).theta - ml);
    const double d4 = std::abs(map_score(u, a, b, 1.7, 0.0, 1e4).theta - ml);
    CHECK(d4 < d2);
    CHECK(d4 < 1e-3);
}

TEST_CASE("MAP: skipped items do not count")
{
    VectorXi u(3);
    u << 1, -1, 0;
    VectorXd a(3), b(3);
    a << 1.0, 2.0, 0.5;
    b << 0.0, 1.0, -1.0;
    VectorXi u2(2);
    u2 << 1, 0;
    VectorXd a2(2), b2(2);
    a2 << 1.0, 0.5;
    b2 << 0.0, -1.0;
    CHECK(map_score(u, a, b, 1.7, 0.0, 100.0).theta == map_score(u2, a2, b2, 1.7, 0.0, 100.0).theta);
}

TEST_CASE("MAP scoring with true parameters tracks true ability")
{
    SyntheticBank s = field_test_bank(29, 17);
    VectorXd theta = draw_thetas(2000, GroupDist{0, 1}, 40);
    ResponseMatrix r = gen_responses_2pl(theta, s.bank, s.params, 1.7, 41);
    VectorXd est = thetas_of(score_all(r, s.params, EngineConfig{}));
    CHECK(pearson(est, theta) >= 0.88);
}

TEST_CASE("free fit: two independent replications agree on the ordering of a")
{
    SyntheticBank s = field_test_bank(29, 17);
    FitResult f1 = fit_2pl_mml(simulate_reference(s, 5000, 51), EngineConfig{});
    FitResult f2 = fit_2pl_mml(simulate_reference(s, 5000, 52), EngineConfig{});
    CHECK(spearman(discriminations(f1.params), discriminations(f2.params)) >= 0.95);
}
