#include <doctest.h>

#include <cmath>

#include "diffsearch/errors.hpp"
#include "diffsearch/verifier.hpp"
#include "test_helpers.hpp"

using namespace diffsearch;
using namespace diffsearch::testutil;

namespace {

Vec fd_grad_log(const Verifier& v, const Vec& x, double h = 1e-6) {
    Vec g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        Vec xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        g[i] = (v.log_eval(xp) - v.log_eval(xm)) / (2 * h);
    }
    return g;
}

} // namespace

TEST_CASE("region verifier values") {
    Verifier v = region_verifier(Vec::Zero(2), 1.0, 1.0);
    CHECK(v.score(Vec::Zero(2)) == doctest::Approx(1.0));
    CHECK(v.score(v2(1.0, 0.0)) == doctest::Approx(1.0));       // boundary
    CHECK(v.score(v2(0.3, -0.4)) == doctest::Approx(1.0));      // inside
    CHECK(v.score(v2(2.0, 0.0)) == doctest::Approx(std::exp(-1.0)).epsilon(1e-10));
    CHECK(v.sup_score() == doctest::Approx(1.0));
}

TEST_CASE("region verifier gradient matches finite differences") {
    Verifier v = region_verifier(v2(0.5, -0.5), 1.5, 2.0);
    for (Vec x : {v2(3.0, 1.0), v2(-2.0, 2.0), v2(0.5, 2.5)}) {
        Vec g = v.grad_log(x);
        Vec fd = fd_grad_log(v, x);
        CHECK((g - fd).norm() / std::max(1.0, fd.norm()) < 1e-4);
    }
}

TEST_CASE("mode verifier symmetry and the hand-computed logistic value") {
    auto prior = two_modes(0.5);
    SUBCASE("equidistant point scores 0.5^(1/temperature)") {
        for (double temp : {1.0, 2.0, 0.5}) {
            Verifier v = mode_verifier(prior, 1, temp);
            CHECK(v.score(v2(0.0, 1.7)) == doctest::Approx(std::pow(0.5, 1.0 / temp)).epsilon(1e-10));
        }
    }
    SUBCASE("target mean scores above one half") {
        Verifier v = mode_verifier(prior, 1, 1.0);
        CHECK(v.score(v2(2.0, 0.0)) > 0.5);
    }
    SUBCASE("x=(1,0) between modes at +-2 gives the logistic of the density gap") {
        Verifier v = mode_verifier(prior, 1, 1.0);
        // log N((1,0); (2,0), I) - log N((1,0); (-2,0), I) = (9 - 1)/2 = 4
        double expected = 1.0 / (1.0 + std::exp(-4.0));
        CHECK(v.score(v2(1.0, 0.0)) == doctest::Approx(expected).epsilon(1e-10));
        CHECK(expected == doctest::Approx(0.98201).epsilon(1e-4));
    }
}

TEST_CASE("mode verifier gradient matches finite differences") {
    auto prior = two_modes(0.35);
    for (double temp : {1.0, 2.0}) {
        Verifier v = mode_verifier(prior, 0, temp);
        for (Vec x : {v2(0.3, 0.4), v2(-1.0, 1.0), v2(2.2, -0.7)}) {
            Vec g = v.grad_log(x);
            Vec fd = fd_grad_log(v, x);
            CHECK((g - fd).norm() / std::max(1.0, fd.norm()) < 1e-4);
        }
    }
}

TEST_CASE("power verifier") {
    auto prior = two_modes(0.5);
    Verifier base = mode_verifier(prior, 1, 1.0);
    Vec x = v2(0.4, 0.2);
    CHECK(power_verifier(base, 0.0).score(x) == doctest::Approx(1.0));
    CHECK(power_verifier(base, 1.0).score(x) == doctest::Approx(base.score(x)));
    Verifier sq = power_verifier(base, 2.0);
    CHECK(sq.score(x) == doctest::Approx(base.score(x) * base.score(x)).epsilon(1e-10));
    CHECK((sq.grad_log(x) - 2.0 * base.grad_log(x)).norm() < 1e-12);

    Verifier half_base = Verifier([](const Vec&) { return std::log(0.5); }, nullptr);
    CHECK(power_verifier(half_base, 2.0).score(x) == doctest::Approx(0.25));
}

TEST_CASE("score equals exp(log_score)") {
    auto prior = two_modes(0.5);
    for (const Verifier& v : {region_verifier(Vec::Zero(2), 1.0, 3.0),
                              mode_verifier(prior, 0, 2.0)}) {
        Vec x = v2(1.3, -2.0);
        CHECK(v.score(x) == doctest::Approx(std::exp(v.log_eval(x))).epsilon(1e-10));
        CHECK(std::isfinite(v.log_eval(x)));
        CHECK(v.score(x) > 0.0);
    }
}

TEST_CASE("smoothed verifier reduces to the base when gamma_bar = 0") {
    Verifier base = region_verifier(Vec::Zero(2), 1.0, 1.0);
    SmoothedVerifier sv{base, 0.0, 4};
    RngStream rng(1);
    Vec x = v2(1.5, 0.2);
    CHECK(sv.eval(x, 0.7, rng) == doctest::Approx(base.score(x)));
    CHECK(smoothed_eval(sv, x, 0.7, rng) == doctest::Approx(base.score(x)));
    RngStream rng2(1);
    CHECK((sv.grad_log(x, 0.7, rng2) - base.grad_log(x)).norm() < 1e-12);
}

TEST_CASE("smoothing a constant verifier changes nothing") {
    Verifier c([](const Vec&) { return std::log(0.37); },
               [](const Vec& x) { return Vec::Zero(x.size()); });
    SmoothedVerifier sv{c, 2.0, 8};
    RngStream rng(2);
    CHECK(sv.eval(v2(0.3, 0.3), 0.9, rng) == doctest::Approx(0.37).epsilon(1e-12));
}

TEST_CASE("smoothing an exponential-linear verifier matches the Gaussian MGF") {
    // f = exp(a . x): E f(x + gamma sigma delta) = f(x) exp((gamma sigma |a|)^2 / 2)
    Vec a = v2(0.8, -0.5);
    Verifier lin([a](const Vec& x) { return a.dot(x); },
                 [a](const Vec&) { return a; }, 1e30);
    double gamma = 0.6, sigma = 0.9;
    SmoothedVerifier sv{lin, gamma, 4000};
    RngStream rng(3);
    Vec x = v2(0.1, 0.2);
    double got = sv.eval(x, sigma, rng);
    double expect = std::exp(a.dot(x)) * std::exp(std::pow(gamma * sigma * a.norm(), 2) / 2.0);
    CHECK(std::abs(got / expect - 1.0) < 0.05);
}

TEST_CASE("smoothed gradient matches finite differences of the smoothed objective") {
    Verifier base = region_verifier(Vec::Zero(2), 1.0, 1.0);
    SmoothedVerifier sv{base, 0.5, 16};
    Vec x = v2(1.8, -0.4);
    double sigma = 0.6, h = 1e-5;
    RngStream g_rng(9);
    Vec g = sv.grad_log(x, sigma, g_rng);
    Vec fd(2);
    for (int i = 0; i < 2; ++i) {
        Vec xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        RngStream r1(9), r2(9);  // same perturbations on both sides
        fd[i] = (std::log(sv.eval(xp, sigma, r1)) - std::log(sv.eval(xm, sigma, r2))) / (2 * h);
    }
    CHECK((g - fd).norm() / std::max(1.0, fd.norm()) < 1e-3);
}

TEST_CASE("call counters and differentiability guards") {
    Verifier v = region_verifier(Vec::Zero(2), 1.0, 1.0);
    v.reset_counters();
    v.score(v2(0, 0));
    v.log_eval(v2(1, 1));
    v.grad_log(v2(1, 1));
    CHECK(v.counters().evals == 2);
    CHECK(v.counters().grad_evals == 1);

    Verifier nd([](const Vec&) { return 0.0; }, nullptr);
    CHECK_FALSE(nd.differentiable());
    CHECK_THROWS_AS(nd.grad_log(v2(0, 0)), EvaluationError);
}

TEST_CASE("double verifier keeps the two call paths separate") {
    Verifier grad_v = region_verifier(Vec::Zero(2), 1.0, 1.0);
    Verifier sel_v([](const Vec&) { return -0.5; }, nullptr);
    DoubleVerifier dv(grad_v, sel_v);
    dv.gradient_verifier.reset_counters();
    dv.selection_verifier.reset_counters();
    dv.gradient_verifier.grad_log(v2(2, 0));
    dv.selection_verifier.log_eval(v2(2, 0));
    CHECK(dv.gradient_verifier.counters().grad_evals == 1);
    CHECK(dv.gradient_verifier.counters().evals == 0);
    CHECK(dv.selection_verifier.counters().evals == 1);
    CHECK(dv.selection_verifier.counters().grad_evals == 0);

    CHECK_THROWS_AS(DoubleVerifier(sel_v, grad_v), ConfigError);  // grad side must differentiate
}
