#include <doctest.h>

#include <cmath>

#include "diffsearch/errors.hpp"
#include "diffsearch/local_search.hpp"
#include "test_helpers.hpp"

using namespace diffsearch;
using namespace diffsearch::testutil;

TEST_CASE("guidance deltas vanish with zero strengths") {
    auto prior = standard_normal(2);
    NoiseSchedule sched = build_schedule(ScheduleKind::CosineVp, 10);
    Verifier v = region_verifier(Vec::Zero(2), 1.0, 1.0);
    GuidanceConfig cfg;  // rho_bar = mu_bar = 0
    RngStream rng(1);
    NfeLedger ledger;
    GuidanceDelta d = guidance_delta(*prior, sched, v, cfg, v2(2.0, 0.5), 5, rng, ledger);
    CHECK(d.delta_var.norm() == 0.0);
    CHECK(d.delta_mean.norm() == 0.0);
    CHECK(ledger.score_evals == 0);  // inactive guidance does no work
}

TEST_CASE("constant verifier yields zero mean guidance") {
    auto prior = standard_normal(2);
    NoiseSchedule sched = build_schedule(ScheduleKind::CosineVp, 10);
    Verifier c([](const Vec&) { return std::log(0.5); },
               [](const Vec& x) { return Vec::Zero(x.size()); });
    GuidanceConfig cfg;
    cfg.mu_bar = 2.0;
    cfg.n_iter = 1;
    RngStream rng(1);
    NfeLedger ledger;
    GuidanceDelta d = guidance_delta(*prior, sched, c, cfg, v2(1.0, 1.0), 5, rng, ledger);
    CHECK(d.delta_mean.norm() == 0.0);
}

TEST_CASE("variance guidance matches finite differences through the posterior map") {
    auto prior = standard_normal(2);
    NoiseSchedule sched = build_schedule(ScheduleKind::CosineVp, 10);
    Verifier v = region_verifier(v2(1.0, 0.0), 0.5, 1.0);
    GuidanceConfig cfg;
    cfg.rho_bar = 0.7;
    cfg.strength_schedule = StrengthSchedule::Constant;
    int t = 4;
    Vec x = v2(3.0, 1.0);
    RngStream rng(1);
    NfeLedger ledger;
    GuidanceDelta d = guidance_delta(*prior, sched, v, cfg, x, t, rng, ledger);

    // rho_t = rho_bar under the constant schedule
    double h = 1e-5;
    Vec fd(2);
    for (int i = 0; i < 2; ++i) {
        Vec xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        auto [x0p, Jp] = posterior_mean(*prior, sched, t, xp);
        auto [x0m, Jm] = posterior_mean(*prior, sched, t, xm);
        fd[i] = (v.log_eval(x0p) - v.log_eval(x0m)) / (2 * h);
    }
    CHECK((d.delta_var - 0.7 * fd).norm() / std::max(1e-8, (0.7 * fd).norm()) < 1e-3);
}

TEST_CASE("non-differentiable verifiers are rejected by guidance") {
    auto prior = standard_normal(2);
    NoiseSchedule sched = build_schedule(ScheduleKind::CosineVp, 10);
    Verifier nd([](const Vec&) { return 0.0; }, nullptr);
    GuidanceConfig cfg;
    cfg.rho_bar = 1.0;
    RngStream rng(1);
    NfeLedger ledger;
    CHECK_THROWS_AS(guidance_delta(*prior, sched, nd, cfg, v2(0, 0), 3, rng, ledger),
                    EvaluationError);
}

TEST_CASE("guided step with no recurrence and no guidance is the plain sampler step") {
    auto prior = two_modes(0.4);
    NoiseSchedule sched = build_schedule(ScheduleKind::CosineVp, 12);
    Verifier v = region_verifier(Vec::Zero(2), 1.0, 1.0);
    GuidanceConfig cfg;  // ddim, no guidance, n_recur = 0
    Particle p;
    p.x = v2(0.8, -0.2);
    p.t = 7;
    RngStream r1(9), r2(9);
    NfeLedger l1, l2;
    Particle guided = guided_recurrent_step(*prior, v, sched, cfg, p, r1, l1);
    Particle plain = ddim_step(sched, *prior, p, l2);
    CHECK((guided.x - plain.x).norm() < 1e-14);
    CHECK(guided.t == plain.t);
    CHECK(l1.score_evals == 1);
    CHECK(l1.verifier_grad_evals == 0);
}

TEST_CASE("recurrence without guidance preserves the standard normal marginal") {
    auto prior = standard_normal(1);
    NoiseSchedule sched = build_schedule(ScheduleKind::CosineVp, 10);
    Verifier v = region_verifier(Vec::Zero(1), 1.0, 1.0);
    GuidanceConfig cfg;
    cfg.n_recur = 5;
    cfg.sampler = SamplerKind::Ddpm;
    cfg.variance = VarianceChoice::Beta;  // the marginal-preserving choice
    int t = 6;
    RngStream rng(13);
    const int N = 10000;
    double sum = 0.0, sumsq = 0.0;
    NfeLedger ledger;
    for (int i = 0; i < N; ++i) {
        Particle p;
        p.x = Vec::Constant(1, rng.normal());  // exact q_t = N(0,1) sample
        p.t = t;
        RngStream r = rng.child(i + 1);
        Particle q = guided_recurrent_step(*prior, v, sched, cfg, p, r, ledger);
        sum += q.x[0];
        sumsq += q.x[0] * q.x[0];
    }
    double mean = sum / N, var = sumsq / N - mean * mean;
    CHECK(std::abs(mean) < 3.0 / std::sqrt(static_cast<double>(N)));
    CHECK(std::abs(var - 1.0) < 3.0 * std::sqrt(2.0 / N));
    CHECK(ledger.score_evals == static_cast<long>(N) * 6);  // n_recur + 1 per step
}

TEST_CASE("recurrence contracts far-out states toward the manifold") {
    auto prior = standard_normal(2);
    NoiseSchedule sched = build_schedule(ScheduleKind::CosineVp, 10);
    Verifier v = region_verifier(Vec::Zero(2), 1.0, 1.0);
    int t = 6;
    RngStream rng(3);
    const int N = 400;
    double prev = 10.0;
    Vec start = v2(10.0 / std::sqrt(2.0), 10.0 / std::sqrt(2.0));
    std::vector<Vec> states(N, start);
    for (int rec = 0; rec < 5; ++rec) {
        double acc = 0.0;
        for (int i = 0; i < N; ++i) {
            GuidanceConfig cfg;
            cfg.n_recur = 0;
            cfg.sampler = SamplerKind::Ddpm;
            Particle p;
            p.x = states[i];
            p.t = t;
            RngStream r = rng.child(rec * N + i + 1);
            NfeLedger ledger;
            Particle down = guided_recurrent_step(*prior, v, sched, cfg, p, r, ledger);
            Particle up = renoise(sched, down, t, r);
            states[i] = up.x;
            acc += up.x.norm();
        }
        acc /= N;
        CHECK(acc < prev);
        prev = acc;
    }
}

TEST_CASE("mean guidance with a quadratic verifier pulls toward the product mean") {
    // standard normal q_t (cosine) times f = exp(-k/2 |x - m|^2):
    // product is Gaussian with mean k m / (1 + k).
    auto prior = standard_normal(1);
    NoiseSchedule sched = build_schedule(ScheduleKind::CosineVp, 10);
    double k = 1.0, m = 2.0;
    Verifier quad([k, m](const Vec& x) { return -0.5 * k * (x[0] - m) * (x[0] - m); },
                  [k, m](const Vec& x) { return Vec::Constant(1, -k * (x[0] - m)); });
    GuidanceConfig cfg;
    cfg.mu_bar = 0.4;
    cfg.n_recur = 8;
    cfg.sampler = SamplerKind::Ddpm;
    cfg.strength_schedule = StrengthSchedule::Constant;
    int t = 3;
    RngStream rng(41);
    const int N = 2000;
    double guided_mean = 0.0, plain_mean = 0.0;
    NfeLedger ledger;
    Verifier none = region_verifier(Vec::Zero(1), 1.0, 1.0);
    for (int i = 0; i < N; ++i) {
        Particle p;
        p.x = Vec::Constant(1, rng.normal());
        p.t = t;
        RngStream r1 = rng.child(2 * i + 1), r2 = rng.child(2 * i + 2);
        GuidanceConfig plain_cfg = cfg;
        plain_cfg.mu_bar = 0.0;
        guided_mean += guided_recurrent_step(*prior, quad, sched, cfg, p, r1, ledger).x[0];
        plain_mean += guided_recurrent_step(*prior, none, sched, plain_cfg, p, r2, ledger).x[0];
    }
    guided_mean /= N;
    plain_mean /= N;
    double product_mean = k * m / (1.0 + k);
    CHECK(std::abs(plain_mean) < 0.1);
    CHECK(guided_mean > 0.3);  // moved decisively toward the tilted target
    CHECK(std::abs(guided_mean - product_mean) < std::abs(plain_mean - product_mean));
}

TEST_CASE("nfe accounting for a guided recurrent step") {
    auto prior = standard_normal(2);
    NoiseSchedule sched = build_schedule(ScheduleKind::CosineVp, 10);
    Verifier v = region_verifier(Vec::Zero(2), 1.0, 1.0);
    GuidanceConfig cfg;
    cfg.rho_bar = 0.5;
    cfg.mu_bar = 0.5;
    cfg.n_recur = 3;
    cfg.n_iter = 2;
    Particle p;
    p.x = v2(1.0, 1.0);
    p.t = 5;
    RngStream rng(1);
    NfeLedger ledger;
    guided_recurrent_step(*prior, v, sched, cfg, p, rng, ledger);
    CHECK(ledger.score_evals == cfg.n_recur + 1);
    CHECK(ledger.verifier_grad_evals == (cfg.n_recur + 1) * (cfg.n_iter + 1));
}

TEST_CASE("ddim recurrence coefficients obey 2a/b^2 = 2/(1+e^dl)") {
    NoiseSchedule sched = build_schedule(ScheduleKind::CosineVp, 100);
    for (int t : {10, 37, 60, 90}) {
        auto [a, b] = recurrence_coefficients(sched, t, SamplerKind::Ddim);
        double dl = sched.log_snr(t) - sched.log_snr(t - 1);
        CHECK(2.0 * a / (b * b) == doctest::Approx(2.0 / (1.0 + std::exp(dl))).epsilon(1e-10));
        CHECK(a > 0.0);
        CHECK(b > 0.0);
    }
    // dl = -0.01 gives 2a/b^2 = 2/(1+e^{-0.01}) ~ 1.00500
    CHECK(2.0 / (1.0 + std::exp(-0.01)) == doctest::Approx(1.00500).epsilon(1e-5));
}

TEST_CASE("ddpm recurrence coefficients are (beta, sqrt(var + beta))") {
    NoiseSchedule sched = build_schedule(ScheduleKind::CosineVp, 20);
    int t = 11;
    auto [a, b] = recurrence_coefficients(sched, t, SamplerKind::Ddpm, VarianceChoice::BetaTilde);
    CHECK(a == doctest::Approx(ddpm_beta(sched, t)));
    CHECK(b == doctest::Approx(std::sqrt(ddpm_beta_tilde(sched, t) + ddpm_beta(sched, t))));
}

TEST_CASE("recurrence coefficient deviation shrinks as T doubles") {
    double prev = -1.0;
    for (int T : {125, 250, 500, 1000}) {
        NoiseSchedule sched = build_schedule(ScheduleKind::CosineVp, T);
        double worst = 0.0;
        for (int t = T / 10; t <= 9 * T / 10; ++t) {
            auto [a, b] = recurrence_coefficients(sched, t, SamplerKind::Ddim);
            worst = std::max(worst, std::abs(2.0 * a / (b * b) - 1.0));
        }
        if (T == 1000) CHECK(worst <= 0.02);
        if (prev > 0.0) CHECK(worst < prev);
        prev = worst;
    }
}

TEST_CASE("langevin chain reaches the ULA-biased stationary variance") {
    auto prior = standard_normal(1);
    NoiseSchedule sched = build_schedule(ScheduleKind::CosineVp, 10);
    LangevinConfig cfg;
    cfg.eta = 0.1;
    cfg.n_steps = 1;
    RngStream rng(19);
    NfeLedger ledger;
    Vec x = Vec::Zero(1);
    const int burn = 1000, N = 100000;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < burn + N; ++i) {
        x = annealed_langevin_chain(*prior, sched, cfg, x, 5, rng, ledger);
        if (i >= burn) {
            sum += x[0];
            sumsq += x[0] * x[0];
        }
    }
    double mean = sum / N, var = sumsq / N - mean * mean;
    // single-chain estimate; autocorrelation inflates the error beyond iid SE
    CHECK(std::abs(var - 1.0 / (1.0 - cfg.eta / 2.0)) < 0.05);
    CHECK(ledger.score_evals == burn + N);
}

TEST_CASE("langevin with a Gaussian tilt converges to the product mean") {
    auto prior = standard_normal(1);
    NoiseSchedule sched = build_schedule(ScheduleKind::CosineVp, 10);
    double m = 1.5, s2 = 0.5;
    LangevinConfig cfg;
    cfg.eta = 0.05;
    cfg.n_steps = 20000;
    cfg.annealed_logf_grad = [m, s2](const Vec& x, int) {
        return Vec::Constant(1, -(x[0] - m) / s2);
    };
    RngStream rng(23);
    NfeLedger ledger;
    // run one long chain and average the tail
    Vec x = Vec::Zero(1);
    double acc = 0.0;
    int kept = 0;
    for (int i = 0; i < 200; ++i) {
        LangevinConfig step = cfg;
        step.n_steps = 100;
        x = annealed_langevin_chain(*prior, sched, step, x, 5, rng, ledger);
        if (i >= 50) {
            acc += x[0];
            ++kept;
        }
    }
    double product_mean = (m / s2) / (1.0 + 1.0 / s2);
    CHECK(std::abs(acc / kept - product_mean) < 0.05);
}

TEST_CASE("langevin divergence guard") {
    auto prior = standard_normal(1);
    NoiseSchedule sched = build_schedule(ScheduleKind::CosineVp, 10);
    LangevinConfig cfg;
    cfg.eta = 0.1;
    cfg.n_steps = 10000;
    cfg.annealed_logf_grad = [](const Vec& x, int) {
        return Vec::Constant(1, x[0] * 10.0);  // explosive anti-gradient
    };
    RngStream rng(2);
    NfeLedger ledger;
    CHECK_THROWS_AS(annealed_langevin_chain(*prior, sched, cfg, Vec::Constant(1, 1.0), 5,
                                            rng, ledger),
                    NumericalError);
}
