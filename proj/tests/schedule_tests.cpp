#include <doctest.h>

#include <cmath>
#include <tuple>

#include "diffsearch/errors.hpp"
#include "diffsearch/schedule.hpp"

using namespace diffsearch;

TEST_CASE("cosine schedule hits known values") {
    NoiseSchedule s = build_schedule(ScheduleKind::CosineVp, 4);
    CHECK(s.alpha[2] == doctest::Approx(std::sqrt(2.0) / 2.0).epsilon(1e-12));
    CHECK(s.sigma[2] == doctest::Approx(std::sqrt(2.0) / 2.0).epsilon(1e-12));
    CHECK(s.alpha[1] == doctest::Approx(0.9238795325112867).epsilon(1e-10));
    CHECK(s.sigma[1] == doctest::Approx(0.3826834323650898).epsilon(1e-10));
    CHECK(s.alpha[1] * s.alpha[1] + s.sigma[1] * s.sigma[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("linear schedule midpoint") {
    NoiseSchedule s = build_schedule(ScheduleKind::LinearInterpolant, 10);
    CHECK(s.alpha[5] == doctest::Approx(0.5));
    CHECK(s.sigma[5] == doctest::Approx(0.5));
}

TEST_CASE("schedule boundary and monotonicity invariants") {
    for (ScheduleKind kind : {ScheduleKind::CosineVp, ScheduleKind::LinearInterpolant}) {
        NoiseSchedule s = build_schedule(kind, 50);
        CHECK(s.alpha[0] == 1.0);
        CHECK(s.sigma[0] == 0.0);
        CHECK(s.sigma[50] == 1.0);
        CHECK(s.alpha[50] >= s.alpha_floor);
        for (int t = 1; t <= 50; ++t) {
            CHECK(s.alpha[t] < s.alpha[t - 1]);
            CHECK(s.sigma[t] > s.sigma[t - 1]);
        }
        for (int t = 2; t <= 50; ++t)
            CHECK(s.log_snr(t) < s.log_snr(t - 1));
    }
}

TEST_CASE("cosine alpha^2 + sigma^2 = 1 away from the terminal clamp") {
    NoiseSchedule s = build_schedule(ScheduleKind::CosineVp, 100);
    for (int t = 0; t < 100; ++t)
        CHECK(s.alpha[t] * s.alpha[t] + s.sigma[t] * s.sigma[t]
              == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("schedule construction rejects bad parameters") {
    CHECK_THROWS_AS(build_schedule(ScheduleKind::CosineVp, 1), ConfigError);
    CHECK_THROWS_AS(build_schedule(ScheduleKind::CosineVp, 10, 0.0), ConfigError);
    CHECK_THROWS_AS(build_schedule(ScheduleKind::CosineVp, 10, 0.5), ConfigError);
    CHECK_THROWS_AS(build_schedule(ScheduleKind::CosineVp, 10, -1e-3), ConfigError);
}

TEST_CASE("forward kernel from t=0 reduces to the marginal interpolant") {
    NoiseSchedule s = build_schedule(ScheduleKind::CosineVp, 20);
    for (int t = 1; t <= 20; ++t) {
        ForwardKernelParams fk = forward_kernel(s, 0, t);
        CHECK(fk.mean_coeff == doctest::Approx(s.alpha[t]).epsilon(1e-12));
        CHECK(fk.variance == doctest::Approx(s.sigma[t] * s.sigma[t]).epsilon(1e-12));
    }
}

TEST_CASE("forward kernel matches the hand-computed cosine T=4 transition") {
    NoiseSchedule s = build_schedule(ScheduleKind::CosineVp, 4);
    ForwardKernelParams fk = forward_kernel(s, 2, 3);
    CHECK(fk.mean_coeff == doctest::Approx(0.5411961001461971).epsilon(1e-6));
    CHECK(fk.variance == doctest::Approx(0.7071067811865476).epsilon(1e-6));
}

TEST_CASE("forward kernel variance vanishes for adjacent late-grid steps") {
    NoiseSchedule s = build_schedule(ScheduleKind::CosineVp, 4000, 1e-5);
    ForwardKernelParams fk = forward_kernel(s, 2000, 2001);
    // midpoint adjacent-step variance is ~ pi/T for the cosine schedule
    CHECK(fk.variance == doctest::Approx(M_PI / 4000.0).epsilon(0.01));
    NoiseSchedule s2 = build_schedule(ScheduleKind::CosineVp, 8000, 1e-5);
    CHECK(forward_kernel(s2, 4000, 4001).variance
          == doctest::Approx(fk.variance / 2.0).epsilon(0.01));
    CHECK(fk.variance >= 0.0);
}

TEST_CASE("forward kernel rejects s >= t") {
    NoiseSchedule s = build_schedule(ScheduleKind::CosineVp, 10);
    CHECK_THROWS_AS(forward_kernel(s, 3, 3), ArgumentError);
    CHECK_THROWS_AS(forward_kernel(s, 5, 3), ArgumentError);
}

TEST_CASE("forward kernel composes") {
    for (ScheduleKind kind : {ScheduleKind::CosineVp, ScheduleKind::LinearInterpolant}) {
        NoiseSchedule s = build_schedule(kind, 30);
        using Triple = std::tuple<int, int, int>;
        for (auto [r, m, t] : {Triple{0, 7, 19}, Triple{3, 10, 29}, Triple{1, 2, 3}}) {
            ForwardKernelParams a = forward_kernel(s, r, m);
            ForwardKernelParams b = forward_kernel(s, m, t);
            ForwardKernelParams c = forward_kernel(s, r, t);
            CHECK(a.mean_coeff * b.mean_coeff == doctest::Approx(c.mean_coeff).epsilon(1e-10));
            CHECK(b.mean_coeff * b.mean_coeff * a.variance + b.variance
                  == doctest::Approx(c.variance).epsilon(1e-10));
        }
    }
}

TEST_CASE("increase weights normalize to T and favor small t") {
    NoiseSchedule s = build_schedule(ScheduleKind::CosineVp, 4);
    std::vector<double> w = increase_schedule_weights(s);
    REQUIRE(w.size() == 4);
    double sum = 0.0;
    for (double x : w) sum += x;
    CHECK(sum == doctest::Approx(4.0).epsilon(1e-10));
    CHECK(w[3] < w[0]);  // s_4 < s_1

    // direct check against the defining formula
    double total_ratio = 0.0;
    for (int t = 1; t <= 4; ++t) total_ratio += s.alpha[t] / s.alpha[t - 1];
    for (int t = 1; t <= 4; ++t)
        CHECK(w[t - 1] == doctest::Approx(4.0 * (s.alpha[t] / s.alpha[t - 1]) / total_ratio));
}

TEST_CASE("constant weights are all one") {
    NoiseSchedule s = build_schedule(ScheduleKind::LinearInterpolant, 12);
    for (double w : constant_schedule_weights(s)) CHECK(w == 1.0);
    for (double w : strength_weights(s, StrengthSchedule::Constant)) CHECK(w == 1.0);
}

TEST_CASE("string conversions round-trip") {
    CHECK(schedule_kind_from_string("cosine-vp") == ScheduleKind::CosineVp);
    CHECK(schedule_kind_from_string("linear-interpolant") == ScheduleKind::LinearInterpolant);
    CHECK(to_string(ScheduleKind::CosineVp) == "cosine-vp");
    CHECK(strength_schedule_from_string("increase") == StrengthSchedule::Increase);
    CHECK(strength_schedule_from_string("constant") == StrengthSchedule::Constant);
    CHECK_THROWS_AS(schedule_kind_from_string("bogus"), ConfigError);
    CHECK_THROWS_AS(strength_schedule_from_string("bogus"), ConfigError);
}

TEST_CASE("SNR is strictly decreasing") {
    NoiseSchedule s = build_schedule(ScheduleKind::LinearInterpolant, 40);
    for (int t = 2; t <= 40; ++t)
        CHECK(s.alpha[t] / s.sigma[t] < s.alpha[t - 1] / s.sigma[t - 1]);
}
