#include "diffsearch/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "diffsearch/errors.hpp"

namespace diffsearch {

ScheduleKind schedule_kind_from_string(const std::string& s) {
    if (s == "cosine-vp") return ScheduleKind::CosineVp;
    if (s == "linear-interpolant") return ScheduleKind::LinearInterpolant;
    throw ConfigError("schedule.kind: unknown kind '" + s + "'");
}

std::string to_string(ScheduleKind k) {
    return k == ScheduleKind::CosineVp ? "cosine-vp" : "linear-interpolant";
}

double NoiseSchedule::log_snr(int t) const {
    if (t < 1 || t > T) throw ArgumentError("log_snr: t out of range");
    return std::log(alpha[t] / sigma[t]);
}

NoiseSchedule build_schedule(ScheduleKind kind, int T, double alpha_floor) {
    if (T < 2) throw ConfigError("schedule.steps: T must be >= 2");
    if (!(alpha_floor > 0.0 && alpha_floor <= 0.01))
        throw ConfigError("schedule.alpha_floor: must lie in (0, 0.01]");

    NoiseSchedule sched;
    sched.T = T;
    sched.kind = kind;
    sched.alpha_floor = alpha_floor;
    sched.alpha.resize(T + 1);
    sched.sigma.resize(T + 1);

    for (int t = 0; t <= T; ++t) {
        double u = static_cast<double>(t) / T;
        if (kind == ScheduleKind::CosineVp) {
            sched.alpha[t] = std::cos(std::numbers::pi * u / 2.0);
            sched.sigma[t] = std::sin(std::numbers::pi * u / 2.0);
        } else {
            sched.alpha[t] = 1.0 - u;
            sched.sigma[t] = u;
        }
    }
    sched.alpha[0] = 1.0;
    sched.sigma[0] = 0.0;
    sched.sigma[T] = 1.0;
    sched.alpha[T] = std::max(sched.alpha[T], alpha_floor);

    // The floor only makes sense while it stays below alpha_{T-1}; otherwise
    // the table would no longer be strictly decreasing.
    if (sched.alpha[T] >= sched.alpha[T - 1])
        throw ConfigError("schedule.alpha_floor: floor >= alpha_{T-1}; "
                          "decrease alpha_floor or T");
    return sched;
}

ForwardKernelParams forward_kernel(const NoiseSchedule& sched, int s, int t) {
    if (s >= t) throw ArgumentError("forward_kernel: requires s < t");
    if (s < 0 || t > sched.T) throw ArgumentError("forward_kernel: timestep out of range");
    ForwardKernelParams p;
    p.s = s;
    p.t = t;
    p.mean_coeff = sched.alpha[t] / sched.alpha[s];
    double v = sched.sigma[t] * sched.sigma[t]
             - p.mean_coeff * p.mean_coeff * sched.sigma[s] * sched.sigma[s];
    p.variance = std::max(v, 0.0);
    return p;
}

std::vector<double> increase_schedule_weights(const NoiseSchedule& sched) {
    std::vector<double> w(sched.T);
    double sum = 0.0;
    for (int t = 1; t <= sched.T; ++t) {
        w[t - 1] = sched.alpha[t] / sched.alpha[t - 1];
        sum += w[t - 1];
    }
    for (double& x : w) x *= sched.T / sum;
    return w;
}

std::vector<double> constant_schedule_weights(const NoiseSchedule& sched) {
    return std::vector<double>(sched.T, 1.0);
}

StrengthSchedule strength_schedule_from_string(const std::string& s) {
    if (s == "increase") return StrengthSchedule::Increase;
    if (s == "constant") return StrengthSchedule::Constant;
    throw ConfigError("strength schedule: unknown kind '" + s + "'");
}

std::string to_string(StrengthSchedule s) {
    return s == StrengthSchedule::Increase ? "increase" : "constant";
}

std::vector<double> strength_weights(const NoiseSchedule& sched, StrengthSchedule s) {
    return s == StrengthSchedule::Increase ? increase_schedule_weights(sched)
                                           : constant_schedule_weights(sched);
}

} // namespace diffsearch
