#pragma once

#include <string>
#include <vector>

namespace diffsearch {

enum class ScheduleKind { CosineVp, LinearInterpolant };

ScheduleKind schedule_kind_from_string(const std::string& s);
std::string to_string(ScheduleKind k);

// Discrete noise schedule on the integer grid t = 0..T.
// alpha[0] = 1, sigma[0] = 0, sigma[T] = 1; alpha[T] is clamped to
// alpha_floor so that x0|t = (x + sigma^2 s)/alpha never divides by zero.
struct NoiseSchedule {
    int T = 0;
    std::vector<double> alpha;  // size T+1
    std::vector<double> sigma;  // size T+1
    ScheduleKind kind = ScheduleKind::CosineVp;
    double alpha_floor = 1e-3;

    // log-SNR, lambda_t = log(alpha_t / sigma_t); only defined for t >= 1.
    double log_snr(int t) const;
};

struct ForwardKernelParams {
    double mean_coeff = 0.0;  // alpha_t / alpha_s
    double variance = 0.0;    // alpha_t^2 (sigma_t^2/alpha_t^2 - sigma_s^2/alpha_s^2)
    int s = 0;
    int t = 0;
};

NoiseSchedule build_schedule(ScheduleKind kind, int T, double alpha_floor = 1e-3);

ForwardKernelParams forward_kernel(const NoiseSchedule& sched, int s, int t);

// Per-timestep strength weights s_t, t = 1..T (returned as a vector of size
// T indexed by t-1). 'increase' normalizes the step ratios alpha_t/alpha_{t-1}
// so that the weights sum to T and grow as t decreases.
std::vector<double> increase_schedule_weights(const NoiseSchedule& sched);
std::vector<double> constant_schedule_weights(const NoiseSchedule& sched);

enum class StrengthSchedule { Increase, Constant };

StrengthSchedule strength_schedule_from_string(const std::string& s);
std::string to_string(StrengthSchedule s);

std::vector<double> strength_weights(const NoiseSchedule& sched, StrengthSchedule s);

} // namespace diffsearch
