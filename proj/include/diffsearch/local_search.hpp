#pragma once

#include <functional>
#include <utility>

#include "diffsearch/prior.hpp"
#include "diffsearch/sampler.hpp"
#include "diffsearch/verifier.hpp"

namespace diffsearch {

struct GuidanceConfig {
    double rho_bar = 0.0;    // variance-guidance strength
    double mu_bar = 0.0;     // mean-guidance strength
    double gamma_bar = 0.0;  // smoothing scale; 0 disables MC smoothing
    int n_mc = 4;            // antithetic pairs for smoothing
    int n_recur = 0;
    int n_iter = 1;
    StrengthSchedule strength_schedule = StrengthSchedule::Increase;
    SamplerKind sampler = SamplerKind::Ddim;
    VarianceChoice variance = VarianceChoice::BetaTilde;

    bool guidance_active() const { return rho_bar != 0.0 || mu_bar != 0.0; }
};

struct GuidanceDelta {
    Vec delta_var;
    Vec delta_mean;
};

// Delta_var = rho_t J^T grad log f~(x0|t); Delta_mean accumulated n_iter
// times as mu_t alpha_t grad log f~(x0|t + Delta_mean). Charges one score
// eval and n_iter + 1 verifier-gradient evals.
GuidanceDelta guidance_delta(const ScorePrior& prior, const NoiseSchedule& sched,
                             const Verifier& verifier, const GuidanceConfig& config,
                             const Vec& x_t, int t, RngStream& rng, NfeLedger& ledger);

// One guided transition t -> t-1 with n_recur recurrence iterations
// (denoise, add guidance, renoise) before the final emitted denoise.
Particle guided_recurrent_step(const ScorePrior& prior, const Verifier& verifier,
                               const NoiseSchedule& sched, const GuidanceConfig& config,
                               const Particle& p, RngStream& rng, NfeLedger& ledger);

// Coefficients of the recurrence-without-guidance update
// x <- x + a_t s(x, t) + b_t eps.
std::pair<double, double> recurrence_coefficients(const NoiseSchedule& sched, int t,
                                                  SamplerKind kind,
                                                  VarianceChoice variance
                                                  = VarianceChoice::BetaTilde);

struct LangevinConfig {
    double eta = 0.01;
    int n_steps = 100;
    // Annealed verifier gradient grad log f^_t(x); null means f^ = 1.
    std::function<Vec(const Vec&, int)> annealed_logf_grad;
};

// ULA at a fixed noise level: x <- x + eta (score + grad log f^_t) + sqrt(2 eta) eps.
Vec annealed_langevin_chain(const ScorePrior& prior, const NoiseSchedule& sched,
                            const LangevinConfig& config, const Vec& x_init, int t,
                            RngStream& rng, NfeLedger& ledger);

} // namespace diffsearch
