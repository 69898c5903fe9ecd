#include "diffsearch/sampler.hpp"

#include <cmath>

#include "diffsearch/errors.hpp"

namespace diffsearch {

SamplerKind sampler_kind_from_string(const std::string& s) {
    if (s == "ddim") return SamplerKind::Ddim;
    if (s == "ddpm") return SamplerKind::Ddpm;
    throw ConfigError("sampler.kind: unknown kind '" + s + "'");
}

VarianceChoice variance_choice_from_string(const std::string& s) {
    if (s == "beta") return VarianceChoice::Beta;
    if (s == "beta_tilde") return VarianceChoice::BetaTilde;
    throw ConfigError("sampler.variance: unknown choice '" + s + "'");
}

Particle init_particle(const NoiseSchedule& sched, int dim, RngStream& rng) {
    Particle p;
    p.x = rng.normal_vec(dim);
    p.t = sched.T;
    p.rng_stream = rng.key();
    return p;
}

Particle ddim_step(const NoiseSchedule& sched, const ScorePrior& prior,
                   const Particle& p, NfeLedger& ledger) {
    if (p.t < 1) throw ArgumentError("ddim_step: particle already at t = 0");
    int t = p.t;
    double at = sched.alpha[t], st = sched.sigma[t];
    double ap = sched.alpha[t - 1], sp = sched.sigma[t - 1];

    Vec eps_hat = -st * noisy_score(prior, sched, t, p.x);
    ++ledger.score_evals;

    Particle out = p;
    out.x = (ap / at) * (p.x - st * eps_hat) + sp * eps_hat;
    out.t = t - 1;
    out.score_cache.reset();
    ++out.nfe_charged;
    return out;
}

double ddpm_beta(const NoiseSchedule& sched, int t) {
    if (t < 1 || t > sched.T) throw ArgumentError("ddpm_beta: t out of range");
    return forward_kernel(sched, t - 1, t).variance;
}

double ddpm_beta_tilde(const NoiseSchedule& sched, int t) {
    double st = sched.sigma[t];
    double sp = sched.sigma[t - 1];
    return (sp * sp) / (st * st) * ddpm_beta(sched, t);
}

Particle ddpm_step(const NoiseSchedule& sched, const ScorePrior& prior,
                   const Particle& p, VarianceChoice variance, RngStream& rng,
                   NfeLedger& ledger) {
    if (p.t < 1) throw ArgumentError("ddpm_step: particle already at t = 0");
    int t = p.t;
    double at = sched.alpha[t], st = sched.sigma[t];
    double ap = sched.alpha[t - 1], sp = sched.sigma[t - 1];

    Vec s = noisy_score(prior, sched, t, p.x);
    ++ledger.score_evals;

    double var = variance == VarianceChoice::Beta ? ddpm_beta(sched, t)
                                                  : ddpm_beta_tilde(sched, t);
    if (var < 0.0) throw InternalError("ddpm_step: negative posterior variance");

    Particle out = p;
    out.x = (ap / at) * p.x + (st * st * ap / at - sp * sp * at / ap) * s
          + std::sqrt(var) * rng.normal_vec(static_cast<int>(p.x.size()));
    out.t = t - 1;
    out.score_cache.reset();
    ++out.nfe_charged;
    return out;
}

Particle renoise(const NoiseSchedule& sched, const Particle& p, int t_next,
                 RngStream& rng) {
    if (t_next <= p.t || t_next > sched.T)
        throw ArgumentError("renoise: t_next must lie in (t, T]");
    Particle out = p;
    out.t = t_next;
    out.score_cache.reset();
    if (t_next == sched.T) {
        // Fresh noise at the top of the ladder sidesteps the nonzero
        // terminal SNR of the clamped schedule.
        out.x = rng.normal_vec(static_cast<int>(p.x.size()));
        return out;
    }
    ForwardKernelParams fk = forward_kernel(sched, p.t, t_next);
    out.x = fk.mean_coeff * p.x
          + std::sqrt(fk.variance) * rng.normal_vec(static_cast<int>(p.x.size()));
    return out;
}

} // namespace diffsearch
