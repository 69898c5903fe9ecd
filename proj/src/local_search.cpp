#include "diffsearch/local_search.hpp"

#include <cmath>

#include "diffsearch/errors.hpp"

namespace diffsearch {

namespace {

struct StepContext {
    Vec score;
    Vec x0;
    Mat jac;        // only filled when rho != 0
    bool have_jac = false;
};

StepContext eval_score_and_posterior(const ScorePrior& prior, const NoiseSchedule& sched,
                                     const Vec& x, int t, bool need_jac,
                                     NfeLedger& ledger) {
    StepContext ctx;
    double a = sched.alpha[t], s = sched.sigma[t];
    ctx.score = noisy_score(prior, sched, t, x);
    ++ledger.score_evals;
    ctx.x0 = (x + s * s * ctx.score) / a;
    if (need_jac) {
        int d = prior.dim();
        ctx.jac = (Mat::Identity(d, d) + s * s * prior.marginal_score_jacobian(a, s, x)) / a;
        ctx.have_jac = true;
    }
    return ctx;
}

GuidanceDelta compute_deltas(const ScorePrior& prior, const NoiseSchedule& sched,
                             const Verifier& verifier, const GuidanceConfig& config,
                             const StepContext& ctx, int t, RngStream& smooth_rng,
                             NfeLedger& ledger) {
    int d = prior.dim();
    GuidanceDelta delta{Vec::Zero(d), Vec::Zero(d)};
    if (!config.guidance_active()) return delta;
    if (!verifier.differentiable())
        throw EvaluationError("local search requires a differentiable verifier");

    std::vector<double> w = strength_weights(sched, config.strength_schedule);
    double rho_t = w[t - 1] * config.rho_bar;
    double mu_t = w[t - 1] * config.mu_bar;
    double sigma_t = sched.sigma[t];
    double alpha_t = sched.alpha[t];

    SmoothedVerifier sv{verifier, config.gamma_bar, config.n_mc};

    smooth_rng.reset_counter();
    Vec g0 = sv.grad_log(ctx.x0, sigma_t, smooth_rng);
    ++ledger.verifier_grad_evals;
    if (rho_t != 0.0) {
        if (!ctx.have_jac) throw InternalError("guidance: missing posterior Jacobian");
        delta.delta_var = rho_t * ctx.jac.transpose() * g0;
    }

    for (int i = 0; i < config.n_iter; ++i) {
        smooth_rng.reset_counter();
        Vec g = sv.grad_log(ctx.x0 + delta.delta_mean, sigma_t, smooth_rng);
        ++ledger.verifier_grad_evals;
        delta.delta_mean += mu_t * alpha_t * g;
    }
    return delta;
}

Vec sampler_step_from_score(const NoiseSchedule& sched, const GuidanceConfig& config,
                            const Vec& x, const Vec& score, int t, RngStream& rng) {
    double at = sched.alpha[t], st = sched.sigma[t];
    double ap = sched.alpha[t - 1], sp = sched.sigma[t - 1];
    if (config.sampler == SamplerKind::Ddim) {
        Vec eps_hat = -st * score;
        return (ap / at) * (x - st * eps_hat) + sp * eps_hat;
    }
    double var = config.variance == VarianceChoice::Beta ? ddpm_beta(sched, t)
                                                         : ddpm_beta_tilde(sched, t);
    return (ap / at) * x + (st * st * ap / at - sp * sp * at / ap) * score
         + std::sqrt(var) * rng.normal_vec(static_cast<int>(x.size()));
}

} // namespace

GuidanceDelta guidance_delta(const ScorePrior& prior, const NoiseSchedule& sched,
                             const Verifier& verifier, const GuidanceConfig& config,
                             const Vec& x_t, int t, RngStream& rng, NfeLedger& ledger) {
    if (t < 1 || t > sched.T) throw ArgumentError("guidance_delta: t out of range");
    if (config.n_iter < 1) throw ConfigError("local.n_iter: must be >= 1");
    if (!config.guidance_active())
        return {Vec::Zero(prior.dim()), Vec::Zero(prior.dim())};
    StepContext ctx = eval_score_and_posterior(prior, sched, x_t, t,
                                               config.rho_bar != 0.0, ledger);
    RngStream smooth_rng = rng.child(0x500DE0ULL + static_cast<std::uint64_t>(t));
    return compute_deltas(prior, sched, verifier, config, ctx, t, smooth_rng, ledger);
}

Particle guided_recurrent_step(const ScorePrior& prior, const Verifier& verifier,
                               const NoiseSchedule& sched, const GuidanceConfig& config,
                               const Particle& p, RngStream& rng, NfeLedger& ledger) {
    if (p.t < 1) throw ArgumentError("guided_recurrent_step: particle already at t = 0");
    if (config.n_recur < 0) throw ConfigError("local.n_recur: must be >= 0");
    if (config.n_iter < 1) throw ConfigError("local.n_iter: must be >= 1");

    int t = p.t;
    double at = sched.alpha[t];
    double ap = sched.alpha[t - 1];

    Particle cur = p;
    RngStream smooth_rng = rng.child(0x510000ULL + static_cast<std::uint64_t>(t));

    for (int i = 0; i <= config.n_recur; ++i) {
        StepContext ctx = eval_score_and_posterior(
            prior, sched, cur.x, t,
            config.guidance_active() && config.rho_bar != 0.0, ledger);
        GuidanceDelta delta = compute_deltas(prior, sched, verifier, config, ctx, t,
                                             smooth_rng, ledger);
        Vec x_prev = sampler_step_from_score(sched, config, cur.x, ctx.score, t, rng)
                   + (ap / at) * (delta.delta_var + delta.delta_mean);

        if (i < config.n_recur) {
            ForwardKernelParams fk = forward_kernel(sched, t - 1, t);
            cur.x = fk.mean_coeff * x_prev
                  + std::sqrt(fk.variance) * rng.normal_vec(prior.dim());
        } else {
            cur.x = x_prev;
        }
    }

    cur.t = t - 1;
    cur.score_cache.reset();
    cur.nfe_charged += config.n_recur + 1;
    return cur;
}

std::pair<double, double> recurrence_coefficients(const NoiseSchedule& sched, int t,
                                                  SamplerKind kind,
                                                  VarianceChoice variance) {
    if (t < 1 || t > sched.T) throw ArgumentError("recurrence_coefficients: t out of range");
    if (kind == SamplerKind::Ddim) {
        double dl = sched.log_snr(t) - (t >= 2 ? sched.log_snr(t - 1)
                                               : std::log(sched.alpha[0] / sched.sigma[0]));
        // t = 1 has lambda_0 = +inf, so e^{dl} = 0 there.
        double e1 = t >= 2 ? std::exp(dl) : 0.0;
        double st = sched.sigma[t];
        double a = st * st * (1.0 - e1);
        double b = st * std::sqrt(std::max(0.0, 1.0 - e1 * e1));
        return {a, b};
    }
    double beta = ddpm_beta(sched, t);
    double sigma_theta = variance == VarianceChoice::Beta ? beta : ddpm_beta_tilde(sched, t);
    return {beta, std::sqrt(sigma_theta + beta)};
}

Vec annealed_langevin_chain(const ScorePrior& prior, const NoiseSchedule& sched,
                            const LangevinConfig& config, const Vec& x_init, int t,
                            RngStream& rng, NfeLedger& ledger) {
    if (!(config.eta > 0.0)) throw ConfigError("local.langevin.eta: must be positive");
    Vec x = x_init;
    double step = config.eta;
    double noise_scale = std::sqrt(2.0 * config.eta);
    for (int i = 0; i < config.n_steps; ++i) {
        Vec drift = noisy_score(prior, sched, t, x);
        ++ledger.score_evals;
        if (config.annealed_logf_grad) drift += config.annealed_logf_grad(x, t);
        x += step * drift + noise_scale * rng.normal_vec(static_cast<int>(x.size()));
        if (x.norm() > 1e6)
            throw NumericalError("annealed_langevin_chain: divergence detected");
    }
    return x;
}

} // namespace diffsearch
