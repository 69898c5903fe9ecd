#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>

#include "diffsearch/prior.hpp"
#include "diffsearch/rng.hpp"
#include "diffsearch/schedule.hpp"

namespace diffsearch {

struct NfeLedger {
    long score_evals = 0;
    long verifier_evals = 0;
    long verifier_grad_evals = 0;
    double w_verifier = 0.0;
    double w_verifier_grad = 0.0;

    double total() const {
        return static_cast<double>(score_evals) + w_verifier * verifier_evals
             + w_verifier_grad * verifier_grad_evals;
    }

    NfeLedger& operator+=(const NfeLedger& o) {
        score_evals += o.score_evals;
        verifier_evals += o.verifier_evals;
        verifier_grad_evals += o.verifier_grad_evals;
        return *this;
    }
};

// One node of the search tree: a sample at a noise level, plus enough
// bookkeeping to replay it deterministically.
struct Particle {
    Vec x;
    int t = 0;
    std::optional<std::pair<int, double>> score_cache;  // (t_eval, f value)
    std::uint64_t rng_stream = 0;
    std::uint64_t parent_id = 0;
    int birth_step = 0;
    long nfe_charged = 0;
};

enum class SamplerKind { Ddim, Ddpm };
enum class VarianceChoice { Beta, BetaTilde };

SamplerKind sampler_kind_from_string(const std::string& s);
VarianceChoice variance_choice_from_string(const std::string& s);

// Fresh particle at t = T with x ~ N(0, I).
Particle init_particle(const NoiseSchedule& sched, int dim, RngStream& rng);

Particle ddim_step(const NoiseSchedule& sched, const ScorePrior& prior,
                   const Particle& p, NfeLedger& ledger);

Particle ddpm_step(const NoiseSchedule& sched, const ScorePrior& prior,
                   const Particle& p, VarianceChoice variance, RngStream& rng,
                   NfeLedger& ledger);

// DDPM posterior variances for the step t -> t-1.
double ddpm_beta(const NoiseSchedule& sched, int t);
double ddpm_beta_tilde(const NoiseSchedule& sched, int t);

// Push a particle back up the noise ladder with the forward kernel. A jump
// all the way to T draws fresh Gaussian noise instead. Charges no score evals.
Particle renoise(const NoiseSchedule& sched, const Particle& p, int t_next,
                 RngStream& rng);

} // namespace diffsearch
