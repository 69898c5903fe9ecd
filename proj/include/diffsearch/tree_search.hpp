#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "diffsearch/local_search.hpp"
#include "diffsearch/sampler.hpp"
#include "diffsearch/verifier.hpp"

namespace diffsearch {

// One reverse transition t -> t-1; the tree searches are agnostic to whether
// it is plain DDIM/DDPM or a guided recurrent step.
using StepFn = std::function<Particle(const Particle&, RngStream&, NfeLedger&)>;

StepFn make_plain_step(const ScorePrior& prior, const NoiseSchedule& sched,
                       SamplerKind kind, VarianceChoice variance = VarianceChoice::BetaTilde);

StepFn make_guided_step(const ScorePrior& prior, const Verifier& verifier,
                        const NoiseSchedule& sched, const GuidanceConfig& config);

enum class BfsMode { Resample, Prune };
enum class Rounding { PaperRound, LargestRemainder };

BfsMode bfs_mode_from_string(const std::string& s);
Rounding rounding_from_string(const std::string& s);

struct BfsConfig {
    int K = 1;
    std::vector<int> eval_steps;       // subset of [1, T-1]
    double tau_bar = 1.0;
    StrengthSchedule tau_schedule = StrengthSchedule::Increase;
    BfsMode mode = BfsMode::Resample;
    Rounding rounding = Rounding::LargestRemainder;
    // Optional hard NFE cap; allocations are clamped so the sweep can always
    // finish within it. step_cost is the NFE charged by one step_fn call.
    double nfe_cap = std::numeric_limits<double>::infinity();
    double step_cost = 1.0;
};

struct DfsConfig {
    int B = 0;             // backtrack budget
    int delta_T = 1;       // backtrack depth
    double delta_bar = 0.0;
    StrengthSchedule threshold_schedule = StrengthSchedule::Constant;
    std::vector<int> eval_steps;
    double nfe_cap = std::numeric_limits<double>::infinity();
    double step_cost = 1.0;
};

struct SearchReport {
    Vec best_sample;
    double best_score = 0.0;
    std::vector<std::pair<Vec, double>> all_terminal;
    NfeLedger nfe;
    int backtracks_used = 0;
    long denoise_steps = 0;
    std::vector<int> particles_per_level;
    std::uint64_t seed = 0;
    bool degraded = false;
    bool duplicate_children_warning = false;
};

// Children counts for one evaluation step. Scores are raw verifier values;
// powering by tau_t happens in log space.
std::vector<int> bfs_allocate(const std::vector<double>& scores, double tau_t,
                              BfsMode mode, Rounding rounding);

SearchReport best_of_n(const ScorePrior& prior, const Verifier& selection,
                       const NoiseSchedule& sched, const StepFn& step, int K,
                       RngStream rng, NfeLedger ledger = {});

SearchReport bfs_search(const ScorePrior& prior, const Verifier& selection,
                        const NoiseSchedule& sched, const StepFn& step,
                        const BfsConfig& config, RngStream rng, NfeLedger ledger = {});

SearchReport dfs_search(const ScorePrior& prior, const Verifier& selection,
                        const NoiseSchedule& sched, const StepFn& step,
                        const DfsConfig& config, RngStream rng, NfeLedger ledger = {});

} // namespace diffsearch
