#include "diffsearch/tree_search.hpp"

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <map>
#include <numeric>

#include "diffsearch/errors.hpp"

namespace diffsearch {

namespace {

double log_sum_exp(const std::vector<double>& v) {
    double m = *std::max_element(v.begin(), v.end());
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

// Core allocation in log space; callers pass log f_k.
std::vector<int> allocate_from_logs(const std::vector<double>& log_scores, double tau_t,
                                    BfsMode mode, Rounding rounding) {
    const int K = static_cast<int>(log_scores.size());
    std::vector<double> lw(K);
    for (int k = 0; k < K; ++k) lw[k] = tau_t * log_scores[k];
    double lz = log_sum_exp(lw);
    std::vector<double> target(K);
    for (int k = 0; k < K; ++k) target[k] = K * std::exp(lw[k] - lz);

    std::vector<int> n(K, 0);
    if (rounding == Rounding::PaperRound) {
        for (int k = 0; k < K; ++k) n[k] = static_cast<int>(std::nearbyint(target[k]));
    } else {
        int assigned = 0;
        std::vector<std::pair<double, int>> rema(K);
        for (int k = 0; k < K; ++k) {
            n[k] = static_cast<int>(std::floor(target[k]));
            assigned += n[k];
            rema[k] = {target[k] - n[k], k};
        }
        std::stable_sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
            return a.first > b.first;
        });
        for (int i = 0; i < K - assigned; ++i) ++n[rema[i % K].second];
    }
    if (mode == BfsMode::Prune)
        for (int& c : n) c = std::min(1, c);
    return n;
}

struct EvalResult {
    Vec x0;
    double log_f;
};

EvalResult eval_intermediate(const ScorePrior& prior, const NoiseSchedule& sched,
                             const Verifier& selection, const Vec& x, int t,
                             NfeLedger& ledger) {
    double a = sched.alpha[t], s = sched.sigma[t];
    Vec score = noisy_score(prior, sched, t, x);
    ++ledger.score_evals;
    EvalResult r;
    r.x0 = (x + s * s * score) / a;
    r.log_f = selection.log_eval(r.x0);
    ++ledger.verifier_evals;
    return r;
}

Particle advance(const Particle& p, int child_index, const StepFn& step,
                 NfeLedger& ledger, long& denoise_steps) {
    std::uint64_t key = mix_keys(p.rng_stream,
                                 static_cast<std::uint64_t>(p.t) * 0x9E3779B1ULL
                                 + static_cast<std::uint64_t>(child_index) + 1);
    RngStream st(key);
    Particle child = p;
    child.parent_id = p.rng_stream;
    child.rng_stream = key;
    child.birth_step = p.t;
    child = step(child, st, ledger);
    ++denoise_steps;
    return child;
}

// Minimum NFE needed to finish one particle from level t: t denoise steps,
// the remaining intermediate evals, and the terminal verifier call.
double per_child_completion_cost(int t, const std::vector<int>& eval_steps,
                                 double step_cost, double w_verifier) {
    double c = t * step_cost + (1.0 + w_verifier);
    for (int s : eval_steps)
        if (s < t) c += 1.0 + w_verifier;
    return c;
}

void clamp_to_budget(std::vector<int>& n, const std::vector<double>& log_scores,
                     long allowed) {
    long total = std::accumulate(n.begin(), n.end(), 0L);
    allowed = std::max(allowed, 1L);
    if (total <= allowed) return;
    // Shed children from the lowest-scoring parents first.
    std::vector<int> order(n.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return log_scores[a] < log_scores[b];
    });
    while (total > allowed) {
        for (int idx : order) {
            if (n[idx] > 0) {
                --n[idx];
                if (--total <= allowed) break;
            }
        }
    }
    if (std::accumulate(n.begin(), n.end(), 0L) == 0) {
        int best = static_cast<int>(std::max_element(log_scores.begin(), log_scores.end())
                                    - log_scores.begin());
        n[best] = 1;
    }
}

SearchReport finalize_terminals(const Verifier& selection,
                                const std::vector<Particle>& terminals,
                                NfeLedger ledger) {
    SearchReport rep;
    rep.nfe = ledger;
    double best_log = -std::numeric_limits<double>::infinity();
    int best_idx = -1;
    for (size_t k = 0; k < terminals.size(); ++k) {
        double lf = selection.log_eval(terminals[k].x);
        ++rep.nfe.verifier_evals;
        rep.all_terminal.emplace_back(terminals[k].x, std::exp(lf));
        if (lf > best_log) {
            best_log = lf;
            best_idx = static_cast<int>(k);
        }
    }
    if (best_idx >= 0) {
        rep.best_sample = terminals[best_idx].x;
        rep.best_score = std::exp(best_log);
    }
    return rep;
}

} // namespace

BfsMode bfs_mode_from_string(const std::string& s) {
    if (s == "resample") return BfsMode::Resample;
    if (s == "prune") return BfsMode::Prune;
    throw ConfigError("search.mode: unknown mode '" + s + "'");
}

Rounding rounding_from_string(const std::string& s) {
    if (s == "paper-round") return Rounding::PaperRound;
    if (s == "largest-remainder") return Rounding::LargestRemainder;
    throw ConfigError("search.rounding: unknown rounding '" + s + "'");
}

StepFn make_plain_step(const ScorePrior& prior, const NoiseSchedule& sched,
                       SamplerKind kind, VarianceChoice variance) {
    if (kind == SamplerKind::Ddim) {
        return [&prior, &sched](const Particle& p, RngStream&, NfeLedger& ledger) {
            return ddim_step(sched, prior, p, ledger);
        };
    }
    return [&prior, &sched, variance](const Particle& p, RngStream& rng, NfeLedger& ledger) {
        return ddpm_step(sched, prior, p, variance, rng, ledger);
    };
}

StepFn make_guided_step(const ScorePrior& prior, const Verifier& verifier,
                        const NoiseSchedule& sched, const GuidanceConfig& config) {
    if (!config.guidance_active() && config.n_recur == 0)
        return make_plain_step(prior, sched, config.sampler, config.variance);
    return [&prior, verifier, &sched, config](const Particle& p, RngStream& rng,
                                              NfeLedger& ledger) {
        return guided_recurrent_step(prior, verifier, sched, config, p, rng, ledger);
    };
}

std::vector<int> bfs_allocate(const std::vector<double>& scores, double tau_t,
                              BfsMode mode, Rounding rounding) {
    if (scores.empty()) throw ArgumentError("bfs_allocate: empty score list");
    if (tau_t < 0.0) throw ArgumentError("bfs_allocate: tau_t must be >= 0");
    std::vector<double> logs(scores.size());
    for (size_t k = 0; k < scores.size(); ++k) {
        if (!(scores[k] > 0.0)) throw ArgumentError("bfs_allocate: scores must be positive");
        logs[k] = std::log(scores[k]);
    }
    return allocate_from_logs(logs, tau_t, mode, rounding);
}

SearchReport best_of_n(const ScorePrior& prior, const Verifier& selection,
                       const NoiseSchedule& sched, const StepFn& step, int K,
                       RngStream rng, NfeLedger ledger) {
    if (K < 1) throw ArgumentError("best_of_n: K must be >= 1");
    long steps = 0;
    std::vector<Particle> terminals;
    terminals.reserve(K);
    for (int k = 0; k < K; ++k) {
        RngStream chain = rng.child(static_cast<std::uint64_t>(k) + 1);
        Particle p = init_particle(sched, prior.dim(), chain);
        p.rng_stream = chain.key();
        while (p.t > 0) p = advance(p, 0, step, ledger, steps);
        terminals.push_back(std::move(p));
    }
    SearchReport rep = finalize_terminals(selection, terminals, ledger);
    rep.denoise_steps = steps;
    rep.seed = rng.key();
    return rep;
}

SearchReport bfs_search(const ScorePrior& prior, const Verifier& selection,
                        const NoiseSchedule& sched, const StepFn& step,
                        const BfsConfig& config, RngStream rng, NfeLedger ledger) {
    if (config.K < 1) throw ConfigError("search.K: must be >= 1");
    for (int s : config.eval_steps)
        if (s < 1 || s >= sched.T)
            throw ConfigError("search.eval_steps: must lie in [1, T-1]");
    if (config.tau_bar < 0.0) throw ConfigError("search.tau_bar: must be >= 0");

    std::vector<double> w = strength_weights(sched, config.tau_schedule);
    const bool capped = std::isfinite(config.nfe_cap);

    long steps = 0;
    bool degraded = false;

    std::vector<Particle> particles;
    {
        // Initial budget clamp: reserve one full chain (so the keep-alive
        // fallback can never overshoot the cap), then admit extra roots by
        // the minimum cost each is guaranteed to incur — the descent to the
        // first evaluation step, where pruning may retire it. The per-level
        // clamp sheds whatever the realized survival cannot afford.
        int K = config.K;
        if (capped) {
            double chain = per_child_completion_cost(sched.T, config.eval_steps,
                                                     config.step_cost, ledger.w_verifier);
            double min_cost = chain;
            if (!config.eval_steps.empty()) {
                int first = *std::max_element(config.eval_steps.begin(),
                                              config.eval_steps.end());
                min_cost = (sched.T - first) * config.step_cost + 1.0 + ledger.w_verifier;
            }
            long allowed = 1 + static_cast<long>(
                std::floor(std::max(0.0, config.nfe_cap - chain) / min_cost));
            K = static_cast<int>(std::min<long>(K, allowed));
        }
        for (int k = 0; k < K; ++k) {
            RngStream chain = rng.child(static_cast<std::uint64_t>(k) + 1);
            Particle p = init_particle(sched, prior.dim(), chain);
            p.rng_stream = chain.key();
            particles.push_back(std::move(p));
        }
    }

    SearchReport rep;
    rep.particles_per_level.push_back(static_cast<int>(particles.size()));

    for (int t = sched.T; t >= 1; --t) {
        std::vector<int> counts(particles.size(), 1);
        std::vector<double> log_scores(particles.size(), 0.0);
        bool is_eval = std::find(config.eval_steps.begin(), config.eval_steps.end(), t)
                       != config.eval_steps.end();
        if (is_eval) {
            for (size_t k = 0; k < particles.size(); ++k) {
                EvalResult er = eval_intermediate(prior, sched, selection,
                                                  particles[k].x, t, ledger);
                log_scores[k] = er.log_f;
                particles[k].score_cache = {t, std::exp(er.log_f)};
            }
            double tau_t = w[t - 1] * config.tau_bar;
            counts = allocate_from_logs(log_scores, tau_t, config.mode, config.rounding);
            if (std::accumulate(counts.begin(), counts.end(), 0L) == 0) {
                // Keep the best particle alive rather than extinguishing the run.
                int best = static_cast<int>(
                    std::max_element(log_scores.begin(), log_scores.end())
                    - log_scores.begin());
                counts[best] = 1;
                degraded = true;
            }
        }
        if (capped) {
            // Charge each child only its cost to the next evaluation step,
            // where the population can shrink again, but reserve one full
            // completion so a survivor can always finish within the cap.
            double completion = per_child_completion_cost(t, config.eval_steps,
                                                          config.step_cost,
                                                          ledger.w_verifier);
            int next_eval = 0;
            for (int s : config.eval_steps)
                if (s < t && s > next_eval) next_eval = s;
            double to_next = next_eval > 0
                ? (t - next_eval) * config.step_cost + 1.0 + ledger.w_verifier
                : completion;
            double remaining = config.nfe_cap - ledger.total();
            long allowed = remaining >= completion
                ? 1 + static_cast<long>(std::floor((remaining - completion) / to_next))
                : 1;
            clamp_to_budget(counts, log_scores, allowed);
        }

        std::vector<Particle> next;
        for (size_t k = 0; k < particles.size(); ++k)
            for (int j = 0; j < counts[k]; ++j)
                next.push_back(advance(particles[k], j, step, ledger, steps));
        particles = std::move(next);
        rep.particles_per_level.push_back(static_cast<int>(particles.size()));
    }

    NfeLedger accumulated = ledger;
    SearchReport out = finalize_terminals(selection, particles, accumulated);
    out.particles_per_level = std::move(rep.particles_per_level);
    out.denoise_steps = steps;
    out.seed = rng.key();
    out.degraded = degraded;
    return out;
}

SearchReport dfs_search(const ScorePrior& prior, const Verifier& selection,
                        const NoiseSchedule& sched, const StepFn& step,
                        const DfsConfig& config, RngStream rng, NfeLedger ledger) {
    if (config.B < 0) throw ConfigError("search.B: must be >= 0");
    if (config.delta_T < 1) throw ConfigError("search.delta_T: must be >= 1");
    for (int s : config.eval_steps)
        if (s < 1 || s >= sched.T)
            throw ConfigError("search.eval_steps: must lie in [1, T-1]");

    std::vector<double> w = strength_weights(sched, config.threshold_schedule);
    const bool capped = std::isfinite(config.nfe_cap);
    const double log_delta_bar = config.delta_bar > 0.0 ? std::log(config.delta_bar)
                                                        : -std::numeric_limits<double>::infinity();

    RngStream chain = rng.child(1);
    Particle p = init_particle(sched, prior.dim(), chain);
    p.rng_stream = chain.key();

    // Per-timestep buffer keeping only the max-score entry.
    std::map<int, std::pair<double, Vec>> buffer;

    int budget = config.B;
    int backtracks = 0;
    long steps = 0;
    const long max_steps = sched.T + static_cast<long>(config.B) * config.delta_T;

    while (p.t > 0) {
        bool is_eval = std::find(config.eval_steps.begin(), config.eval_steps.end(), p.t)
                       != config.eval_steps.end();
        if (is_eval) {
            int t = p.t;
            EvalResult er = eval_intermediate(prior, sched, selection, p.x, t, ledger);
            double log_delta_t = log_delta_bar
                + (config.delta_bar > 0.0 ? std::log(w[t - 1]) : 0.0);
            bool below = er.log_f < log_delta_t;

            bool can_backtrack = below && budget > 0;
            if (can_backtrack && capped) {
                int t_next = std::min(t + config.delta_T, sched.T);
                double needed = per_child_completion_cost(t_next, config.eval_steps,
                                                          config.step_cost,
                                                          ledger.w_verifier);
                if (ledger.total() + needed > config.nfe_cap) can_backtrack = false;
            }

            if (can_backtrack) {
                auto it = buffer.find(t);
                if (it == buffer.end() || er.log_f > it->second.first)
                    buffer[t] = {er.log_f, p.x};
                int t_next = std::min(t + config.delta_T, sched.T);
                std::uint64_t key = mix_keys(p.rng_stream,
                                             0xBAC0000ULL + static_cast<std::uint64_t>(steps));
                RngStream rn(key);
                p = renoise(sched, p, t_next, rn);
                p.rng_stream = key;
                --budget;
                ++backtracks;
                continue;
            }
            if (below) {
                // Budget exhausted: fall back to the best state seen at this level.
                auto it = buffer.find(t);
                if (it != buffer.end() && it->second.first > er.log_f) {
                    p.x = it->second.second;
                    p.score_cache = {t, std::exp(it->second.first)};
                }
            }
        }
        p = advance(p, 0, step, ledger, steps);
        if (steps > max_steps)
            throw InternalError("dfs_search: step budget exceeded");
    }

    SearchReport rep = finalize_terminals(selection, {p}, ledger);
    rep.backtracks_used = backtracks;
    rep.denoise_steps = steps;
    rep.seed = rng.key();
    return rep;
}

} // namespace diffsearch
