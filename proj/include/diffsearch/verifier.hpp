#pragma once

#include <functional>
#include <memory>
#include <string>

#include "diffsearch/prior.hpp"
#include "diffsearch/rng.hpp"

namespace diffsearch {

struct VerifierCounters {
    long evals = 0;
    long grad_evals = 0;
};

// A positive score f(x0); log-scores are the internal currency, raw scores
// only appear at API edges. Copies share call counters.
class Verifier {
public:
    Verifier() = default;
    Verifier(std::function<double(const Vec&)> log_score,
             std::function<Vec(const Vec&)> grad_log_score,
             double sup_score = 1.0, std::string name = "verifier");

    bool differentiable() const { return static_cast<bool>(grad_fn_); }
    double sup_score() const { return sup_score_; }
    const std::string& name() const { return name_; }

    double log_eval(const Vec& x) const;
    double score(const Vec& x) const;
    Vec grad_log(const Vec& x) const;  // throws for non-differentiable verifiers

    const VerifierCounters& counters() const { return *counters_; }
    void reset_counters() { *counters_ = VerifierCounters{}; }

private:
    std::function<double(const Vec&)> log_fn_;
    std::function<Vec(const Vec&)> grad_fn_;
    double sup_score_ = 1.0;
    std::string name_;
    std::shared_ptr<VerifierCounters> counters_ = std::make_shared<VerifierCounters>();
};

// f = 1 inside the ball, hinge-squared decay outside.
Verifier region_verifier(const Vec& center, double radius, double sharpness);

// Posterior responsibility of a target mixture component under p0, raised to
// 1/temperature. Analytic stand-in for a classifier p(c|x0).
Verifier mode_verifier(std::shared_ptr<const GaussianMixturePrior> prior,
                       int target_component, double temperature);

Verifier power_verifier(const Verifier& base, double lambda);

// Monte-Carlo smoothing f~(x) = E f(x + gamma_bar * sigma_t * delta),
// estimated with antithetic pairs. gamma_bar = 0 bypasses the MC entirely.
struct SmoothedVerifier {
    Verifier base;
    double gamma_bar = 0.0;
    int n_mc = 4;

    double eval(const Vec& x, double sigma_t, RngStream& rng) const;
    // Gradient of log f~ (self-normalized over the same perturbed points).
    Vec grad_log(const Vec& x, double sigma_t, RngStream& rng) const;
};

double smoothed_eval(const SmoothedVerifier& sv, const Vec& x, double sigma_t,
                     RngStream& rng);

// Separate verifiers for gradient guidance and for selection.
struct DoubleVerifier {
    Verifier gradient_verifier;
    Verifier selection_verifier;

    DoubleVerifier(Verifier grad_v, Verifier sel_v);
};

} // namespace diffsearch
