#include "diffsearch/verifier.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "diffsearch/errors.hpp"

namespace diffsearch {

Verifier::Verifier(std::function<double(const Vec&)> log_score,
                   std::function<Vec(const Vec&)> grad_log_score,
                   double sup_score, std::string name)
    : log_fn_(std::move(log_score)),
      grad_fn_(std::move(grad_log_score)),
      sup_score_(sup_score),
      name_(std::move(name)) {}

double Verifier::log_eval(const Vec& x) const {
    ++counters_->evals;
    return log_fn_(x);
}

double Verifier::score(const Vec& x) const { return std::exp(log_eval(x)); }

Vec Verifier::grad_log(const Vec& x) const {
    if (!grad_fn_)
        throw EvaluationError("verifier '" + name_ + "' is not differentiable");
    ++counters_->grad_evals;
    return grad_fn_(x);
}

Verifier region_verifier(const Vec& center, double radius, double sharpness) {
    if (!(radius > 0.0)) throw ConfigError("region verifier: radius must be positive");
    if (!(sharpness > 0.0)) throw ConfigError("region verifier: sharpness must be positive");
    Vec c = center;
    auto log_fn = [c, radius, sharpness](const Vec& x) {
        double h = std::max(0.0, (x - c).norm() - radius);
        return -sharpness * h * h;
    };
    auto grad_fn = [c, radius, sharpness](const Vec& x) -> Vec {
        double r = (x - c).norm();
        double h = r - radius;
        if (h <= 0.0 || r == 0.0) return Vec::Zero(x.size());
        return (-2.0 * sharpness * h / r) * (x - c);
    };
    return Verifier(log_fn, grad_fn, 1.0, "region");
}

Verifier mode_verifier(std::shared_ptr<const GaussianMixturePrior> prior,
                       int target_component, double temperature) {
    if (!prior) throw ConfigError("mode verifier: null prior");
    if (target_component < 0 || target_component >= prior->n_components())
        throw ConfigError("mode verifier: target component out of range");
    if (!(temperature > 0.0)) throw ConfigError("mode verifier: temperature must be positive");

    // Single-component copy gives the target's own score gradient.
    auto target = std::make_shared<GaussianMixturePrior>(
        std::vector<MixtureComponent>{MixtureComponent{
            1.0, prior->component(target_component).mean,
            prior->component(target_component).cov}});

    int k = target_component;
    auto log_fn = [prior, k, temperature](const Vec& x) {
        return prior->log_responsibilities(1.0, 0.0, x)[k] / temperature;
    };
    auto grad_fn = [prior, target, temperature](const Vec& x) -> Vec {
        Vec gk = target->marginal_score(1.0, 0.0, x);
        Vec s = prior->marginal_score(1.0, 0.0, x);
        return (gk - s) / temperature;
    };
    return Verifier(log_fn, grad_fn, 1.0, "mode");
}

Verifier power_verifier(const Verifier& base, double lambda) {
    if (lambda < 0.0) throw ConfigError("power verifier: lambda must be >= 0");
    Verifier b = base;
    auto log_fn = [b, lambda](const Vec& x) { return lambda * b.log_eval(x); };
    double sup = std::pow(base.sup_score(), lambda);
    if (!base.differentiable())
        return Verifier(log_fn, nullptr, sup, "power(" + base.name() + ")");
    auto grad_fn = [b, lambda](const Vec& x) -> Vec { return lambda * b.grad_log(x); };
    return Verifier(log_fn, grad_fn, sup, "power(" + base.name() + ")");
}

double SmoothedVerifier::eval(const Vec& x, double sigma_t, RngStream& rng) const {
    if (n_mc < 1) throw ConfigError("smoothed verifier: n_mc must be >= 1");
    if (gamma_bar == 0.0) return base.score(x);
    double scale = gamma_bar * sigma_t;
    double acc = 0.0;
    for (int j = 0; j < n_mc; ++j) {
        Vec delta = rng.normal_vec(static_cast<int>(x.size()));
        acc += base.score(x + scale * delta);
        acc += base.score(x - scale * delta);
    }
    return acc / (2.0 * n_mc);
}

Vec SmoothedVerifier::grad_log(const Vec& x, double sigma_t, RngStream& rng) const {
    if (n_mc < 1) throw ConfigError("smoothed verifier: n_mc must be >= 1");
    if (gamma_bar == 0.0) return base.grad_log(x);
    double scale = gamma_bar * sigma_t;
    int d = static_cast<int>(x.size());
    // grad log E[f] = E[f * grad log f] / E[f], over the same perturbations.
    std::vector<double> logs;
    std::vector<Vec> grads;
    logs.reserve(2 * n_mc);
    grads.reserve(2 * n_mc);
    double lmax = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < n_mc; ++j) {
        Vec delta = rng.normal_vec(d);
        for (double sgn : {1.0, -1.0}) {
            Vec p = x + sgn * scale * delta;
            logs.push_back(base.log_eval(p));
            grads.push_back(base.grad_log(p));
            lmax = std::max(lmax, logs.back());
        }
    }
    Vec num = Vec::Zero(d);
    double den = 0.0;
    for (size_t j = 0; j < logs.size(); ++j) {
        double w = std::exp(logs[j] - lmax);
        num += w * grads[j];
        den += w;
    }
    return num / den;
}

double smoothed_eval(const SmoothedVerifier& sv, const Vec& x, double sigma_t,
                     RngStream& rng) {
    return sv.eval(x, sigma_t, rng);
}

DoubleVerifier::DoubleVerifier(Verifier grad_v, Verifier sel_v)
    : gradient_verifier(std::move(grad_v)), selection_verifier(std::move(sel_v)) {
    if (!gradient_verifier.differentiable())
        throw ConfigError("double verifier: gradient verifier must be differentiable");
}

} // namespace diffsearch
