#include "diffsearch/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "diffsearch/errors.hpp"

namespace diffsearch {

namespace {

double log_sum_exp(const std::vector<double>& v) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : v) m = std::max(m, x);
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

// W1 between two 1-D empirical distributions (possibly different sizes):
// integral of |F_a - F_b| over the merged support.
double w1_1d(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    size_t ia = 0, ib = 0;
    double cdf_a = 0.0, cdf_b = 0.0;
    double prev = std::min(a.front(), b.front());
    double acc = 0.0;
    while (ia < a.size() || ib < b.size()) {
        double xa = ia < a.size() ? a[ia] : std::numeric_limits<double>::infinity();
        double xb = ib < b.size() ? b[ib] : std::numeric_limits<double>::infinity();
        double x = std::min(xa, xb);
        acc += std::abs(cdf_a - cdf_b) * (x - prev);
        prev = x;
        while (ia < a.size() && a[ia] == x) { ++ia; cdf_a = double(ia) / a.size(); }
        while (ib < b.size() && b[ib] == x) { ++ib; cdf_b = double(ib) / b.size(); }
    }
    return acc;
}

} // namespace

Eigen::Vector2d GridDensity::cell_center(int ix, int iy) const {
    double dx = (hi.x() - lo.x()) / resolution;
    double dy = (hi.y() - lo.y()) / resolution;
    return {lo.x() + (ix + 0.5) * dx, lo.y() + (iy + 0.5) * dy};
}

GridDensity grid_target(const ScorePrior& prior, const Verifier& verifier, double lambda,
                        const Eigen::Vector2d& lo, const Eigen::Vector2d& hi,
                        int resolution) {
    if (prior.dim() != 2) throw ConfigError("grid_target: prior must be 2-dimensional");
    if (resolution < 2) throw ConfigError("oracle.resolution: must be >= 2");
    if (!(hi.x() > lo.x() && hi.y() > lo.y()))
        throw ConfigError("oracle.bounds: empty box");

    GridDensity g;
    g.lo = lo;
    g.hi = hi;
    g.resolution = resolution;
    g.logdensity.resize(static_cast<size_t>(resolution) * resolution);

    std::vector<double> log_p0(g.logdensity.size());
    for (int iy = 0; iy < resolution; ++iy) {
        for (int ix = 0; ix < resolution; ++ix) {
            Eigen::Vector2d c = g.cell_center(ix, iy);
            Vec x(2);
            x << c.x(), c.y();
            double lp = prior.log_density0(x);
            size_t idx = static_cast<size_t>(iy) * resolution + ix;
            log_p0[idx] = lp;
            g.logdensity[idx] = lp + lambda * verifier.log_eval(x);
        }
    }

    double log_area = std::log(g.cell_area());
    double p0_mass = std::exp(log_sum_exp(log_p0) + log_area);
    if (p0_mass < 1.0 - 1e-4)
        throw ConfigError("oracle.bounds: box covers too little prior mass ("
                          + std::to_string(p0_mass) + ")");

    g.log_z = log_sum_exp(g.logdensity) + log_area;
    return g;
}

double grid_mode_mass(const GridDensity& grid, const GaussianMixturePrior& prior,
                      int target_component) {
    double mass = 0.0;
    double log_area = std::log(grid.cell_area());
    for (int iy = 0; iy < grid.resolution; ++iy) {
        for (int ix = 0; ix < grid.resolution; ++ix) {
            Eigen::Vector2d c = grid.cell_center(ix, iy);
            Vec x(2);
            x << c.x(), c.y();
            if (prior.nearest_component(x) != target_component) continue;
            size_t idx = static_cast<size_t>(iy) * grid.resolution + ix;
            mass += std::exp(grid.logdensity[idx] + log_area - grid.log_z);
        }
    }
    return mass;
}

RejectionResult rejection_sample(const ScorePrior& prior, const Verifier& verifier,
                                 double lambda, double M, RngStream& rng) {
    if (!(M > 0.0)) throw ArgumentError("rejection_sample: M must be positive");
    double log_m = std::log(M);
    RejectionResult res;
    for (long i = 1; i <= 1000000L; ++i) {
        Vec x = prior.sample(rng);
        double log_acc = lambda * verifier.log_eval(x) - log_m;
        ++res.proposals;
        if (std::log(rng.uniform()) < log_acc) {
            res.sample = x;
            res.acceptance_rate = 1.0 / static_cast<double>(res.proposals);
            return res;
        }
    }
    throw EvaluationError("rejection_sample: acceptance rate below 1e-6");
}

std::vector<Vec> rejection_samples(const ScorePrior& prior, const Verifier& verifier,
                                   double lambda, double M, int n, RngStream& rng) {
    std::vector<Vec> out;
    out.reserve(n);
    long proposals = 0;
    for (int i = 0; i < n; ++i) {
        RejectionResult r = rejection_sample(prior, verifier, lambda, M, rng);
        proposals += r.proposals;
        if (proposals > 1000000L && static_cast<double>(out.size() + 1) / proposals < 1e-4)
            throw EvaluationError("rejection_samples: acceptance rate below 1e-4");
        out.push_back(std::move(r.sample));
    }
    return out;
}

double importance_mode_mass(const GaussianMixturePrior& prior, const Verifier& verifier,
                            double lambda, int target_component, int n, RngStream& rng) {
    std::vector<double> logw(n);
    std::vector<bool> hit(n);
    for (int i = 0; i < n; ++i) {
        Vec x = prior.sample(rng);
        logw[i] = lambda * verifier.log_eval(x);
        hit[i] = prior.nearest_component(x) == target_component;
    }
    double lz = log_sum_exp(logw);
    double mass = 0.0;
    for (int i = 0; i < n; ++i)
        if (hit[i]) mass += std::exp(logw[i] - lz);
    return mass;
}

double sample_mode_mass(const std::vector<Vec>& samples, const GaussianMixturePrior& prior,
                        int target_component) {
    if (samples.empty()) return 0.0;
    long hits = 0;
    for (const Vec& x : samples)
        if (prior.nearest_component(x) == target_component) ++hits;
    return static_cast<double>(hits) / samples.size();
}

double sliced_wasserstein(const std::vector<Vec>& a, const std::vector<Vec>& b,
                          int n_projections, RngStream& rng) {
    if (a.empty() || b.empty())
        throw ArgumentError("sliced_wasserstein: empty sample set");
    if (a.front().size() != b.front().size())
        throw ArgumentError("sliced_wasserstein: dimension mismatch");
    int d = static_cast<int>(a.front().size());
    double acc = 0.0;
    for (int p = 0; p < n_projections; ++p) {
        Vec dir = rng.normal_vec(d);
        dir /= dir.norm();
        std::vector<double> pa(a.size()), pb(b.size());
        for (size_t i = 0; i < a.size(); ++i) pa[i] = dir.dot(a[i]);
        for (size_t i = 0; i < b.size(); ++i) pb[i] = dir.dot(b[i]);
        acc += w1_1d(std::move(pa), std::move(pb));
    }
    return acc / n_projections;
}

} // namespace diffsearch
