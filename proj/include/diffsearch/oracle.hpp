#pragma once

#include <vector>

#include "diffsearch/prior.hpp"
#include "diffsearch/rng.hpp"
#include "diffsearch/verifier.hpp"

namespace diffsearch {

// Tabulated log density of the tilted target p0 * f^lambda on a 2-D grid.
struct GridDensity {
    Eigen::Vector2d lo;
    Eigen::Vector2d hi;
    int resolution = 0;
    std::vector<double> logdensity;  // row-major, unnormalized
    double log_z = 0.0;

    double cell_area() const {
        double dx = (hi.x() - lo.x()) / resolution;
        double dy = (hi.y() - lo.y()) / resolution;
        return dx * dy;
    }
    Eigen::Vector2d cell_center(int ix, int iy) const;
};

GridDensity grid_target(const ScorePrior& prior, const Verifier& verifier, double lambda,
                        const Eigen::Vector2d& lo, const Eigen::Vector2d& hi,
                        int resolution);

// Probability mass of the cells whose nearest mixture mean is the target.
double grid_mode_mass(const GridDensity& grid, const GaussianMixturePrior& prior,
                      int target_component);

struct RejectionResult {
    Vec sample;
    double acceptance_rate = 0.0;
    long proposals = 0;
};

RejectionResult rejection_sample(const ScorePrior& prior, const Verifier& verifier,
                                 double lambda, double M, RngStream& rng);

std::vector<Vec> rejection_samples(const ScorePrior& prior, const Verifier& verifier,
                                   double lambda, double M, int n, RngStream& rng);

// Self-normalized importance estimate of the target-mode mass with proposal p0.
double importance_mode_mass(const GaussianMixturePrior& prior, const Verifier& verifier,
                            double lambda, int target_component, int n, RngStream& rng);

// Fraction of samples whose nearest mixture mean is the target component.
double sample_mode_mass(const std::vector<Vec>& samples, const GaussianMixturePrior& prior,
                        int target_component);

// Average 1-D Wasserstein-1 distance over random unit projections.
double sliced_wasserstein(const std::vector<Vec>& a, const std::vector<Vec>& b,
                          int n_projections, RngStream& rng);

} // namespace diffsearch
