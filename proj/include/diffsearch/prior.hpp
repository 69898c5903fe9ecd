#pragma once

#include <utility>
#include <vector>
#include <Eigen/Dense>

#include "diffsearch/rng.hpp"
#include "diffsearch/schedule.hpp"

namespace diffsearch {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Analytic data distribution standing in for a trained score network.
// All quantities are exact: the noisy marginal q_t = law of
// alpha_t x0 + sigma_t eps, its score, and the posterior mean E[x0|x_t].
class ScorePrior {
public:
    virtual ~ScorePrior() = default;

    virtual int dim() const = 0;

    // log q_t(x) for the marginal with coefficients (alpha, sigma).
    virtual double log_marginal(double alpha, double sigma, const Vec& x) const = 0;
    virtual Vec marginal_score(double alpha, double sigma, const Vec& x) const = 0;
    // Hessian of log q_t; used to form the posterior-mean Jacobian.
    virtual Mat marginal_score_jacobian(double alpha, double sigma, const Vec& x) const = 0;

    virtual Vec sample(RngStream& rng) const = 0;

    double log_density0(const Vec& x) const { return log_marginal(1.0, 0.0, x); }
};

struct MixtureComponent {
    double weight = 1.0;
    Vec mean;
    Mat cov;
};

class GaussianMixturePrior final : public ScorePrior {
public:
    GaussianMixturePrior(std::vector<MixtureComponent> components);

    int dim() const override { return dim_; }
    int n_components() const { return static_cast<int>(comps_.size()); }
    const MixtureComponent& component(int i) const { return comps_[i]; }

    double log_marginal(double alpha, double sigma, const Vec& x) const override;
    Vec marginal_score(double alpha, double sigma, const Vec& x) const override;
    Mat marginal_score_jacobian(double alpha, double sigma, const Vec& x) const override;
    Vec sample(RngStream& rng) const override;

    // Responsibilities of the noisy mixture at x, in log space.
    Vec log_responsibilities(double alpha, double sigma, const Vec& x) const;

    // Index of the component mean nearest to x (mode-mass classification).
    int nearest_component(const Vec& x) const;

private:
    struct CompCache {
        Vec mean;
        double log_weight;
        Eigen::SelfAdjointEigenSolver<Mat> eig;  // of cov
    };

    int dim_;
    std::vector<MixtureComponent> comps_;
    std::vector<CompCache> cache_;

    // Per-component log density / score of N(alpha*mu, alpha^2 Sigma + sigma^2 I).
    double comp_log_density(int i, double alpha, double sigma, const Vec& x) const;
    Vec comp_score(int i, double alpha, double sigma, const Vec& x) const;
    Mat comp_precision(int i, double alpha, double sigma) const;
};

enum class JacobianMode { Analytic, FiniteDifference };

// E[x0 | x_t] = (x + sigma_t^2 * score) / alpha_t and its Jacobian wrt x_t.
std::pair<Vec, Mat> posterior_mean(const ScorePrior& prior, const NoiseSchedule& sched,
                                   int t, const Vec& x,
                                   JacobianMode mode = JacobianMode::Analytic);

Vec noisy_score(const ScorePrior& prior, const NoiseSchedule& sched, int t, const Vec& x);

// Smooth trajectory prior in R^{2H}: a straight-line bridge between start and
// goal, with a second-difference smoothness precision and endpoint anchors of
// strength kappa. Waypoints are stored interleaved: (x0,y0,x1,y1,...).
struct TrajectoryPriorSpec {
    int horizon = 64;
    Eigen::Vector2d start;
    Eigen::Vector2d goal;
    double anchor_kappa = 1e4;
    double smoothness_weight = 1.0;
    double ridge = 0.0;
};

GaussianMixturePrior build_trajectory_prior(const TrajectoryPriorSpec& spec);

} // namespace diffsearch
