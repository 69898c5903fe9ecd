#include "diffsearch/prior.hpp"

#include <cmath>
#include <numbers>

#include "diffsearch/errors.hpp"

namespace diffsearch {

namespace {

double log_sum_exp(const Vec& v) {
    double m = v.maxCoeff();
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (int i = 0; i < v.size(); ++i) s += std::exp(v[i] - m);
    return m + std::log(s);
}

} // namespace

GaussianMixturePrior::GaussianMixturePrior(std::vector<MixtureComponent> components)
    : comps_(std::move(components)) {
    if (comps_.empty()) throw ConfigError("prior.components: empty mixture");
    dim_ = static_cast<int>(comps_[0].mean.size());

    double wsum = 0.0;
    for (const auto& c : comps_) {
        if (c.mean.size() != dim_ || c.cov.rows() != dim_ || c.cov.cols() != dim_)
            throw ConfigError("prior.components: inconsistent dimensions");
        if (!(c.weight > 0.0)) throw ConfigError("prior.components: weights must be positive");
        wsum += c.weight;
    }
    if (std::abs(wsum - 1.0) > 1e-10)
        throw ConfigError("prior.components: weights must sum to 1");

    cache_.reserve(comps_.size());
    for (const auto& c : comps_) {
        CompCache cc;
        cc.mean = c.mean;
        cc.log_weight = std::log(c.weight);
        cc.eig.compute(0.5 * (c.cov + c.cov.transpose()));
        if (cc.eig.eigenvalues().minCoeff() <= 0.0)
            throw ConfigError("prior.components: covariance not positive definite");
        cache_.push_back(std::move(cc));
    }
}

double GaussianMixturePrior::comp_log_density(int i, double alpha, double sigma,
                                              const Vec& x) const {
    const auto& cc = cache_[i];
    const Vec& lam = cc.eig.eigenvalues();
    Vec d = cc.eig.eigenvectors().transpose() * (x - alpha * cc.mean);
    double quad = 0.0, logdet = 0.0;
    for (int k = 0; k < dim_; ++k) {
        double ev = alpha * alpha * lam[k] + sigma * sigma;
        if (ev <= 0.0) throw EvaluationError("noisy covariance singular");
        quad += d[k] * d[k] / ev;
        logdet += std::log(ev);
    }
    return -0.5 * (quad + logdet + dim_ * std::log(2.0 * std::numbers::pi));
}

Vec GaussianMixturePrior::comp_score(int i, double alpha, double sigma, const Vec& x) const {
    const auto& cc = cache_[i];
    const Vec& lam = cc.eig.eigenvalues();
    const Mat& V = cc.eig.eigenvectors();
    Vec d = V.transpose() * (x - alpha * cc.mean);
    for (int k = 0; k < dim_; ++k) d[k] /= alpha * alpha * lam[k] + sigma * sigma;
    return -(V * d);
}

Mat GaussianMixturePrior::comp_precision(int i, double alpha, double sigma) const {
    const auto& cc = cache_[i];
    const Vec& lam = cc.eig.eigenvalues();
    const Mat& V = cc.eig.eigenvectors();
    Vec inv(dim_);
    for (int k = 0; k < dim_; ++k) inv[k] = 1.0 / (alpha * alpha * lam[k] + sigma * sigma);
    return V * inv.asDiagonal() * V.transpose();
}

Vec GaussianMixturePrior::log_responsibilities(double alpha, double sigma,
                                               const Vec& x) const {
    Vec l(n_components());
    for (int i = 0; i < n_components(); ++i)
        l[i] = cache_[i].log_weight + comp_log_density(i, alpha, sigma, x);
    return l.array() - log_sum_exp(l);
}

double GaussianMixturePrior::log_marginal(double alpha, double sigma, const Vec& x) const {
    Vec l(n_components());
    for (int i = 0; i < n_components(); ++i)
        l[i] = cache_[i].log_weight + comp_log_density(i, alpha, sigma, x);
    return log_sum_exp(l);
}

Vec GaussianMixturePrior::marginal_score(double alpha, double sigma, const Vec& x) const {
    Vec lr = log_responsibilities(alpha, sigma, x);
    Vec s = Vec::Zero(dim_);
    for (int i = 0; i < n_components(); ++i)
        s += std::exp(lr[i]) * comp_score(i, alpha, sigma, x);
    return s;
}

Mat GaussianMixturePrior::marginal_score_jacobian(double alpha, double sigma,
                                                  const Vec& x) const {
    // H = sum_i r_i (-P_i + g_i g_i^T) - s s^T with g_i the component scores.
    Vec lr = log_responsibilities(alpha, sigma, x);
    Vec s = Vec::Zero(dim_);
    Mat H = Mat::Zero(dim_, dim_);
    for (int i = 0; i < n_components(); ++i) {
        double r = std::exp(lr[i]);
        Vec g = comp_score(i, alpha, sigma, x);
        H += r * (-comp_precision(i, alpha, sigma) + g * g.transpose());
        s += r * g;
    }
    H -= s * s.transpose();
    return H;
}

Vec GaussianMixturePrior::sample(RngStream& rng) const {
    double u = rng.uniform();
    int pick = n_components() - 1;
    double acc = 0.0;
    for (int i = 0; i < n_components(); ++i) {
        acc += comps_[i].weight;
        if (u <= acc) { pick = i; break; }
    }
    const auto& cc = cache_[pick];
    Vec z = rng.normal_vec(dim_);
    Vec scaled = cc.eig.eigenvalues().array().sqrt() * z.array();
    return cc.mean + cc.eig.eigenvectors() * scaled;
}

int GaussianMixturePrior::nearest_component(const Vec& x) const {
    int best = 0;
    double bestd = (x - comps_[0].mean).squaredNorm();
    for (int i = 1; i < n_components(); ++i) {
        double d = (x - comps_[i].mean).squaredNorm();
        if (d < bestd) { bestd = d; best = i; }
    }
    return best;
}

Vec noisy_score(const ScorePrior& prior, const NoiseSchedule& sched, int t, const Vec& x) {
    if (t < 1 || t > sched.T) throw ArgumentError("noisy_score: t out of range");
    if (!x.allFinite()) throw ArgumentError("noisy_score: x must be finite");
    return prior.marginal_score(sched.alpha[t], sched.sigma[t], x);
}

std::pair<Vec, Mat> posterior_mean(const ScorePrior& prior, const NoiseSchedule& sched,
                                   int t, const Vec& x, JacobianMode mode) {
    if (t < 1 || t > sched.T) throw ArgumentError("posterior_mean: t out of range");
    double a = sched.alpha[t], s = sched.sigma[t];
    Vec score = prior.marginal_score(a, s, x);
    Vec x0 = (x + s * s * score) / a;
    int d = prior.dim();
    Mat J(d, d);
    if (mode == JacobianMode::Analytic) {
        J = (Mat::Identity(d, d) + s * s * prior.marginal_score_jacobian(a, s, x)) / a;
    } else {
        double h = 1e-4 * (1.0 + x.norm());
        for (int i = 0; i < d; ++i) {
            Vec xp = x, xm = x;
            xp[i] += h;
            xm[i] -= h;
            Vec fp = (xp + s * s * prior.marginal_score(a, s, xp)) / a;
            Vec fm = (xm + s * s * prior.marginal_score(a, s, xm)) / a;
            J.col(i) = (fp - fm) / (2.0 * h);
        }
    }
    return {x0, J};
}

GaussianMixturePrior build_trajectory_prior(const TrajectoryPriorSpec& spec) {
    const int H = spec.horizon;
    if (H < 2) throw ConfigError("prior.horizon: must be >= 2");
    if (!(spec.anchor_kappa > 0.0)) throw ConfigError("prior.anchor_kappa: must be positive");

    // Per-axis precision: w * D2^T D2 + ridge * I + kappa at the endpoints.
    Mat P = Mat::Zero(H, H);
    for (int i = 1; i + 1 < H; ++i) {
        Vec row = Vec::Zero(H);
        row[i - 1] = 1.0;
        row[i] = -2.0;
        row[i + 1] = 1.0;
        P += spec.smoothness_weight * row * row.transpose();
    }
    P += spec.ridge * Mat::Identity(H, H);
    P(0, 0) += spec.anchor_kappa;
    P(H - 1, H - 1) += spec.anchor_kappa;

    Mat cov_axis = P.llt().solve(Mat::Identity(H, H));
    cov_axis = 0.5 * (cov_axis + cov_axis.transpose());

    // Interleaved (x,y) layout; axes are independent with identical covariance.
    Mat cov = Mat::Zero(2 * H, 2 * H);
    Vec mean(2 * H);
    for (int i = 0; i < H; ++i) {
        double u = static_cast<double>(i) / (H - 1);
        Eigen::Vector2d p = (1.0 - u) * spec.start + u * spec.goal;
        mean[2 * i] = p.x();
        mean[2 * i + 1] = p.y();
        for (int j = 0; j < H; ++j) {
            cov(2 * i, 2 * j) = cov_axis(i, j);
            cov(2 * i + 1, 2 * j + 1) = cov_axis(i, j);
        }
    }

    return GaussianMixturePrior({MixtureComponent{1.0, mean, cov}});
}

} // namespace diffsearch
