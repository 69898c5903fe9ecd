#pragma once

#include <memory>
#include <vector>

#include "diffsearch/prior.hpp"

namespace diffsearch::testutil {

// Prior whose score field is identically zero; isolates the deterministic
// parts of the samplers.
class ZeroScorePrior final : public ScorePrior {
public:
    explicit ZeroScorePrior(int d) : d_(d) {}
    int dim() const override { return d_; }
    double log_marginal(double, double, const Vec&) const override { return 0.0; }
    Vec marginal_score(double, double, const Vec& x) const override {
        return Vec::Zero(x.size());
    }
    Mat marginal_score_jacobian(double, double, const Vec& x) const override {
        return Mat::Zero(x.size(), x.size());
    }
    Vec sample(RngStream& rng) const override { return rng.normal_vec(d_); }

private:
    int d_;
};

inline std::shared_ptr<GaussianMixturePrior> standard_normal(int d) {
    MixtureComponent c;
    c.weight = 1.0;
    c.mean = Vec::Zero(d);
    c.cov = Mat::Identity(d, d);
    return std::make_shared<GaussianMixturePrior>(std::vector<MixtureComponent>{c});
}

inline std::shared_ptr<GaussianMixturePrior> two_modes(double w0, double sep = 2.0) {
    MixtureComponent a, b;
    a.weight = w0;
    a.mean = Vec(2);
    a.mean << -sep, 0.0;
    a.cov = Mat::Identity(2, 2);
    b.weight = 1.0 - w0;
    b.mean = Vec(2);
    b.mean << sep, 0.0;
    b.cov = Mat::Identity(2, 2);
    return std::make_shared<GaussianMixturePrior>(std::vector<MixtureComponent>{a, b});
}

inline Vec v2(double x, double y) {
    Vec v(2);
    v << x, y;
    return v;
}

} // namespace diffsearch::testutil
