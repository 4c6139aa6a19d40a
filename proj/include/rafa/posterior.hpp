#pragma once

#include <Eigen/Dense>
#include <string>

#include "rafa/rng.hpp"

namespace rafa {

// One value-targeted regression pair: psi = psi_{V_t}(s_t, a_t), y = V_t(s_{t+1}).
struct Observation {
    Eigen::VectorXd psi;
    double y = 0.0;
};

/**
 * Conjugate Gaussian belief over the environment parameter. The precision
 * Sigma = lambda*I + sum_i psi_i psi_i^T / sigma^2 is held explicitly and its
 * Cholesky factor is maintained by rank-one updates (the fast path); a fresh
 * factorization of the stored Sigma is the reference the fast path is audited
 * against. Single writer; reads between updates are safe concurrently.
 */
class GaussianPosterior {
public:
    GaussianPosterior(int dim, double lambda, double noise_scale = 1.0);

    int dim() const { return d_; }
    double lambda() const { return lambda_; }
    double noise_scale() const { return sigma_; }
    std::int64_t update_count() const { return updates_; }

    const Eigen::MatrixXd& precision() const { return sigma_mat_; }
    const Eigen::VectorXd& xty() const { return xty_; }

    void update(const Observation& obs);

    // posterior mean, resolved from the maintained factor
    Eigen::VectorXd mean() const;

    // posterior mean via a fresh factorization of the stored precision;
    // reference path for auditing the incremental factor
    Eigen::VectorXd mean_direct() const;

    // differential entropy of N(mean, Sigma^{-1}):
    //   H = d/2 (1 + log 2*pi) - 1/2 log det Sigma
    double entropy() const;
    double log_det_precision() const;
    double log_det_precision_direct() const;

    // I = 1/2 log(1 + psi^T Sigma^{-1} psi / sigma^2); equals the entropy
    // drop an update with this feature would cause
    double information_gain(const Eigen::VectorXd& psi) const;

    // draw from N(mean, Sigma^{-1})
    Eigen::VectorXd sample(Rng& rng) const;

    // posterior-mean parameter; the averaged model satisfies
    // psi^T mean = E_theta[psi^T theta]
    Eigen::VectorXd bma_parameter() const { return mean(); }

    // optimistic reward inflation sqrt(2) * L * sqrt(information gain)
    double bonus(const Eigen::VectorXd& psi, double value_bound) const;

    std::string serialize() const;
    static GaussianPosterior deserialize(const std::string& text);

private:
    int d_;
    double lambda_;
    double sigma_;
    Eigen::MatrixXd sigma_mat_;  // precision, exact accumulation
    Eigen::VectorXd xty_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
    std::int64_t updates_ = 0;

    static constexpr int kRefreshInterval = 512;

    void refresh_factor();
    void check_factor(const char* where) const;
};

} // namespace rafa
