#include "rafa/posterior.hpp"

#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace rafa {

namespace {
constexpr double kHalfLog2PiPlusHalf = 0.5 * (1.0 + 1.8378770664093454835606594728112353);
// 0.5 * (1 + log(2*pi)); log(2*pi) = 1.837877066409345...
} // namespace

GaussianPosterior::GaussianPosterior(int dim, double lambda, double noise_scale)
    : d_(dim), lambda_(lambda), sigma_(noise_scale) {
    if (dim <= 0) throw std::invalid_argument("posterior dimension must be positive");
    if (lambda <= 0.0) throw std::invalid_argument("lambda must be positive");
    if (noise_scale <= 0.0) throw std::invalid_argument("noise scale must be positive");
    sigma_mat_ = lambda_ * Eigen::MatrixXd::Identity(d_, d_);
    xty_ = Eigen::VectorXd::Zero(d_);
    refresh_factor();
}

void GaussianPosterior::refresh_factor() {
    llt_.compute(sigma_mat_);
    check_factor("refresh");
}

void GaussianPosterior::check_factor(const char* where) const {
    if (llt_.info() != Eigen::Success) {
        throw std::runtime_error(std::string("Cholesky factorization failed in ") + where);
    }
}

void GaussianPosterior::update(const Observation& obs) {
    if (obs.psi.size() != d_) {
        throw std::invalid_argument("observation feature dimension mismatch");
    }
    if (!obs.psi.allFinite() || !std::isfinite(obs.y)) {
        throw std::invalid_argument("observation must be finite");
    }
    const double inv_var = 1.0 / (sigma_ * sigma_);
    sigma_mat_.noalias() += inv_var * obs.psi * obs.psi.transpose();
    xty_ += obs.psi * (obs.y * inv_var);
    ++updates_;
    if (updates_ % kRefreshInterval == 0) {
        refresh_factor();
    } else {
        llt_.rankUpdate(obs.psi * (1.0 / sigma_), 1.0);
        check_factor("rank update");
    }
}

Eigen::VectorXd GaussianPosterior::mean() const {
    return llt_.solve(xty_);
}

Eigen::VectorXd GaussianPosterior::mean_direct() const {
    Eigen::LLT<Eigen::MatrixXd> fresh(sigma_mat_);
    if (fresh.info() != Eigen::Success) {
        throw std::runtime_error("Cholesky factorization failed in direct solve");
    }
    return fresh.solve(xty_);
}

double GaussianPosterior::log_det_precision() const {
    return 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
}

double GaussianPosterior::log_det_precision_direct() const {
    Eigen::LLT<Eigen::MatrixXd> fresh(sigma_mat_);
    if (fresh.info() != Eigen::Success) {
        throw std::runtime_error("Cholesky factorization failed in direct log-det");
    }
    return 2.0 * fresh.matrixLLT().diagonal().array().log().sum();
}

double GaussianPosterior::entropy() const {
    return d_ * kHalfLog2PiPlusHalf - 0.5 * log_det_precision();
}

double GaussianPosterior::information_gain(const Eigen::VectorXd& psi) const {
    if (psi.size() != d_) throw std::invalid_argument("feature dimension mismatch");
    const Eigen::VectorXd w = llt_.matrixL().solve(psi);
    return 0.5 * std::log1p(w.squaredNorm() / (sigma_ * sigma_));
}

Eigen::VectorXd GaussianPosterior::sample(Rng& rng) const {
    Eigen::VectorXd z(d_);
    for (int i = 0; i < d_; ++i) z(i) = rng.normal();
    // L L^T = Sigma, so L^{-T} z has covariance Sigma^{-1}
    return mean() + llt_.matrixU().solve(z);
}

double GaussianPosterior::bonus(const Eigen::VectorXd& psi, double value_bound) const {
    if (value_bound <= 0.0) throw std::invalid_argument("value bound must be positive");
    return std::sqrt(2.0) * value_bound * std::sqrt(information_gain(psi));
}

std::string GaussianPosterior::serialize() const {
    nlohmann::json j;
    j["kind"] = "gaussian_posterior";
    j["version"] = 1;
    j["dim"] = d_;
    j["lambda"] = lambda_;
    j["sigma"] = sigma_;
    j["updates"] = updates_;
    j["precision"] = std::vector<double>(sigma_mat_.data(), sigma_mat_.data() + sigma_mat_.size());
    j["xty"] = std::vector<double>(xty_.data(), xty_.data() + d_);
    return j.dump();
}

GaussianPosterior GaussianPosterior::deserialize(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    if (j.value("kind", "") != "gaussian_posterior") {
        throw std::invalid_argument("not a posterior snapshot");
    }
    const int d = j.at("dim").get<int>();
    GaussianPosterior post(d, j.at("lambda").get<double>(), j.at("sigma").get<double>());
    auto prec = j.at("precision").get<std::vector<double>>();
    auto xty = j.at("xty").get<std::vector<double>>();
    if (static_cast<int>(prec.size()) != d * d || static_cast<int>(xty.size()) != d) {
        throw std::invalid_argument("posterior snapshot payload has wrong size");
    }
    post.sigma_mat_ = Eigen::Map<Eigen::MatrixXd>(prec.data(), d, d);
    post.xty_ = Eigen::Map<Eigen::VectorXd>(xty.data(), d);
    post.updates_ = j.value("updates", static_cast<std::int64_t>(0));
    post.refresh_factor();
    return post;
}

} // namespace rafa
