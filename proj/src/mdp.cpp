#include "rafa/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace rafa {

namespace {

using nlohmann::json;

bool all_finite(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(),
                       [](double x) { return std::isfinite(x); });
}

void check_finite(const std::vector<double>& v, const char* what) {
    if (!all_finite(v)) {
        throw std::invalid_argument(std::string(what) + " contains a non-finite entry");
    }
}

} // namespace

LinearMixtureMdp::LinearMixtureMdp(int n_states, int n_actions, int feature_dim,
                                   Eigen::MatrixXd phi, Eigen::VectorXd theta_star,
                                   std::vector<double> reward, double gamma,
                                   std::vector<double> rho, double value_bound)
    : n_states_(n_states),
      n_actions_(n_actions),
      d_(feature_dim),
      phi_(std::move(phi)),
      theta_star_(std::move(theta_star)),
      reward_(std::move(reward)),
      gamma_(gamma),
      rho_(std::move(rho)),
      value_bound_(value_bound) {
    validate();
    max_reward_ = *std::max_element(reward_.begin(), reward_.end());
    if (value_bound_ <= 0.0) value_bound_ = max_reward_ / (1.0 - gamma_);

    // true kernel, checked to be a valid distribution without repair
    true_kernel_.assign(static_cast<std::size_t>(n_states_) * n_actions_ * n_states_, 0.0);
    for (int s = 0; s < n_states_; ++s) {
        for (int a = 0; a < n_actions_; ++a) {
            double row_sum = 0.0;
            for (int sn = 0; sn < n_states_; ++sn) {
                const double p = phi_.col(triple_index(s, a, sn)).dot(theta_star_);
                if (p < -1e-9) {
                    throw std::invalid_argument("phi^T theta_star negative at (" +
                                                std::to_string(s) + "," + std::to_string(a) +
                                                "," + std::to_string(sn) + ")");
                }
                true_kernel_[static_cast<std::size_t>(triple_index(s, a, sn))] = std::max(p, 0.0);
                row_sum += p;
            }
            if (std::abs(row_sum - 1.0) > 1e-9) {
                throw std::invalid_argument("phi^T theta_star row does not sum to one at (" +
                                            std::to_string(s) + "," + std::to_string(a) + ")");
            }
        }
    }

    // ||psi_V(s,a)||_2 over the value box [-L, L]^S is maximized at a corner;
    // enumerate when feasible, otherwise use the norm-sum upper bound.
    const double L = value_bound_;
    feature_bound_ = 0.0;
    if (n_states_ <= 20) {
        for (int s = 0; s < n_states_; ++s) {
            for (int a = 0; a < n_actions_; ++a) {
                for (std::uint64_t mask = 0; mask < (1ULL << n_states_); ++mask) {
                    Eigen::VectorXd psi = Eigen::VectorXd::Zero(d_);
                    for (int sn = 0; sn < n_states_; ++sn) {
                        const double vs = (mask >> sn) & 1 ? L : -L;
                        psi += phi_.col(triple_index(s, a, sn)) * vs;
                    }
                    feature_bound_ = std::max(feature_bound_, psi.norm());
                }
            }
        }
    } else {
        for (int s = 0; s < n_states_; ++s) {
            for (int a = 0; a < n_actions_; ++a) {
                double acc = 0.0;
                for (int sn = 0; sn < n_states_; ++sn) {
                    acc += phi_.col(triple_index(s, a, sn)).norm();
                }
                feature_bound_ = std::max(feature_bound_, L * acc);
            }
        }
    }
}

void LinearMixtureMdp::validate() const {
    if (n_states_ <= 0 || n_actions_ <= 0 || d_ <= 0) {
        throw std::invalid_argument("state, action, and feature counts must be positive");
    }
    if (!(gamma_ > 0.0 && gamma_ < 1.0)) {
        throw std::invalid_argument("gamma must lie strictly inside (0,1)");
    }
    if (phi_.rows() != d_ ||
        phi_.cols() != static_cast<Eigen::Index>(n_states_) * n_actions_ * n_states_) {
        throw std::invalid_argument("phi tensor has wrong shape");
    }
    if (theta_star_.size() != d_) {
        throw std::invalid_argument("theta_star dimension mismatch");
    }
    if (static_cast<int>(reward_.size()) != n_states_ * n_actions_) {
        throw std::invalid_argument("reward table has wrong size");
    }
    check_finite(reward_, "reward");
    for (double r : reward_) {
        if (r < 0.0 || r > 1.0) throw std::invalid_argument("rewards must lie in [0,1]");
    }
    if (static_cast<int>(rho_.size()) != n_states_) {
        throw std::invalid_argument("rho has wrong size");
    }
    double rho_sum = 0.0;
    for (double p : rho_) {
        if (p < 0.0) throw std::invalid_argument("rho entries must be nonnegative");
        rho_sum += p;
    }
    if (std::abs(rho_sum - 1.0) > 1e-9) {
        throw std::invalid_argument("rho must sum to one");
    }
    if (!phi_.allFinite() || !theta_star_.allFinite()) {
        throw std::invalid_argument("phi/theta_star contain non-finite entries");
    }
}

int LinearMixtureMdp::sample_initial_state(Rng& rng) const {
    return static_cast<int>(rng.categorical(rho_));
}

Eigen::VectorXd value_feature(const LinearMixtureMdp& mdp,
                              const std::vector<double>& v, int s, int a) {
    if (static_cast<int>(v.size()) != mdp.n_states()) {
        throw std::invalid_argument("value vector length does not match state count");
    }
    check_finite(v, "value function");
    Eigen::VectorXd psi = Eigen::VectorXd::Zero(mdp.feature_dim());
    for (int sn = 0; sn < mdp.n_states(); ++sn) {
        psi += mdp.phi().col(mdp.triple_index(s, a, sn)) * v[sn];
    }
    return psi;
}

std::vector<double> kernel_row(const LinearMixtureMdp& mdp,
                               const Eigen::VectorXd& theta, int s, int a) {
    if (theta.size() != mdp.feature_dim()) {
        throw std::invalid_argument("theta dimension mismatch");
    }
    const int S = mdp.n_states();
    std::vector<double> row(S);
    bool needs_repair = false;
    double sum = 0.0;
    for (int sn = 0; sn < S; ++sn) {
        double p = mdp.phi().col(mdp.triple_index(s, a, sn)).dot(theta);
        if (p < 0.0) needs_repair = true;
        row[sn] = p;
        sum += p;
    }
    if (!needs_repair && std::abs(sum - 1.0) <= 1e-12) return row;

    double clipped_sum = 0.0;
    for (double& p : row) {
        if (p < 0.0) p = 0.0;
        clipped_sum += p;
    }
    if (clipped_sum <= 0.0) {
        std::fill(row.begin(), row.end(), 1.0 / S);
    } else {
        for (double& p : row) p /= clipped_sum;
    }
    return row;
}

std::vector<double> transition_kernel(const LinearMixtureMdp& mdp,
                                      const Eigen::VectorXd& theta) {
    if (!theta.allFinite()) throw std::invalid_argument("theta must be finite");
    const int S = mdp.n_states(), A = mdp.n_actions();
    std::vector<double> kernel(static_cast<std::size_t>(S) * A * S);
    for (int s = 0; s < S; ++s) {
        for (int a = 0; a < A; ++a) {
            const auto row = kernel_row(mdp, theta, s, a);
            std::copy(row.begin(), row.end(),
                      kernel.begin() + static_cast<std::size_t>(mdp.pair_index(s, a)) * S);
        }
    }
    return kernel;
}

StepOutcome step(const LinearMixtureMdp& mdp, int s, int a, Rng& rng) {
    if (s < 0 || s >= mdp.n_states() || a < 0 || a >= mdp.n_actions()) {
        throw std::out_of_range("step: state or action index out of range");
    }
    const double* row =
        mdp.true_kernel().data() + static_cast<std::size_t>(mdp.pair_index(s, a)) * mdp.n_states();
    const int sn = static_cast<int>(rng.categorical(row, mdp.n_states()));
    return {sn, mdp.reward(s, a)};
}

ValueFn policy_evaluation(const std::vector<double>& kernel,
                          const std::vector<double>& reward, int n_states,
                          int n_actions, double gamma, const Policy& pi,
                          double tol) {
    if (tol <= 0.0) throw std::invalid_argument("tol must be positive");
    if (static_cast<int>(pi.size()) != n_states) {
        throw std::invalid_argument("policy length mismatch");
    }
    check_finite(kernel, "kernel");
    check_finite(reward, "reward");
    Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n_states, n_states);
    Eigen::VectorXd r_pi(n_states);
    for (int s = 0; s < n_states; ++s) {
        const int a = pi[s];
        if (a < 0 || a >= n_actions) throw std::invalid_argument("policy action out of range");
        const std::size_t base = (static_cast<std::size_t>(s) * n_actions + a) * n_states;
        for (int sn = 0; sn < n_states; ++sn) {
            m(s, sn) -= gamma * kernel[base + sn];
        }
        r_pi(s) = reward[static_cast<std::size_t>(s) * n_actions + a];
    }
    Eigen::VectorXd v = m.partialPivLu().solve(r_pi);

    double residual = 0.0;
    for (int s = 0; s < n_states; ++s) {
        const int a = pi[s];
        const std::size_t base = (static_cast<std::size_t>(s) * n_actions + a) * n_states;
        double backup = r_pi(s);
        for (int sn = 0; sn < n_states; ++sn) backup += gamma * kernel[base + sn] * v(sn);
        residual = std::max(residual, std::abs(v(s) - backup));
    }
    if (residual > tol) {
        throw std::runtime_error("policy evaluation residual " + std::to_string(residual) +
                                 " exceeds tol");
    }
    ValueFn out;
    out.v.assign(v.data(), v.data() + n_states);
    return out;
}

std::pair<Policy, ValueFn> optimal_solution(const std::vector<double>& kernel,
                                            const std::vector<double>& reward,
                                            int n_states, int n_actions,
                                            double gamma, double tol) {
    if (tol <= 0.0) throw std::invalid_argument("tol must be positive");
    check_finite(kernel, "kernel");
    check_finite(reward, "reward");
    std::vector<double> v(n_states, 0.0), v_next(n_states, 0.0);
    std::vector<double> q(static_cast<std::size_t>(n_states) * n_actions, 0.0);

    const int max_sweeps = 1000000;
    int sweep = 0;
    for (; sweep < max_sweeps; ++sweep) {
        double delta = 0.0;
        for (int s = 0; s < n_states; ++s) {
            double best = -std::numeric_limits<double>::infinity();
            for (int a = 0; a < n_actions; ++a) {
                const std::size_t base = (static_cast<std::size_t>(s) * n_actions + a) * n_states;
                double backup = reward[static_cast<std::size_t>(s) * n_actions + a];
                for (int sn = 0; sn < n_states; ++sn) backup += gamma * kernel[base + sn] * v[sn];
                q[static_cast<std::size_t>(s) * n_actions + a] = backup;
                if (backup > best) best = backup;
            }
            v_next[s] = best;
            delta = std::max(delta, std::abs(v_next[s] - v[s]));
        }
        v = v_next;
        if (delta <= tol) break;
    }
    if (sweep == max_sweeps) {
        throw std::runtime_error("optimal_solution failed to converge");
    }

    // one more backup so q is consistent with the final v
    Policy pi(n_states, 0);
    ValueFn out;
    out.v.assign(n_states, 0.0);
    for (int s = 0; s < n_states; ++s) {
        double best = -std::numeric_limits<double>::infinity();
        int best_a = 0;
        for (int a = 0; a < n_actions; ++a) {
            const std::size_t base = (static_cast<std::size_t>(s) * n_actions + a) * n_states;
            double backup = reward[static_cast<std::size_t>(s) * n_actions + a];
            for (int sn = 0; sn < n_states; ++sn) backup += gamma * kernel[base + sn] * v[sn];
            q[static_cast<std::size_t>(s) * n_actions + a] = backup;
            if (backup > best) {
                best = backup;
                best_a = a;
            }
        }
        pi[s] = best_a;
        out.v[s] = best;
    }
    out.q = q;
    return {pi, out};
}

namespace {

LinearMixtureMdp generate_dirichlet_tabular(const GenConfig& cfg, Rng& rng) {
    const int S = cfg.n_states, A = cfg.n_actions;
    const int d = S * A * S;
    if (cfg.feature_dim != 0 && cfg.feature_dim != d) {
        throw std::invalid_argument("dirichlet-tabular mode requires feature_dim = S*A*S'");
    }
    std::vector<double> kernel(static_cast<std::size_t>(S) * A * S);
    for (int sa = 0; sa < S * A; ++sa) {
        double sum = 0.0;
        for (int sn = 0; sn < S; ++sn) {
            const double g = rng.gamma(cfg.dirichlet_alpha);
            kernel[static_cast<std::size_t>(sa) * S + sn] = g;
            sum += g;
        }
        for (int sn = 0; sn < S; ++sn) kernel[static_cast<std::size_t>(sa) * S + sn] /= sum;
    }
    std::vector<double> reward(static_cast<std::size_t>(S) * A);
    for (double& r : reward) r = rng.uniform01();
    std::vector<double> rho(S, 1.0 / S);
    return from_table(kernel, reward, S, A, cfg.gamma, rho, cfg.value_bound);
}

LinearMixtureMdp generate_raw_gaussian(const GenConfig& cfg, Rng& rng) {
    const int S = cfg.n_states, A = cfg.n_actions;
    const int d = cfg.feature_dim > 0 ? cfg.feature_dim : S * A * S;
    if (d < 2) throw std::invalid_argument("raw-gaussian-projected mode needs feature_dim >= 2");

    Eigen::VectorXd theta(d);
    const double scale = std::sqrt(cfg.lambda <= 0.0 ? 1.0 : cfg.lambda);
    for (int i = 0; i < d; ++i) theta(i) = scale * rng.normal();
    if (theta.norm() < 1e-9) theta(0) = scale; // degenerate draw

    Eigen::MatrixXd phi(d, static_cast<Eigen::Index>(S) * A * S);
    for (Eigen::Index c = 0; c < phi.cols(); ++c) {
        for (int i = 0; i < d; ++i) phi(i, c) = rng.normal() / std::sqrt(static_cast<double>(d));
    }

    // project each induced row onto the simplex, then shift the features
    // along theta so phi^T theta reproduces the projected row exactly
    const Eigen::VectorXd u = theta / theta.squaredNorm();
    for (int s = 0; s < S; ++s) {
        for (int a = 0; a < A; ++a) {
            std::vector<double> raw(S);
            double clipped_sum = 0.0;
            for (int sn = 0; sn < S; ++sn) {
                const Eigen::Index c = (static_cast<Eigen::Index>(s) * A + a) * S + sn;
                raw[sn] = std::max(phi.col(c).dot(theta), 0.0);
                clipped_sum += raw[sn];
            }
            for (int sn = 0; sn < S; ++sn) {
                const Eigen::Index c = (static_cast<Eigen::Index>(s) * A + a) * S + sn;
                const double target =
                    clipped_sum > 0.0 ? raw[sn] / clipped_sum : 1.0 / S;
                const double current = phi.col(c).dot(theta);
                phi.col(c) += (target - current) * u;
            }
        }
    }

    std::vector<double> reward(static_cast<std::size_t>(S) * A);
    for (double& r : reward) r = rng.uniform01();
    std::vector<double> rho(S, 1.0 / S);
    return LinearMixtureMdp(S, A, d, std::move(phi), std::move(theta), std::move(reward),
                            cfg.gamma, std::move(rho), cfg.value_bound);
}

} // namespace

LinearMixtureMdp generate_environment(const GenConfig& cfg, Rng& rng) {
    switch (cfg.mode) {
    case GenMode::DirichletTabular: return generate_dirichlet_tabular(cfg, rng);
    case GenMode::RawGaussianProjected: return generate_raw_gaussian(cfg, rng);
    }
    throw std::invalid_argument("unknown generation mode");
}

LinearMixtureMdp from_table(const std::vector<double>& kernel,
                            const std::vector<double>& reward, int n_states,
                            int n_actions, double gamma,
                            const std::vector<double>& rho, double value_bound) {
    const int d = n_states * n_actions * n_states;
    if (static_cast<int>(kernel.size()) != d) {
        throw std::invalid_argument("kernel table has wrong size");
    }
    Eigen::MatrixXd phi = Eigen::MatrixXd::Identity(d, d);
    Eigen::VectorXd theta(d);
    for (int i = 0; i < d; ++i) theta(i) = kernel[i];
    return LinearMixtureMdp(n_states, n_actions, d, std::move(phi), std::move(theta),
                            reward, gamma, rho, value_bound);
}

LinearMixtureMdp make_delayed_chain(int n_states, double gamma, double loiter_reward) {
    if (n_states < 2) throw std::invalid_argument("chain needs at least two states");
    const int S = n_states, A = 2;
    std::vector<double> kernel(static_cast<std::size_t>(S) * A * S, 0.0);
    std::vector<double> reward(static_cast<std::size_t>(S) * A, 0.0);
    auto set = [&](int s, int a, int sn) {
        kernel[(static_cast<std::size_t>(s) * A + a) * S + sn] = 1.0;
    };
    for (int s = 0; s < S; ++s) {
        set(s, 0, s);                                  // loiter
        set(s, 1, std::min(s + 1, S - 1));             // walk right
        reward[static_cast<std::size_t>(s) * A + 0] = s == S - 1 ? 1.0 : loiter_reward;
        reward[static_cast<std::size_t>(s) * A + 1] = 0.0;
    }
    std::vector<double> rho(S, 0.0);
    rho[0] = 1.0;
    return from_table(kernel, reward, S, A, gamma, rho);
}

std::string LinearMixtureMdp::serialize() const {
    json j;
    j["kind"] = "linear_mixture_mdp";
    j["version"] = 1;
    j["n_states"] = n_states_;
    j["n_actions"] = n_actions_;
    j["feature_dim"] = d_;
    j["gamma"] = gamma_;
    j["value_bound"] = value_bound_;
    j["theta_star"] = std::vector<double>(theta_star_.data(), theta_star_.data() + d_);
    std::vector<double> phi_flat(phi_.size());
    Eigen::Map<Eigen::MatrixXd>(phi_flat.data(), phi_.rows(), phi_.cols()) = phi_;
    j["phi"] = phi_flat;
    j["reward"] = reward_;
    j["rho"] = rho_;
    return j.dump();
}

LinearMixtureMdp LinearMixtureMdp::deserialize(const std::string& text) {
    json j = json::parse(text);
    if (j.value("kind", "") != "linear_mixture_mdp") {
        throw std::invalid_argument("not an environment file");
    }
    const int S = j.at("n_states").get<int>();
    const int A = j.at("n_actions").get<int>();
    const int d = j.at("feature_dim").get<int>();
    auto theta_vec = j.at("theta_star").get<std::vector<double>>();
    auto phi_flat = j.at("phi").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(phi_flat.size()) !=
        static_cast<Eigen::Index>(d) * S * A * S) {
        throw std::invalid_argument("phi payload has wrong size");
    }
    Eigen::MatrixXd phi =
        Eigen::Map<Eigen::MatrixXd>(phi_flat.data(), d, static_cast<Eigen::Index>(S) * A * S);
    Eigen::VectorXd theta = Eigen::Map<Eigen::VectorXd>(theta_vec.data(), d);
    return LinearMixtureMdp(S, A, d, std::move(phi), std::move(theta),
                            j.at("reward").get<std::vector<double>>(),
                            j.at("gamma").get<double>(),
                            j.at("rho").get<std::vector<double>>(),
                            j.at("value_bound").get<double>());
}

void LinearMixtureMdp::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << serialize() << "\n";
}

LinearMixtureMdp LinearMixtureMdp::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open environment file " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return deserialize(buf.str());
}

} // namespace rafa
