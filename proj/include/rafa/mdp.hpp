#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "rafa/rng.hpp"

namespace rafa {

using Policy = std::vector<int>;

struct ValueFn {
    std::vector<double> v;                       // per state
    std::optional<std::vector<double>> q;        // per (state, action), row-major
};

/**
 * Linear-mixture environment: P(s'|s,a) = phi(s'|s,a)^T theta_star with a
 * known feature map, known deterministic rewards in [0,1], and discount in
 * (0,1). Tabular MDPs embed via one-hot features (see from_table). Immutable
 * after construction and safe to share across threads.
 */
class LinearMixtureMdp {
public:
    LinearMixtureMdp(int n_states, int n_actions, int feature_dim,
                     Eigen::MatrixXd phi,           // d x (S*A*S'), column per triple
                     Eigen::VectorXd theta_star,
                     std::vector<double> reward,    // S*A
                     double gamma,
                     std::vector<double> rho,
                     double value_bound);           // L_cfg

    int n_states() const { return n_states_; }
    int n_actions() const { return n_actions_; }
    int feature_dim() const { return d_; }
    double gamma() const { return gamma_; }
    double value_bound() const { return value_bound_; }
    double feature_bound() const { return feature_bound_; }
    double max_reward() const { return max_reward_; }

    const Eigen::VectorXd& theta_star() const { return theta_star_; }
    const std::vector<double>& reward_table() const { return reward_; }
    const std::vector<double>& initial_distribution() const { return rho_; }
    const std::vector<double>& true_kernel() const { return true_kernel_; }
    const Eigen::MatrixXd& phi() const { return phi_; }

    double reward(int s, int a) const { return reward_[s * n_actions_ + a]; }

    // column of phi for the (s, a, s') triple
    Eigen::VectorXd feature(int s, int a, int s_next) const {
        return phi_.col(triple_index(s, a, s_next));
    }

    int triple_index(int s, int a, int s_next) const {
        return (s * n_actions_ + a) * n_states_ + s_next;
    }
    int pair_index(int s, int a) const { return s * n_actions_ + a; }

    int sample_initial_state(Rng& rng) const;

    // JSON text round trip; doubles survive exactly
    std::string serialize() const;
    static LinearMixtureMdp deserialize(const std::string& text);
    void save(const std::string& path) const;
    static LinearMixtureMdp load(const std::string& path);

private:
    int n_states_, n_actions_, d_;
    Eigen::MatrixXd phi_;
    Eigen::VectorXd theta_star_;
    std::vector<double> reward_;
    double gamma_;
    std::vector<double> rho_;
    double value_bound_;
    double feature_bound_;
    double max_reward_;
    std::vector<double> true_kernel_;   // P_{theta*}, S*A x S' row-major

    void validate() const;
};

// psi_V(s,a) = sum_{s'} phi(s'|s,a) V(s'), so E_{s'~P_theta}[V(s')] = psi^T theta.
Eigen::VectorXd value_feature(const LinearMixtureMdp& mdp,
                              const std::vector<double>& v, int s, int a);

/**
 * Kernel induced by an arbitrary parameter. Rows phi^T theta are repaired to
 * a valid distribution: negative entries clip to zero, the row renormalizes,
 * and an all-zero row falls back to uniform. Exact theta_star needs no repair.
 */
std::vector<double> transition_kernel(const LinearMixtureMdp& mdp,
                                      const Eigen::VectorXd& theta);

// single row of the above for (s, a)
std::vector<double> kernel_row(const LinearMixtureMdp& mdp,
                               const Eigen::VectorXd& theta, int s, int a);

struct StepOutcome {
    int next_state;
    double reward;
};

StepOutcome step(const LinearMixtureMdp& mdp, int s, int a, Rng& rng);

/**
 * Solves (I - gamma P^pi) V = r^pi directly; the returned V satisfies the
 * policy Bellman equation within tol.
 */
ValueFn policy_evaluation(const std::vector<double>& kernel,
                          const std::vector<double>& reward, int n_states,
                          int n_actions, double gamma, const Policy& pi,
                          double tol = 1e-8);

// Value iteration to a Bellman-optimality residual <= tol; greedy policy,
// lowest action index on ties.
std::pair<Policy, ValueFn> optimal_solution(const std::vector<double>& kernel,
                                            const std::vector<double>& reward,
                                            int n_states, int n_actions,
                                            double gamma, double tol = 1e-6);

enum class GenMode { DirichletTabular, RawGaussianProjected };

struct GenConfig {
    int n_states = 5;
    int n_actions = 3;
    int feature_dim = 0;       // 0: derived from mode (S*A*S' for one-hot)
    double gamma = 0.9;
    GenMode mode = GenMode::DirichletTabular;
    double dirichlet_alpha = 1.0;
    double lambda = 1.0;       // prior scale for raw-gaussian mode
    double value_bound = 0.0;  // 0: defaults to max reward / (1 - gamma)
};

LinearMixtureMdp generate_environment(const GenConfig& cfg, Rng& rng);

// One-hot embedding of an explicit tabular MDP (d = S*A*S').
LinearMixtureMdp from_table(const std::vector<double>& kernel,
                            const std::vector<double>& reward, int n_states,
                            int n_actions, double gamma,
                            const std::vector<double>& rho,
                            double value_bound = 0.0);

// Deterministic chain with a delayed payoff: action 0 loiters for a dribble
// of reward, action 1 walks toward the far end where loitering pays 1.
LinearMixtureMdp make_delayed_chain(int n_states, double gamma,
                                    double loiter_reward = 0.1);

} // namespace rafa
