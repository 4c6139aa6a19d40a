#pragma once

#include <functional>
#include <optional>
#include <string>

#include "rafa/mdp.hpp"
#include "rafa/planners.hpp"
#include "rafa/posterior.hpp"
#include "rafa/record.hpp"

namespace rafa {

enum class Variant { Bma, Bonus, PosteriorSampling };
enum class PlannerKind { ValueIteration, TreeSearch, BeamSearch, Mcts };
enum class SwitchKind { EntropyLog2, DetRatio4, PredictionMismatch, FixedPeriod, Never };

std::string to_string(Variant v);
std::string to_string(PlannerKind p);
std::string to_string(SwitchKind s);
Variant variant_from_string(const std::string& s);
PlannerKind planner_from_string(const std::string& s);
SwitchKind switch_from_string(const std::string& s);

struct SwitchCondition {
    SwitchKind kind = SwitchKind::EntropyLog2;
    std::int64_t period = 0; // fixed-period only
};

struct AgentConfig {
    Variant variant = Variant::PosteriorSampling;
    PlannerKind planner = PlannerKind::ValueIteration;
    SearchBudget budget;        // search planners only
    int critic_horizon = 60;    // inner VI horizon behind the search critic
    double epsilon = 0.01;      // planner target
    double value_bound = 0.0;   // L; 0 defaults to r_max / (1 - gamma)
    SwitchCondition switch_cond;
    std::int64_t horizon = 1000; // T
    double lambda = 1.0;
    double sigma = 1.0;
    std::uint64_t seed = 0;
    bool keep_buffer = false;
    // Learn the reward table with a separate linear model (one-hot (s,a)
    // features) instead of treating it as known. Off by default.
    bool learn_reward = false;
    // Diagnostic: plan on this fixed parameter instead of the posterior
    // (Dirac belief / deliberately wrong model control arms).
    std::optional<std::vector<double>> fixed_theta;
};

// instantaneous regret of playing pi from state s; supplied by the harness
using RegretFn = std::function<double(const Policy&, int)>;

/**
 * Builds the frozen planning model for an epoch. BMA plans on the posterior
 * mean, the bonus variant inflates the known reward by
 * sqrt(2) L sqrt(information gain) at psi_{V_prev}, and posterior sampling
 * draws the parameter. Every induced kernel passes the projection repair.
 */
PlanningModel plan_model(const LinearMixtureMdp& env, const GaussianPosterior& post,
                         Variant variant, double value_bound,
                         const std::vector<double>& v_prev, Rng& rng);

// same, but planning on an estimated base reward table (learn-reward mode)
PlanningModel plan_model(const LinearMixtureMdp& env, const GaussianPosterior& post,
                         Variant variant, double value_bound,
                         const std::vector<double>& v_prev, Rng& rng,
                         const std::vector<double>& base_reward);

struct SwitchInputs {
    double entropy_at_start = 0.0;
    double logdet_at_start = 0.0;
    std::int64_t t = 0;
    std::int64_t t_start = 0;
    int last_state = 0, last_action = 0, last_next_state = 0;
};

bool should_switch(const SwitchCondition& cond, const SwitchInputs& in,
                   const GaussianPosterior& post, const PlanningModel& frozen);

/**
 * The interaction loop: plan at each epoch start with the frozen posterior
 * snapshot, act with the frozen policy, feed every transition to the belief,
 * and reopen the epoch on the first step the switching condition fires.
 */
RunRecord run(const LinearMixtureMdp& env, const AgentConfig& cfg,
              const RegretFn& regret_fn = nullptr);

// Control arm: the same loop with a one-step planner, i.e. greedy on the
// effective immediate reward.
RunRecord baseline_myopic(const LinearMixtureMdp& env, const AgentConfig& cfg,
                          const RegretFn& regret_fn = nullptr);

// info gains of psi_V(s,a) for every pair, the audit grid
std::vector<double> grid_information_gains(const LinearMixtureMdp& env,
                                           const GaussianPosterior& post,
                                           const std::vector<double>& v);

// High-probability value-bound (c+1) R sqrt(2 lambda d log(2 d T / delta)).
// Reporting helper only; the runtime bound stays r_max / (1 - gamma).
double probabilistic_value_bound(double feature_bound, double lambda, int dim,
                                 std::int64_t horizon, double delta, double c = 1.0);

} // namespace rafa
