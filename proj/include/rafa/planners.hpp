#pragma once

#include <string>
#include <vector>

#include "rafa/mdp.hpp"
#include "rafa/rng.hpp"

namespace rafa {

// The frozen model a planner works against: an estimated kernel plus an
// effective reward table (possibly bonus-inflated, so entries may leave [0,1]).
struct PlanningModel {
    int n_states = 0;
    int n_actions = 0;
    std::vector<double> kernel;   // S*A x S', row-major, valid distribution rows
    std::vector<double> reward;   // S*A
    double gamma = 0.0;

    double r(int s, int a) const { return reward[static_cast<std::size_t>(s) * n_actions + a]; }
    const double* row(int s, int a) const {
        return kernel.data() + (static_cast<std::size_t>(s) * n_actions + a) * n_states;
    }
    // argmax-probability successor, lowest state index on ties
    int det_successor(int s, int a) const;
    int sample_successor(int s, int a, Rng& rng) const;
    double max_reward() const;
    double max_abs_reward() const; // value-range bound when rewards can be negative
};

struct PlannerResult {
    Policy pi;
    ValueFn v;
    std::vector<double> q;            // S*A; NaN marks cells a search never visited
    double epsilon_certificate = 0.0; // max Bellman residual vs the planning model
    std::string planner_id;
    int horizon_used = 0;
    long nodes_expanded = 0; // backups (VI) or search expansions, for the run log
};

struct SearchBudget {
    int breadth = 2;         // B
    int depth = 2;           // U
    int proposal_width = 2;  // L_prop (beam / MCTS proposals)
    int fanout = 1;          // L' sampled successors per action (MCTS)
    int expansions = 1;      // E (MCTS)
    long node_cap = 2'000'000;
};

struct HorizonBound {
    int horizon;
    bool vacuous; // epsilon >= value bound: the formula gives nothing useful
};

// U = 1 + ceil(log(eps / L) / log(gamma))
HorizonBound required_horizon(double gamma, double epsilon, double value_bound);

/**
 * Truncated value iteration: `horizon` backups from the zero boundary. The
 * returned (q, v, pi) satisfy v(s) = max_a q(s,a) = q(s, pi(s)); the
 * certificate is the exact max residual |q - r - gamma (P v)| measured by one
 * extra backup against the same model.
 */
PlannerResult value_iteration(const PlanningModel& model, int horizon);

// residual of Definition-style consistency, NaN cells skipped
double epsilon_residual(const std::vector<double>& q, const std::vector<double>& v,
                        const PlanningModel& model);

// recomputes the certificate for an existing result (same code path as the
// planners use, so it reproduces the stored value bit-for-bit)
double epsilon_check(const PlannerResult& result, const PlanningModel& model);

// truncated-VI state values used as the search planners' critic
std::vector<double> critic_values(const PlanningModel& model, int inner_horizon);

// top-`width` actions at s ranked by r + gamma * (P critic), lowest index on ties
std::vector<int> elite_actions(const PlanningModel& model,
                               const std::vector<double>& critic, int s, int width);

struct SearchResult {
    int first_action = -1;
    std::vector<std::pair<int, int>> rollout; // (state, action) per level
    double value = 0.0;                       // score of the selected rollout
    std::vector<double> root_q;               // per action; NaN if never proposed
    long nodes_expanded = 0;
};

/**
 * Exhaustive tree over Elite proposals, depth levels u = 0..U, deterministic
 * successor per (s,a). Rollouts score sum_u gamma^u r_u + gamma^{U+1} critic;
 * ties resolve to the lexicographically smallest action sequence.
 */
SearchResult tree_search(const PlanningModel& model, const std::vector<double>& critic,
                         int s0, const SearchBudget& budget);

// Beam variant: each beam state proposes `proposal_width` candidates and keeps
// its `breadth` best by the one-step score r + gamma * critic, so
// proposal_width == breadth never prunes; final selection among preserved
// rollouts uses the discounted sum with the critic tail.
SearchResult beam_search(const PlanningModel& model, const std::vector<double>& critic,
                         int s0, const SearchBudget& budget);

/**
 * Monte-Carlo tree search, stochastic case: greedy-on-Q selection (no
 * exploration bonus), expansion proposes `proposal_width` actions with
 * `fanout` sampled successors each, and every expansion backs values up to
 * the root (mean over sampled successors, max over actions).
 */
SearchResult mcts(const PlanningModel& model, const std::vector<double>& critic,
                  int s0, const SearchBudget& budget, Rng& rng);

} // namespace rafa
