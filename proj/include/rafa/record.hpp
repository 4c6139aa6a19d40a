#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rafa/mdp.hpp"

namespace rafa {

struct StepRecord {
    std::int64_t t = 0;
    int state = 0;
    int action = 0;
    double reward = 0.0;
    int next_state = 0;
    double entropy = 0.0;    // H_t, belief entropy before this step's update
    double info_gain = 0.0;  // closed-form gain of the executed feature at D_t
    int epoch = 0;
    double inst_regret = 0.0;
    double cum_regret = 0.0;
};

struct EpochSummary {
    int k = 0;
    std::int64_t t_start = 0;
    double entropy_at_start = 0.0;
    double logdet_at_start = 0.0;
    double certificate = 0.0;
    int horizon_used = 0;
    long nodes_expanded = 0;
    std::string planner_id;
    double min_reward_margin = 0.0;   // min over (s,a) of r_eff - r
    std::vector<double> gains_open;   // grid info gains at D_{t_k}, S*A entries
    std::vector<double> gains_close;  // grid info gains at the epoch's last step
    Policy pi;
    std::vector<double> value;
};

// One stored regression pair plus the transition it came from.
struct BufferEntry {
    int state = 0, action = 0, next_state = 0;
    double reward = 0.0;
    Eigen::VectorXd psi;
    double y = 0.0;
};

struct RunRecord {
    // config echo
    std::uint64_t seed = 0;
    std::string variant;
    std::string planner;
    std::string switch_kind;
    double epsilon = 0.0;
    double value_bound = 0.0;
    double lambda = 0.0;
    double sigma = 0.0;
    std::int64_t horizon = 0;
    int feature_dim = 0;
    bool learned_reward = false;

    // totals
    double entropy_initial = 0.0;  // H_0
    double entropy_final = 0.0;    // H_T
    double feature_bound_env = 0.0;
    double max_feature_norm = 0.0;  // realized max ||psi_t||
    std::int64_t switch_disagreements = 0;

    std::vector<StepRecord> steps;
    std::vector<EpochSummary> epochs;
    std::vector<BufferEntry> buffer;  // populated only when the run keeps it
    std::vector<double> reward_estimate_final; // learn-reward mode only

    double cumulative_regret() const {
        return steps.empty() ? 0.0 : steps.back().cum_regret;
    }
    double cumulative_regret_at(std::int64_t t) const;
    int epoch_count() const { return static_cast<int>(epochs.size()); }

    // step stream: exactly one JSON object per line, fixed keys
    // (t, state, action, reward, entropy, epoch, inst_regret, cum_regret)
    std::string steps_jsonl() const;
    // everything else: totals, config echo, epochs, per-step gains
    std::string meta_json() const;

    static RunRecord from_files(const std::string& steps_text, const std::string& meta_text);
};

} // namespace rafa
