#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rafa/agent.hpp"
#include "rafa/mdp.hpp"
#include "rafa/record.hpp"

namespace rafa {

/**
 * Ground-truth regret oracle for one environment: V* solved once, V^pi solved
 * per distinct policy and cached. inst_regret floors the difference at -tol to
 * absorb solver noise.
 */
class RegretEvaluator {
public:
    explicit RegretEvaluator(const LinearMixtureMdp& env, double tol = 1e-6);

    double optimal_value(int s) const { return v_star_[s]; }
    const std::vector<double>& policy_values(const Policy& pi);
    double inst_regret(const Policy& pi, int s);
    RegretFn as_fn();

private:
    const LinearMixtureMdp& env_;
    double tol_;
    std::vector<double> v_star_;
    std::map<Policy, std::vector<double>> cache_;
};

struct AuditLine {
    std::string name;
    bool applicable = true;
    bool pass = true;
    double slack = 0.0;       // margin to the bound; negative means violated
    std::int64_t fail_index = -1;
    std::string detail;
};

struct AuditReport {
    std::vector<AuditLine> lines;
    bool all_pass() const;
    std::string to_text() const;
};

/**
 * Replays every invariant a finished run must satisfy: the switch-count law,
 * the gain-chain telescoping, entropy monotonicity, the entropy budget, epoch
 * policy constancy, pre-switch drop bounds, bonus optimism, planner
 * certificates, and the information-gain regularity coefficient. Failures are
 * reported, not thrown.
 */
AuditReport audit(const RunRecord& record);

// --- sweeps -----------------------------------------------------------------

struct EnvSpec {
    enum class Kind { Generate, Chain, File };
    Kind kind = Kind::Generate;
    GenConfig gen;
    int chain_states = 6;
    double chain_gamma = 0.9;
    double chain_loiter_reward = 0.1;
    std::string path;
};

// environment stream is derived from the member seed, so each member owns a
// fresh draw from the generator
LinearMixtureMdp make_env(const EnvSpec& spec, std::uint64_t seed);

struct MemberResult {
    std::string config_id;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    std::vector<std::pair<std::int64_t, double>> regret_at; // (T, cum regret)
    int epoch_count = 0;
    double entropy_initial = 0.0;
    double entropy_final = 0.0;
    bool audits_pass = false;
};

struct SweepConfigEntry {
    std::string config_id;
    AgentConfig cfg;
    bool myopic = false; // run the one-step control arm instead of the planner
};

struct SweepPlan {
    EnvSpec env;
    std::vector<SweepConfigEntry> configs;
    std::vector<std::uint64_t> seeds;
    std::vector<std::int64_t> t_grid; // ascending; members run to the largest
    int jobs = 0;                     // 0: hardware concurrency
};

struct SweepResult {
    std::vector<MemberResult> members;
    std::vector<std::int64_t> t_grid;

    std::vector<double> regrets_at(const std::string& config_id, std::int64_t t) const;
};

// Runs the full grid; `member_dir`, when set, makes members resumable: a
// finished member is persisted there and skipped on the next invocation.
SweepResult run_sweep(const SweepPlan& plan,
                      const std::optional<std::string>& member_dir = std::nullopt);

struct MeanStderr {
    double mean = 0.0;
    double stderr_ = 0.0;
    int n = 0;
};

// sample mean and standard error of cumulative regret at T across members
MeanStderr bayesian_regret_estimate(const std::vector<double>& regrets);
MeanStderr bayesian_regret_estimate(const SweepResult& sweep, const std::string& config_id,
                                    std::int64_t t);

struct RatioRow {
    std::int64_t t_low = 0, t_high = 0;
    double ratio = 0.0;
    double ci_low = 0.0, ci_high = 0.0;
    bool degenerate = false; // near-zero denominator
    bool has_ci = false;
};

// ratio of mean cumulative regrets for consecutive grid points, bootstrap CI
std::vector<RatioRow> scaling_ratios(const SweepResult& sweep, const std::string& config_id,
                                     int bootstrap_samples = 10000,
                                     std::uint64_t bootstrap_seed = 17);

struct ScalingProbeResult {
    SweepResult sweep;
    std::vector<RatioRow> rows;
};

// One-call growth probe: run `n_seeds` members of one agent config on fresh
// environments over a geometric grid (T, 4T, 16T, ...) and report the
// consecutive regret ratios (2 under sqrt-T growth, 4 under linear).
ScalingProbeResult scaling_probe(const SweepConfigEntry& entry, const EnvSpec& env,
                                 const std::vector<std::int64_t>& t_grid, int n_seeds,
                                 int jobs = 0);

// mean(ys)/mean(xs) with a paired percentile-bootstrap interval
RatioRow bootstrap_ratio(const std::vector<double>& xs, const std::vector<double>& ys,
                         int bootstrap_samples, std::uint64_t seed);

// CSV emission; column layout is part of the external contract
std::string members_csv(const SweepResult& sweep);
std::string summary_csv(const SweepResult& sweep);

} // namespace rafa
