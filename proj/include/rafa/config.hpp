#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "rafa/agent.hpp"
#include "rafa/harness.hpp"

namespace rafa {

// configuration problems map to exit code 2 at the CLI
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/**
 * One experiment file drives everything: environment generation, the agent,
 * and the harness grid. Unknown keys are rejected so a typo cannot silently
 * change a run. Full schema in the README and under `rafa --help`.
 */
struct ExperimentConfig {
    int schema_version = 1;
    EnvSpec env;
    AgentConfig agent;
    std::vector<std::string> sweep_variants; // config ids for cmd_sweep
    std::vector<std::uint64_t> seeds;
    std::vector<std::int64_t> t_grid;
    std::string out_dir = "out";
    int jobs = 0;

    static ExperimentConfig from_json_text(const std::string& text);
    static ExperimentConfig from_file(const std::string& path);
    std::string to_json_text() const;

    SweepPlan sweep_plan() const;
};

} // namespace rafa
