#include "rafa/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace rafa {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& known,
                    const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!known.count(it.key())) {
            throw ConfigError("unknown key '" + it.key() + "' in " + where);
        }
    }
}

EnvSpec parse_env(const json& j) {
    reject_unknown(j,
                   {"mode", "n_states", "n_actions", "feature_dim", "gamma",
                    "dirichlet_alpha", "lambda", "value_bound", "path", "chain_states",
                    "chain_loiter_reward"},
                   "environment");
    EnvSpec spec;
    const std::string mode = j.value("mode", "dirichlet-tabular");
    if (mode == "dirichlet-tabular" || mode == "raw-gaussian-projected") {
        spec.kind = EnvSpec::Kind::Generate;
        spec.gen.mode = mode == "dirichlet-tabular" ? GenMode::DirichletTabular
                                                    : GenMode::RawGaussianProjected;
        spec.gen.n_states = j.value("n_states", 5);
        spec.gen.n_actions = j.value("n_actions", 3);
        spec.gen.feature_dim = j.value("feature_dim", 0);
        spec.gen.gamma = j.value("gamma", 0.9);
        spec.gen.dirichlet_alpha = j.value("dirichlet_alpha", 1.0);
        spec.gen.lambda = j.value("lambda", 1.0);
        spec.gen.value_bound = j.value("value_bound", 0.0);
    } else if (mode == "chain") {
        spec.kind = EnvSpec::Kind::Chain;
        spec.chain_states = j.value("chain_states", j.value("n_states", 6));
        spec.chain_gamma = j.value("gamma", 0.9);
        spec.chain_loiter_reward = j.value("chain_loiter_reward", 0.1);
    } else if (mode == "file") {
        spec.kind = EnvSpec::Kind::File;
        if (!j.contains("path")) throw ConfigError("environment mode 'file' needs 'path'");
        spec.path = j.at("path").get<std::string>();
    } else {
        throw ConfigError("unknown environment mode '" + mode + "'");
    }
    return spec;
}

AgentConfig parse_agent(const json& j) {
    reject_unknown(j,
                   {"variant", "planner", "epsilon", "value_bound", "switch", "horizon",
                    "lambda", "sigma", "seed", "critic_horizon", "budget", "learn_reward"},
                   "agent");
    AgentConfig cfg;
    cfg.variant = variant_from_string(j.value("variant", "rafa-ps"));
    cfg.planner = planner_from_string(j.value("planner", "value-iteration"));
    cfg.epsilon = j.value("epsilon", 0.01);
    cfg.value_bound = j.value("value_bound", 0.0);
    cfg.horizon = j.value("horizon", static_cast<std::int64_t>(1000));
    cfg.lambda = j.value("lambda", 1.0);
    cfg.sigma = j.value("sigma", 1.0);
    cfg.seed = j.value("seed", static_cast<std::uint64_t>(0));
    cfg.critic_horizon = j.value("critic_horizon", 60);
    cfg.learn_reward = j.value("learn_reward", false);
    if (j.contains("switch")) {
        const json& js = j.at("switch");
        reject_unknown(js, {"kind", "period"}, "agent.switch");
        cfg.switch_cond.kind = switch_from_string(js.value("kind", "entropy-log2"));
        cfg.switch_cond.period = js.value("period", static_cast<std::int64_t>(0));
    }
    if (j.contains("budget")) {
        const json& jb = j.at("budget");
        reject_unknown(jb,
                       {"breadth", "depth", "proposal_width", "fanout", "expansions",
                        "node_cap"},
                       "agent.budget");
        cfg.budget.breadth = jb.value("breadth", 2);
        cfg.budget.depth = jb.value("depth", 2);
        cfg.budget.proposal_width = jb.value("proposal_width", 2);
        cfg.budget.fanout = jb.value("fanout", 1);
        cfg.budget.expansions = jb.value("expansions", 1);
        cfg.budget.node_cap = jb.value("node_cap", static_cast<long>(2'000'000));
    }
    return cfg;
}

} // namespace

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    reject_unknown(j,
                   {"schema_version", "environment", "agent", "harness"},
                   "config root");
    ExperimentConfig cfg;
    cfg.schema_version = j.value("schema_version", 0);
    if (cfg.schema_version != 1) {
        throw ConfigError("unsupported schema_version " + std::to_string(cfg.schema_version) +
                          " (expected 1)");
    }
    if (j.contains("environment")) cfg.env = parse_env(j.at("environment"));
    if (j.contains("agent")) cfg.agent = parse_agent(j.at("agent"));
    if (j.contains("harness")) {
        const json& jh = j.at("harness");
        reject_unknown(jh, {"seeds", "seed_count", "seed_base", "t_grid", "out_dir", "jobs",
                            "sweep_variants"},
                       "harness");
        if (jh.contains("seeds")) {
            cfg.seeds = jh.at("seeds").get<std::vector<std::uint64_t>>();
        } else {
            const int count = jh.value("seed_count", 1);
            const std::uint64_t base = jh.value("seed_base", static_cast<std::uint64_t>(0));
            for (int i = 0; i < count; ++i) cfg.seeds.push_back(base + i);
        }
        cfg.t_grid = jh.value("t_grid", std::vector<std::int64_t>{});
        cfg.out_dir = jh.value("out_dir", std::string("out"));
        cfg.jobs = jh.value("jobs", 0);
        cfg.sweep_variants =
            jh.value("sweep_variants", std::vector<std::string>{});
    }
    if (cfg.seeds.empty()) cfg.seeds.push_back(cfg.agent.seed);
    if (cfg.t_grid.empty()) cfg.t_grid.push_back(cfg.agent.horizon);
    // deduplicate, keep ascending
    std::sort(cfg.seeds.begin(), cfg.seeds.end());
    cfg.seeds.erase(std::unique(cfg.seeds.begin(), cfg.seeds.end()), cfg.seeds.end());
    std::sort(cfg.t_grid.begin(), cfg.t_grid.end());
    cfg.t_grid.erase(std::unique(cfg.t_grid.begin(), cfg.t_grid.end()), cfg.t_grid.end());
    return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return from_json_text(buf.str());
}

std::string ExperimentConfig::to_json_text() const {
    json j;
    j["schema_version"] = schema_version;
    json je;
    switch (env.kind) {
    case EnvSpec::Kind::Generate:
        je["mode"] = env.gen.mode == GenMode::DirichletTabular ? "dirichlet-tabular"
                                                               : "raw-gaussian-projected";
        je["n_states"] = env.gen.n_states;
        je["n_actions"] = env.gen.n_actions;
        je["feature_dim"] = env.gen.feature_dim;
        je["gamma"] = env.gen.gamma;
        je["dirichlet_alpha"] = env.gen.dirichlet_alpha;
        je["lambda"] = env.gen.lambda;
        break;
    case EnvSpec::Kind::Chain:
        je["mode"] = "chain";
        je["chain_states"] = env.chain_states;
        je["gamma"] = env.chain_gamma;
        je["chain_loiter_reward"] = env.chain_loiter_reward;
        break;
    case EnvSpec::Kind::File:
        je["mode"] = "file";
        je["path"] = env.path;
        break;
    }
    j["environment"] = std::move(je);

    json ja;
    ja["variant"] = to_string(agent.variant);
    ja["planner"] = to_string(agent.planner);
    ja["epsilon"] = agent.epsilon;
    ja["value_bound"] = agent.value_bound;
    ja["horizon"] = agent.horizon;
    ja["lambda"] = agent.lambda;
    ja["sigma"] = agent.sigma;
    ja["seed"] = agent.seed;
    ja["critic_horizon"] = agent.critic_horizon;
    ja["learn_reward"] = agent.learn_reward;
    ja["switch"] = {{"kind", to_string(agent.switch_cond.kind)},
                    {"period", agent.switch_cond.period}};
    ja["budget"] = {{"breadth", agent.budget.breadth},
                    {"depth", agent.budget.depth},
                    {"proposal_width", agent.budget.proposal_width},
                    {"fanout", agent.budget.fanout},
                    {"expansions", agent.budget.expansions},
                    {"node_cap", agent.budget.node_cap}};
    j["agent"] = std::move(ja);

    json jh;
    jh["seeds"] = seeds;
    jh["t_grid"] = t_grid;
    jh["out_dir"] = out_dir;
    jh["jobs"] = jobs;
    jh["sweep_variants"] = sweep_variants;
    j["harness"] = std::move(jh);
    return j.dump(2);
}

SweepPlan ExperimentConfig::sweep_plan() const {
    SweepPlan plan;
    plan.env = env;
    plan.seeds = seeds;
    plan.t_grid = t_grid;
    plan.jobs = jobs;
    std::vector<std::string> ids = sweep_variants;
    if (ids.empty()) ids.push_back(to_string(agent.variant));
    for (const std::string& id : ids) {
        SweepConfigEntry entry;
        entry.config_id = id;
        entry.cfg = agent;
        if (id == "myopic") {
            entry.myopic = true;
        } else {
            entry.cfg.variant = variant_from_string(id);
        }
        plan.configs.push_back(std::move(entry));
    }
    return plan;
}

} // namespace rafa
