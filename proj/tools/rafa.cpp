#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "rafa/config.hpp"
#include "rafa/harness.hpp"
#include "rafa/verify.hpp"

namespace fs = std::filesystem;

namespace {

constexpr const char* kSchemaHelp = R"(Config file schema (JSON, schema_version 1):
{
  "schema_version": 1,
  "environment": {
    "mode": "dirichlet-tabular" | "raw-gaussian-projected" | "chain" | "file",
    "n_states": 5, "n_actions": 3, "feature_dim": 0,   // 0 derives S*A*S'
    "gamma": 0.9, "dirichlet_alpha": 1.0, "lambda": 1.0,
    "chain_states": 6, "chain_loiter_reward": 0.1,      // chain mode
    "path": "env.json"                                  // file mode
  },
  "agent": {
    "variant": "rafa-bma" | "rafa-bonus" | "rafa-ps",
    "planner": "value-iteration" | "tree-search" | "beam-search" | "mcts",
    "epsilon": 0.01, "value_bound": 0.0,                // 0: r_max/(1-gamma)
    "switch": {"kind": "entropy-log2" | "det-ratio-4" | "prediction-mismatch"
                      | "fixed-period" | "never", "period": 0},
    "horizon": 1000, "lambda": 1.0, "sigma": 1.0, "seed": 0,
    "critic_horizon": 60, "learn_reward": false,
    "budget": {"breadth": 2, "depth": 2, "proposal_width": 2,
               "fanout": 1, "expansions": 1, "node_cap": 2000000}
  },
  "harness": {
    "seeds": [0,1,2] or "seed_count": 20 with "seed_base": 0,
    "t_grid": [500, 2000, 8000],
    "out_dir": "out", "jobs": 0,
    "sweep_variants": ["rafa-ps", "rafa-bonus", "myopic"]
  }
}
Unknown keys are rejected. RAFA_OUT_DIR overrides harness.out_dir.)";

std::string resolve_out_dir(const std::string& from_config, const std::string& cli_override) {
    if (!cli_override.empty()) return cli_override;
    if (const char* env = std::getenv("RAFA_OUT_DIR"); env && *env) return env;
    return from_config;
}

void ensure_writable(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    const fs::path probe = fs::path(dir) / ".write_probe";
    std::ofstream out(probe);
    if (ec || !out) {
        throw rafa::ConfigError("output directory " + dir + " is not writable");
    }
    out.close();
    fs::remove(probe, ec);
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
}

int cmd_run(const std::string& config_path, std::int64_t seed_override,
            const std::string& out_override) {
    rafa::ExperimentConfig cfg = rafa::ExperimentConfig::from_file(config_path);
    if (seed_override >= 0) cfg.agent.seed = static_cast<std::uint64_t>(seed_override);
    const std::string out_dir = resolve_out_dir(cfg.out_dir, out_override);
    ensure_writable(out_dir);

    rafa::LinearMixtureMdp env = rafa::make_env(cfg.env, cfg.agent.seed);
    env.save(out_dir + "/env.json");
    rafa::RegretEvaluator oracle(env);
    rafa::RunRecord rec = rafa::run(env, cfg.agent, oracle.as_fn());
    write_file(out_dir + "/record.jsonl", rec.steps_jsonl());
    write_file(out_dir + "/meta.json", rec.meta_json());
    const rafa::AuditReport report = rafa::audit(rec);
    write_file(out_dir + "/audit.txt", report.to_text());
    write_file(out_dir + "/config_echo.json", cfg.to_json_text());

    std::cout << "run complete: T=" << rec.steps.size() << " K=" << rec.epoch_count()
              << " cum_regret=" << rec.cumulative_regret() << "\n"
              << report.to_text();
    return report.all_pass() ? 0 : 1;
}

int cmd_sweep(const std::string& config_path, const std::string& out_override, int jobs) {
    rafa::ExperimentConfig cfg = rafa::ExperimentConfig::from_file(config_path);
    if (cfg.sweep_variants.empty()) {
        throw rafa::ConfigError("sweep needs harness.sweep_variants");
    }
    const std::string out_dir = resolve_out_dir(cfg.out_dir, out_override);
    ensure_writable(out_dir);
    rafa::SweepPlan plan = cfg.sweep_plan();
    if (jobs > 0) plan.jobs = jobs;
    const rafa::SweepResult sweep = rafa::run_sweep(plan, out_dir + "/members");
    write_file(out_dir + "/members.csv", rafa::members_csv(sweep));
    write_file(out_dir + "/summary.csv", rafa::summary_csv(sweep));

    int failures = 0;
    for (const rafa::MemberResult& m : sweep.members) {
        if (!m.ok) {
            ++failures;
            std::cout << "member " << m.config_id << " seed " << m.seed
                      << " FAILED: " << m.error << "\n";
        }
    }
    std::cout << "sweep complete: " << sweep.members.size() - failures << "/"
              << sweep.members.size() << " members ok, outputs in " << out_dir << "\n";
    return failures == 0 ? 0 : 1;
}

int cmd_verify(const std::string& only, const std::string& inject_fault) {
    const auto results = rafa::run_verification(only, inject_fault);
    bool all_pass = true;
    for (const rafa::VerifyResult& r : results) {
        std::cout << r.name << " " << (r.pass ? "pass" : "FAIL") << " slack=" << r.slack;
        if (!r.detail.empty()) std::cout << " " << r.detail;
        std::cout << "\n";
        all_pass = all_pass && r.pass;
    }
    if (results.empty()) {
        std::cerr << "no checks match prefix '" << only << "'\n";
        return 2;
    }
    return all_pass ? 0 : 1;
}

struct CsvRow {
    std::string config_id;
    std::uint64_t seed;
    std::int64_t t;
    double cum_regret;
    int k;
    double h0, ht;
};

std::vector<CsvRow> read_members_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<CsvRow> rows;
    std::string line;
    std::getline(in, line); // header
    if (line != "config_id,seed,T,cum_regret,K,H0,HT") {
        throw std::runtime_error(path + " does not look like a members CSV");
    }
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        CsvRow row;
        std::string field;
        std::getline(ss, row.config_id, ',');
        std::getline(ss, field, ',');
        row.seed = std::stoull(field);
        std::getline(ss, field, ',');
        row.t = std::stoll(field);
        std::getline(ss, field, ',');
        row.cum_regret = std::stod(field);
        std::getline(ss, field, ',');
        row.k = std::stoi(field);
        std::getline(ss, field, ',');
        row.h0 = std::stod(field);
        std::getline(ss, field, ',');
        row.ht = std::stod(field);
        rows.push_back(row);
    }
    return rows;
}

int cmd_report(const std::vector<std::string>& csv_paths) {
    constexpr double kLog2 = 0.6931471805599453;
    std::vector<CsvRow> rows;
    for (const std::string& path : csv_paths) {
        for (CsvRow& r : read_members_csv(path)) rows.push_back(std::move(r));
    }
    if (rows.empty()) {
        std::cout << "no members found; nothing to report\n";
        return 0;
    }
    std::map<std::string, std::map<std::int64_t, std::vector<double>>> by_config;
    std::map<std::string, std::vector<std::pair<int, double>>> switch_stats;
    for (const CsvRow& r : rows) {
        by_config[r.config_id][r.t].push_back(r.cum_regret);
        switch_stats[r.config_id].push_back({r.k, (r.h0 - r.ht) / kLog2});
    }

    std::cout << "== scaling ratios (mean regret at 4T over mean regret at T) ==\n";
    bool any_ratio = false;
    for (const auto& [config_id, grid] : by_config) {
        std::vector<std::int64_t> ts;
        for (const auto& [t, _] : grid) ts.push_back(t);
        for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
            const auto& xs = grid.at(ts[i]);
            const auto& ys = grid.at(ts[i + 1]);
            if (xs.size() != ys.size() || xs.empty()) continue;
            const rafa::RatioRow row = rafa::bootstrap_ratio(xs, ys, 10000, 17 + i);
            any_ratio = true;
            std::cout << config_id << " T=" << ts[i] << "->" << ts[i + 1]
                      << " ratio=" << row.ratio;
            if (row.has_ci) std::cout << " ci=[" << row.ci_low << "," << row.ci_high << "]";
            if (row.degenerate) std::cout << " (degenerate: near-zero regret)";
            std::cout << "\n";
        }
    }
    if (!any_ratio) {
        std::cout << "(single T point or single member: no ratios to report)\n";
    }

    std::cout << "== switch counts vs entropy budget ==\n";
    for (const auto& [config_id, stats] : switch_stats) {
        double max_used = 0.0, max_budget = 0.0;
        bool ok = true;
        for (const auto& [k, budget] : stats) {
            max_used = std::max(max_used, static_cast<double>(k - 1));
            max_budget = std::max(max_budget, budget);
            if (k - 1 > budget) ok = false;
        }
        std::cout << config_id << " max(K-1)=" << max_used
                  << " max budget=" << max_budget << " law " << (ok ? "holds" : "VIOLATED")
                  << "\n";
    }

    if (by_config.count("myopic")) {
        std::cout << "== planning vs myopic baseline ==\n";
        const auto& myopic_grid = by_config.at("myopic");
        const std::int64_t t_last = myopic_grid.rbegin()->first;
        const auto& base = myopic_grid.at(t_last);
        for (const auto& [config_id, grid] : by_config) {
            if (config_id == "myopic" || !grid.count(t_last)) continue;
            const auto& xs = grid.at(t_last);
            if (xs.size() != base.size() || xs.size() < 2) continue;
            const rafa::RatioRow row = rafa::bootstrap_ratio(base, xs, 10000, 99);
            std::cout << config_id << "/myopic at T=" << t_last << " ratio=" << row.ratio;
            if (row.has_ci) std::cout << " ci=[" << row.ci_low << "," << row.ci_high << "]";
            std::cout << "\n";
        }
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian model-based RL simulator: low-switching replanning agents on "
                 "linear-mixture MDPs, with a regret-measurement harness"};
    app.footer(kSchemaHelp);
    app.require_subcommand(1);

    std::string config_path, out_dir, only, inject_fault;
    std::int64_t seed_override = -1;
    int jobs = 0;
    std::vector<std::string> csv_paths;

    CLI::App* run_cmd = app.add_subcommand("run", "execute one run and its audits");
    run_cmd->add_option("--config", config_path, "experiment config file")->required();
    run_cmd->add_option("--seed", seed_override, "override the agent seed");
    run_cmd->add_option("--out", out_dir, "output directory override");

    CLI::App* sweep_cmd = app.add_subcommand("sweep", "run the seed x variant grid");
    sweep_cmd->add_option("--config", config_path, "experiment config file")->required();
    sweep_cmd->add_option("--out", out_dir, "output directory override");
    sweep_cmd->add_option("--jobs", jobs, "worker threads (0: hardware)");

    CLI::App* verify_cmd =
        app.add_subcommand("verify", "run the property suites, one line per check");
    verify_cmd->add_option("--only", only, "filter checks by name prefix");
    verify_cmd->add_option("--inject-fault", inject_fault,
                           "perturb a named computation (verification smoke test)");

    CLI::App* report_cmd = app.add_subcommand("report", "summarize sweep CSVs");
    report_cmd->add_option("csv", csv_paths, "members.csv paths")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (run_cmd->parsed()) return cmd_run(config_path, seed_override, out_dir);
        if (sweep_cmd->parsed()) return cmd_sweep(config_path, out_dir, jobs);
        if (verify_cmd->parsed()) return cmd_verify(only, inject_fault);
        if (report_cmd->parsed()) return cmd_report(csv_paths);
    } catch (const rafa::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
