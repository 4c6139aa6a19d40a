#include "rafa/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

namespace rafa {

namespace {
constexpr double kLog2 = 0.6931471805599453;
}

RegretEvaluator::RegretEvaluator(const LinearMixtureMdp& env, double tol)
    : env_(env), tol_(tol) {
    auto [pi_star, v_star] = optimal_solution(env.true_kernel(), env.reward_table(),
                                              env.n_states(), env.n_actions(), env.gamma(),
                                              1e-8);
    (void)pi_star;
    v_star_ = v_star.v;
}

const std::vector<double>& RegretEvaluator::policy_values(const Policy& pi) {
    auto it = cache_.find(pi);
    if (it != cache_.end()) return it->second;
    ValueFn v = policy_evaluation(env_.true_kernel(), env_.reward_table(), env_.n_states(),
                                  env_.n_actions(), env_.gamma(), pi, 1e-8);
    return cache_.emplace(pi, std::move(v.v)).first->second;
}

double RegretEvaluator::inst_regret(const Policy& pi, int s) {
    const double diff = v_star_[s] - policy_values(pi)[s];
    return std::max(diff, -tol_);
}

RegretFn RegretEvaluator::as_fn() {
    return [this](const Policy& pi, int s) { return inst_regret(pi, s); };
}

// --- audit -------------------------------------------------------------------

bool AuditReport::all_pass() const {
    return std::all_of(lines.begin(), lines.end(),
                       [](const AuditLine& l) { return !l.applicable || l.pass; });
}

std::string AuditReport::to_text() const {
    std::ostringstream out;
    for (const AuditLine& l : lines) {
        out << l.name << " "
            << (!l.applicable ? "not-applicable" : (l.pass ? "pass" : "FAIL")) << " slack="
            << l.slack;
        if (!l.pass && l.fail_index >= 0) out << " at=" << l.fail_index;
        if (!l.detail.empty()) out << " " << l.detail;
        out << "\n";
    }
    return out.str();
}

AuditReport audit(const RunRecord& rec) {
    AuditReport report;
    const bool entropy_trigger = rec.switch_kind == "entropy-log2" ||
                                 rec.switch_kind == "det-ratio-4";

    // switch-count law: K - 1 <= (H_0 - H_T) / log 2
    {
        AuditLine l;
        l.name = "switch_count_law";
        l.applicable = entropy_trigger;
        const double budget = (rec.entropy_initial - rec.entropy_final) / kLog2;
        const double used = static_cast<double>(rec.epoch_count() - 1);
        l.slack = budget - used;
        l.pass = used <= budget;
        l.detail = "K=" + std::to_string(rec.epoch_count());
        report.lines.push_back(l);
    }

    // gain chain: the closed-form gains telescope against the entropy trace,
    // checked at every prefix so a corrupt entry is located
    {
        AuditLine l;
        l.name = "gain_chain";
        l.slack = std::numeric_limits<double>::infinity();
        double acc = 0.0;
        for (std::size_t i = 0; i < rec.steps.size(); ++i) {
            acc += rec.steps[i].info_gain;
            const double h_next =
                i + 1 < rec.steps.size() ? rec.steps[i + 1].entropy : rec.entropy_final;
            const double err = std::abs((rec.entropy_initial - h_next) - acc);
            l.slack = std::min(l.slack, 1e-8 - err);
            if (err > 1e-8 && l.pass) {
                l.pass = false;
                l.fail_index = rec.steps[i].t;
            }
        }
        report.lines.push_back(l);
    }

    // entropy never increases along the trajectory
    {
        AuditLine l;
        l.name = "entropy_monotone";
        l.slack = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i + 1 < rec.steps.size(); ++i) {
            const double drop = rec.steps[i].entropy - rec.steps[i + 1].entropy;
            l.slack = std::min(l.slack, drop + 1e-9);
            if (drop < -1e-9) {
                l.pass = false;
                l.fail_index = static_cast<std::int64_t>(i);
                break;
            }
        }
        if (!rec.steps.empty()) {
            const double final_drop = rec.steps.back().entropy - rec.entropy_final;
            if (final_drop < -1e-9) {
                l.pass = false;
                l.fail_index = static_cast<std::int64_t>(rec.steps.size()) - 1;
            }
        }
        report.lines.push_back(l);
    }

    // entropy budget with the realized feature-norm bound
    {
        AuditLine l;
        l.name = "entropy_budget";
        const double r_eff = std::max(rec.feature_bound_env, rec.max_feature_norm);
        const double d = static_cast<double>(rec.feature_dim);
        const double t = static_cast<double>(rec.steps.size());
        const double sigma2 = rec.sigma * rec.sigma;
        const double cap =
            0.5 * d * std::log(rec.lambda + t * r_eff * r_eff / (d * sigma2)) -
            0.5 * d * std::log(rec.lambda);
        const double drop = rec.entropy_initial - rec.entropy_final;
        l.slack = cap - drop;
        l.pass = drop <= cap + 1e-9;
        l.detail = "drop=" + std::to_string(drop) + " budget=" + std::to_string(cap);
        report.lines.push_back(l);
    }

    // executed action equals the frozen epoch policy
    {
        AuditLine l;
        l.name = "epoch_policy_constancy";
        for (const StepRecord& s : rec.steps) {
            const EpochSummary& e = rec.epochs[static_cast<std::size_t>(s.epoch)];
            if (e.pi[static_cast<std::size_t>(s.state)] != s.action) {
                l.pass = false;
                l.fail_index = s.t;
                break;
            }
        }
        report.lines.push_back(l);
    }

    // inside an epoch the drop since the switch stays <= log 2
    {
        AuditLine l;
        l.name = "within_epoch_drop";
        l.applicable = entropy_trigger;
        l.slack = std::numeric_limits<double>::infinity();
        if (l.applicable) {
            for (const StepRecord& s : rec.steps) {
                const EpochSummary& e = rec.epochs[static_cast<std::size_t>(s.epoch)];
                const double drop = e.entropy_at_start - s.entropy;
                l.slack = std::min(l.slack, kLog2 - drop);
                if (drop > kLog2) {
                    l.pass = false;
                    l.fail_index = s.t;
                    break;
                }
            }
        }
        report.lines.push_back(l);
    }

    // bonus optimism: effective reward never dips under the true reward
    {
        AuditLine l;
        l.name = "bonus_optimism";
        // with a learned reward table the margin against the true rewards is
        // not guaranteed, only reported
        l.applicable = rec.variant == "rafa-bonus" && !rec.learned_reward;
        if (l.applicable) {
            l.slack = std::numeric_limits<double>::infinity();
            for (const EpochSummary& e : rec.epochs) {
                l.slack = std::min(l.slack, e.min_reward_margin);
                if (e.min_reward_margin < -1e-12) {
                    l.pass = false;
                    l.fail_index = e.t_start;
                    break;
                }
            }
        }
        report.lines.push_back(l);
    }

    // planner certificate within the configured target (exact planners only)
    {
        AuditLine l;
        l.name = "planner_certificate";
        l.applicable = false;
        l.slack = std::numeric_limits<double>::infinity();
        for (const EpochSummary& e : rec.epochs) {
            if (e.planner_id != "value-iteration") continue;
            l.applicable = true;
            l.slack = std::min(l.slack, rec.epsilon - e.certificate);
            if (e.certificate > rec.epsilon) {
                l.pass = false;
                l.fail_index = e.t_start;
                break;
            }
        }
        report.lines.push_back(l);
    }

    // regularity coefficient: open-of-epoch gains vs close-of-epoch gains
    {
        AuditLine l;
        l.name = "regularity_coefficient";
        l.applicable = entropy_trigger;
        if (l.applicable) {
            const double d = static_cast<double>(rec.feature_dim);
            const double eta = d / std::log1p(d);
            l.slack = std::numeric_limits<double>::infinity();
            for (const EpochSummary& e : rec.epochs) {
                for (std::size_t i = 0; i < e.gains_open.size(); ++i) {
                    const double lhs = e.gains_open[i];
                    const double rhs = 4.0 * eta * e.gains_close[i];
                    l.slack = std::min(l.slack, rhs - lhs);
                    if (lhs > rhs + 1e-12) {
                        l.pass = false;
                        l.fail_index = e.t_start;
                    }
                }
                if (!l.pass) break;
            }
        }
        report.lines.push_back(l);
    }

    // the two trigger formulations never disagreed during the run
    {
        AuditLine l;
        l.name = "switch_equivalence";
        l.applicable = entropy_trigger;
        l.slack = -static_cast<double>(rec.switch_disagreements);
        l.pass = rec.switch_disagreements == 0;
        report.lines.push_back(l);
    }

    return report;
}

// --- sweeps -------------------------------------------------------------------

LinearMixtureMdp make_env(const EnvSpec& spec, std::uint64_t seed) {
    switch (spec.kind) {
    case EnvSpec::Kind::Generate: {
        Rng rng = rng_stream(seed, "environment");
        return generate_environment(spec.gen, rng);
    }
    case EnvSpec::Kind::Chain:
        return make_delayed_chain(spec.chain_states, spec.chain_gamma,
                                  spec.chain_loiter_reward);
    case EnvSpec::Kind::File:
        return LinearMixtureMdp::load(spec.path);
    }
    throw std::invalid_argument("unknown environment spec");
}

namespace {

MemberResult run_member(const SweepPlan& plan, const SweepConfigEntry& entry,
                        std::uint64_t seed) {
    MemberResult m;
    m.config_id = entry.config_id;
    m.seed = seed;
    try {
        LinearMixtureMdp env = make_env(plan.env, seed);
        RegretEvaluator oracle(env);
        AgentConfig cfg = entry.cfg;
        cfg.seed = seed;
        cfg.horizon = *std::max_element(plan.t_grid.begin(), plan.t_grid.end());
        RunRecord rec = entry.myopic ? baseline_myopic(env, cfg, oracle.as_fn())
                                     : run(env, cfg, oracle.as_fn());
        for (std::int64_t t : plan.t_grid) {
            m.regret_at.emplace_back(t, rec.cumulative_regret_at(t));
        }
        m.epoch_count = rec.epoch_count();
        m.entropy_initial = rec.entropy_initial;
        m.entropy_final = rec.entropy_final;
        m.audits_pass = audit(rec).all_pass();
        m.ok = true;
    } catch (const std::exception& e) {
        m.ok = false;
        m.error = e.what();
    }
    return m;
}

std::string member_file_name(const std::string& config_id, std::uint64_t seed) {
    return config_id + "__seed" + std::to_string(seed) + ".json";
}

void save_member(const std::string& dir, const MemberResult& m) {
    nlohmann::json j;
    j["config_id"] = m.config_id;
    j["seed"] = m.seed;
    j["ok"] = m.ok;
    j["error"] = m.error;
    j["epoch_count"] = m.epoch_count;
    j["entropy_initial"] = m.entropy_initial;
    j["entropy_final"] = m.entropy_final;
    j["audits_pass"] = m.audits_pass;
    nlohmann::json grid = nlohmann::json::array();
    for (const auto& [t, r] : m.regret_at) grid.push_back({{"t", t}, {"regret", r}});
    j["regret_at"] = std::move(grid);
    const std::string path = dir + "/" + member_file_name(m.config_id, m.seed);
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        out << j.dump() << "\n";
    }
    std::filesystem::rename(tmp, path);
}

std::optional<MemberResult> load_member(const std::string& dir, const std::string& config_id,
                                        std::uint64_t seed) {
    const std::string path = dir + "/" + member_file_name(config_id, seed);
    std::ifstream in(path);
    if (!in) return std::nullopt;
    nlohmann::json j;
    try {
        in >> j;
        MemberResult m;
        m.config_id = j.at("config_id").get<std::string>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.ok = j.at("ok").get<bool>();
        m.error = j.at("error").get<std::string>();
        m.epoch_count = j.at("epoch_count").get<int>();
        m.entropy_initial = j.at("entropy_initial").get<double>();
        m.entropy_final = j.at("entropy_final").get<double>();
        m.audits_pass = j.at("audits_pass").get<bool>();
        for (const auto& g : j.at("regret_at")) {
            m.regret_at.emplace_back(g.at("t").get<std::int64_t>(),
                                     g.at("regret").get<double>());
        }
        return m;
    } catch (const std::exception&) {
        return std::nullopt; // partial or corrupt member is rerun
    }
}

} // namespace

SweepResult run_sweep(const SweepPlan& plan, const std::optional<std::string>& member_dir) {
    if (plan.configs.empty() || plan.seeds.empty() || plan.t_grid.empty()) {
        throw std::invalid_argument("sweep grid is empty");
    }
    if (member_dir) std::filesystem::create_directories(*member_dir);

    struct Job {
        const SweepConfigEntry* entry;
        std::uint64_t seed;
    };
    std::vector<Job> jobs;
    SweepResult result;
    result.t_grid = plan.t_grid;
    result.members.reserve(plan.configs.size() * plan.seeds.size());

    for (const SweepConfigEntry& entry : plan.configs) {
        for (std::uint64_t seed : plan.seeds) {
            if (member_dir) {
                if (auto cached = load_member(*member_dir, entry.config_id, seed)) {
                    result.members.push_back(std::move(*cached));
                    continue;
                }
            }
            jobs.push_back({&entry, seed});
        }
    }

    std::mutex mu;
    std::atomic<std::size_t> next{0};
    const int n_workers = std::max(
        1, plan.jobs > 0 ? plan.jobs
                         : static_cast<int>(std::thread::hardware_concurrency()));
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= jobs.size()) return;
            MemberResult m = run_member(plan, *jobs[i].entry, jobs[i].seed);
            std::lock_guard<std::mutex> lock(mu);
            if (member_dir) save_member(*member_dir, m);
            result.members.push_back(std::move(m));
        }
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();

    std::sort(result.members.begin(), result.members.end(),
              [](const MemberResult& l, const MemberResult& r) {
                  if (l.config_id != r.config_id) return l.config_id < r.config_id;
                  return l.seed < r.seed;
              });
    return result;
}

std::vector<double> SweepResult::regrets_at(const std::string& config_id,
                                            std::int64_t t) const {
    std::vector<double> out;
    for (const MemberResult& m : members) {
        if (!m.ok || m.config_id != config_id) continue;
        for (const auto& [tt, r] : m.regret_at) {
            if (tt == t) out.push_back(r);
        }
    }
    return out;
}

MeanStderr bayesian_regret_estimate(const std::vector<double>& regrets) {
    if (regrets.size() < 2) {
        throw std::invalid_argument("regret estimate needs at least two members");
    }
    MeanStderr out;
    out.n = static_cast<int>(regrets.size());
    double sum = 0.0;
    for (double r : regrets) sum += r;
    out.mean = sum / out.n;
    double ss = 0.0;
    for (double r : regrets) ss += (r - out.mean) * (r - out.mean);
    out.stderr_ = std::sqrt(ss / (out.n - 1)) / std::sqrt(static_cast<double>(out.n));
    return out;
}

RatioRow bootstrap_ratio(const std::vector<double>& xs, const std::vector<double>& ys,
                         int bootstrap_samples, std::uint64_t seed) {
    RatioRow row;
    if (xs.size() != ys.size() || xs.empty()) {
        throw std::invalid_argument("bootstrap_ratio needs paired nonempty samples");
    }
    const std::size_t n = xs.size();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    // regret this small is solver noise, not signal
    if (std::abs(mx) < 1e-4) {
        row.degenerate = true;
        row.ratio = std::numeric_limits<double>::quiet_NaN();
        return row;
    }
    row.ratio = my / mx;
    if (n < 2) return row;

    Rng rng = rng_stream(seed, "bootstrap");
    std::vector<double> ratios;
    ratios.reserve(static_cast<std::size_t>(bootstrap_samples));
    for (int b = 0; b < bootstrap_samples; ++b) {
        double bx = 0.0, by = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t j = static_cast<std::size_t>(rng.uniform01() * n) % n;
            bx += xs[j];
            by += ys[j];
        }
        if (bx != 0.0) ratios.push_back(by / bx);
    }
    if (ratios.size() < 100) {
        row.has_ci = false;
        return row;
    }
    std::sort(ratios.begin(), ratios.end());
    row.ci_low = ratios[static_cast<std::size_t>(0.025 * (ratios.size() - 1))];
    row.ci_high = ratios[static_cast<std::size_t>(0.975 * (ratios.size() - 1))];
    row.has_ci = true;
    return row;
}

MeanStderr bayesian_regret_estimate(const SweepResult& sweep, const std::string& config_id,
                                    std::int64_t t) {
    return bayesian_regret_estimate(sweep.regrets_at(config_id, t));
}

ScalingProbeResult scaling_probe(const SweepConfigEntry& entry, const EnvSpec& env,
                                 const std::vector<std::int64_t>& t_grid, int n_seeds,
                                 int jobs) {
    if (t_grid.size() < 2) throw std::invalid_argument("scaling probe needs >= 2 grid points");
    for (std::size_t i = 0; i + 1 < t_grid.size(); ++i) {
        if (t_grid[i + 1] != 4 * t_grid[i]) {
            throw std::invalid_argument("scaling probe grid must be geometric (T, 4T, 16T, ...)");
        }
    }
    if (n_seeds < 2) throw std::invalid_argument("scaling probe needs >= 2 seeds for a CI");
    SweepPlan plan;
    plan.env = env;
    plan.configs = {entry};
    for (int i = 0; i < n_seeds; ++i) plan.seeds.push_back(static_cast<std::uint64_t>(i) + 1);
    plan.t_grid = t_grid;
    plan.jobs = jobs;
    ScalingProbeResult out;
    out.sweep = run_sweep(plan);
    out.rows = scaling_ratios(out.sweep, entry.config_id);
    return out;
}

std::vector<RatioRow> scaling_ratios(const SweepResult& sweep, const std::string& config_id,
                                     int bootstrap_samples, std::uint64_t bootstrap_seed) {
    std::vector<RatioRow> rows;
    for (std::size_t i = 0; i + 1 < sweep.t_grid.size(); ++i) {
        const std::int64_t t_low = sweep.t_grid[i], t_high = sweep.t_grid[i + 1];
        const auto xs = sweep.regrets_at(config_id, t_low);
        const auto ys = sweep.regrets_at(config_id, t_high);
        RatioRow row = bootstrap_ratio(xs, ys, bootstrap_samples, bootstrap_seed + i);
        row.t_low = t_low;
        row.t_high = t_high;
        rows.push_back(row);
    }
    return rows;
}

std::string members_csv(const SweepResult& sweep) {
    std::ostringstream out;
    out << "config_id,seed,T,cum_regret,K,H0,HT\n";
    out.precision(17);
    for (const MemberResult& m : sweep.members) {
        if (!m.ok) continue;
        for (const auto& [t, r] : m.regret_at) {
            out << m.config_id << "," << m.seed << "," << t << "," << r << ","
                << m.epoch_count << "," << m.entropy_initial << "," << m.entropy_final
                << "\n";
        }
    }
    return out.str();
}

std::string summary_csv(const SweepResult& sweep) {
    std::ostringstream out;
    out << "config_id,T,n,mean_regret,stderr_regret\n";
    out.precision(17);
    std::vector<std::string> ids;
    for (const MemberResult& m : sweep.members) {
        if (std::find(ids.begin(), ids.end(), m.config_id) == ids.end()) {
            ids.push_back(m.config_id);
        }
    }
    for (const std::string& id : ids) {
        for (std::int64_t t : sweep.t_grid) {
            const auto regrets = sweep.regrets_at(id, t);
            if (regrets.size() < 2) continue;
            const MeanStderr ms = bayesian_regret_estimate(regrets);
            out << id << "," << t << "," << ms.n << "," << ms.mean << "," << ms.stderr_
                << "\n";
        }
    }
    return out.str();
}

} // namespace rafa
