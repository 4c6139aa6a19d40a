#include "rafa/verify.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "rafa/agent.hpp"
#include "rafa/harness.hpp"
#include "rafa/mdp.hpp"
#include "rafa/planners.hpp"
#include "rafa/posterior.hpp"

namespace rafa {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

GaussianPosterior random_posterior(int d, int n_obs, Rng& rng, double lambda = 1.0,
                                   double sigma = 1.0, double psi_scale = 1.0) {
    GaussianPosterior post(d, lambda, sigma);
    for (int i = 0; i < n_obs; ++i) {
        Eigen::VectorXd psi(d);
        for (int j = 0; j < d; ++j) psi(j) = psi_scale * rng.normal();
        post.update({psi, rng.normal()});
    }
    return post;
}

VerifyResult check_linearity_bridge() {
    VerifyResult r{"mdp.linearity_bridge", true, kInf, ""};
    Rng rng(101);
    for (int trial = 0; trial < 20; ++trial) {
        GenConfig gc;
        gc.n_states = 3 + static_cast<int>(rng.uniform01() * 4);
        gc.n_actions = 2 + static_cast<int>(rng.uniform01() * 2);
        gc.mode = trial % 2 == 0 ? GenMode::DirichletTabular : GenMode::RawGaussianProjected;
        LinearMixtureMdp env = generate_environment(gc, rng);
        std::vector<double> v(env.n_states());
        for (double& x : v) x = 2.0 * rng.uniform01() - 1.0;
        for (int s = 0; s < env.n_states(); ++s) {
            for (int a = 0; a < env.n_actions(); ++a) {
                double expect = 0.0;
                for (int sn = 0; sn < env.n_states(); ++sn) {
                    expect += env.true_kernel()[static_cast<std::size_t>(
                                  env.triple_index(s, a, sn))] *
                              v[sn];
                }
                const double lin = value_feature(env, v, s, a).dot(env.theta_star());
                const double err = std::abs(expect - lin);
                r.slack = std::min(r.slack, 1e-10 - err);
                if (err > 1e-10) r.pass = false;
            }
        }
    }
    return r;
}

VerifyResult check_policy_eval_fixed_point() {
    VerifyResult r{"mdp.policy_eval_fixed_point", true, kInf, ""};
    Rng rng(202);
    for (int trial = 0; trial < 100; ++trial) {
        GenConfig gc;
        gc.n_states = 2 + static_cast<int>(rng.uniform01() * 5);
        gc.n_actions = 1 + static_cast<int>(rng.uniform01() * 3);
        LinearMixtureMdp env = generate_environment(gc, rng);
        Policy pi(env.n_states());
        for (int& a : pi) a = static_cast<int>(rng.uniform01() * env.n_actions());
        const ValueFn v = policy_evaluation(env.true_kernel(), env.reward_table(),
                                            env.n_states(), env.n_actions(), env.gamma(), pi);
        double residual = 0.0;
        for (int s = 0; s < env.n_states(); ++s) {
            double backup = env.reward(s, pi[s]);
            for (int sn = 0; sn < env.n_states(); ++sn) {
                backup += env.gamma() *
                          env.true_kernel()[static_cast<std::size_t>(
                              env.triple_index(s, pi[s], sn))] *
                          v.v[sn];
            }
            residual = std::max(residual, std::abs(v.v[s] - backup));
        }
        r.slack = std::min(r.slack, 1e-8 - residual);
        if (residual > 1e-8) r.pass = false;
    }
    return r;
}

VerifyResult check_optimality_dominance() {
    VerifyResult r{"mdp.optimality_dominance", true, kInf, ""};
    Rng rng(303);
    for (int trial = 0; trial < 20; ++trial) {
        GenConfig gc; // 3^4 = 81 deterministic policies, all enumerated
        gc.n_states = 4;
        gc.n_actions = 3;
        LinearMixtureMdp env = generate_environment(gc, rng);
        auto [pi_star, v_star] = optimal_solution(env.true_kernel(), env.reward_table(),
                                                  env.n_states(), env.n_actions(),
                                                  env.gamma(), 1e-8);
        (void)pi_star;
        Policy pi(env.n_states(), 0);
        for (;;) { // enumerate all |A|^|S| deterministic policies
            const ValueFn v = policy_evaluation(env.true_kernel(), env.reward_table(),
                                                env.n_states(), env.n_actions(), env.gamma(),
                                                pi);
            for (int s = 0; s < env.n_states(); ++s) {
                const double margin = v_star.v[s] - v.v[s] + 1e-6;
                r.slack = std::min(r.slack, margin);
                if (margin < 0.0) r.pass = false;
            }
            int i = 0;
            while (i < env.n_states() && ++pi[i] == env.n_actions()) pi[i++] = 0;
            if (i == env.n_states()) break;
        }
    }
    return r;
}

VerifyResult check_ridge_agreement(const std::string& fault) {
    VerifyResult r{"posterior.ridge_agreement", true, kInf, ""};
    Rng rng(404);
    for (int trial = 0; trial < 50; ++trial) {
        const int d = 2 + static_cast<int>(rng.uniform01() * 10);
        const double lambda = 0.5 + rng.uniform01();
        const double sigma = 0.5 + rng.uniform01();
        GaussianPosterior post(d, lambda, sigma);
        Eigen::MatrixXd xtx = lambda * Eigen::MatrixXd::Identity(d, d);
        Eigen::VectorXd xty = Eigen::VectorXd::Zero(d);
        const int n = 1 + static_cast<int>(rng.uniform01() * 80);
        for (int i = 0; i < n; ++i) {
            Eigen::VectorXd psi(d);
            for (int j = 0; j < d; ++j) psi(j) = rng.normal();
            const double y = rng.normal();
            post.update({psi, y});
            xtx += psi * psi.transpose() / (sigma * sigma);
            xty += psi * y / (sigma * sigma);
        }
        Eigen::VectorXd ridge = xtx.ldlt().solve(xty);
        if (fault == "posterior.ridge") ridge(0) += 1e-3;
        const double rel = (post.mean() - ridge).norm() / std::max(ridge.norm(), 1e-12);
        r.slack = std::min(r.slack, 1e-8 - rel);
        if (rel > 1e-8) r.pass = false;
    }
    return r;
}

VerifyResult check_gain_entropy_consistency(const std::string& fault) {
    VerifyResult r{"posterior.gain_entropy_consistency", true, kInf, ""};
    Rng rng(505);
    for (int trial = 0; trial < 100; ++trial) {
        const int d = 2 + static_cast<int>(rng.uniform01() * 8);
        GaussianPosterior post = random_posterior(d, 1 + trial % 30, rng);
        Eigen::VectorXd psi(d);
        for (int j = 0; j < d; ++j) psi(j) = rng.normal();
        double gain = post.information_gain(psi);
        if (fault == "posterior.gain") gain += 1e-3;
        GaussianPosterior bumped = post;
        bumped.update({psi, 0.0});
        const double drop = post.entropy() - bumped.entropy();
        const double err = std::abs(gain - drop);
        r.slack = std::min(r.slack, 1e-10 - err);
        if (err > 1e-10) r.pass = false;
    }
    return r;
}

VerifyResult check_entropy_monotone() {
    VerifyResult r{"posterior.entropy_monotone", true, kInf, ""};
    Rng rng(606);
    for (int trial = 0; trial < 30; ++trial) {
        const int d = 2 + static_cast<int>(rng.uniform01() * 8);
        GaussianPosterior post(d, 1.0);
        double h = post.entropy();
        for (int i = 0; i < 40; ++i) {
            Eigen::VectorXd psi(d);
            for (int j = 0; j < d; ++j) psi(j) = rng.normal();
            post.update({psi, rng.normal()});
            const double h_next = post.entropy();
            r.slack = std::min(r.slack, h - h_next);
            if (h_next >= h) r.pass = false;
            h = h_next;
        }
    }
    return r;
}

VerifyResult check_variance_contraction() {
    VerifyResult r{"posterior.variance_contraction", true, kInf, ""};
    Rng rng(707);
    for (int trial = 0; trial < 50; ++trial) {
        GenConfig gc;
        gc.n_states = 4;
        gc.n_actions = 2;
        LinearMixtureMdp env = generate_environment(gc, rng);
        GaussianPosterior post =
            random_posterior(env.feature_dim(), 5 + trial % 40, rng, 1.0, 1.0, 0.4);
        const double l_bound = env.max_reward() / (1.0 - env.gamma());
        std::vector<double> v(env.n_states());
        for (double& x : v) x = rng.uniform01() * (l_bound - 1.0);
        const int s = static_cast<int>(rng.uniform01() * env.n_states());
        const int a = static_cast<int>(rng.uniform01() * env.n_actions());
        const Eigen::VectorXd psi = value_feature(env, v, s, a);
        const double gain = post.information_gain(psi);

        const int n_mc = 10000;
        double mean = 0.0, m2 = 0.0;
        for (int i = 0; i < n_mc; ++i) {
            const Eigen::VectorXd theta = post.sample(rng);
            const double b = env.reward(s, a) + env.gamma() * psi.dot(theta);
            const double delta = b - mean;
            mean += delta / (i + 1);
            m2 += delta * (b - mean);
        }
        const double var = m2 / (n_mc - 1);
        const double se = var * std::sqrt(2.0 / (n_mc - 1));
        const double cap = 2.0 * l_bound * l_bound * gain + 3.0 * se;
        r.slack = std::min(r.slack, cap - var);
        if (var > cap) r.pass = false;
    }
    return r;
}

VerifyResult check_det_ratio_norm_bound() {
    VerifyResult r{"posterior.det_ratio_norm_bound", true, kInf, ""};
    Rng rng(808);
    for (int trial = 0; trial < 200; ++trial) {
        const int d = 2 + static_cast<int>(rng.uniform01() * 8);
        Eigen::MatrixXd g(d, d);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) g(i, j) = rng.normal();
        Eigen::MatrixXd dm = g * g.transpose() + 0.1 * Eigen::MatrixXd::Identity(d, d);
        Eigen::MatrixXd am = dm;
        const int extra = 1 + static_cast<int>(rng.uniform01() * 5);
        for (int i = 0; i < extra; ++i) {
            Eigen::VectorXd w(d);
            for (int j = 0; j < d; ++j) w(j) = rng.normal();
            am += w * w.transpose();
        }
        Eigen::VectorXd x(d);
        for (int j = 0; j < d; ++j) x(j) = rng.normal();
        const double norm_a = std::sqrt(x.dot(am * x));
        const double norm_d = std::sqrt(x.dot(dm * x));
        const double logdet_a =
            2.0 * Eigen::LLT<Eigen::MatrixXd>(am).matrixLLT().diagonal().array().log().sum();
        const double logdet_d =
            2.0 * Eigen::LLT<Eigen::MatrixXd>(dm).matrixLLT().diagonal().array().log().sum();
        const double cap = norm_d * std::exp(0.5 * (logdet_a - logdet_d));
        r.slack = std::min(r.slack, cap - norm_a + 1e-12);
        if (norm_a > cap * (1.0 + 1e-12)) r.pass = false;
    }
    return r;
}

VerifyResult check_entropy_budget() {
    VerifyResult r{"posterior.entropy_budget", true, kInf, ""};
    Rng rng(909);
    for (int trial = 0; trial < 20; ++trial) {
        const int d = 3 + static_cast<int>(rng.uniform01() * 10);
        const double lambda = 0.5 + rng.uniform01();
        GaussianPosterior post(d, lambda);
        const double h0 = post.entropy();
        const int t = 200;
        double r_max = 0.0;
        for (int i = 0; i < t; ++i) {
            Eigen::VectorXd psi(d);
            for (int j = 0; j < d; ++j) psi(j) = rng.normal();
            r_max = std::max(r_max, psi.norm());
            post.update({psi, rng.normal()});
        }
        const double drop = h0 - post.entropy();
        const double cap = 0.5 * d * std::log(lambda + t * r_max * r_max / d) -
                           0.5 * d * std::log(lambda);
        r.slack = std::min(r.slack, cap - drop);
        if (drop > cap) r.pass = false;
    }
    return r;
}

VerifyResult check_prop1_certificate(const std::string& fault) {
    VerifyResult r{"planners.horizon_certificate", true, kInf, ""};
    Rng rng(111);
    for (double gamma : {0.5, 0.9, 0.99}) {
        for (double eps : {0.1, 0.01}) {
            for (int trial = 0; trial < 20; ++trial) {
                GenConfig gc;
                gc.n_states = 3 + static_cast<int>(rng.uniform01() * 4);
                gc.n_actions = 2 + static_cast<int>(rng.uniform01() * 2);
                gc.gamma = gamma;
                LinearMixtureMdp env = generate_environment(gc, rng);
                const double l_bound = 1.0 / (1.0 - gamma);
                const HorizonBound hb = required_horizon(gamma, eps, l_bound);
                PlanningModel model{env.n_states(), env.n_actions(), env.true_kernel(),
                                    env.reward_table(), gamma};
                PlannerResult res = value_iteration(model, hb.horizon);
                double cert = res.epsilon_certificate;
                if (fault == "planners.certificate") cert += eps;
                const double analytic = std::pow(gamma, hb.horizon - 1) * l_bound;
                r.slack = std::min({r.slack, eps - cert, analytic - cert});
                if (cert > eps || cert > analytic) r.pass = false;
            }
        }
    }
    return r;
}

VerifyResult check_certificate_soundness() {
    VerifyResult r{"planners.certificate_soundness", true, 0.0, ""};
    Rng rng(222);
    for (int trial = 0; trial < 30; ++trial) {
        GenConfig gc;
        gc.n_states = 4;
        gc.n_actions = 3;
        LinearMixtureMdp env = generate_environment(gc, rng);
        PlanningModel model{env.n_states(), env.n_actions(), env.true_kernel(),
                            env.reward_table(), env.gamma()};
        PlannerResult res = value_iteration(model, 17);
        const double rechecked = epsilon_check(res, model);
        if (rechecked != res.epsilon_certificate) r.pass = false; // bit-for-bit
    }
    return r;
}

// brute-force enumeration of every action sequence, the tree-search oracle
std::pair<int, double> enumerate_best_rollout(const PlanningModel& m,
                                              const std::vector<double>& critic, int s0,
                                              int depth) {
    struct Enum {
        const PlanningModel& m;
        const std::vector<double>& critic;
        int max_level;
        double best = -kInf;
        std::vector<int> best_seq, seq;
        void go(int s, int level, double acc, double discount) {
            if (level > max_level) {
                const double score = acc + discount * critic[s];
                if (score > best) {
                    best = score;
                    best_seq = seq;
                }
                return;
            }
            for (int a = 0; a < m.n_actions; ++a) {
                seq.push_back(a);
                go(m.det_successor(s, a), level + 1, acc + discount * m.r(s, a),
                   discount * m.gamma);
                seq.pop_back();
            }
        }
    } e{m, critic, depth, -kInf, {}, {}};
    e.go(s0, 0, 0.0, 1.0);
    return {e.best_seq.front(), e.best};
}

VerifyResult check_planner_oracle_equivalence() {
    VerifyResult r{"planners.oracle_equivalence", true, 0.0, ""};
    Rng rng(333);
    int mismatches = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const int S = 4 + static_cast<int>(rng.uniform01() * 5);
        const int A = 2 + static_cast<int>(rng.uniform01() * 2);
        // deterministic instance: one-hot rows
        std::vector<double> kernel(static_cast<std::size_t>(S) * A * S, 0.0);
        std::vector<double> reward(static_cast<std::size_t>(S) * A);
        for (int sa = 0; sa < S * A; ++sa) {
            const int sn = static_cast<int>(rng.uniform01() * S);
            kernel[static_cast<std::size_t>(sa) * S + sn] = 1.0;
            reward[sa] = rng.uniform01();
        }
        PlanningModel model{S, A, kernel, reward, 0.9};
        const std::vector<double> critic = critic_values(model, 150);
        SearchBudget budget;
        budget.breadth = A;
        budget.proposal_width = A;
        budget.depth = 2;
        budget.fanout = 1;
        int full_tree = 1;
        for (int u = 0; u <= budget.depth; ++u) full_tree *= A;
        budget.expansions = 4 * full_tree;

        const int s0 = static_cast<int>(rng.uniform01() * S);
        const auto [oracle_action, oracle_value] =
            enumerate_best_rollout(model, critic, s0, budget.depth);
        const SearchResult tree = tree_search(model, critic, s0, budget);
        const SearchResult beam = beam_search(model, critic, s0, budget);
        Rng mcts_rng(rng.next_u64());
        const SearchResult mc = mcts(model, critic, s0, budget, mcts_rng);
        if (tree.first_action != oracle_action || beam.first_action != oracle_action ||
            mc.first_action != oracle_action) {
            ++mismatches;
        }
        if (std::abs(tree.value - oracle_value) > 1e-12) ++mismatches;
    }
    r.slack = -static_cast<double>(mismatches);
    r.pass = mismatches == 0;
    r.detail = "mismatches=" + std::to_string(mismatches);
    return r;
}

RunRecord short_run(SwitchKind kind, Variant variant, std::uint64_t seed, std::int64_t t) {
    GenConfig gc;
    Rng env_rng = rng_stream(seed, "environment");
    LinearMixtureMdp env = generate_environment(gc, env_rng);
    RegretEvaluator oracle(env);
    AgentConfig cfg;
    cfg.variant = variant;
    cfg.switch_cond.kind = kind;
    cfg.horizon = t;
    cfg.seed = seed;
    return run(env, cfg, oracle.as_fn());
}

VerifyResult audit_check(const char* name, const char* audit_name,
                         const std::string& fault) {
    VerifyResult r{name, true, kInf, ""};
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        RunRecord rec = short_run(SwitchKind::EntropyLog2,
                                  seed % 2 == 0 ? Variant::PosteriorSampling : Variant::Bonus,
                                  seed, 400);
        if (fault == std::string("agent.entropy") && !rec.steps.empty()) {
            rec.steps[rec.steps.size() / 2].entropy += 1e-3;
        }
        const AuditReport report = audit(rec);
        for (const AuditLine& l : report.lines) {
            if (l.name != audit_name) continue;
            if (l.applicable) {
                r.slack = std::min(r.slack, l.slack);
                if (!l.pass) r.pass = false;
            }
        }
    }
    return r;
}

VerifyResult check_replay_determinism() {
    VerifyResult r{"harness.replay_determinism", true, 0.0, ""};
    for (std::uint64_t seed : {11ULL, 12ULL}) {
        const RunRecord a = short_run(SwitchKind::EntropyLog2, Variant::PosteriorSampling,
                                      seed, 300);
        const RunRecord b = short_run(SwitchKind::EntropyLog2, Variant::PosteriorSampling,
                                      seed, 300);
        if (a.steps_jsonl() != b.steps_jsonl() || a.meta_json() != b.meta_json()) {
            r.pass = false;
        }
    }
    return r;
}

} // namespace

std::vector<VerifyResult> run_verification(const std::string& only,
                                           const std::string& inject_fault) {
    const std::vector<std::pair<std::string, std::function<VerifyResult()>>> checks = {
        {"mdp.linearity_bridge", [] { return check_linearity_bridge(); }},
        {"mdp.policy_eval_fixed_point", [] { return check_policy_eval_fixed_point(); }},
        {"mdp.optimality_dominance", [] { return check_optimality_dominance(); }},
        {"posterior.ridge_agreement", [&] { return check_ridge_agreement(inject_fault); }},
        {"posterior.gain_entropy_consistency",
         [&] { return check_gain_entropy_consistency(inject_fault); }},
        {"posterior.entropy_monotone", [] { return check_entropy_monotone(); }},
        {"posterior.variance_contraction", [] { return check_variance_contraction(); }},
        {"posterior.det_ratio_norm_bound", [] { return check_det_ratio_norm_bound(); }},
        {"posterior.entropy_budget", [] { return check_entropy_budget(); }},
        {"planners.horizon_certificate", [&] { return check_prop1_certificate(inject_fault); }},
        {"planners.certificate_soundness", [] { return check_certificate_soundness(); }},
        {"planners.oracle_equivalence", [] { return check_planner_oracle_equivalence(); }},
        {"agent.switch_count_law",
         [&] { return audit_check("agent.switch_count_law", "switch_count_law", inject_fault); }},
        {"agent.gain_chain",
         [&] { return audit_check("agent.gain_chain", "gain_chain", inject_fault); }},
        {"agent.regularity_coefficient",
         [&] {
             return audit_check("agent.regularity_coefficient", "regularity_coefficient",
                                inject_fault);
         }},
        {"agent.switch_equivalence",
         [&] {
             return audit_check("agent.switch_equivalence", "switch_equivalence", inject_fault);
         }},
        {"harness.replay_determinism", [] { return check_replay_determinism(); }},
    };
    std::vector<VerifyResult> out;
    for (const auto& [name, check] : checks) {
        if (!only.empty() && name.rfind(only, 0) != 0) continue;
        out.push_back(check());
    }
    return out;
}

} // namespace rafa
