#include "rafa/agent.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace rafa {

namespace {
constexpr double kLog2 = 0.6931471805599453;
}

std::string to_string(Variant v) {
    switch (v) {
    case Variant::Bma: return "rafa-bma";
    case Variant::Bonus: return "rafa-bonus";
    case Variant::PosteriorSampling: return "rafa-ps";
    }
    return "?";
}

std::string to_string(PlannerKind p) {
    switch (p) {
    case PlannerKind::ValueIteration: return "value-iteration";
    case PlannerKind::TreeSearch: return "tree-search";
    case PlannerKind::BeamSearch: return "beam-search";
    case PlannerKind::Mcts: return "mcts";
    }
    return "?";
}

std::string to_string(SwitchKind s) {
    switch (s) {
    case SwitchKind::EntropyLog2: return "entropy-log2";
    case SwitchKind::DetRatio4: return "det-ratio-4";
    case SwitchKind::PredictionMismatch: return "prediction-mismatch";
    case SwitchKind::FixedPeriod: return "fixed-period";
    case SwitchKind::Never: return "never";
    }
    return "?";
}

Variant variant_from_string(const std::string& s) {
    if (s == "rafa-bma") return Variant::Bma;
    if (s == "rafa-bonus") return Variant::Bonus;
    if (s == "rafa-ps") return Variant::PosteriorSampling;
    throw std::invalid_argument("unknown variant: " + s);
}

PlannerKind planner_from_string(const std::string& s) {
    if (s == "value-iteration") return PlannerKind::ValueIteration;
    if (s == "tree-search") return PlannerKind::TreeSearch;
    if (s == "beam-search") return PlannerKind::BeamSearch;
    if (s == "mcts") return PlannerKind::Mcts;
    throw std::invalid_argument("unknown planner: " + s);
}

SwitchKind switch_from_string(const std::string& s) {
    if (s == "entropy-log2") return SwitchKind::EntropyLog2;
    if (s == "det-ratio-4") return SwitchKind::DetRatio4;
    if (s == "prediction-mismatch") return SwitchKind::PredictionMismatch;
    if (s == "fixed-period") return SwitchKind::FixedPeriod;
    if (s == "never") return SwitchKind::Never;
    throw std::invalid_argument("unknown switch condition: " + s);
}

PlanningModel plan_model(const LinearMixtureMdp& env, const GaussianPosterior& post,
                         Variant variant, double value_bound,
                         const std::vector<double>& v_prev, Rng& rng) {
    return plan_model(env, post, variant, value_bound, v_prev, rng, env.reward_table());
}

PlanningModel plan_model(const LinearMixtureMdp& env, const GaussianPosterior& post,
                         Variant variant, double value_bound,
                         const std::vector<double>& v_prev, Rng& rng,
                         const std::vector<double>& base_reward) {
    PlanningModel model;
    model.n_states = env.n_states();
    model.n_actions = env.n_actions();
    model.gamma = env.gamma();
    model.reward = base_reward;

    Eigen::VectorXd theta;
    switch (variant) {
    case Variant::Bma:
    case Variant::Bonus:
        theta = post.bma_parameter();
        break;
    case Variant::PosteriorSampling:
        theta = post.sample(rng);
        break;
    }
    model.kernel = transition_kernel(env, theta);

    if (variant == Variant::Bonus) {
        for (int s = 0; s < env.n_states(); ++s) {
            for (int a = 0; a < env.n_actions(); ++a) {
                const Eigen::VectorXd psi = value_feature(env, v_prev, s, a);
                model.reward[static_cast<std::size_t>(s) * env.n_actions() + a] +=
                    post.bonus(psi, value_bound);
            }
        }
    }
    return model;
}

bool should_switch(const SwitchCondition& cond, const SwitchInputs& in,
                   const GaussianPosterior& post, const PlanningModel& frozen) {
    switch (cond.kind) {
    case SwitchKind::EntropyLog2:
        return in.entropy_at_start - post.entropy() > kLog2;
    case SwitchKind::DetRatio4:
        return post.log_det_precision() - in.logdet_at_start > 2.0 * kLog2;
    case SwitchKind::PredictionMismatch:
        return frozen.det_successor(in.last_state, in.last_action) != in.last_next_state;
    case SwitchKind::FixedPeriod:
        if (cond.period < 1) throw std::invalid_argument("fixed-period needs period >= 1");
        return in.t - in.t_start >= cond.period;
    case SwitchKind::Never:
        return false;
    }
    return false;
}

double probabilistic_value_bound(double feature_bound, double lambda, int dim,
                                 std::int64_t horizon, double delta, double c) {
    if (delta <= 0.0 || delta >= 1.0) throw std::invalid_argument("delta must be in (0,1)");
    const double d = static_cast<double>(dim);
    const double t = static_cast<double>(horizon);
    return (c + 1.0) * feature_bound * std::sqrt(2.0 * lambda * d * std::log(2.0 * d * t / delta));
}

std::vector<double> grid_information_gains(const LinearMixtureMdp& env,
                                           const GaussianPosterior& post,
                                           const std::vector<double>& v) {
    std::vector<double> gains(static_cast<std::size_t>(env.n_states()) * env.n_actions());
    for (int s = 0; s < env.n_states(); ++s) {
        for (int a = 0; a < env.n_actions(); ++a) {
            gains[static_cast<std::size_t>(env.pair_index(s, a))] =
                post.information_gain(value_feature(env, v, s, a));
        }
    }
    return gains;
}

namespace {

PlannerResult materialize_search(const PlanningModel& model, const AgentConfig& cfg,
                                 int epoch) {
    const std::vector<double> critic = critic_values(model, cfg.critic_horizon);
    const int S = model.n_states, A = model.n_actions;
    PlannerResult out;
    out.pi.assign(S, 0);
    out.v.v.assign(S, 0.0);
    out.q.assign(static_cast<std::size_t>(S) * A,
                 std::numeric_limits<double>::quiet_NaN());
    long expanded = 0;
    for (int s = 0; s < S; ++s) {
        SearchResult r;
        switch (cfg.planner) {
        case PlannerKind::TreeSearch:
            r = tree_search(model, critic, s, cfg.budget);
            break;
        case PlannerKind::BeamSearch:
            r = beam_search(model, critic, s, cfg.budget);
            break;
        case PlannerKind::Mcts: {
            Rng rng = rng_stream(cfg.seed, "mcts",
                                 (static_cast<std::uint64_t>(epoch) << 24) ^
                                     static_cast<std::uint64_t>(s));
            r = mcts(model, critic, s, cfg.budget, rng);
            break;
        }
        default:
            throw std::logic_error("materialize_search called with a non-search planner");
        }
        out.pi[s] = r.first_action;
        out.v.v[s] = r.value;
        for (int a = 0; a < A; ++a) {
            out.q[static_cast<std::size_t>(s) * A + a] = r.root_q[a];
        }
        expanded += r.nodes_expanded;
    }
    out.epsilon_certificate = epsilon_residual(out.q, out.v.v, model);
    out.planner_id = to_string(cfg.planner);
    out.horizon_used = cfg.budget.depth;
    out.nodes_expanded = expanded;
    return out;
}

PlannerResult make_plan(const PlanningModel& model, const AgentConfig& cfg, int epoch,
                        bool myopic) {
    if (myopic) {
        return value_iteration(model, 1);
    }
    if (cfg.planner == PlannerKind::ValueIteration) {
        // |V| <= max|r| / (1 - gamma); learned reward tables can go negative
        const double r_abs = std::max(model.max_abs_reward(), 1e-12);
        const double l_eff = r_abs / (1.0 - model.gamma);
        const HorizonBound hb = required_horizon(model.gamma, cfg.epsilon, l_eff);
        return value_iteration(model, hb.horizon);
    }
    return materialize_search(model, cfg, epoch);
}

RunRecord run_impl(const LinearMixtureMdp& env, const AgentConfig& cfg,
                   const RegretFn& regret_fn, bool myopic) {
    if (cfg.horizon < 1) throw std::invalid_argument("horizon must be >= 1");
    if (cfg.epsilon <= 0.0) throw std::invalid_argument("epsilon must be positive");

    const double value_bound =
        cfg.value_bound > 0.0 ? cfg.value_bound : env.max_reward() / (1.0 - env.gamma());

    Rng agent_rng = rng_stream(cfg.seed, "agent");
    GaussianPosterior post(env.feature_dim(), cfg.lambda, cfg.sigma);
    const int n_pairs = env.n_states() * env.n_actions();
    std::optional<GaussianPosterior> reward_post;
    if (cfg.learn_reward) reward_post.emplace(n_pairs, cfg.lambda, cfg.sigma);

    RunRecord rec;
    rec.seed = cfg.seed;
    rec.variant = to_string(cfg.variant);
    rec.planner = myopic ? "myopic" : to_string(cfg.planner);
    rec.switch_kind = to_string(cfg.switch_cond.kind);
    rec.epsilon = cfg.epsilon;
    rec.value_bound = value_bound;
    rec.lambda = cfg.lambda;
    rec.sigma = cfg.sigma;
    rec.horizon = cfg.horizon;
    rec.feature_dim = env.feature_dim();
    rec.learned_reward = cfg.learn_reward;
    rec.feature_bound_env = env.feature_bound();
    rec.entropy_initial = post.entropy();
    rec.steps.reserve(static_cast<std::size_t>(cfg.horizon));

    int s = env.sample_initial_state(agent_rng);
    std::int64_t t = 0;
    int k = 0;
    std::vector<double> v_prev(env.n_states(), 0.0);
    double cum_regret = 0.0;

    while (t < cfg.horizon) {
        Rng planner_rng = rng_stream(cfg.seed, "planner", static_cast<std::uint64_t>(k));
        std::vector<double> base_reward = env.reward_table();
        if (reward_post) {
            // estimated reward table; the sampling variant draws it too
            const Eigen::VectorXd r_hat = cfg.variant == Variant::PosteriorSampling
                                              ? reward_post->sample(planner_rng)
                                              : reward_post->bma_parameter();
            base_reward.assign(r_hat.data(), r_hat.data() + n_pairs);
        }
        PlanningModel model;
        if (cfg.fixed_theta) {
            model.n_states = env.n_states();
            model.n_actions = env.n_actions();
            model.gamma = env.gamma();
            model.reward = base_reward;
            Eigen::VectorXd theta = Eigen::Map<const Eigen::VectorXd>(
                cfg.fixed_theta->data(), static_cast<Eigen::Index>(cfg.fixed_theta->size()));
            model.kernel = transition_kernel(env, theta);
        } else {
            model = plan_model(env, post, cfg.variant, value_bound, v_prev, planner_rng,
                               base_reward);
        }
        PlannerResult plan = make_plan(model, cfg, k, myopic);

        EpochSummary ep;
        ep.k = k;
        ep.t_start = t;
        ep.entropy_at_start = post.entropy();
        ep.logdet_at_start = post.log_det_precision();
        ep.certificate = plan.epsilon_certificate;
        ep.horizon_used = plan.horizon_used;
        ep.planner_id = plan.planner_id;
        ep.nodes_expanded = plan.nodes_expanded;
        double margin = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < model.reward.size(); ++i) {
            margin = std::min(margin, model.reward[i] - env.reward_table()[i]);
        }
        ep.min_reward_margin = margin;
        ep.gains_open = grid_information_gains(env, post, plan.v.v);
        ep.pi = plan.pi;
        ep.value = plan.v.v;

        std::vector<double> rolling_gains = ep.gains_open;
        bool switched = false;
        while (t < cfg.horizon && !switched) {
            const int a = plan.pi[s];
            const double entropy_now = post.entropy();
            const Eigen::VectorXd psi = value_feature(env, plan.v.v, s, a);
            const double gain = post.information_gain(psi);
            const StepOutcome outcome = step(env, s, a, agent_rng);
            const double y = plan.v.v[outcome.next_state];
            const double inst = regret_fn ? regret_fn(plan.pi, s) : 0.0;
            cum_regret += inst;

            rec.steps.push_back({t, s, a, outcome.reward, outcome.next_state, entropy_now,
                                 gain, k, inst, cum_regret});
            rec.max_feature_norm = std::max(rec.max_feature_norm, psi.norm());
            if (cfg.keep_buffer) {
                rec.buffer.push_back({s, a, outcome.next_state, outcome.reward, psi, y});
            }

            rolling_gains = grid_information_gains(env, post, plan.v.v);
            post.update({psi, y});
            if (reward_post) {
                Eigen::VectorXd e_pair = Eigen::VectorXd::Zero(n_pairs);
                e_pair(env.pair_index(s, a)) = 1.0;
                reward_post->update({e_pair, outcome.reward});
            }

            SwitchInputs in;
            in.entropy_at_start = ep.entropy_at_start;
            in.logdet_at_start = ep.logdet_at_start;
            in.t_start = ep.t_start;
            in.last_state = s;
            in.last_action = a;
            in.last_next_state = outcome.next_state;
            ++t;
            in.t = t;
            s = outcome.next_state;

            if (t < cfg.horizon) {
                const bool by_entropy = ep.entropy_at_start - post.entropy() > kLog2;
                const bool by_det =
                    post.log_det_precision() - ep.logdet_at_start > 2.0 * kLog2;
                if (by_entropy != by_det) ++rec.switch_disagreements;
                switched = should_switch(cfg.switch_cond, in, post, model);
            }
        }
        ep.gains_close = rolling_gains;
        rec.epochs.push_back(std::move(ep));
        v_prev = plan.v.v;
        if (switched) ++k;
    }
    rec.entropy_final = post.entropy();
    if (reward_post) {
        const Eigen::VectorXd r_hat = reward_post->bma_parameter();
        rec.reward_estimate_final.assign(r_hat.data(), r_hat.data() + n_pairs);
    }
    return rec;
}

} // namespace

RunRecord run(const LinearMixtureMdp& env, const AgentConfig& cfg, const RegretFn& regret_fn) {
    return run_impl(env, cfg, regret_fn, false);
}

RunRecord baseline_myopic(const LinearMixtureMdp& env, const AgentConfig& cfg,
                          const RegretFn& regret_fn) {
    return run_impl(env, cfg, regret_fn, true);
}

} // namespace rafa
