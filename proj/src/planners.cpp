#include "rafa/planners.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace rafa {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void validate_model(const PlanningModel& m) {
    if (m.n_states <= 0 || m.n_actions <= 0) {
        throw std::invalid_argument("planning model has empty state or action space");
    }
    if (!(m.gamma > 0.0 && m.gamma < 1.0)) {
        throw std::invalid_argument("planning model gamma must lie in (0,1)");
    }
    const std::size_t sa = static_cast<std::size_t>(m.n_states) * m.n_actions;
    if (m.kernel.size() != sa * m.n_states || m.reward.size() != sa) {
        throw std::invalid_argument("planning model tables have wrong size");
    }
}

} // namespace

int PlanningModel::det_successor(int s, int a) const {
    const double* p = row(s, a);
    int best = 0;
    for (int sn = 1; sn < n_states; ++sn) {
        if (p[sn] > p[best]) best = sn;
    }
    return best;
}

int PlanningModel::sample_successor(int s, int a, Rng& rng) const {
    return static_cast<int>(rng.categorical(row(s, a), n_states));
}

double PlanningModel::max_reward() const {
    return *std::max_element(reward.begin(), reward.end());
}

double PlanningModel::max_abs_reward() const {
    double out = 0.0;
    for (double r : reward) out = std::max(out, std::abs(r));
    return out;
}

HorizonBound required_horizon(double gamma, double epsilon, double value_bound) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in (0,1)");
    if (epsilon <= 0.0 || value_bound <= 0.0) {
        throw std::invalid_argument("epsilon and value bound must be positive");
    }
    if (epsilon >= value_bound) return {1, true};
    const double u = 1.0 + std::ceil(std::log(epsilon / value_bound) / std::log(gamma));
    return {static_cast<int>(u), false};
}

double epsilon_residual(const std::vector<double>& q, const std::vector<double>& v,
                        const PlanningModel& model) {
    double worst = 0.0;
    for (int s = 0; s < model.n_states; ++s) {
        for (int a = 0; a < model.n_actions; ++a) {
            const double qa = q[static_cast<std::size_t>(s) * model.n_actions + a];
            if (std::isnan(qa)) continue;
            const double* p = model.row(s, a);
            double backup = model.r(s, a);
            for (int sn = 0; sn < model.n_states; ++sn) backup += model.gamma * p[sn] * v[sn];
            worst = std::max(worst, std::abs(qa - backup));
        }
    }
    return worst;
}

double epsilon_check(const PlannerResult& result, const PlanningModel& model) {
    if (result.q.empty()) throw std::invalid_argument("result has no action values");
    return epsilon_residual(result.q, result.v.v, model);
}

PlannerResult value_iteration(const PlanningModel& model, int horizon) {
    validate_model(model);
    if (horizon < 1) throw std::invalid_argument("value iteration horizon must be >= 1");
    const int S = model.n_states, A = model.n_actions;
    std::vector<double> v(S, 0.0);
    std::vector<double> q(static_cast<std::size_t>(S) * A, 0.0);
    for (int u = horizon; u >= 1; --u) {
        std::vector<double> v_next(S);
        for (int s = 0; s < S; ++s) {
            double best = -std::numeric_limits<double>::infinity();
            for (int a = 0; a < A; ++a) {
                const double* p = model.row(s, a);
                double backup = model.r(s, a);
                for (int sn = 0; sn < S; ++sn) backup += model.gamma * p[sn] * v[sn];
                q[static_cast<std::size_t>(s) * A + a] = backup;
                if (backup > best) best = backup;
            }
            v_next[s] = best;
        }
        v = v_next;
    }
    PlannerResult out;
    out.pi.assign(S, 0);
    for (int s = 0; s < S; ++s) {
        int best_a = 0;
        for (int a = 1; a < A; ++a) {
            if (q[static_cast<std::size_t>(s) * A + a] >
                q[static_cast<std::size_t>(s) * A + best_a]) {
                best_a = a;
            }
        }
        out.pi[s] = best_a;
    }
    out.v.v = v;
    out.q = std::move(q);
    out.epsilon_certificate = epsilon_residual(out.q, out.v.v, model);
    out.planner_id = "value-iteration";
    out.horizon_used = horizon;
    out.nodes_expanded = static_cast<long>(horizon) * S * A;
    return out;
}

std::vector<double> critic_values(const PlanningModel& model, int inner_horizon) {
    if (inner_horizon <= 0) return std::vector<double>(model.n_states, 0.0);
    return value_iteration(model, inner_horizon).v.v;
}

std::vector<int> elite_actions(const PlanningModel& model,
                               const std::vector<double>& critic, int s, int width) {
    const int A = model.n_actions;
    std::vector<std::pair<double, int>> scored(A);
    for (int a = 0; a < A; ++a) {
        const double* p = model.row(s, a);
        double exp_critic = 0.0;
        for (int sn = 0; sn < model.n_states; ++sn) exp_critic += p[sn] * critic[sn];
        scored[a] = {model.r(s, a) + model.gamma * exp_critic, a};
    }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& l, const auto& r) {
        if (l.first != r.first) return l.first > r.first;
        return l.second < r.second;
    });
    const int w = std::min(width, A);
    std::vector<int> out(w);
    for (int i = 0; i < w; ++i) out[i] = scored[i].second;
    std::sort(out.begin(), out.end());
    return out;
}

namespace {

struct RolloutBest {
    double score = -std::numeric_limits<double>::infinity();
    std::vector<std::pair<int, int>> path;
};

// depth-first over elite proposals in ascending action order; strict ">" keeps
// the lexicographically smallest maximizer
void tree_recurse(const PlanningModel& model, const std::vector<double>& critic,
                  int s, int level, int max_level, double acc, double discount,
                  std::vector<std::pair<int, int>>& prefix, const SearchBudget& budget,
                  RolloutBest& best, long& expanded) {
    if (level > max_level) {
        const double score = acc + discount * critic[s];
        if (score > best.score) {
            best.score = score;
            best.path = prefix;
        }
        return;
    }
    const auto proposals = elite_actions(model, critic, s, budget.breadth);
    for (int a : proposals) {
        ++expanded;
        prefix.emplace_back(s, a);
        const int sn = model.det_successor(s, a);
        const double acc_next = acc + discount * model.r(s, a);
        tree_recurse(model, critic, sn, level + 1, max_level, acc_next,
                     discount * model.gamma, prefix, budget, best, expanded);
        prefix.pop_back();
    }
}

} // namespace

SearchResult tree_search(const PlanningModel& model, const std::vector<double>& critic,
                         int s0, const SearchBudget& budget) {
    validate_model(model);
    if (budget.breadth < 1 || budget.depth < 0) {
        throw std::invalid_argument("tree search needs breadth >= 1 and depth >= 0");
    }
    double count = 1.0;
    for (int u = 0; u <= budget.depth; ++u) {
        count *= std::min(budget.breadth, model.n_actions);
        if (count > static_cast<double>(budget.node_cap)) {
            throw std::invalid_argument("tree search budget exceeds node cap");
        }
    }
    SearchResult out;
    out.root_q.assign(model.n_actions, kNaN);
    long expanded = 0;

    const auto root_proposals = elite_actions(model, critic, s0, budget.breadth);
    RolloutBest global;
    for (int a : root_proposals) {
        RolloutBest sub;
        std::vector<std::pair<int, int>> prefix;
        prefix.emplace_back(s0, a);
        ++expanded;
        const int sn = model.det_successor(s0, a);
        tree_recurse(model, critic, sn, 1, budget.depth, model.r(s0, a), model.gamma,
                     prefix, budget, sub, expanded);
        out.root_q[a] = sub.score;
        if (sub.score > global.score) {
            global = sub;
        }
    }
    out.first_action = global.path.front().second;
    out.rollout = std::move(global.path);
    out.value = global.score;
    out.nodes_expanded = expanded;
    return out;
}

SearchResult beam_search(const PlanningModel& model, const std::vector<double>& critic,
                         int s0, const SearchBudget& budget) {
    validate_model(model);
    if (budget.breadth < 1 || budget.proposal_width < budget.breadth) {
        throw std::invalid_argument("beam search needs proposal_width >= breadth >= 1");
    }
    struct Beam {
        std::vector<std::pair<int, int>> path;
        double disc_reward = 0.0;
        int state;
    };
    std::vector<Beam> beams = {Beam{{}, 0.0, s0}};
    double discount = 1.0;
    long expanded = 0;

    for (int u = 0; u <= budget.depth; ++u) {
        std::vector<Beam> next_beams;
        for (const Beam& b : beams) {
            const auto proposals = elite_actions(model, critic, b.state, budget.proposal_width);
            // rank this state's proposals by the one-step score and keep the
            // breadth best; with proposal_width == breadth nothing is cut
            std::vector<std::pair<double, int>> scored;
            scored.reserve(proposals.size());
            for (int a : proposals) {
                ++expanded;
                if (expanded > budget.node_cap) {
                    throw std::invalid_argument("beam search budget exceeds node cap");
                }
                const int sn = model.det_successor(b.state, a);
                scored.emplace_back(model.r(b.state, a) + model.gamma * critic[sn], a);
            }
            std::stable_sort(scored.begin(), scored.end(), [](const auto& l, const auto& r) {
                if (l.first != r.first) return l.first > r.first;
                return l.second < r.second;
            });
            const std::size_t keep = std::min<std::size_t>(budget.breadth, scored.size());
            std::vector<int> kept;
            for (std::size_t i = 0; i < keep; ++i) kept.push_back(scored[i].second);
            std::sort(kept.begin(), kept.end());
            for (int a : kept) {
                Beam nb = b;
                nb.path.emplace_back(b.state, a);
                nb.disc_reward += discount * model.r(b.state, a);
                nb.state = model.det_successor(b.state, a);
                next_beams.push_back(std::move(nb));
            }
        }
        beams = std::move(next_beams);
        discount *= model.gamma;
    }

    SearchResult out;
    out.root_q.assign(model.n_actions, kNaN);
    double best_score = -std::numeric_limits<double>::infinity();
    const Beam* best = nullptr;
    for (const Beam& b : beams) {
        const double score = b.disc_reward + discount * critic[b.state];
        const int first = b.path.front().second;
        if (std::isnan(out.root_q[first]) || score > out.root_q[first]) {
            out.root_q[first] = score;
        }
        if (score > best_score) {
            best_score = score;
            best = &b;
        }
    }
    out.first_action = best->path.front().second;
    out.rollout = best->path;
    out.value = best_score;
    out.nodes_expanded = expanded;
    return out;
}

namespace {

struct MctsState;

struct MctsAction {
    int a;
    int parent_state;
    std::vector<int> children; // state node ids, one per sampled successor
    double q_hat = 0.0;
};

struct MctsState {
    int s;
    int parent_action = -1;
    std::vector<int> actions; // action node ids
    double v_hat = 0.0;
    bool expanded = false;
};

} // namespace

SearchResult mcts(const PlanningModel& model, const std::vector<double>& critic,
                  int s0, const SearchBudget& budget, Rng& rng) {
    validate_model(model);
    if (budget.expansions < 1 || budget.fanout < 1 || budget.proposal_width < 1) {
        throw std::invalid_argument("mcts needs expansions, fanout, proposal_width >= 1");
    }
    std::vector<MctsState> states;
    std::vector<MctsAction> actions;
    states.push_back({s0, -1, {}, critic[s0], false});

    auto backup_from = [&](int state_id) {
        int sid = state_id;
        for (;;) {
            MctsState& node = states[sid];
            if (node.expanded) {
                double best = -std::numeric_limits<double>::infinity();
                for (int aid : node.actions) best = std::max(best, actions[aid].q_hat);
                node.v_hat = best;
            }
            const int aid = node.parent_action;
            if (aid < 0) break;
            MctsAction& an = actions[aid];
            double mean_child = 0.0;
            for (int cid : an.children) mean_child += states[cid].v_hat;
            mean_child /= static_cast<double>(an.children.size());
            an.q_hat = model.r(states[an.parent_state].s, an.a) + model.gamma * mean_child;
            sid = an.parent_state;
        }
    };

    long expanded = 0;
    for (int e = 0; e < budget.expansions; ++e) {
        // selection: greedy on q_hat, sampled descent through stochastic branches
        int sid = 0;
        while (states[sid].expanded) {
            const MctsState& node = states[sid];
            int best_aid = node.actions.front();
            for (int aid : node.actions) {
                if (actions[aid].q_hat > actions[best_aid].q_hat) best_aid = aid;
            }
            const auto& children = actions[best_aid].children;
            const std::size_t pick =
                children.size() == 1
                    ? 0
                    : static_cast<std::size_t>(rng.uniform01() * children.size());
            sid = children[std::min(pick, children.size() - 1)];
        }
        if (static_cast<long>(states.size()) > budget.node_cap) break;

        // expansion (index access: pushing children reallocates `states`)
        const int leaf_state = states[sid].s;
        const auto proposals = elite_actions(model, critic, leaf_state, budget.proposal_width);
        for (int a : proposals) {
            MctsAction an;
            an.a = a;
            an.parent_state = sid;
            double mean_child = 0.0;
            for (int i = 0; i < budget.fanout; ++i) {
                const int sn = model.sample_successor(leaf_state, a, rng);
                MctsState child;
                child.s = sn;
                child.parent_action = static_cast<int>(actions.size());
                child.v_hat = critic[sn];
                states.push_back(child);
                an.children.push_back(static_cast<int>(states.size()) - 1);
                mean_child += critic[sn];
            }
            an.q_hat = model.r(leaf_state, a) + model.gamma * mean_child / budget.fanout;
            actions.push_back(std::move(an));
            states[sid].actions.push_back(static_cast<int>(actions.size()) - 1);
        }
        states[sid].expanded = true;
        ++expanded;
        backup_from(sid);
    }

    SearchResult out;
    out.root_q.assign(model.n_actions, kNaN);
    for (int aid : states[0].actions) {
        out.root_q[actions[aid].a] = actions[aid].q_hat;
    }
    // greedy rollout for reporting: max q_hat, then the sampled child with the
    // highest backed-up value
    int sid = 0;
    while (states[sid].expanded) {
        const MctsState& node = states[sid];
        int best_aid = node.actions.front();
        for (int aid : node.actions) {
            if (actions[aid].q_hat > actions[best_aid].q_hat) best_aid = aid;
        }
        out.rollout.emplace_back(node.s, actions[best_aid].a);
        const auto& children = actions[best_aid].children;
        int best_child = children.front();
        for (int cid : children) {
            if (states[cid].v_hat > states[best_child].v_hat) best_child = cid;
        }
        sid = best_child;
    }
    out.first_action = out.rollout.empty() ? 0 : out.rollout.front().second;
    out.value = states[0].v_hat;
    out.nodes_expanded = expanded;
    return out;
}

} // namespace rafa
