#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "rafa/mdp.hpp"

using namespace rafa;

namespace {

// 2 states, 1 action, one-hot features: phi(s'|s,a) = e_{triple(s,a,s')}
LinearMixtureMdp two_state_onehot() {
    std::vector<double> kernel = {0.25, 0.75,   // s=0
                                  0.6, 0.4};    // s=1
    std::vector<double> reward = {1.0, 0.5};
    return from_table(kernel, reward, 2, 1, 0.9, {1.0, 0.0});
}

LinearMixtureMdp random_env(Rng& rng, int s = 4, int a = 2, double gamma = 0.9) {
    GenConfig gc;
    gc.n_states = s;
    gc.n_actions = a;
    gc.gamma = gamma;
    return generate_environment(gc, rng);
}

} // namespace

TEST_CASE("value_feature on zero and constant values") {
    Rng rng(1);
    LinearMixtureMdp env = random_env(rng);
    std::vector<double> zero(env.n_states(), 0.0);
    std::vector<double> one(env.n_states(), 1.0);
    for (int s = 0; s < env.n_states(); ++s) {
        for (int a = 0; a < env.n_actions(); ++a) {
            CHECK(value_feature(env, zero, s, a).norm() == 0.0);
            // probabilities sum to one, so psi_1^T theta* = 1
            CHECK(value_feature(env, one, s, a).dot(env.theta_star()) ==
                  doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("value_feature places values into the one-hot block") {
    LinearMixtureMdp env = two_state_onehot();
    const std::vector<double> v = {1.0, 3.0};
    const Eigen::VectorXd psi = value_feature(env, v, 0, 0);
    CHECK(psi(env.triple_index(0, 0, 0)) == 1.0);
    CHECK(psi(env.triple_index(0, 0, 1)) == 3.0);
    CHECK(psi(env.triple_index(1, 0, 0)) == 0.0);
    CHECK(psi(env.triple_index(1, 0, 1)) == 0.0);
}

TEST_CASE("value_feature rejects mismatched value vector") {
    LinearMixtureMdp env = two_state_onehot();
    CHECK_THROWS_AS(value_feature(env, {1.0, 2.0, 3.0}, 0, 0), std::invalid_argument);
}

TEST_CASE("transition_kernel reproduces theta_star without repair") {
    Rng rng(2);
    LinearMixtureMdp env = random_env(rng);
    const auto kernel = transition_kernel(env, env.theta_star());
    for (std::size_t i = 0; i < kernel.size(); ++i) {
        CHECK(kernel[i] == env.true_kernel()[i]);
    }
}

TEST_CASE("transition_kernel clips a negative entry and renormalizes") {
    // 3 states, 1 action, one-hot embedding; theta deliberately invalid
    std::vector<double> table = {0.2, 0.3, 0.5};
    std::vector<double> reward = {0.0};
    LinearMixtureMdp env = from_table({0.2, 0.3, 0.5, 1, 0, 0, 1, 0, 0},
                                      {0.0, 0.0, 0.0}, 3, 1, 0.9, {1, 0, 0});
    Eigen::VectorXd theta = env.theta_star();
    theta(0) = -0.2; // row becomes (-0.2, 0.3, 0.5)
    const auto row = kernel_row(env, theta, 0, 0);
    CHECK(row[0] == 0.0);
    CHECK(row[1] == doctest::Approx(0.3 / 0.8).epsilon(1e-12));
    CHECK(row[2] == doctest::Approx(0.5 / 0.8).epsilon(1e-12));
    (void)table;
    (void)reward;
}

TEST_CASE("transition_kernel uniform fallback on an all-zero row") {
    LinearMixtureMdp env = two_state_onehot();
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(env.feature_dim());
    const auto row = kernel_row(env, theta, 0, 0);
    CHECK(row[0] == 0.5);
    CHECK(row[1] == 0.5);
}

TEST_CASE("one-hot embedding round trip reproduces the table exactly") {
    Rng rng(3);
    std::vector<double> table(3 * 2 * 3);
    for (int sa = 0; sa < 6; ++sa) {
        double sum = 0.0;
        for (int sn = 0; sn < 3; ++sn) sum += table[sa * 3 + sn] = rng.uniform01() + 0.01;
        for (int sn = 0; sn < 3; ++sn) table[sa * 3 + sn] /= sum;
    }
    std::vector<double> reward(6, 0.3);
    LinearMixtureMdp env = from_table(table, reward, 3, 2, 0.95, {1, 0, 0});
    const auto kernel = transition_kernel(env, env.theta_star());
    for (std::size_t i = 0; i < table.size(); ++i) {
        CHECK(kernel[i] == table[i]);
    }
}

TEST_CASE("step is deterministic on a certain row and under reseeding") {
    LinearMixtureMdp env = from_table({0, 1, 1, 0}, {0.5, 0.5}, 2, 1, 0.9, {1, 0});
    Rng rng(7);
    for (int i = 0; i < 20; ++i) {
        CHECK(step(env, 0, 0, rng).next_state == 1);
        CHECK(step(env, 1, 0, rng).next_state == 0);
    }
    Rng a(11), b(11);
    LinearMixtureMdp env2 = two_state_onehot();
    for (int i = 0; i < 50; ++i) {
        CHECK(step(env2, 0, 0, a).next_state == step(env2, 0, 0, b).next_state);
    }
}

TEST_CASE("step frequencies follow the row") {
    LinearMixtureMdp env = two_state_onehot(); // row (0.25, 0.75) at s=0
    Rng rng(13);
    const int n = 100000;
    int count1 = 0;
    for (int i = 0; i < n; ++i) {
        count1 += step(env, 0, 0, rng).next_state;
    }
    const double freq = static_cast<double>(count1) / n;
    CHECK(freq == doctest::Approx(0.75).epsilon(0.0134)); // +-0.01 absolute
    CHECK(std::abs(freq - 0.75) < 0.01);
}

TEST_CASE("policy evaluation solves trivial cases") {
    // zero reward
    LinearMixtureMdp env = from_table({0.25, 0.75, 0.6, 0.4}, {0.0, 0.0}, 2, 1, 0.9,
                                      {1, 0});
    ValueFn v = policy_evaluation(env.true_kernel(), env.reward_table(), 2, 1, 0.9, {0, 0});
    CHECK(v.v[0] == doctest::Approx(0.0));
    CHECK(v.v[1] == doctest::Approx(0.0));

    // single self-looping state: geometric series
    ValueFn g = policy_evaluation({1.0}, {1.0}, 1, 1, 0.9, {0});
    CHECK(g.v[0] == doctest::Approx(10.0).epsilon(1e-10));
}

TEST_CASE("policy evaluation matches a Monte-Carlo rollout oracle") {
    Rng rng(17);
    LinearMixtureMdp env = random_env(rng, 4, 2);
    Policy pi = {1, 0, 1, 0};
    const ValueFn v = policy_evaluation(env.true_kernel(), env.reward_table(), 4, 2,
                                        env.gamma(), pi);
    // independent oracle: truncated rollouts from state 0
    const int n_rollouts = 4000, horizon = 200;
    Rng mc(19);
    double mean = 0.0, m2 = 0.0;
    for (int i = 0; i < n_rollouts; ++i) {
        int s = 0;
        double ret = 0.0, disc = 1.0;
        for (int t = 0; t < horizon; ++t) {
            const StepOutcome o = step(env, s, pi[s], mc);
            ret += disc * o.reward;
            disc *= env.gamma();
            s = o.next_state;
        }
        const double delta = ret - mean;
        mean += delta / (i + 1);
        m2 += delta * (ret - mean);
    }
    const double se = std::sqrt(m2 / (n_rollouts - 1) / n_rollouts);
    const double truncation = std::pow(env.gamma(), horizon) / (1 - env.gamma());
    CHECK(std::abs(mean - v.v[0]) <= 3 * se + truncation);
}

TEST_CASE("optimal solution with one action equals policy evaluation") {
    Rng rng(23);
    LinearMixtureMdp env = random_env(rng, 4, 1);
    auto [pi, v] = optimal_solution(env.true_kernel(), env.reward_table(), 4, 1,
                                    env.gamma(), 1e-10);
    const ValueFn ref = policy_evaluation(env.true_kernel(), env.reward_table(), 4, 1,
                                          env.gamma(), pi);
    for (int s = 0; s < 4; ++s) CHECK(v.v[s] == doctest::Approx(ref.v[s]).epsilon(1e-7));
}

TEST_CASE("optimal solution picks the dominating action") {
    // action 0 dominates in both reward and transition quality
    std::vector<double> kernel = {
        // s=0: a=0 stays in the rewarding state, a=1 leaves
        1.0, 0.0, 0.0, 1.0,
        // s=1: a=0 returns to s=0, a=1 stays
        1.0, 0.0, 0.0, 1.0};
    std::vector<double> reward = {1.0, 0.2, 0.6, 0.1};
    auto [pi, v] = optimal_solution(kernel, reward, 2, 2, 0.9, 1e-9);
    CHECK(pi[0] == 0);
    CHECK(pi[1] == 0);
    CHECK(v.v[0] > v.v[1]);
}

TEST_CASE("optimal value dominates every enumerated policy") {
    Rng rng(29);
    for (int trial = 0; trial < 5; ++trial) {
        LinearMixtureMdp env = random_env(rng, 3, 3);
        auto [pi_star, v_star] = optimal_solution(env.true_kernel(), env.reward_table(), 3,
                                                  3, env.gamma(), 1e-8);
        (void)pi_star;
        Policy pi = {0, 0, 0};
        for (;;) {
            const ValueFn v = policy_evaluation(env.true_kernel(), env.reward_table(), 3, 3,
                                                env.gamma(), pi);
            for (int s = 0; s < 3; ++s) CHECK(v_star.v[s] >= v.v[s] - 1e-6);
            int i = 0;
            while (i < 3 && ++pi[i] == 3) pi[i++] = 0;
            if (i == 3) break;
        }
    }
}

TEST_CASE("generated environments satisfy the construction invariants") {
    Rng rng(31);
    for (GenMode mode : {GenMode::DirichletTabular, GenMode::RawGaussianProjected}) {
        GenConfig gc;
        gc.n_states = 5;
        gc.n_actions = 3;
        gc.mode = mode;
        LinearMixtureMdp env = generate_environment(gc, rng);
        for (int s = 0; s < 5; ++s) {
            for (int a = 0; a < 3; ++a) {
                double sum = 0.0;
                for (int sn = 0; sn < 5; ++sn) {
                    const double p = env.feature(s, a, sn).dot(env.theta_star());
                    CHECK(p >= -1e-12);
                    sum += p;
                }
                CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
            }
        }
    }
}

TEST_CASE("dirichlet concentration limit yields near-uniform rows") {
    Rng rng(37);
    GenConfig gc;
    gc.n_states = 4;
    gc.n_actions = 2;
    gc.dirichlet_alpha = 1e6;
    LinearMixtureMdp env = generate_environment(gc, rng);
    for (double p : env.true_kernel()) {
        CHECK(std::abs(p - 0.25) < 1e-2);
    }
}

TEST_CASE("same seed generates identical environment bytes") {
    GenConfig gc;
    Rng a(41), b(41);
    CHECK(generate_environment(gc, a).serialize() == generate_environment(gc, b).serialize());
    Rng c(42);
    CHECK(generate_environment(gc, c).serialize() !=
          generate_environment(gc, a).serialize());
}

TEST_CASE("environment serialization round trips exactly") {
    Rng rng(43);
    LinearMixtureMdp env = random_env(rng, 5, 3);
    const std::string text = env.serialize();
    LinearMixtureMdp back = LinearMixtureMdp::deserialize(text);
    CHECK(back.serialize() == text);
    CHECK(back.theta_star() == env.theta_star());
    CHECK(back.true_kernel() == env.true_kernel());
    CHECK(back.feature_bound() == env.feature_bound());
}

TEST_CASE("linearity bridge holds to float precision") {
    Rng rng(47);
    for (int trial = 0; trial < 10; ++trial) {
        LinearMixtureMdp env = random_env(rng, 4, 2);
        std::vector<double> v(4);
        for (double& x : v) x = 20.0 * rng.uniform01() - 10.0;
        for (int s = 0; s < 4; ++s) {
            for (int a = 0; a < 2; ++a) {
                double expect = 0.0;
                for (int sn = 0; sn < 4; ++sn) {
                    expect +=
                        env.true_kernel()[static_cast<std::size_t>(env.triple_index(s, a, sn))] *
                        v[sn];
                }
                CHECK(std::abs(expect - value_feature(env, v, s, a).dot(env.theta_star())) <=
                      1e-10);
            }
        }
    }
}

TEST_CASE("construction rejects invalid inputs") {
    std::vector<double> kernel = {0.25, 0.75, 0.6, 0.4};
    CHECK_THROWS_AS(from_table(kernel, {1.5, 0.5}, 2, 1, 0.9, {1, 0}),
                    std::invalid_argument); // reward out of [0,1]
    CHECK_THROWS_AS(from_table(kernel, {0.5, 0.5}, 2, 1, 1.0, {1, 0}),
                    std::invalid_argument); // gamma not inside (0,1)
    CHECK_THROWS_AS(from_table(kernel, {0.5, 0.5}, 2, 1, 0.9, {0.7, 0.7}),
                    std::invalid_argument); // rho does not sum to one
    CHECK_THROWS_AS(from_table({0.5, 0.6, 0.6, 0.4}, {0.5, 0.5}, 2, 1, 0.9, {1, 0}),
                    std::invalid_argument); // rows do not sum to one
}

TEST_CASE("feature bound covers value-box corners") {
    LinearMixtureMdp env = two_state_onehot();
    // one-hot: ||psi_V|| = ||V restricted to the row||_2 <= L * sqrt(S)
    const double expected = env.value_bound() * std::sqrt(2.0);
    CHECK(env.feature_bound() == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("rng streams are independent and reproducible") {
    Rng a = rng_stream(7, "agent");
    Rng b = rng_stream(7, "agent");
    Rng c = rng_stream(7, "planner");
    Rng d = rng_stream(8, "agent");
    CHECK(a.next_u64() == b.next_u64());
    CHECK(a.next_u64() == b.next_u64());
    Rng a2 = rng_stream(7, "agent");
    CHECK(a2.next_u64() != c.next_u64());
    CHECK(rng_stream(7, "agent").next_u64() != d.next_u64());
    CHECK(rng_stream(7, "mcts", 1).next_u64() != rng_stream(7, "mcts", 2).next_u64());
}

TEST_CASE("rng samplers have the right first moments") {
    Rng rng(123);
    const int n = 200000;
    double su = 0, sn = 0, snn = 0, sg = 0;
    for (int i = 0; i < n; ++i) {
        su += rng.uniform01();
        const double z = rng.normal();
        sn += z;
        snn += z * z;
        sg += rng.gamma(2.5);
    }
    CHECK(su / n == doctest::Approx(0.5).epsilon(0.01));
    CHECK(sn / n == doctest::Approx(0.0).epsilon(1.0)); // absolute ~0.01 scale
    CHECK(std::abs(sn / n) < 0.01);
    CHECK(snn / n == doctest::Approx(1.0).epsilon(0.02));
    CHECK(sg / n == doctest::Approx(2.5).epsilon(0.02));
}

TEST_CASE("categorical sampling handles point masses and rounding slack") {
    Rng rng(5);
    const std::vector<double> point = {0.0, 1.0, 0.0};
    for (int i = 0; i < 50; ++i) CHECK(rng.categorical(point) == 1);
    // probabilities that sum slightly under one still land in range
    const std::vector<double> slack = {0.3, 0.3, 0.3999999999};
    for (int i = 0; i < 1000; ++i) CHECK(rng.categorical(slack) <= 2);
}

TEST_CASE("delayed chain shape") {
    LinearMixtureMdp env = make_delayed_chain(6, 0.9);
    CHECK(env.n_states() == 6);
    CHECK(env.n_actions() == 2);
    CHECK(env.reward(5, 0) == 1.0);
    CHECK(env.reward(0, 0) == doctest::Approx(0.1));
    CHECK(env.reward(0, 1) == 0.0);
    // walking right from 3 reaches 4 surely
    Rng rng(1);
    CHECK(step(env, 3, 1, rng).next_state == 4);
    CHECK(step(env, 5, 1, rng).next_state == 5);
    // optimal policy walks right then loiters at the end
    auto [pi, v] = optimal_solution(env.true_kernel(), env.reward_table(), 6, 2, 0.9, 1e-9);
    for (int s = 0; s < 5; ++s) CHECK(pi[s] == 1);
    CHECK(pi[5] == 0);
    (void)v;
}
