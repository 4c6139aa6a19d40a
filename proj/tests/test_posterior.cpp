#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "rafa/posterior.hpp"

using namespace rafa;

namespace {

Eigen::VectorXd random_vec(int d, Rng& rng, double scale = 1.0) {
    Eigen::VectorXd v(d);
    for (int i = 0; i < d; ++i) v(i) = scale * rng.normal();
    return v;
}

} // namespace

TEST_CASE("zero feature leaves the posterior unchanged") {
    GaussianPosterior post(3, 1.0);
    const Eigen::MatrixXd sigma_before = post.precision();
    const double h_before = post.entropy();
    post.update({Eigen::VectorXd::Zero(3), 5.0});
    CHECK(post.precision() == sigma_before);
    CHECK(post.entropy() == h_before);
    CHECK(post.mean().norm() == 0.0);
}

TEST_CASE("single scalar observation matches the hand solve") {
    // d=1, lambda=1, sigma=1, one observation (psi=1, y=2):
    // Sigma = 2, mean = 2/2 = 1
    GaussianPosterior post(1, 1.0, 1.0);
    Eigen::VectorXd psi(1);
    psi << 1.0;
    post.update({psi, 2.0});
    CHECK(post.precision()(0, 0) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(post.mean()(0) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("posterior mean equals the independent ridge solve") {
    Rng rng(101);
    for (int trial = 0; trial < 10; ++trial) {
        const int d = 3 + trial;
        const double lambda = 0.5 + rng.uniform01();
        const double sigma = 0.5 + rng.uniform01();
        GaussianPosterior post(d, lambda, sigma);
        // independent oracle: accumulate the normal equations densely
        Eigen::MatrixXd xtx = lambda * Eigen::MatrixXd::Identity(d, d);
        Eigen::VectorXd xty = Eigen::VectorXd::Zero(d);
        for (int i = 0; i < 50; ++i) {
            const Eigen::VectorXd psi = random_vec(d, rng);
            const double y = rng.normal();
            post.update({psi, y});
            xtx += psi * psi.transpose() / (sigma * sigma);
            xty += psi * y / (sigma * sigma);
        }
        const Eigen::VectorXd ridge = xtx.fullPivLu().solve(xty);
        CHECK((post.mean() - ridge).norm() / ridge.norm() < 1e-8);
    }
}

TEST_CASE("incremental factor agrees with the direct factorization") {
    Rng rng(103);
    GaussianPosterior post(8, 1.0);
    for (int i = 0; i < 700; ++i) { // crosses the periodic refresh
        post.update({random_vec(8, rng), rng.normal()});
        if (i % 97 == 0) {
            CHECK((post.mean() - post.mean_direct()).norm() /
                      std::max(post.mean_direct().norm(), 1e-12) <
                  1e-8);
            CHECK(std::abs(post.log_det_precision() - post.log_det_precision_direct()) <
                  1e-8);
        }
    }
}

TEST_CASE("entropy of the unit-precision prior") {
    GaussianPosterior post(2, 1.0);
    // d=2, Sigma=I: H = (1 + log 2pi) = log(2 pi e)
    CHECK(post.entropy() == doctest::Approx(2.837877066409345).epsilon(1e-12));
}

TEST_CASE("scaling the precision by four drops entropy by log 4") {
    GaussianPosterior a(2, 1.0);
    GaussianPosterior b(2, 4.0); // Sigma = 4 I
    CHECK(a.entropy() - b.entropy() == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("entropy strictly decreases on every nonzero update") {
    Rng rng(107);
    GaussianPosterior post(5, 1.0);
    double h = post.entropy();
    double logdet = post.log_det_precision();
    for (int i = 0; i < 200; ++i) {
        post.update({random_vec(5, rng, 0.5), rng.normal()});
        CHECK(post.entropy() < h);
        CHECK(post.log_det_precision() > logdet); // det Sigma nondecreasing
        h = post.entropy();
        logdet = post.log_det_precision();
    }
}

TEST_CASE("information gain closed forms") {
    GaussianPosterior post(3, 1.0);
    CHECK(post.information_gain(Eigen::VectorXd::Zero(3)) == 0.0);
    Eigen::VectorXd e1 = Eigen::VectorXd::Zero(3);
    e1(0) = 1.0;
    // Sigma = I, sigma = 1: I = 1/2 log 2
    CHECK(post.information_gain(e1) ==
          doctest::Approx(0.5 * std::log(2.0)).epsilon(1e-12));
    CHECK(post.information_gain(e1) == doctest::Approx(0.346573590279973).epsilon(1e-10));
}

TEST_CASE("information gain equals the entropy drop of the update") {
    Rng rng(109);
    for (int trial = 0; trial < 50; ++trial) {
        const int d = 2 + trial % 6;
        GaussianPosterior post(d, 0.5 + rng.uniform01(), 0.5 + rng.uniform01());
        for (int i = 0; i < trial % 20; ++i) {
            post.update({random_vec(d, rng), rng.normal()});
        }
        const Eigen::VectorXd psi = random_vec(d, rng, 2.0);
        const double gain = post.information_gain(psi);
        GaussianPosterior bumped = post;
        bumped.update({psi, rng.normal()});
        CHECK(std::abs(gain - (post.entropy() - bumped.entropy())) < 1e-10);
    }
}

TEST_CASE("samples collapse onto the mean at huge precision") {
    Rng rng(113);
    GaussianPosterior post(4, 1e12);
    Eigen::VectorXd psi = random_vec(4, rng);
    post.update({psi, 3.0});
    for (int i = 0; i < 100; ++i) {
        CHECK((post.sample(rng) - post.mean()).norm() < 1e-5);
    }
}

TEST_CASE("scalar sample variance matches the posterior covariance") {
    // d=1, Sigma=4 (lambda=4): samples ~ N(0, 1/4)
    GaussianPosterior post(1, 4.0);
    Rng rng(127);
    const int n = 100000;
    double mean = 0.0, m2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = post.sample(rng)(0);
        const double delta = x - mean;
        mean += delta / (i + 1);
        m2 += delta * (x - mean);
    }
    CHECK(m2 / (n - 1) == doctest::Approx(0.25).epsilon(0.04)); // within +-0.01
    CHECK(std::abs(m2 / (n - 1) - 0.25) < 0.01);
}

TEST_CASE("empirical sample mean stays in the CLT band") {
    Rng rng(131);
    GaussianPosterior post(3, 1.0);
    for (int i = 0; i < 10; ++i) post.update({random_vec(3, rng), rng.normal()});
    const Eigen::VectorXd mean = post.mean();
    // covariance diagonal via solves of unit vectors
    Eigen::MatrixXd cov = post.precision().llt().solve(Eigen::MatrixXd::Identity(3, 3));
    const int n = 100000;
    Eigen::VectorXd avg = Eigen::VectorXd::Zero(3);
    for (int i = 0; i < n; ++i) avg += post.sample(rng);
    avg /= n;
    for (int j = 0; j < 3; ++j) {
        CHECK(std::abs(avg(j) - mean(j)) <= 4.0 * std::sqrt(cov(j, j) / n));
    }
}

TEST_CASE("bma parameter is the prior mean on an empty buffer") {
    GaussianPosterior post(6, 2.0);
    CHECK(post.bma_parameter().norm() == 0.0);
}

TEST_CASE("bma parameter converges to the truth under many noiseless observations") {
    Rng rng(137);
    const int d = 4;
    Eigen::VectorXd theta_star = random_vec(d, rng);
    GaussianPosterior post(d, 1.0);
    for (int i = 0; i < 1000000; ++i) {
        Eigen::VectorXd psi = Eigen::VectorXd::Zero(d);
        psi(i % d) = 1.0;
        post.update({psi, theta_star(i % d)});
    }
    CHECK((post.bma_parameter() - theta_star).norm() < 1e-2);
}

TEST_CASE("bma parameter matches the Monte-Carlo average of samples") {
    Rng rng(139);
    GaussianPosterior post(3, 1.0);
    for (int i = 0; i < 20; ++i) post.update({random_vec(3, rng), rng.normal()});
    Eigen::MatrixXd cov = post.precision().llt().solve(Eigen::MatrixXd::Identity(3, 3));
    const int n = 100000;
    Eigen::VectorXd avg = Eigen::VectorXd::Zero(3);
    for (int i = 0; i < n; ++i) avg += post.sample(rng);
    avg /= n;
    for (int j = 0; j < 3; ++j) {
        CHECK(std::abs(avg(j) - post.bma_parameter()(j)) <=
              4.0 * std::sqrt(cov(j, j) / n));
    }
}

TEST_CASE("bonus closed forms and monotonicity") {
    GaussianPosterior post(2, 1.0);
    CHECK(post.bonus(Eigen::VectorXd::Zero(2), 1.0) == 0.0);
    // I = 0.5 needs ||psi||^2 = e - 1 at Sigma = I
    Eigen::VectorXd psi(2);
    psi << std::sqrt(std::exp(1.0) - 1.0), 0.0;
    CHECK(post.information_gain(psi) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(post.bonus(psi, 1.0) == doctest::Approx(1.0).epsilon(1e-12));

    // adding data never raises the bonus at a fixed feature
    Rng rng(149);
    double last = post.bonus(psi, 3.0);
    for (int i = 0; i < 50; ++i) {
        post.update({random_vec(2, rng), rng.normal()});
        const double now = post.bonus(psi, 3.0);
        CHECK(now <= last + 1e-14);
        last = now;
    }
}

TEST_CASE("update rejects non-finite observations") {
    GaussianPosterior post(2, 1.0);
    Eigen::VectorXd bad(2);
    bad << std::numeric_limits<double>::quiet_NaN(), 0.0;
    CHECK_THROWS_AS(post.update({bad, 1.0}), std::invalid_argument);
    Eigen::VectorXd ok(2);
    ok << 1.0, 0.0;
    CHECK_THROWS_AS(post.update({ok, std::numeric_limits<double>::infinity()}),
                    std::invalid_argument);
    CHECK_THROWS_AS(post.update({Eigen::VectorXd::Zero(3), 0.0}), std::invalid_argument);
}

TEST_CASE("noise scale enters updates and gain") {
    Rng rng(151);
    const double sigma = 2.0;
    GaussianPosterior post(2, 1.0, sigma);
    Eigen::VectorXd psi(2);
    psi << 1.0, 0.0;
    post.update({psi, 4.0});
    // Sigma = I + psi psi^T / 4
    CHECK(post.precision()(0, 0) == doctest::Approx(1.25).epsilon(1e-15));
    GaussianPosterior fresh(2, 1.0, sigma);
    CHECK(fresh.information_gain(psi) ==
          doctest::Approx(0.5 * std::log1p(0.25)).epsilon(1e-12));
}

TEST_CASE("posterior snapshot serialization round trips") {
    Rng rng(157);
    GaussianPosterior post(5, 1.5, 0.7);
    for (int i = 0; i < 30; ++i) post.update({random_vec(5, rng), rng.normal()});
    const std::string text = post.serialize();
    GaussianPosterior back = GaussianPosterior::deserialize(text);
    CHECK(back.serialize() == text); // payload is exact
    // the reloaded factor is a fresh factorization; solves agree to tolerance
    CHECK((back.mean() - post.mean()).norm() < 1e-12);
    CHECK(back.entropy() == doctest::Approx(post.entropy()).epsilon(1e-12));
}

TEST_CASE("determinant-ratio norm bound") {
    // A, D positive definite with A >= D: ||x||_A <= ||x||_D sqrt(det A / det D)
    Rng rng(163);
    for (int trial = 0; trial < 100; ++trial) {
        const int d = 2 + trial % 6;
        Eigen::MatrixXd g(d, d);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) g(i, j) = rng.normal();
        const Eigen::MatrixXd dm = g * g.transpose() + 0.2 * Eigen::MatrixXd::Identity(d, d);
        Eigen::MatrixXd am = dm;
        for (int i = 0; i < 1 + trial % 4; ++i) {
            const Eigen::VectorXd w = random_vec(d, rng);
            am += w * w.transpose();
        }
        const Eigen::VectorXd x = random_vec(d, rng);
        const double lhs = std::sqrt(x.dot(am * x));
        const double det_ratio = std::exp(
            Eigen::LLT<Eigen::MatrixXd>(am).matrixLLT().diagonal().array().log().sum() -
            Eigen::LLT<Eigen::MatrixXd>(dm).matrixLLT().diagonal().array().log().sum());
        CHECK(lhs <= std::sqrt(x.dot(dm * x)) * det_ratio * (1 + 1e-12));
    }
}
