#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "fd_check.hpp"
#include "lens/error.hpp"
#include "lens/gaussian.hpp"
#include "oracles.hpp"

using namespace lens;
using Eigen::VectorXd;

namespace {

DiagonalGaussian g1(double mean, double var) {
    return DiagonalGaussian(VectorXd::Constant(1, mean), VectorXd::Constant(1, std::log(var)));
}

}  // namespace

TEST_CASE("standard normal") {
    auto g = DiagonalGaussian::standard(3);
    CHECK(g.mean() == VectorXd::Zero(3));
    CHECK(g.log_var() == VectorXd::Zero(3));
    CHECK_THROWS_AS(DiagonalGaussian::standard(0), ShapeError);
}

TEST_CASE("construction checks") {
    CHECK_THROWS_AS(DiagonalGaussian(VectorXd::Zero(2), VectorXd::Zero(3)), ShapeError);
    CHECK_THROWS_AS(DiagonalGaussian(VectorXd::Constant(1, NAN), VectorXd::Zero(1)), NumericError);
    DiagonalGaussian wide(VectorXd::Zero(2), VectorXd::Constant(2, 20.0));
    CHECK(wide.log_var() == VectorXd::Constant(2, 8.0));
    DiagonalGaussian narrow(VectorXd::Zero(1), VectorXd::Constant(1, -20.0), 5.0);
    CHECK(narrow.log_var()(0) == -5.0);
}

TEST_CASE("fuse examples") {
    SUBCASE("two standard normals") {
        const std::vector<DiagonalGaussian> lik{g1(0, 1)};
        auto f = fuse(g1(0, 1), lik);
        CHECK(f.mean()(0) == 0.0);
        CHECK(f.variance()(0) == doctest::Approx(0.5).epsilon(1e-15));
    }
    SUBCASE("N(0,1) x N(2,4) against integration") {
        const std::vector<DiagonalGaussian> lik{g1(2, 4)};
        auto f = fuse(g1(0, 1), lik);
        const double means[] = {0.0, 2.0};
        const double vars[] = {1.0, 4.0};
        auto [m, v] = testing::integrate_product_moments(means, vars);
        // Frozen from the integration oracle.
        CHECK(m == doctest::Approx(0.4).epsilon(1e-9));
        CHECK(v == doctest::Approx(0.8).epsilon(1e-9));
        CHECK(f.mean()(0) == doctest::Approx(m).epsilon(1e-12));
        CHECK(f.variance()(0) == doctest::Approx(v).epsilon(1e-12));
    }
    SUBCASE("no likelihoods returns the prior") {
        auto prior = g1(0.3, 2.0);
        CHECK(fuse(prior, std::span<const DiagonalGaussian>{}) == prior);
    }
    SUBCASE("dimension mismatch") {
        const std::vector<DiagonalGaussian> lik{DiagonalGaussian::standard(2)};
        CHECK_THROWS_AS(fuse(DiagonalGaussian::standard(3), lik), ShapeError);
    }
}

TEST_CASE("fuse matches numerical integration on random cases") {
    auto rng = make_stream(11, {1});
    for (int c = 0; c < 100; ++c) {
        const auto k = 1 + static_cast<std::size_t>(rng() % 4);
        std::vector<double> means, vars;
        std::vector<DiagonalGaussian> lik;
        for (std::size_t j = 0; j <= k; ++j) {
            means.push_back(6 * uniform01(rng) - 3);
            vars.push_back(std::exp(4 * uniform01(rng) - 2));
            if (j > 0) lik.push_back(g1(means.back(), vars.back()));
        }
        auto f = fuse(g1(means[0], vars[0]), lik);
        auto [m, v] = testing::integrate_product_moments(means, vars);
        CHECK(std::abs(f.mean()(0) - m) < 1e-6);
        CHECK(std::abs(f.variance()(0) - v) < 1e-6);
    }
}

TEST_CASE("fuse properties") {
    auto rng = make_stream(12, {1});
    for (int c = 0; c < 200; ++c) {
        const std::size_t d = 1 + rng() % 5;
        auto prior = testing::random_gaussian(rng, d, 2, 2);
        std::vector<DiagonalGaussian> lik;
        const auto k = 2 + rng() % 6;
        for (std::size_t j = 0; j < k; ++j) lik.push_back(testing::random_gaussian(rng, d, 3, 3));
        auto joint = fuse(prior, lik);

        auto shuffled = lik;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        CHECK(fuse(prior, shuffled) == joint);

        auto incremental = prior;
        for (const auto& l : lik) incremental = fuse(incremental, std::span(&l, 1));
        CHECK((incremental.mean() - joint.mean()).cwiseAbs().maxCoeff() < 1e-10);
        CHECK((incremental.log_var() - joint.log_var()).cwiseAbs().maxCoeff() < 1e-10);

        VectorXd smallest = prior.variance();
        for (const auto& l : lik) smallest = smallest.cwiseMin(l.variance());
        CHECK((joint.variance().array() <= smallest.array() * (1 + 1e-12)).all());
    }
}

TEST_CASE("kl examples") {
    CHECK(kl_divergence(g1(0.7, 2.0), g1(0.7, 2.0)) == 0.0);
    CHECK(kl_divergence(g1(1, 1), g1(0, 1)) == doctest::Approx(0.5).epsilon(1e-15));
    // N(0, 1/2) against N(0, 1): (1/2)(1/2 - 1 + ln 2) per dimension.
    auto half = DiagonalGaussian(VectorXd::Zero(4), VectorXd::Constant(4, std::log(0.5)));
    CHECK(kl_divergence(half, DiagonalGaussian::standard(4)) ==
          doctest::Approx(4 * 0.5 * (0.5 - 1 + std::log(2.0))).epsilon(1e-14));
    CHECK_THROWS_AS(kl_divergence(DiagonalGaussian::standard(2), DiagonalGaussian::standard(3)), ShapeError);
}

TEST_CASE("kl properties") {
    auto rng = make_stream(13, {1});
    for (int c = 0; c < 200; ++c) {
        const std::size_t d = 1 + rng() % 6;
        auto q = testing::random_gaussian(rng, d, 3, 4);
        auto p = testing::random_gaussian(rng, d, 3, 4);
        CHECK(kl_divergence(q, p) >= 0.0);
        CHECK(kl_divergence(q, q) == 0.0);
    }
}

TEST_CASE("kl matches Monte Carlo") {
    auto rng = make_stream(14, {1});
    for (int c = 0; c < 5; ++c) {
        auto q = testing::random_gaussian(rng, 3, 1, 1);
        auto p = testing::random_gaussian(rng, 3, 1, 1);
        CHECK(std::abs(testing::monte_carlo_kl(q, p, 1000000, rng) - kl_divergence(q, p)) < 1e-2);
    }
}

TEST_CASE("sample examples") {
    auto g = DiagonalGaussian(VectorXd::Constant(2, 1.5), VectorXd::Zero(2));
    CHECK(sample(g, VectorXd::Zero(2)) == g.mean());
    CHECK(sample(g, VectorXd::Ones(2)) == VectorXd::Constant(2, 2.5));
    CHECK_THROWS_AS(sample(g, VectorXd::Zero(3)), ShapeError);
}

TEST_CASE("sample moments") {
    auto rng = make_stream(15, {1});
    auto g = DiagonalGaussian((VectorXd(2) << -1.0, 2.0).finished(), (VectorXd(2) << std::log(0.25), std::log(3.0)).finished());
    const int n = 100000;
    VectorXd s1 = VectorXd::Zero(2), s2 = VectorXd::Zero(2);
    for (int k = 0; k < n; ++k) {
        VectorXd x = sample(g, standard_normal(rng, 2, 1));
        s1 += x;
        s2 += x.cwiseProduct(x);
    }
    const VectorXd mean = s1 / n;
    const VectorXd var = s2 / n - mean.cwiseProduct(mean);
    for (int i = 0; i < 2; ++i) {
        const double v = g.variance()(i);
        CHECK(std::abs(mean(i) - g.mean()(i)) < 3 * std::sqrt(v / n));
        CHECK(std::abs(var(i) - v) < 3 * v * std::sqrt(2.0 / n));
    }
}

TEST_CASE("traced operations agree with plain ones") {
    auto rng = make_stream(16, {1});
    for (int c = 0; c < 50; ++c) {
        const std::size_t d = 1 + rng() % 4;
        auto prior = testing::random_gaussian(rng, d, 2, 2);
        std::vector<DiagonalGaussian> lik;
        const auto k = 1 + rng() % 4;
        for (std::size_t j = 0; j < k; ++j) lik.push_back(testing::random_gaussian(rng, d, 3, 3));
        Eigen::MatrixXd means(d, k), lvs(d, k);
        for (std::size_t j = 0; j < k; ++j) {
            means.col(static_cast<Eigen::Index>(j)) = lik[j].mean();
            lvs.col(static_cast<Eigen::Index>(j)) = lik[j].log_var();
        }
        nn::ParameterStore params;
        nn::Tape tape(params);
        auto tp = constant_gaussian(tape, prior);
        GaussianVar tl{tape.constant(means), tape.constant(lvs)};
        auto tf = fuse(tp, tl);
        auto plain = fuse(prior, lik);
        CHECK(tf.value() == plain);
        CHECK(kl_divergence(tf, tp).value()(0, 0) == kl_divergence(plain, prior));
        const Eigen::MatrixXd noise = standard_normal(rng, static_cast<Eigen::Index>(d), 1);
        CHECK(sample(tf, noise).value().col(0) == sample(plain, noise.col(0)));
    }
}

TEST_CASE("traced fuse, kl and sample match finite differences") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        auto rng = make_stream(seed, {17});
        const Eigen::Index d = 3, k = 3, s = 2;
        nn::ParameterStore params;
        auto pm = params.add("prior_mean", standard_normal(rng, d, 1));
        auto plv = params.add("prior_log_var", standard_normal(rng, d, 1));
        auto lm = params.add("lik_mean", standard_normal(rng, d, k));
        auto llv = params.add("lik_log_var", standard_normal(rng, d, k));
        const Eigen::MatrixXd noise = standard_normal(rng, d, s);
        auto loss_of = [&](nn::Tape& tape) {
            auto var = [&](nn::ParamId id) {
                return tape.record(tape.params().value(id), [id](const nn::Matrix& g, const nn::Matrix&, nn::Tape&,
                                                                 nn::Gradients& grads) { grads[id] += g; });
            };
            GaussianVar prior{var(pm), var(plv)};
            GaussianVar lik{var(lm), var(llv)};
            auto post = fuse(prior, lik);
            auto x = sample(post, noise);
            return nn::add(kl_divergence(post, prior), nn::sum(nn::mul(x, x)));
        };
        nn::Tape tape(params);
        auto grads = tape.backward(loss_of(tape));
        auto report = testing::finite_difference_check(params, grads, [&](const nn::ParameterStore& p) {
            nn::Tape t(p, false);
            return loss_of(t).value()(0, 0);
        });
        INFO("seed " << seed << " block " << report.worst_block);
        CHECK(report.max_relative_error < 1e-4);
    }
}
