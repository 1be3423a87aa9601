#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "lens/gaussian.hpp"
#include "lens/random.hpp"

namespace lens::testing {

/// Mean and variance of the normalised product of 1-D normal densities,
/// by composite Simpson integration on a fine grid.
inline std::pair<double, double> integrate_product_moments(std::span<const double> means,
                                                           std::span<const double> variances) {
    double lo = means[0], hi = means[0], min_sd = std::sqrt(variances[0]);
    for (std::size_t k = 0; k < means.size(); ++k) {
        lo = std::min(lo, means[k]);
        hi = std::max(hi, means[k]);
        min_sd = std::min(min_sd, std::sqrt(variances[k]));
    }
    lo -= 14 * min_sd;
    hi += 14 * min_sd;
    auto n = static_cast<std::size_t>(std::ceil((hi - lo) / (min_sd / 400)));
    n += n % 2;
    const double h = (hi - lo) / static_cast<double>(n);
    std::vector<double> log_density(n + 1);
    double peak = -INFINITY;
    for (std::size_t i = 0; i <= n; ++i) {
        const double x = lo + h * static_cast<double>(i);
        double v = 0.0;
        for (std::size_t k = 0; k < means.size(); ++k) v -= 0.5 * (x - means[k]) * (x - means[k]) / variances[k];
        log_density[i] = v;
        peak = std::max(peak, v);
    }
    double z = 0.0, m1 = 0.0, m2 = 0.0;
    for (std::size_t i = 0; i <= n; ++i) {
        const double x = lo + h * static_cast<double>(i);
        const double w = (i == 0 || i == n) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
        const double f = w * std::exp(log_density[i] - peak);
        z += f;
        m1 += f * x;
        m2 += f * x * x;
    }
    const double mean = m1 / z;
    return {mean, m2 / z - mean * mean};
}

inline double log_density(const DiagonalGaussian& g, const Eigen::VectorXd& x) {
    const double log_2pi = std::log(2.0 * 3.14159265358979323846);
    double v = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double r = x(i) - g.mean()(i);
        v -= 0.5 * (log_2pi + g.log_var()(i) + r * r * std::exp(-g.log_var()(i)));
    }
    return v;
}

/// E_q[log q - log p] estimated from `n` draws of q.
inline double monte_carlo_kl(const DiagonalGaussian& q, const DiagonalGaussian& p, std::size_t n, Rng& rng) {
    std::normal_distribution<double> normal;
    const auto d = static_cast<Eigen::Index>(q.dim());
    const Eigen::VectorXd sd = (0.5 * q.log_var().array()).exp();
    Eigen::VectorXd x(d);
    double total = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
        for (Eigen::Index i = 0; i < d; ++i) x(i) = q.mean()(i) + sd(i) * normal(rng);
        total += log_density(q, x) - log_density(p, x);
    }
    return total / static_cast<double>(n);
}

inline DiagonalGaussian random_gaussian(Rng& rng, std::size_t d, double mean_range, double log_var_range) {
    Eigen::VectorXd m(static_cast<Eigen::Index>(d)), lv(static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < d; ++i) {
        m(static_cast<Eigen::Index>(i)) = mean_range * (2 * uniform01(rng) - 1);
        lv(static_cast<Eigen::Index>(i)) = log_var_range * (2 * uniform01(rng) - 1);
    }
    return DiagonalGaussian(m, lv);
}

}  // namespace lens::testing
