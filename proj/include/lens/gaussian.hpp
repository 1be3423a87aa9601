#pragma once

// Diagonal Gaussian beliefs: precision-weighted fusion, KL divergence and
// reparameterised sampling. Plain value versions operate on Eigen vectors;
// the traced versions record the same computations on an nn::Tape.

#include <cstddef>
#include <span>

#include <Eigen/Dense>

#include "lens/nn/tape.hpp"

namespace lens {

inline constexpr double kDefaultLogVarClamp = 8.0;

/// N(mean, diag(exp(log_var))). Log-variances are clamped to
/// [-clamp, +clamp] on construction; all entries must be finite.
class DiagonalGaussian {
public:
    DiagonalGaussian(Eigen::VectorXd mean, Eigen::VectorXd log_var, double log_var_clamp = kDefaultLogVarClamp);

    static DiagonalGaussian standard(std::size_t dim);

    std::size_t dim() const { return static_cast<std::size_t>(mean_.size()); }
    const Eigen::VectorXd& mean() const { return mean_; }
    const Eigen::VectorXd& log_var() const { return log_var_; }
    Eigen::VectorXd variance() const { return log_var_.array().exp().matrix(); }
    Eigen::VectorXd precision() const { return (-log_var_.array()).exp().matrix(); }

    bool operator==(const DiagonalGaussian& other) const {
        return mean_ == other.mean_ && log_var_ == other.log_var_;
    }

private:
    Eigen::VectorXd mean_;
    Eigen::VectorXd log_var_;
};

/// Product of the prior with every likelihood, renormalised. Precisions are
/// summed per dimension in sorted order so the result is bit-identical under
/// any permutation of `likelihoods`. An empty list returns the prior.
DiagonalGaussian fuse(const DiagonalGaussian& prior, std::span<const DiagonalGaussian> likelihoods,
                      double log_var_clamp = kDefaultLogVarClamp);

/// KL(q || p) summed over dimensions.
double kl_divergence(const DiagonalGaussian& q, const DiagonalGaussian& p);

/// mean + exp(log_var / 2) * noise.
Eigen::VectorXd sample(const DiagonalGaussian& g, const Eigen::VectorXd& noise);

/// A Gaussian (or a batch of them, one per column) living on a tape.
struct GaussianVar {
    nn::Var mean;
    nn::Var log_var;

    DiagonalGaussian value(std::size_t column = 0, double log_var_clamp = kDefaultLogVarClamp) const;
};

/// Splits a 2d x n tape value into mean (top half) and clamped log-variance
/// (bottom half).
GaussianVar split_gaussian(nn::Var stacked, double log_var_clamp = kDefaultLogVarClamp);

/// Constant d x 1 Gaussian on the tape.
GaussianVar constant_gaussian(nn::Tape& tape, const DiagonalGaussian& g);

/// Traced fusion of a d x 1 prior with the d x K likelihood columns.
GaussianVar fuse(const GaussianVar& prior, const GaussianVar& likelihoods, double log_var_clamp = kDefaultLogVarClamp);

/// Traced KL(q || p) for d x 1 Gaussians; 1 x 1 result.
nn::Var kl_divergence(const GaussianVar& q, const GaussianVar& p);

/// Traced reparameterised samples: d x S for noise of shape d x S.
nn::Var sample(const GaussianVar& g, const Eigen::MatrixXd& noise);

}  // namespace lens
