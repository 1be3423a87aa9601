#pragma once

#include <cstdint>
#include <vector>

#include "lens/nn/tape.hpp"

namespace lens::nn {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Moment accumulators for every parameter in a store.
class AdamState {
public:
    AdamState(const ParameterStore& params, AdamConfig config);

    const AdamConfig& config() const { return config_; }
    std::uint64_t step() const { return step_; }

    /// Applies one bias-corrected Adam update. Throws NumericError naming the
    /// offending block if any gradient is non-finite; parameters are left
    /// untouched in that case.
    void apply(ParameterStore& params, const Gradients& grads);

private:
    AdamConfig config_;
    std::uint64_t step_ = 0;
    std::vector<Matrix> first_;
    std::vector<Matrix> second_;
};

}  // namespace lens::nn
