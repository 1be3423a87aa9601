#include "lens/nn/adam.hpp"

#include <cmath>

#include "lens/error.hpp"

namespace lens::nn {

AdamState::AdamState(const ParameterStore& params, AdamConfig config) : config_(config) {
    if (!(config.learning_rate > 0) || !(config.beta1 >= 0 && config.beta1 < 1) ||
        !(config.beta2 >= 0 && config.beta2 < 1) || !(config.epsilon > 0))
        throw InputError("invalid Adam hyperparameters");
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& v = params.value(ParamId{i});
        first_.push_back(Matrix::Zero(v.rows(), v.cols()));
        second_.push_back(Matrix::Zero(v.rows(), v.cols()));
    }
}

void AdamState::apply(ParameterStore& params, const Gradients& grads) {
    if (grads.size() != params.size() || first_.size() != params.size())
        throw ShapeError("Adam: gradient count does not match parameter count");
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& g = grads[ParamId{i}];
        const auto& p = params.value(ParamId{i});
        if (g.rows() != p.rows() || g.cols() != p.cols())
            throw ShapeError("Adam: gradient shape mismatch for " + params.name(ParamId{i}));
        if (!g.allFinite()) throw NumericError("non-finite gradient in parameter block " + params.name(ParamId{i}));
    }
    ++step_;
    const double b1 = config_.beta1;
    const double b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& g = grads[ParamId{i}].array();
        auto m = first_[i].array();
        auto v = second_[i].array();
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g.square();
        params.value(ParamId{i}).array() -= config_.learning_rate * (m / c1) / ((v / c2).sqrt() + config_.epsilon);
    }
}

}  // namespace lens::nn
