#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "lens/nn/tape.hpp"

namespace lens::testing {

struct FdReport {
    double max_relative_error = 0.0;
    std::string worst_block;
    std::size_t checked = 0;
};

/// Compares analytic gradients against central differences of `loss` over
/// every scalar in `params`. Relative error is |a - n| / max(|a|, |n|, floor).
template <class Loss>
FdReport finite_difference_check(nn::ParameterStore& params, const nn::Gradients& analytic, Loss&& loss,
                                 double h = 1e-5, double floor = 1e-3) {
    FdReport report;
    for (std::size_t b = 0; b < params.size(); ++b) {
        const nn::ParamId id{b};
        auto& value = params.value(id);
        for (Eigen::Index k = 0; k < value.size(); ++k) {
            const double saved = value.data()[k];
            value.data()[k] = saved + h;
            const double up = loss(params);
            value.data()[k] = saved - h;
            const double down = loss(params);
            value.data()[k] = saved;
            const double numeric = (up - down) / (2 * h);
            const double a = analytic[id].data()[k];
            const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
            if (err > report.max_relative_error) {
                report.max_relative_error = err;
                report.worst_block = params.name(id);
            }
            ++report.checked;
        }
    }
    return report;
}

}  // namespace lens::testing
