#pragma once

#include "json.hpp"

#include "lens/nn/tape.hpp"

namespace lens::nn {

/// Named arrays as JSON: [{"name", "shape": [rows, cols], "data": [...]}],
/// data in row-major order. Doubles are written with round-trip precision.
nlohmann::json to_json(const ParameterStore& params);

/// Overwrites the values of `params` from `j`. Every stored name must exist
/// with the same shape.
void load_json(ParameterStore& params, const nlohmann::json& j);

}  // namespace lens::nn
