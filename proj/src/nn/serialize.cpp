#include "lens/nn/serialize.hpp"

#include "lens/error.hpp"

namespace lens::nn {

nlohmann::json to_json(const ParameterStore& params) {
    nlohmann::json arrays = nlohmann::json::array();
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& v = params.value(ParamId{i});
        std::vector<double> data;
        data.reserve(static_cast<std::size_t>(v.size()));
        for (Eigen::Index r = 0; r < v.rows(); ++r)
            for (Eigen::Index c = 0; c < v.cols(); ++c) data.push_back(v(r, c));
        arrays.push_back({{"name", params.name(ParamId{i})}, {"shape", {v.rows(), v.cols()}}, {"data", data}});
    }
    return arrays;
}

void load_json(ParameterStore& params, const nlohmann::json& j) {
    if (!j.is_array()) throw InputError("parameter block must be a JSON array");
    if (j.size() != params.size())
        throw InputError("checkpoint has " + std::to_string(j.size()) + " arrays, model expects " +
                         std::to_string(params.size()));
    for (const auto& entry : j) {
        const auto name = entry.at("name").get<std::string>();
        auto id = params.find(name);
        if (!id) throw InputError("checkpoint array not in model: " + name);
        auto& v = params.value(*id);
        const auto shape = entry.at("shape").get<std::vector<Eigen::Index>>();
        if (shape.size() != 2 || shape[0] != v.rows() || shape[1] != v.cols())
            throw ShapeError("checkpoint array " + name + " has a different shape");
        const auto& data = entry.at("data");
        if (static_cast<Eigen::Index>(data.size()) != v.size())
            throw ShapeError("checkpoint array " + name + " has the wrong element count");
        std::size_t k = 0;
        for (Eigen::Index r = 0; r < v.rows(); ++r)
            for (Eigen::Index c = 0; c < v.cols(); ++c) v(r, c) = data[k++].get<double>();
    }
}

}  // namespace lens::nn
