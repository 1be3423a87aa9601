#include "lens/nn/layers.hpp"

#include <cmath>

#include "lens/error.hpp"

namespace lens::nn {

Activation parse_activation(const std::string& name) {
    if (name == "identity") return Activation::identity;
    if (name == "tanh") return Activation::tanh;
    if (name == "relu") return Activation::relu;
    throw InputError("unknown activation: " + name);
}

std::string to_string(Activation a) {
    switch (a) {
        case Activation::identity:
            return "identity";
        case Activation::tanh:
            return "tanh";
        case Activation::relu:
            return "relu";
    }
    return "identity";
}

namespace {

Matrix uniform_matrix(Rng& rng, std::size_t rows, std::size_t cols, double bound) {
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = (2.0 * uniform01(rng) - 1.0) * bound;
    return m;
}

}  // namespace

DenseLayer make_dense(ParameterStore& params, const std::string& name, std::size_t in_dim, std::size_t out_dim,
                      Activation activation, Rng& rng) {
    if (in_dim == 0 || out_dim == 0) throw ShapeError("dense layer " + name + " needs positive dimensions");
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
    DenseLayer layer;
    layer.weight = params.add(name + ".weight", uniform_matrix(rng, out_dim, in_dim, bound));
    layer.bias = params.add(name + ".bias", Matrix::Zero(static_cast<Eigen::Index>(out_dim), 1));
    layer.activation = activation;
    layer.in_dim = in_dim;
    layer.out_dim = out_dim;
    return layer;
}

Var forward(Tape& tape, const DenseLayer& layer, Var x) {
    if (x.rows() != static_cast<Eigen::Index>(layer.in_dim))
        throw ShapeError("dense layer " + tape.params().name(layer.weight) + ": expected " +
                         std::to_string(layer.in_dim) + " inputs, got " + std::to_string(x.rows()));
    const Matrix& w = tape.params().value(layer.weight);
    const Matrix& b = tape.params().value(layer.bias);
    Matrix out = w * x.value();
    out.colwise() += b.col(0);
    switch (layer.activation) {
        case Activation::identity:
            break;
        case Activation::tanh:
            out = out.array().tanh().matrix();
            break;
        case Activation::relu:
            out = out.cwiseMax(0.0);
            break;
    }
    return tape.record(std::move(out), [layer, x](const Matrix& g, const Matrix& out, Tape& t, Gradients& grads) {
        Matrix pre;
        switch (layer.activation) {
            case Activation::identity:
                pre = g;
                break;
            case Activation::tanh:
                pre = (g.array() * (1.0 - out.array().square())).matrix();
                break;
            case Activation::relu:
                pre = (out.array() > 0.0).select(g, 0.0).matrix();
                break;
        }
        grads[layer.weight].noalias() += pre * x.value().transpose();
        grads[layer.bias] += pre.rowwise().sum();
        t.accumulate(x, t.params().value(layer.weight).transpose() * pre);
    });
}

EmbeddingTable make_embedding(ParameterStore& params, const std::string& name, std::size_t rows, std::size_t dim,
                              Rng& rng) {
    if (rows == 0 || dim == 0) throw ShapeError("embedding " + name + " needs positive dimensions");
    EmbeddingTable table;
    table.table = params.add(name, uniform_matrix(rng, rows, dim, 1.0));
    table.rows = rows;
    table.dim = dim;
    return table;
}

Var embed(Tape& tape, const EmbeddingTable& table, std::span<const std::size_t> ids) {
    const Matrix& values = tape.params().value(table.table);
    Matrix out(static_cast<Eigen::Index>(table.dim), static_cast<Eigen::Index>(ids.size()));
    for (std::size_t k = 0; k < ids.size(); ++k) {
        if (ids[k] >= table.rows)
            throw InputError("item id " + std::to_string(ids[k]) + " outside embedding table of " +
                             std::to_string(table.rows) + " rows");
        out.col(static_cast<Eigen::Index>(k)) = values.row(static_cast<Eigen::Index>(ids[k])).transpose();
    }
    std::vector<std::size_t> rows(ids.begin(), ids.end());
    return tape.record(std::move(out), [table, rows](const Matrix& g, const Matrix&, Tape&, Gradients& grads) {
        auto& gt = grads[table.table];
        for (std::size_t k = 0; k < rows.size(); ++k)
            gt.row(static_cast<Eigen::Index>(rows[k])) += g.col(static_cast<Eigen::Index>(k)).transpose();
    });
}

Mlp make_mlp(ParameterStore& params, const std::string& name, std::size_t in_dim,
             const std::vector<std::size_t>& hidden, std::size_t out_dim, Activation hidden_activation, Rng& rng) {
    Mlp mlp;
    std::size_t prev = in_dim;
    for (std::size_t i = 0; i < hidden.size(); ++i) {
        mlp.layers.push_back(make_dense(params, name + "." + std::to_string(i), prev, hidden[i], hidden_activation, rng));
        prev = hidden[i];
    }
    mlp.layers.push_back(
        make_dense(params, name + "." + std::to_string(hidden.size()), prev, out_dim, Activation::identity, rng));
    return mlp;
}

Var forward(Tape& tape, const Mlp& mlp, Var x) {
    for (const auto& layer : mlp.layers) x = forward(tape, layer, x);
    return x;
}

}  // namespace lens::nn
