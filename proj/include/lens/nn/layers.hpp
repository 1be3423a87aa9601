#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lens/nn/tape.hpp"
#include "lens/random.hpp"

namespace lens::nn {

enum class Activation { identity, tanh, relu };

Activation parse_activation(const std::string& name);
std::string to_string(Activation a);

/// Fully connected layer: activation(W x + b). Weights are [out x in].
struct DenseLayer {
    ParamId weight;
    ParamId bias;
    Activation activation = Activation::identity;
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
};

/// Registers `<name>.weight` and `<name>.bias`. Weights are drawn uniformly
/// from [-1/sqrt(in), 1/sqrt(in)]; biases start at zero.
DenseLayer make_dense(ParameterStore& params, const std::string& name, std::size_t in_dim, std::size_t out_dim,
                      Activation activation, Rng& rng);

/// Applies the layer to every column of `x` (in_dim x n).
Var forward(Tape& tape, const DenseLayer& layer, Var x);

/// Item embedding lookup table stored as [rows x dim].
struct EmbeddingTable {
    ParamId table;
    std::size_t rows = 0;
    std::size_t dim = 0;
};

EmbeddingTable make_embedding(ParameterStore& params, const std::string& name, std::size_t rows, std::size_t dim,
                              Rng& rng);

/// Gathers the rows for `ids` as columns of a dim x ids.size() matrix.
/// Repeated ids accumulate their gradients into the same row.
Var embed(Tape& tape, const EmbeddingTable& table, std::span<const std::size_t> ids);

/// Stack of dense layers; hidden layers share one activation, the output
/// layer is linear.
struct Mlp {
    std::vector<DenseLayer> layers;

    std::size_t in_dim() const { return layers.front().in_dim; }
    std::size_t out_dim() const { return layers.back().out_dim; }
};

Mlp make_mlp(ParameterStore& params, const std::string& name, std::size_t in_dim,
             const std::vector<std::size_t>& hidden, std::size_t out_dim, Activation hidden_activation, Rng& rng);

Var forward(Tape& tape, const Mlp& mlp, Var x);

}  // namespace lens::nn
