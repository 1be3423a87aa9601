#pragma once

// Reverse-mode differentiation over dense matrices.
//
// Every value on the tape is an Eigen matrix; column vectors are n x 1 and a
// batch of vectors is stored column-wise. Nodes are appended in evaluation
// order, so reverse creation order is a valid topological order for the
// backward sweep.

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace lens::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct ParamId {
    std::size_t index = 0;
};

/// Named learnable arrays. Insertion order is the canonical order used by
/// gradients, optimizer state and checkpoints.
class ParameterStore {
public:
    ParamId add(std::string name, Matrix value);

    std::size_t size() const { return values_.size(); }
    std::size_t scalar_count() const;
    const std::string& name(ParamId id) const { return names_.at(id.index); }
    const Matrix& value(ParamId id) const { return values_.at(id.index); }
    Matrix& value(ParamId id) { return values_.at(id.index); }
    std::optional<ParamId> find(std::string_view name) const;

    bool operator==(const ParameterStore& other) const;

private:
    std::vector<std::string> names_;
    std::vector<Matrix> values_;
};

/// One gradient array per parameter, zero-initialised.
class Gradients {
public:
    Gradients() = default;
    explicit Gradients(const ParameterStore& params);

    Matrix& operator[](ParamId id) { return grads_.at(id.index); }
    const Matrix& operator[](ParamId id) const { return grads_.at(id.index); }
    std::size_t size() const { return grads_.size(); }

    Gradients& operator+=(const Gradients& other);
    Gradients& operator*=(double factor);
    void set_zero();

private:
    std::vector<Matrix> grads_;
};

class Tape;

/// Lightweight handle to a tape node.
class Var {
public:
    Var() = default;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    const Matrix& value() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
    std::size_t id() const { return id_; }
    Tape& tape() const { return *tape_; }

private:
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

class Tape {
public:
    /// Pulls the incoming gradient of a node back into its parents. `out` is
    /// the node's own forward value.
    using BackwardFn =
        std::function<void(const Matrix& grad_out, const Matrix& out, Tape& tape, Gradients& grads)>;

    /// With `trace == false` no backward closures are kept; values still flow.
    explicit Tape(const ParameterStore& params, bool trace = true) : params_(&params), trace_(trace) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Matrix value);
    Var record(Matrix value, BackwardFn backward);

    /// Adds `grad` into the pending gradient of `v`; no-op for constants.
    void accumulate(Var v, const Matrix& grad);

    /// Runs the backward sweep from a 1x1 node.
    Gradients backward(Var loss);

    const ParameterStore& params() const { return *params_; }
    bool tracing() const { return trace_; }
    std::size_t node_count() const { return nodes_.size(); }
    const Matrix& value(std::size_t id) const { return nodes_[id].value; }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        BackwardFn backward;
        bool requires_grad = false;
        bool has_grad = false;
    };

    const ParameterStore* params_;
    bool trace_;
    std::deque<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }

/// A learnable array as a tape node; its gradient lands in `grads[id]`.
Var parameter(Tape& tape, ParamId id);

// Elementwise and structural primitives. Shapes are checked and a
// ShapeError is thrown on mismatch.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var exp(Var a);
Var tanh(Var a);
Var relu(Var a);
Var sigmoid(Var a);
Var sum(Var a);
Var clamp(Var a, double lo, double hi);
Var detach(Var a);
Var concat_rows(Var top, Var bottom);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
Var broadcast_cols(Var column, Eigen::Index cols);

/// All (column of a, column of b) pairs stacked vertically; output column
/// s * b.cols() + k holds [a(:, s); b(:, k)].
Var pair_columns(Var a, Var b);

/// Sum of Bernoulli negative log likelihoods for logits (1 x n) and 0/1 labels.
Var bernoulli_nll(Var logits, std::span<const double> labels);

}  // namespace lens::nn
