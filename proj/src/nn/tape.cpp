#include "lens/nn/tape.hpp"

#include <cmath>
#include <sstream>

#include "lens/error.hpp"

namespace lens::nn {

namespace {

std::string shape_str(const Matrix& m) {
    std::ostringstream os;
    os << m.rows() << "x" << m.cols();
    return os.str();
}

void require_same_shape(const char* op, Var a, Var b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.value()) + " vs " +
                         shape_str(b.value()));
}

}  // namespace

ParamId ParameterStore::add(std::string name, Matrix value) {
    if (find(name)) throw InputError("duplicate parameter name: " + name);
    names_.push_back(std::move(name));
    values_.push_back(std::move(value));
    return ParamId{values_.size() - 1};
}

std::size_t ParameterStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
    return n;
}

std::optional<ParamId> ParameterStore::find(std::string_view name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
        if (names_[i] == name) return ParamId{i};
    return std::nullopt;
}

bool ParameterStore::operator==(const ParameterStore& other) const {
    if (names_ != other.names_) return false;
    for (std::size_t i = 0; i < values_.size(); ++i) {
        const auto& a = values_[i];
        const auto& b = other.values_[i];
        if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
        if (a != b) return false;
    }
    return true;
}

Gradients::Gradients(const ParameterStore& params) {
    grads_.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& v = params.value(ParamId{i});
        grads_.push_back(Matrix::Zero(v.rows(), v.cols()));
    }
}

Gradients& Gradients::operator+=(const Gradients& other) {
    if (other.grads_.size() != grads_.size()) throw ShapeError("gradient sets differ in size");
    for (std::size_t i = 0; i < grads_.size(); ++i) grads_[i] += other.grads_[i];
    return *this;
}

Gradients& Gradients::operator*=(double factor) {
    for (auto& g : grads_) g *= factor;
    return *this;
}

void Gradients::set_zero() {
    for (auto& g : grads_) g.setZero();
}

Var Tape::constant(Matrix value) {
    nodes_.push_back(Node{std::move(value), {}, {}, false, false});
    return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, BackwardFn backward) {
    if (!trace_) return constant(std::move(value));
    nodes_.push_back(Node{std::move(value), {}, std::move(backward), true, false});
    return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(Var v, const Matrix& grad) {
    auto& node = nodes_[v.id()];
    if (!node.requires_grad) return;
    if (grad.rows() != node.value.rows() || grad.cols() != node.value.cols())
        throw ShapeError("gradient shape " + shape_str(grad) + " does not match value " +
                         shape_str(node.value));
    if (node.has_grad) {
        node.grad += grad;
    } else {
        node.grad = grad;
        node.has_grad = true;
    }
}

Gradients Tape::backward(Var loss) {
    if (!trace_) throw Error("backward called on a tape recorded without tracing");
    if (loss.rows() != 1 || loss.cols() != 1)
        throw ShapeError("backward requires a scalar loss, got " + shape_str(loss.value()));
    Gradients grads(*params_);
    accumulate(loss, Matrix::Ones(1, 1));
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
        auto& node = nodes_[i];
        if (!node.has_grad || !node.backward) continue;
        node.backward(node.grad, node.value, *this, grads);
        node.grad.resize(0, 0);
        node.has_grad = false;
    }
    return grads;
}

Var parameter(Tape& tape, ParamId id) {
    return tape.record(tape.params().value(id),
                       [id](const Matrix& g, const Matrix&, Tape&, Gradients& grads) { grads[id] += g; });
}

Var add(Var a, Var b) {
    require_same_shape("add", a, b);
    return a.tape().record(a.value() + b.value(), [a, b](const Matrix& g, const Matrix&, Tape& t, Gradients&) {
        t.accumulate(a, g);
        t.accumulate(b, g);
    });
}

Var sub(Var a, Var b) {
    require_same_shape("sub", a, b);
    return a.tape().record(a.value() - b.value(), [a, b](const Matrix& g, const Matrix&, Tape& t, Gradients&) {
        t.accumulate(a, g);
        t.accumulate(b, -g);
    });
}

Var mul(Var a, Var b) {
    require_same_shape("mul", a, b);
    return a.tape().record(a.value().cwiseProduct(b.value()),
                           [a, b](const Matrix& g, const Matrix&, Tape& t, Gradients&) {
                               t.accumulate(a, g.cwiseProduct(b.value()));
                               t.accumulate(b, g.cwiseProduct(a.value()));
                           });
}

Var scale(Var a, double factor) {
    return a.tape().record(a.value() * factor, [a, factor](const Matrix& g, const Matrix&, Tape& t, Gradients&) {
        t.accumulate(a, g * factor);
    });
}

Var exp(Var a) {
    return a.tape().record(a.value().array().exp().matrix(),
                           [a](const Matrix& g, const Matrix& out, Tape& t, Gradients&) {
                               t.accumulate(a, g.cwiseProduct(out));
                           });
}

Var tanh(Var a) {
    return a.tape().record(a.value().array().tanh().matrix(),
                           [a](const Matrix& g, const Matrix& out, Tape& t, Gradients&) {
                               t.accumulate(a, (g.array() * (1.0 - out.array().square())).matrix());
                           });
}

Var relu(Var a) {
    return a.tape().record(a.value().cwiseMax(0.0), [a](const Matrix& g, const Matrix& out, Tape& t, Gradients&) {
        t.accumulate(a, (out.array() > 0.0).select(g, 0.0).matrix());
    });
}

Var sigmoid(Var a) {
    Matrix out = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
    return a.tape().record(std::move(out), [a](const Matrix& g, const Matrix& out, Tape& t, Gradients&) {
        t.accumulate(a, (g.array() * out.array() * (1.0 - out.array())).matrix());
    });
}

Var sum(Var a) {
    Matrix out(1, 1);
    out(0, 0) = a.value().sum();
    return a.tape().record(std::move(out), [a](const Matrix& g, const Matrix&, Tape& t, Gradients&) {
        t.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
    });
}

Var clamp(Var a, double lo, double hi) {
    return a.tape().record(a.value().cwiseMax(lo).cwiseMin(hi),
                           [a, lo, hi](const Matrix& g, const Matrix&, Tape& t, Gradients&) {
                               const auto& x = a.value().array();
                               t.accumulate(a, ((x >= lo) && (x <= hi)).select(g, 0.0).matrix());
                           });
}

Var detach(Var a) { return a.tape().constant(a.value()); }

Var concat_rows(Var top, Var bottom) {
    if (top.cols() != bottom.cols())
        throw ShapeError("concat_rows: column mismatch " + shape_str(top.value()) + " vs " +
                         shape_str(bottom.value()));
    Matrix out(top.rows() + bottom.rows(), top.cols());
    out.topRows(top.rows()) = top.value();
    out.bottomRows(bottom.rows()) = bottom.value();
    return top.tape().record(std::move(out), [top, bottom](const Matrix& g, const Matrix&, Tape& t, Gradients&) {
        t.accumulate(top, g.topRows(top.rows()));
        t.accumulate(bottom, g.bottomRows(bottom.rows()));
    });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
    if (start < 0 || count < 0 || start + count > a.rows())
        throw ShapeError("slice_rows: range out of bounds for " + shape_str(a.value()));
    return a.tape().record(a.value().middleRows(start, count),
                           [a, start, count](const Matrix& g, const Matrix&, Tape& t, Gradients&) {
                               Matrix full = Matrix::Zero(a.rows(), a.cols());
                               full.middleRows(start, count) = g;
                               t.accumulate(a, full);
                           });
}

Var broadcast_cols(Var column, Eigen::Index cols) {
    if (column.cols() != 1) throw ShapeError("broadcast_cols: expected a column, got " + shape_str(column.value()));
    return column.tape().record(column.value().replicate(1, cols),
                                [column](const Matrix& g, const Matrix&, Tape& t, Gradients&) {
                                    t.accumulate(column, g.rowwise().sum());
                                });
}

Var pair_columns(Var a, Var b) {
    const Eigen::Index s_count = a.cols();
    const Eigen::Index k_count = b.cols();
    const Eigen::Index ra = a.rows();
    Matrix out(ra + b.rows(), s_count * k_count);
    for (Eigen::Index s = 0; s < s_count; ++s) {
        for (Eigen::Index k = 0; k < k_count; ++k) {
            out.col(s * k_count + k).head(ra) = a.value().col(s);
            out.col(s * k_count + k).tail(b.rows()) = b.value().col(k);
        }
    }
    return a.tape().record(std::move(out), [a, b, s_count, k_count, ra](const Matrix& g, const Matrix&, Tape& t,
                                                                         Gradients&) {
        Matrix ga = Matrix::Zero(a.rows(), s_count);
        Matrix gb = Matrix::Zero(b.rows(), k_count);
        for (Eigen::Index s = 0; s < s_count; ++s) {
            for (Eigen::Index k = 0; k < k_count; ++k) {
                ga.col(s) += g.col(s * k_count + k).head(ra);
                gb.col(k) += g.col(s * k_count + k).tail(b.rows());
            }
        }
        t.accumulate(a, ga);
        t.accumulate(b, gb);
    });
}

Var bernoulli_nll(Var logits, std::span<const double> labels) {
    if (logits.rows() != 1 || logits.cols() != static_cast<Eigen::Index>(labels.size()))
        throw ShapeError("bernoulli_nll: logits " + shape_str(logits.value()) + " vs " +
                         std::to_string(labels.size()) + " labels");
    Eigen::RowVectorXd y = Eigen::Map<const Eigen::RowVectorXd>(labels.data(), static_cast<Eigen::Index>(labels.size()));
    const auto& z = logits.value();
    // softplus(z) - y z, computed stably.
    double total = 0.0;
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
        const double zj = z(0, j);
        const double softplus = zj > 0 ? zj + std::log1p(std::exp(-zj)) : std::log1p(std::exp(zj));
        total += softplus - y(j) * zj;
    }
    Matrix out(1, 1);
    out(0, 0) = total;
    return logits.tape().record(std::move(out), [logits, y](const Matrix& g, const Matrix&, Tape& t, Gradients&) {
        const auto& z = logits.value();
        Matrix dz(1, z.cols());
        for (Eigen::Index j = 0; j < z.cols(); ++j) dz(0, j) = g(0, 0) * (1.0 / (1.0 + std::exp(-z(0, j))) - y(j));
        t.accumulate(logits, dz);
    });
}

}  // namespace lens::nn
