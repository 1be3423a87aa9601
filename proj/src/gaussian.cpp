#include "lens/gaussian.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>
#include <vector>

#include "lens/error.hpp"

namespace lens {

namespace {

struct FusedColumn {
    Eigen::VectorXd mean;
    Eigen::VectorXd log_var;
    Eigen::VectorXd precision;  // unclamped total precision
};

// Shared by the plain and traced paths so both produce identical bits.
FusedColumn fuse_kernel(const Eigen::VectorXd& prior_mean, const Eigen::VectorXd& prior_log_var,
                        const Eigen::MatrixXd& means, const Eigen::MatrixXd& log_vars, double clamp) {
    const Eigen::Index d = prior_mean.size();
    const Eigen::Index k_count = means.cols();
    FusedColumn out{Eigen::VectorXd(d), Eigen::VectorXd(d), Eigen::VectorXd(d)};
    std::vector<std::pair<double, double>> terms(static_cast<std::size_t>(k_count + 1));
    for (Eigen::Index i = 0; i < d; ++i) {
        const double p0 = std::exp(-prior_log_var(i));
        terms[0] = {p0, p0 * prior_mean(i)};
        for (Eigen::Index k = 0; k < k_count; ++k) {
            const double pk = std::exp(-log_vars(i, k));
            terms[static_cast<std::size_t>(k + 1)] = {pk, pk * means(i, k)};
        }
        std::sort(terms.begin(), terms.end());
        double precision = 0.0;
        double weighted = 0.0;
        for (const auto& [p, pm] : terms) {
            precision += p;
            weighted += pm;
        }
        out.precision(i) = precision;
        out.mean(i) = weighted / precision;
        out.log_var(i) = std::clamp(-std::log(precision), -clamp, clamp);
    }
    return out;
}

void require_dim(const char* op, std::size_t a, std::size_t b) {
    if (a != b)
        throw ShapeError(std::string(op) + ": dimension mismatch " + std::to_string(a) + " vs " + std::to_string(b));
}

}  // namespace

DiagonalGaussian::DiagonalGaussian(Eigen::VectorXd mean, Eigen::VectorXd log_var, double log_var_clamp)
    : mean_(std::move(mean)), log_var_(std::move(log_var)) {
    if (mean_.size() != log_var_.size())
        throw ShapeError("Gaussian mean has " + std::to_string(mean_.size()) + " entries, log_var has " +
                         std::to_string(log_var_.size()));
    if (!mean_.allFinite() || !log_var_.allFinite()) throw NumericError("Gaussian parameters must be finite");
    log_var_ = log_var_.cwiseMax(-log_var_clamp).cwiseMin(log_var_clamp);
}

DiagonalGaussian DiagonalGaussian::standard(std::size_t dim) {
    if (dim == 0) throw ShapeError("standard normal needs dimension >= 1");
    const auto d = static_cast<Eigen::Index>(dim);
    return DiagonalGaussian(Eigen::VectorXd::Zero(d), Eigen::VectorXd::Zero(d));
}

DiagonalGaussian fuse(const DiagonalGaussian& prior, std::span<const DiagonalGaussian> likelihoods,
                      double log_var_clamp) {
    if (likelihoods.empty()) return prior;
    const auto d = static_cast<Eigen::Index>(prior.dim());
    Eigen::MatrixXd means(d, static_cast<Eigen::Index>(likelihoods.size()));
    Eigen::MatrixXd log_vars(d, static_cast<Eigen::Index>(likelihoods.size()));
    for (std::size_t k = 0; k < likelihoods.size(); ++k) {
        require_dim("fuse", prior.dim(), likelihoods[k].dim());
        means.col(static_cast<Eigen::Index>(k)) = likelihoods[k].mean();
        log_vars.col(static_cast<Eigen::Index>(k)) = likelihoods[k].log_var();
    }
    auto fused = fuse_kernel(prior.mean(), prior.log_var(), means, log_vars, log_var_clamp);
    return DiagonalGaussian(std::move(fused.mean), std::move(fused.log_var), log_var_clamp);
}

double kl_divergence(const DiagonalGaussian& q, const DiagonalGaussian& p) {
    require_dim("kl_divergence", q.dim(), p.dim());
    const auto diff = (q.mean() - p.mean()).array();
    const auto lq = q.log_var().array();
    const auto lp = p.log_var().array();
    return 0.5 * ((lq - lp).exp() + diff.square() * (-lp).exp() - 1.0 + lp - lq).sum();
}

Eigen::VectorXd sample(const DiagonalGaussian& g, const Eigen::VectorXd& noise) {
    require_dim("sample", g.dim(), static_cast<std::size_t>(noise.size()));
    return g.mean() + ((0.5 * g.log_var().array()).exp() * noise.array()).matrix();
}

DiagonalGaussian GaussianVar::value(std::size_t column, double log_var_clamp) const {
    const auto c = static_cast<Eigen::Index>(column);
    return DiagonalGaussian(mean.value().col(c), log_var.value().col(c), log_var_clamp);
}

GaussianVar split_gaussian(nn::Var stacked, double log_var_clamp) {
    if (stacked.rows() % 2 != 0) throw ShapeError("split_gaussian needs an even number of rows");
    const Eigen::Index d = stacked.rows() / 2;
    return GaussianVar{nn::slice_rows(stacked, 0, d),
                       nn::clamp(nn::slice_rows(stacked, d, d), -log_var_clamp, log_var_clamp)};
}

GaussianVar constant_gaussian(nn::Tape& tape, const DiagonalGaussian& g) {
    return GaussianVar{tape.constant(g.mean()), tape.constant(g.log_var())};
}

GaussianVar fuse(const GaussianVar& prior, const GaussianVar& likelihoods, double log_var_clamp) {
    auto& tape = prior.mean.tape();
    const Eigen::Index d = prior.mean.rows();
    if (prior.mean.cols() != 1 || prior.log_var.rows() != d || prior.log_var.cols() != 1)
        throw ShapeError("fuse: prior must be a d x 1 Gaussian");
    if (likelihoods.mean.rows() != d || likelihoods.log_var.rows() != d ||
        likelihoods.mean.cols() != likelihoods.log_var.cols())
        throw ShapeError("fuse: likelihood shape does not match prior dimension");

    auto fused = fuse_kernel(prior.mean.value().col(0), prior.log_var.value().col(0), likelihoods.mean.value(),
                             likelihoods.log_var.value(), log_var_clamp);
    const Eigen::VectorXd total_precision = fused.precision;
    nn::Var mean = tape.record(fused.mean, [prior, likelihoods, total_precision](const nn::Matrix& g,
                                                                                 const nn::Matrix& mu, nn::Tape& t,
                                                                                 nn::Gradients&) {
        // d mu / d mu_k = w_k,  d mu / d lv_k = -w_k (mu_k - mu),  w_k = p_k / P.
        const auto& lm = likelihoods.mean.value();
        const auto& ll = likelihoods.log_var.value();
        const Eigen::ArrayXd w0 = (-prior.log_var.value().col(0).array()).exp() / total_precision.array();
        t.accumulate(prior.mean, (g.array() * w0).matrix());
        t.accumulate(prior.log_var,
                     (-g.array() * w0 * (prior.mean.value().col(0).array() - mu.col(0).array())).matrix());
        const Eigen::ArrayXXd w = (-ll.array()).exp().colwise() / total_precision.array();
        const Eigen::ArrayXXd gm = w.colwise() * g.col(0).array();
        t.accumulate(likelihoods.mean, gm.matrix());
        t.accumulate(likelihoods.log_var, (-gm * (lm.array().colwise() - mu.col(0).array())).matrix());
    });
    nn::Var log_var = tape.record(fused.log_var, [prior, likelihoods, total_precision, log_var_clamp](
                                                     const nn::Matrix& g, const nn::Matrix&, nn::Tape& t,
                                                     nn::Gradients&) {
        // d lv / d lv_k = w_k inside the clamp range, zero outside.
        const Eigen::ArrayXd raw = -total_precision.array().log();
        const Eigen::ArrayXd live = ((raw >= -log_var_clamp) && (raw <= log_var_clamp)).cast<double>();
        const Eigen::ArrayXd gl = g.col(0).array() * live;
        const Eigen::ArrayXd w0 = (-prior.log_var.value().col(0).array()).exp() / total_precision.array();
        t.accumulate(prior.log_var, (gl * w0).matrix());
        const Eigen::ArrayXXd w =
            (-likelihoods.log_var.value().array()).exp().colwise() / total_precision.array();
        t.accumulate(likelihoods.log_var, (w.colwise() * gl).matrix());
    });
    return GaussianVar{mean, log_var};
}

nn::Var kl_divergence(const GaussianVar& q, const GaussianVar& p) {
    auto& tape = q.mean.tape();
    if (q.mean.cols() != 1 || p.mean.cols() != 1 || q.mean.rows() != p.mean.rows() ||
        q.log_var.rows() != q.mean.rows() || p.log_var.rows() != p.mean.rows())
        throw ShapeError("kl_divergence: q and p must be d x 1 Gaussians of equal dimension");
    const DiagonalGaussian qv(q.mean.value().col(0), q.log_var.value().col(0), 1e300);
    const DiagonalGaussian pv(p.mean.value().col(0), p.log_var.value().col(0), 1e300);
    nn::Matrix out(1, 1);
    out(0, 0) = kl_divergence(qv, pv);
    return tape.record(std::move(out), [q, p](const nn::Matrix& g, const nn::Matrix&, nn::Tape& t, nn::Gradients&) {
        const double s = g(0, 0);
        const Eigen::ArrayXd diff = q.mean.value().col(0).array() - p.mean.value().col(0).array();
        const Eigen::ArrayXd lq = q.log_var.value().col(0).array();
        const Eigen::ArrayXd lp = p.log_var.value().col(0).array();
        const Eigen::ArrayXd ratio = (lq - lp).exp();
        const Eigen::ArrayXd inv_p = (-lp).exp();
        t.accumulate(q.mean, (s * diff * inv_p).matrix());
        t.accumulate(p.mean, (-s * diff * inv_p).matrix());
        t.accumulate(q.log_var, (0.5 * s * (ratio - 1.0)).matrix());
        t.accumulate(p.log_var, (0.5 * s * (1.0 - ratio - diff.square() * inv_p)).matrix());
    });
}

nn::Var sample(const GaussianVar& g, const Eigen::MatrixXd& noise) {
    auto& tape = g.mean.tape();
    if (g.mean.cols() != 1 || noise.rows() != g.mean.rows())
        throw ShapeError("sample: noise must have one row per latent dimension");
    const Eigen::ArrayXd sd = (0.5 * g.log_var.value().col(0).array()).exp();
    nn::Matrix out = (noise.array().colwise() * sd).matrix();
    out.colwise() += g.mean.value().col(0);
    return tape.record(std::move(out), [g, noise](const nn::Matrix& grad, const nn::Matrix&, nn::Tape& t,
                                                  nn::Gradients&) {
        const Eigen::ArrayXd sd = (0.5 * g.log_var.value().col(0).array()).exp();
        t.accumulate(g.mean, grad.rowwise().sum());
        t.accumulate(g.log_var, ((grad.array() * noise.array()).rowwise().sum() * 0.5 * sd).matrix());
    });
}

}  // namespace lens
