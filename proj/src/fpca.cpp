#include "aufda/fpca.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <stdexcept>

namespace aufda {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

// Eigenvalues of the discretized covariance below this are treated as
// rounding debris of an exact zero; anything more negative is a bug.
constexpr double kEigTol = 1e-8;

void check_common_layout(const std::vector<MultiChannelCurve>& sample, const TimeGrid& grid) {
    require(!sample.empty(), "sample must be non-empty");
    for (const auto& curve : sample) {
        require(curve.grid().same_points_as(grid), "sample curves must share the given grid");
        require(curve.channel_labels() == sample.front().channel_labels(),
                "sample curves must share channel labels");
    }
}

// Centered evaluations flattened point-major: row i of the result is curve i
// with entry p*D+d holding (Y_i,d(t_p) - mean_d(t_p)).
Eigen::MatrixXd centered_rows(const std::vector<MultiChannelCurve>& sample,
                              const Eigen::MatrixXd& mean_values) {
    const Eigen::Index n = static_cast<Eigen::Index>(sample.size());
    const Eigen::Index P = mean_values.rows(), D = mean_values.cols();
    Eigen::MatrixXd X(n, P * D);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::MatrixXd centered = sample[static_cast<size_t>(i)].values() - mean_values;
        for (Eigen::Index p = 0; p < P; ++p)
            X.row(i).segment(p * D, D) = centered.row(p);
    }
    return X;
}

Eigen::MatrixXd pointwise_mean(const std::vector<MultiChannelCurve>& sample) {
    Eigen::MatrixXd m = sample.front().values();
    for (size_t i = 1; i < sample.size(); ++i) m += sample[i].values();
    return m / static_cast<double>(sample.size());
}

}  // namespace

CovarianceKernel::CovarianceKernel(TimeGrid grid, Eigen::Index n_channels, Eigen::MatrixXd values)
    : grid_(std::move(grid)), n_channels_(n_channels), values_(std::move(values)) {
    require(n_channels_ >= 1, "covariance kernel needs at least one channel");
    const Eigen::Index m = grid_.size() * n_channels_;
    require(values_.rows() == m && values_.cols() == m,
            "covariance matrix must be (size*D) x (size*D)");
    const double scale = std::max(1.0, values_.cwiseAbs().maxCoeff());
    require((values_ - values_.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * scale,
            "covariance matrix must be symmetric");
    for (Eigen::Index p = 0; p < grid_.size(); ++p) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(block(p, p), Eigen::EigenvaluesOnly);
        require(es.eigenvalues().minCoeff() >= -kEigTol * scale,
                "covariance kernel has an indefinite diagonal block");
    }
}

Eigen::MatrixXd CovarianceKernel::block(Eigen::Index p, Eigen::Index q) const {
    require(p >= 0 && p < grid_.size() && q >= 0 && q < grid_.size(),
            "covariance block index out of range");
    return values_.block(p * n_channels_, q * n_channels_, n_channels_, n_channels_);
}

std::vector<BasisExpansion> mean_function(const std::vector<MultiChannelCurve>& sample,
                                          const BSplineBasis& basis) {
    require(!sample.empty(), "sample must be non-empty");
    check_common_layout(sample, sample.front().grid());
    const TimeGrid& grid = sample.front().grid();
    const Eigen::MatrixXd mean = pointwise_mean(sample);
    std::vector<BasisExpansion> out;
    out.reserve(static_cast<size_t>(mean.cols()));
    for (Eigen::Index d = 0; d < mean.cols(); ++d)
        out.push_back(smooth_curve(Curve(grid, mean.col(d)), basis, 0.0));
    return out;
}

CovarianceKernel covariance_kernel(const std::vector<MultiChannelCurve>& sample,
                                   const std::vector<BasisExpansion>& mean,
                                   const TimeGrid& grid) {
    require(sample.size() >= 2, "covariance needs at least two curves");
    check_common_layout(sample, grid);
    const Eigen::Index D = sample.front().n_channels();
    require(static_cast<Eigen::Index>(mean.size()) == D,
            "mean must provide one expansion per channel");
    Eigen::MatrixXd mean_values(grid.size(), D);
    for (Eigen::Index d = 0; d < D; ++d)
        mean_values.col(d) = eval_expansion(mean[static_cast<size_t>(d)], grid).values();
    const Eigen::MatrixXd X = centered_rows(sample, mean_values);
    Eigen::MatrixXd cov = X.transpose() * X / static_cast<double>(sample.size() - 1);
    cov = ((cov + cov.transpose()) / 2.0).eval();  // kill rounding asymmetry
    return CovarianceKernel(grid, D, std::move(cov));
}

std::pair<FpcaModel, ScoreMatrix> fpca(const std::vector<MultiChannelCurve>& sample,
                                       Eigen::Index n_components, const TimeGrid& grid) {
    require(sample.size() >= 2, "fpca needs at least two curves");
    check_common_layout(sample, grid);
    const Eigen::Index n = static_cast<Eigen::Index>(sample.size());
    const Eigen::Index P = grid.size();
    const Eigen::Index D = sample.front().n_channels();
    const Eigen::Index max_j = std::min(n - 1, P * D);
    require(n_components >= 1 && n_components <= max_j,
            "n_components must be in [1, min(n-1, size*D)]");

    const Eigen::MatrixXd mean_values = pointwise_mean(sample);
    const Eigen::MatrixXd X = centered_rows(sample, mean_values);
    Eigen::MatrixXd cov = X.transpose() * X / static_cast<double>(n - 1);
    cov = ((cov + cov.transpose()) / 2.0).eval();

    // Quadrature weights replicated across channels, point-major.
    const Eigen::VectorXd w = trapezoid_weights(grid);
    Eigen::VectorXd omega(P * D);
    for (Eigen::Index p = 0; p < P; ++p) omega.segment(p * D, D).setConstant(w[p]);
    const Eigen::VectorXd sqrt_omega = omega.cwiseSqrt();

    // Symmetrize the weighted operator so a self-adjoint solver applies.
    const Eigen::MatrixXd K =
        sqrt_omega.asDiagonal() * cov * sqrt_omega.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("fpca: eigendecomposition failed to converge");

    const double scale = std::max(1.0, K.cwiseAbs().maxCoeff());
    if (es.eigenvalues().minCoeff() < -kEigTol * scale)
        throw std::runtime_error("fpca: covariance operator has a significantly negative "
                                 "eigenvalue; input is inconsistent");

    FpcaModel model;
    model.grid = grid;
    model.channel_labels = sample.front().channel_labels();
    model.mean_values = mean_values;
    for (Eigen::Index d = 0; d < D; ++d)
        model.mean.push_back(interpolate_curve(Curve(grid, mean_values.col(d))));
    model.n_components = n_components;
    model.eigenvalues.resize(n_components);
    model.eigenfunctions.reserve(static_cast<size_t>(n_components));

    ScoreMatrix scores;
    scores.scores.resize(n, n_components);
    for (Eigen::Index j = 0; j < n_components; ++j) {
        const Eigen::Index idx = P * D - 1 - j;  // solver sorts ascending
        model.eigenvalues[j] = std::max(es.eigenvalues()[idx], 0.0);
        Eigen::VectorXd f = es.eigenvectors().col(idx).cwiseQuotient(sqrt_omega);
        // Sign convention: the largest-magnitude value is positive.
        Eigen::Index arg_max = 0;
        f.cwiseAbs().maxCoeff(&arg_max);
        if (f[arg_max] < 0.0) f = -f;
        scores.scores.col(j) = X * omega.cwiseProduct(f);
        Eigen::MatrixXd fn(P, D);
        for (Eigen::Index p = 0; p < P; ++p) fn.row(p) = f.segment(p * D, D);
        model.eigenfunctions.push_back(std::move(fn));
    }
    return {std::move(model), std::move(scores)};
}

Eigen::VectorXd pc_scores(const MultiChannelCurve& curve, const FpcaModel& model) {
    require(curve.grid().same_points_as(model.grid), "curve must live on the model grid");
    require(curve.channel_labels() == model.channel_labels, "curve channels must match the model");
    const Eigen::MatrixXd centered = curve.values() - model.mean_values;
    const Eigen::VectorXd w = trapezoid_weights(model.grid);
    Eigen::VectorXd out(model.n_components);
    for (Eigen::Index j = 0; j < model.n_components; ++j) {
        const Eigen::MatrixXd& f = model.eigenfunctions[static_cast<size_t>(j)];
        out[j] = (centered.cwiseProduct(f).rowwise().sum().array() * w.array()).sum();
    }
    return out;
}

MultiChannelCurve kl_reconstruct(const FpcaModel& model, const Eigen::VectorXd& scores) {
    require(scores.size() <= model.n_components,
            "more scores than the model has components");
    Eigen::MatrixXd values = model.mean_values;
    for (Eigen::Index j = 0; j < scores.size(); ++j)
        values += scores[j] * model.eigenfunctions[static_cast<size_t>(j)];
    return MultiChannelCurve(model.grid, std::move(values), model.channel_labels);
}

Eigen::Index choose_n_components(const Eigen::VectorXd& eigenvalues, double fraction) {
    require(eigenvalues.size() >= 1, "need at least one eigenvalue");
    require(fraction > 0.0 && fraction <= 1.0, "fraction must be in (0, 1]");
    const double total = eigenvalues.sum();
    if (total <= 0.0) return 1;
    double acc = 0.0;
    for (Eigen::Index j = 0; j < eigenvalues.size(); ++j) {
        acc += eigenvalues[j];
        if (acc >= fraction * total) return j + 1;
    }
    return eigenvalues.size();
}

}  // namespace aufda
