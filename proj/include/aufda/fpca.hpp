#pragma once

#include <utility>
#include <vector>

#include "aufda/fdcore.hpp"

namespace aufda {

/// Covariance kernel C(t_p, t_q) on a grid, stored point-major: entry
/// (p*D+i, q*D+j) is Cov(Y_i(t_p), Y_j(t_q)).
class CovarianceKernel {
  public:
    CovarianceKernel(TimeGrid grid, Eigen::Index n_channels, Eigen::MatrixXd values);

    const TimeGrid& grid() const { return grid_; }
    Eigen::Index n_channels() const { return n_channels_; }
    const Eigen::MatrixXd& values() const { return values_; }

    /// The D x D block C(t_p, t_q).
    Eigen::MatrixXd block(Eigen::Index p, Eigen::Index q) const;

  private:
    TimeGrid grid_;
    Eigen::Index n_channels_;
    Eigen::MatrixXd values_;
};

/// Mean, eigenvalues and orthonormal eigenfunctions of the sample covariance
/// operator. Eigenfunctions are stored on the grid (size x D each) and are
/// orthonormal in the trapezoidal L2 inner product summed over channels.
struct FpcaModel {
    TimeGrid grid;
    std::vector<std::string> channel_labels;
    std::vector<BasisExpansion> mean;  // per channel, interpolating the pointwise mean
    Eigen::MatrixXd mean_values;       // size x D
    Eigen::VectorXd eigenvalues;       // non-increasing, >= 0
    std::vector<Eigen::MatrixXd> eigenfunctions;
    Eigen::Index n_components = 0;
};

/// Principal component scores; row i holds curve i's projections.
struct ScoreMatrix {
    Eigen::MatrixXd scores;  // n x J
};

/// Channelwise pointwise average smoothed into the basis.
std::vector<BasisExpansion> mean_function(const std::vector<MultiChannelCurve>& sample,
                                          const BSplineBasis& basis);

/// Unbiased sample covariance of mean-centered evaluations at all grid pairs.
CovarianceKernel covariance_kernel(const std::vector<MultiChannelCurve>& sample,
                                   const std::vector<BasisExpansion>& mean,
                                   const TimeGrid& grid);

/// Discretized eigenproblem: eigendecompose W^{1/2} C W^{1/2} (W the
/// quadrature weights), map eigenvectors back by W^{-1/2}. Scores by
/// quadrature of the centered sample against each eigenfunction.
std::pair<FpcaModel, ScoreMatrix> fpca(const std::vector<MultiChannelCurve>& sample,
                                       Eigen::Index n_components, const TimeGrid& grid);

/// Projection scores of one curve onto the model's eigenfunctions.
Eigen::VectorXd pc_scores(const MultiChannelCurve& curve, const FpcaModel& model);

/// Karhunen-Loeve reconstruction: mean + sum_j scores_j * f_j.
MultiChannelCurve kl_reconstruct(const FpcaModel& model, const Eigen::VectorXd& scores);

/// Smallest J whose eigenvalues explain at least `fraction` of the total.
Eigen::Index choose_n_components(const Eigen::VectorXd& eigenvalues, double fraction = 0.95);

}  // namespace aufda
