#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace aufda {

/// Ordered sampling times in [0, domain_end]. Immutable after construction.
/// Default-constructed grids are empty placeholders.
class TimeGrid {
  public:
    TimeGrid() : domain_end_(0.0) {}
    TimeGrid(Eigen::VectorXd points, double domain_end);

    /// n equally spaced points covering [0, domain_end].
    static TimeGrid uniform(double domain_end, Eigen::Index n_points);

    const Eigen::VectorXd& points() const { return points_; }
    double domain_end() const { return domain_end_; }
    Eigen::Index size() const { return points_.size(); }

    bool same_points_as(const TimeGrid& other, double tol = 1e-12) const;

  private:
    Eigen::VectorXd points_;
    double domain_end_;
};

/// Trapezoidal quadrature weights for the grid points.
Eigen::VectorXd trapezoid_weights(const TimeGrid& grid);

/// One sampled trajectory on a grid. Values must be finite.
/// Default-constructed curves are empty placeholders.
class Curve {
  public:
    Curve() = default;
    Curve(TimeGrid grid, Eigen::VectorXd values);

    const TimeGrid& grid() const { return grid_; }
    const Eigen::VectorXd& values() const { return values_; }

  private:
    TimeGrid grid_;
    Eigen::VectorXd values_;
};

struct CurveMeta {
    std::string video_id;
    int group = 0;  // 0 = neutral, 1..G = emotion groups
    std::string group_label;
    std::string actor;
};

/// D trajectories sharing one grid; values is size x D (column per channel).
class MultiChannelCurve {
  public:
    MultiChannelCurve(TimeGrid grid, Eigen::MatrixXd values,
                      std::vector<std::string> channel_labels, CurveMeta meta = {});

    const TimeGrid& grid() const { return grid_; }
    const Eigen::MatrixXd& values() const { return values_; }
    const std::vector<std::string>& channel_labels() const { return labels_; }
    const CurveMeta& meta() const { return meta_; }
    Eigen::Index n_channels() const { return values_.cols(); }

    Curve channel(Eigen::Index d) const;
    Eigen::Index channel_index(const std::string& label) const;  // -1 if absent

  private:
    TimeGrid grid_;
    Eigen::MatrixXd values_;
    std::vector<std::string> labels_;
    CurveMeta meta_;
};

/// Clamped B-spline basis on [0, domain_end]. size() = order + #interior knots.
class BSplineBasis {
  public:
    BSplineBasis(double domain_end, Eigen::VectorXd interior_knots, int order);

    int order() const { return order_; }
    Eigen::Index size() const { return knots_.size() - order_; }
    double domain_end() const { return domain_end_; }
    /// Full clamped knot vector (order copies of 0, interior, order copies of T).
    const Eigen::VectorXd& knots() const { return knots_; }
    Eigen::VectorXd interior_knots() const;

    bool same_as(const BSplineBasis& other, double tol = 1e-12) const;

  private:
    double domain_end_;
    int order_;
    Eigen::VectorXd knots_;
};

/// Basis with n_basis functions and equally spaced interior knots.
BSplineBasis make_bspline_basis(double domain_end, Eigen::Index n_basis, int order = 4);

/// All basis values at t (Cox-de Boor). Entries >= 0 and sum to 1.
Eigen::VectorXd eval_basis(const BSplineBasis& basis, double t);

/// All d-th derivative values at t (d = 0 gives eval_basis).
Eigen::VectorXd eval_basis_derivative(const BSplineBasis& basis, double t, int deriv);

/// size x n_basis matrix of basis (or derivative) values at grid points.
Eigen::MatrixXd basis_matrix(const BSplineBasis& basis, const Eigen::VectorXd& points,
                             int deriv = 0);

/// Gram matrix of second derivatives: Omega_ij = integral of B_i'' B_j''.
/// Exact (Gauss-Legendre per knot span).
Eigen::MatrixXd curvature_penalty_matrix(const BSplineBasis& basis);

/// Smooth function represented by basis coefficients.
class BasisExpansion {
  public:
    BasisExpansion(BSplineBasis basis, Eigen::VectorXd coefficients);

    const BSplineBasis& basis() const { return basis_; }
    const Eigen::VectorXd& coefficients() const { return coefficients_; }

    double operator()(double t) const;
    double derivative(double t, int deriv = 1) const;

  private:
    BSplineBasis basis_;
    Eigen::VectorXd coefficients_;
};

/// Penalized least squares fit: minimizes sum (raw_i - fit(t_i))^2
/// + lambda * integral fit''^2. Throws on a rank-deficient system.
BasisExpansion smooth_curve(const Curve& raw, const BSplineBasis& basis, double lambda);

/// Interpolating expansion (n_basis = #points, averaging knots, lambda = 0).
BasisExpansion interpolate_curve(const Curve& raw, int order = 4);

Curve eval_expansion(const BasisExpansion& fd, const TimeGrid& grid);

/// Trapezoidal integral of a*b over the common grid. Grids must coincide.
double l2_inner_product(const Curve& a, const Curve& b);

/// Same integral for expansions, exact (Gauss-Legendre on merged knot spans).
double l2_inner_product(const BasisExpansion& a, const BasisExpansion& b);

}  // namespace aufda
