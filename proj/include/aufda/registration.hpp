#pragma once

#include <string>
#include <vector>

#include "aufda/fdcore.hpp"
#include "aufda/fpca.hpp"

namespace aufda {

/// Monotone reparameterization h of [0,1] with h(0)=0 and h(1)=1. The spline
/// coefficients of h are cumulative sums of softmax-normalized increments of
/// the stored coefficient vector, so monotonicity and the endpoint pins hold
/// by construction for any finite coefficients.
class Warp {
  public:
    /// `coefficients` has basis.size()-1 entries; increment i of the spline
    /// coefficient vector is exp(coefficients[i]) / sum_j exp(coefficients[j]).
    Warp(BSplineBasis basis, Eigen::VectorXd coefficients);

    /// Exact identity map (Greville abscissae as spline coefficients).
    static Warp identity(Eigen::Index n_basis = 8, int order = 4);

    /// Least-squares fit of samples h(t_j) = y_j into the warp family:
    /// endpoint coefficients pinned at 0 and 1, interior solved, increments
    /// floored at a tiny positive value before taking logs.
    static Warp fit(const BSplineBasis& basis, const Eigen::VectorXd& t,
                    const Eigen::VectorXd& y);

    double operator()(double t) const { return expansion_(t); }
    double derivative(double t) const { return expansion_.derivative(t, 1); }

    const BSplineBasis& basis() const { return expansion_.basis(); }
    const Eigen::VectorXd& coefficients() const { return coefficients_; }
    /// Cumulative increments: the coefficients of h in its B-spline basis.
    const Eigen::VectorXd& spline_coefficients() const { return expansion_.coefficients(); }
    const BasisExpansion& expansion() const { return expansion_; }

  private:
    Eigen::VectorXd coefficients_;
    BasisExpansion expansion_;
};

/// Pointwise mean of a warp set, exact in the shared basis.
Warp mean_warp(const std::vector<Warp>& warps);

/// outer(inner(t)) refitted into outer's basis from dense samples.
Warp compose_warps(const Warp& outer, const Warp& inner);

/// Functional inverse: bisection per grid point, then a refit whose basis is
/// enlarged until the round-trip error max_t |inv(warp(t)) - t| on a 200-point
/// grid drops below `tolerance`.
Warp invert_warp(const Warp& warp, double tolerance);

/// Curve resampled through the warp: output at t is the input's cubic
/// interpolant evaluated at warp(t), on the input grid.
Curve apply_warp(const Curve& curve, const Warp& warp);
MultiChannelCurve apply_warp(const MultiChannelCurve& curve, const Warp& warp);

struct RegistrationConfig {
    // FPCA components of the template. Rank 1 on purpose: a higher-rank
    // template absorbs phase variation into its own components and the
    // optimizer then sees little misfit to remove by warping.
    Eigen::Index n_components = 1;
    int max_iter = 100;
    double tol = 1e-6;               // relative objective decrease for convergence
    Eigen::Index warp_basis_size = 8;
    double kappa_scale = 1e-2;       // identity penalty relative to mean squared range
};

struct RegistrationResult {
    std::vector<MultiChannelCurve> registered;
    std::vector<Warp> warps;        // one per curve; registered_i = input_i(warps[i](t))
    FpcaModel template_model;       // FPCA template at the final iteration
    std::vector<double> objective_trace;
    int n_iterations = 0;
    bool converged = false;
};

/// Iterative template registration of a single-channel sample: alternate an
/// FPCA template of the currently warped curves with per-curve warp fits
/// minimizing ||curve(h(t)) - reconstruction||^2 + kappa ||h - id||^2, keeping
/// the warp set mean-centered.
RegistrationResult register_sample(const std::vector<Curve>& curves,
                                   const RegistrationConfig& config = {});

/// Register the reference channel only; carry each video's warp to all of its
/// channels.
RegistrationResult register_by_reference(const std::vector<MultiChannelCurve>& sample,
                                         const std::string& reference_channel,
                                         const RegistrationConfig& config = {});

}  // namespace aufda
