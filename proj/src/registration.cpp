#include "aufda/registration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "aufda/parallel.hpp"

namespace aufda {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

constexpr double kIncrementFloor = 1e-12;

Eigen::VectorXd softmax_increments(const Eigen::VectorXd& theta) {
    const Eigen::VectorXd e = (theta.array() - theta.maxCoeff()).exp();
    return e / e.sum();
}

// Spline coefficients from pre-softmax increments: a_0 = 0, then cumulative
// sums, ending at 1 up to rounding.
Eigen::VectorXd cumulative_coefficients(const Eigen::VectorXd& theta) {
    const Eigen::VectorXd inc = softmax_increments(theta);
    Eigen::VectorXd a(inc.size() + 1);
    a[0] = 0.0;
    for (Eigen::Index i = 0; i < inc.size(); ++i) a[i + 1] = a[i] + inc[i];
    return a;
}

BasisExpansion make_warp_expansion(BSplineBasis basis, const Eigen::VectorXd& theta) {
    require(std::abs(basis.knots()[basis.knots().size() - 1] - 1.0) < 1e-12,
            "warp basis must span [0,1]");
    require(theta.size() == basis.size() - 1, "warp needs basis.size()-1 coefficients");
    require(theta.allFinite(), "warp coefficients must be finite");
    return BasisExpansion(std::move(basis), cumulative_coefficients(theta));
}

Eigen::VectorXd greville_abscissae(const BSplineBasis& basis) {
    const Eigen::VectorXd& knots = basis.knots();
    const int k = basis.order();
    Eigen::VectorXd xi(basis.size());
    for (Eigen::Index i = 0; i < basis.size(); ++i)
        xi[i] = knots.segment(i + 1, k - 1).mean();
    return xi;
}

Eigen::VectorXd uniform_points(Eigen::Index m) {
    return Eigen::VectorXd::LinSpaced(m, 0.0, 1.0);
}

double roundtrip_error(const Warp& forward, const Warp& inverse) {
    const Eigen::VectorXd t = uniform_points(200);
    double worst = 0.0;
    for (Eigen::Index j = 0; j < t.size(); ++j)
        worst = std::max(worst, std::abs(inverse(forward(t[j])) - t[j]));
    return worst;
}

// Monotone root of warp(x) = y by bisection; endpoints are exact.
double invert_point(const Warp& warp, double y) {
    if (y <= 0.0) return 0.0;
    if (y >= 1.0) return 1.0;
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        (warp(mid) < y ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

Warp invert_into_basis(const Warp& warp, Eigen::Index n_basis) {
    // Knots graded as images of uniform interior sites, so regions the warp
    // compresses get proportionally finer inverse resolution.
    const int order = warp.basis().order();
    const Eigen::Index n_interior = n_basis - order;
    Eigen::VectorXd interior(n_interior);
    for (Eigen::Index j = 0; j < n_interior; ++j)
        interior[j] = warp(static_cast<double>(j + 1) / static_cast<double>(n_interior + 1));
    const BSplineBasis inv_basis(1.0, interior, order);

    // Sample sites: a uniform sweep for global coverage plus the Greville
    // abscissae of the graded basis and their midpoints, so every basis
    // function sees samples even inside heavily compressed spans (uniform
    // sites alone can miss narrow spans entirely, leaving the fit singular).
    const Eigen::Index m = std::max<Eigen::Index>(201, 4 * n_basis);
    const Eigen::VectorXd u = uniform_points(m);
    const Eigen::VectorXd xi = greville_abscissae(inv_basis);
    std::vector<double> sites(u.data(), u.data() + u.size());
    for (Eigen::Index j = 0; j < xi.size(); ++j) {
        sites.push_back(xi[j]);
        if (j + 1 < xi.size()) sites.push_back(0.5 * (xi[j] + xi[j + 1]));
    }
    std::sort(sites.begin(), sites.end());
    sites.erase(std::unique(sites.begin(), sites.end()), sites.end());

    Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(sites.data(),
                                                          static_cast<Eigen::Index>(sites.size()));
    Eigen::VectorXd x(y.size());
    for (Eigen::Index j = 0; j < y.size(); ++j) x[j] = invert_point(warp, y[j]);
    return Warp::fit(inv_basis, y, x);
}

struct CoreResult {
    std::vector<Warp> warps;
    FpcaModel template_model;
    std::vector<double> objective_trace;
    int n_iterations = 0;
    bool converged = false;
};

// Penalized misfit of one curve under warp parameters theta against a fixed
// reconstruction, in the trapezoidal norm of the grid.
double warp_objective(const Eigen::VectorXd& theta, const BSplineBasis& warp_basis,
                      const BasisExpansion& interpolant, const Eigen::VectorXd& grid_points,
                      const Eigen::VectorXd& weights, const Eigen::VectorXd& recon,
                      double kappa) {
    const BasisExpansion h(warp_basis, cumulative_coefficients(theta));
    double fit = 0.0, pen = 0.0;
    for (Eigen::Index p = 0; p < grid_points.size(); ++p) {
        const double ht = std::clamp(h(grid_points[p]), 0.0, 1.0);
        const double rfit = interpolant(ht) - recon[p];
        const double rpen = ht - grid_points[p];
        fit += weights[p] * rfit * rfit;
        pen += weights[p] * rpen * rpen;
    }
    return fit + kappa * pen;
}

// Golden-section scan of one coordinate; returns the best value found and
// updates `best` when it strictly improves.
template <typename F>
void golden_section_coordinate(Eigen::VectorXd& theta, Eigen::Index coord, double halfwidth,
                               double& best, F&& eval) {
    constexpr double kInvPhi = 0.6180339887498949;
    double a = theta[coord] - halfwidth, b = theta[coord] + halfwidth;
    double x1 = b - kInvPhi * (b - a), x2 = a + kInvPhi * (b - a);
    double f1 = eval(x1), f2 = eval(x2);
    for (int it = 0; it < 36; ++it) {
        if (f1 < f2) {
            b = x2; x2 = x1; f2 = f1;
            x1 = b - kInvPhi * (b - a);
            f1 = eval(x1);
        } else {
            a = x1; x1 = x2; f1 = f2;
            x2 = a + kInvPhi * (b - a);
            f2 = eval(x2);
        }
    }
    const double x = f1 < f2 ? x1 : x2;
    const double f = std::min(f1, f2);
    if (f < best) {
        best = f;
        theta[coord] = x;
    }
}

CoreResult register_core(const std::vector<Curve>& curves, const RegistrationConfig& cfg) {
    require(curves.size() >= 3, "registration needs at least three curves");
    require(cfg.n_components >= 1, "n_components must be positive");
    require(cfg.max_iter >= 1, "max_iter must be positive");
    require(cfg.tol > 0.0, "tol must be positive");
    require(cfg.warp_basis_size >= 5, "warp_basis_size must be at least 5");
    require(cfg.kappa_scale > 0.0, "kappa_scale must be positive");
    const TimeGrid& grid = curves.front().grid();
    require(std::abs(grid.domain_end() - 1.0) < 1e-12, "curves must live on [0,1]");
    for (const auto& c : curves)
        require(c.grid().same_points_as(grid), "curves must share one grid");

    const Eigen::Index n = static_cast<Eigen::Index>(curves.size());
    const Eigen::VectorXd& t = grid.points();
    const Eigen::VectorXd w = trapezoid_weights(grid);

    std::vector<BasisExpansion> interp;
    interp.reserve(curves.size());
    double scale = 0.0;
    for (const auto& c : curves) {
        interp.push_back(interpolate_curve(c));
        const double range = c.values().maxCoeff() - c.values().minCoeff();
        scale += range * range;
    }
    scale /= static_cast<double>(n);
    const double kappa = cfg.kappa_scale * std::max(scale, 1e-30);

    const Warp id = Warp::identity(cfg.warp_basis_size);
    const BSplineBasis& wb = id.basis();
    std::vector<Eigen::VectorXd> theta(curves.size(), id.coefficients());
    std::vector<double> per_curve_obj(curves.size(), 0.0);
    Eigen::MatrixXd recon(t.size(), n);

    auto objective = [&](Eigen::Index i, const Eigen::VectorXd& th) {
        return warp_objective(th, wb, interp[static_cast<size_t>(i)], t, w, recon.col(i), kappa);
    };
    auto current_total = [&] {
        double s = 0.0;
        for (double v : per_curve_obj) s += v;
        return s;
    };
    auto make_warps = [&] {
        std::vector<Warp> ws;
        ws.reserve(theta.size());
        for (const auto& th : theta) ws.emplace_back(wb, th);
        return ws;
    };

    CoreResult out;
    const Eigen::Index n_comp = std::min<Eigen::Index>(cfg.n_components, n - 1);
    double prev_total = std::numeric_limits<double>::infinity();

    for (int iter = 0; iter < cfg.max_iter; ++iter) {
        // Center the warp set, but only if recentering does not undo progress
        // (reconstructions stay fixed, so the comparison is like for like).
        if (iter > 0) {
            const Warp m = mean_warp(make_warps());
            double dev = 0.0;
            for (Eigen::Index p = 0; p < t.size(); ++p)
                dev = std::max(dev, std::abs(m(t[p]) - t[p]));
            if (dev > 1e-10) {
                const Warp m_inv = invert_warp(m, 5e-3);
                std::vector<Eigen::VectorXd> centered(theta.size());
                std::vector<double> centered_obj(theta.size());
                for (size_t i = 0; i < theta.size(); ++i) {
                    centered[i] =
                        compose_warps(Warp(wb, theta[i]), m_inv).coefficients();
                    centered_obj[i] = objective(static_cast<Eigen::Index>(i), centered[i]);
                }
                double centered_total = 0.0;
                for (double v : centered_obj) centered_total += v;
                const double slack = 1e-12 * (1.0 + std::abs(current_total()));
                if (centered_total <= current_total() + slack) {
                    theta = std::move(centered);
                    per_curve_obj = std::move(centered_obj);
                }
            }
        }

        // Template: FPCA of the currently warped curves. The rank-limited KL
        // reconstruction is the weighted least-squares optimum for fixed
        // warps, so this step cannot increase the objective.
        std::vector<MultiChannelCurve> warped;
        warped.reserve(curves.size());
        for (size_t i = 0; i < curves.size(); ++i) {
            const BasisExpansion h(wb, cumulative_coefficients(theta[i]));
            Eigen::VectorXd v(t.size());
            for (Eigen::Index p = 0; p < t.size(); ++p)
                v[p] = interp[i](std::clamp(h(t[p]), 0.0, 1.0));
            warped.emplace_back(grid, v, std::vector<std::string>{"value"});
        }
        auto [model, scores] = fpca(warped, n_comp, grid);
        for (Eigen::Index i = 0; i < n; ++i) {
            recon.col(i) = model.mean_values.col(0);
            for (Eigen::Index j = 0; j < n_comp; ++j)
                recon.col(i) +=
                    scores.scores(i, j) * model.eigenfunctions[static_cast<size_t>(j)].col(0);
        }
        out.template_model = std::move(model);

        // Per-curve warp refinement, independent across curves. One sweep
        // only: the template still reflects the current misalignment, and
        // minimizing deeply against it locks phase into the fit; partial
        // steps let the template and the warps descend together.
        parallel_for(curves.size(), [&](size_t i) {
            double best = objective(static_cast<Eigen::Index>(i), theta[i]);
            for (Eigen::Index c = 0; c < theta[i].size(); ++c) {
                golden_section_coordinate(
                    theta[i], c, 0.75, best, [&](double x) {
                        Eigen::VectorXd cand = theta[i];
                        cand[c] = x;
                        return objective(static_cast<Eigen::Index>(i), cand);
                    });
            }
            per_curve_obj[i] = best;
        });

        const double total = current_total();
        out.objective_trace.push_back(total);
        out.n_iterations = iter + 1;
        if (total <= 1e-14 * (1.0 + scale) ||
            (std::isfinite(prev_total) && prev_total - total <= cfg.tol * std::max(1.0, std::abs(prev_total)))) {
            out.converged = true;
            break;
        }
        prev_total = total;
    }

    // Mandatory final centering so mean_i h_i tracks the identity.
    {
        const Warp m = mean_warp(make_warps());
        double dev = 0.0;
        for (Eigen::Index p = 0; p < t.size(); ++p)
            dev = std::max(dev, std::abs(m(t[p]) - t[p]));
        if (dev > 1e-12) {
            const Warp m_inv = invert_warp(m, 5e-3);
            for (auto& th : theta) th = compose_warps(Warp(wb, th), m_inv).coefficients();
        }
    }
    out.warps = make_warps();
    return out;
}

}  // namespace

Warp::Warp(BSplineBasis basis, Eigen::VectorXd coefficients)
    : coefficients_(std::move(coefficients)),
      expansion_(make_warp_expansion(std::move(basis), coefficients_)) {}

Warp Warp::identity(Eigen::Index n_basis, int order) {
    const BSplineBasis basis = make_bspline_basis(1.0, n_basis, order);
    const Eigen::VectorXd xi = greville_abscissae(basis);
    Eigen::VectorXd theta(xi.size() - 1);
    for (Eigen::Index i = 0; i + 1 < xi.size(); ++i) theta[i] = std::log(xi[i + 1] - xi[i]);
    return Warp(basis, theta);
}

Warp Warp::fit(const BSplineBasis& basis, const Eigen::VectorXd& t, const Eigen::VectorXd& y) {
    require(basis.size() >= 3, "warp basis needs at least three functions");
    require(t.size() == y.size(), "sample vectors must have equal length");
    require(t.size() >= basis.size(), "need at least as many samples as basis functions");
    const Eigen::Index n = basis.size();
    const Eigen::MatrixXd M = basis_matrix(basis, t);
    // Pin the endpoint coefficients at 0 and 1, solve the interior.
    const Eigen::VectorXd rhs = y - M.col(n - 1);
    const Eigen::VectorXd mid =
        M.middleCols(1, n - 2).colPivHouseholderQr().solve(rhs);
    Eigen::VectorXd a(n);
    a[0] = 0.0;
    a.segment(1, n - 2) = mid;
    a[n - 1] = 1.0;
    Eigen::VectorXd theta(n - 1);
    for (Eigen::Index i = 0; i + 1 < n; ++i)
        theta[i] = std::log(std::max(a[i + 1] - a[i], kIncrementFloor));
    return Warp(basis, theta);
}

Warp mean_warp(const std::vector<Warp>& warps) {
    require(!warps.empty(), "mean of an empty warp set");
    const BSplineBasis& base = warps.front().basis();
    Eigen::VectorXd inc = softmax_increments(warps.front().coefficients());
    for (size_t i = 1; i < warps.size(); ++i) {
        const BSplineBasis& b = warps[i].basis();
        require(b.order() == base.order() && b.knots().size() == base.knots().size() &&
                    (b.knots().array() == base.knots().array()).all(),
                "warps must share a basis");
        inc += softmax_increments(warps[i].coefficients());
    }
    inc /= static_cast<double>(warps.size());
    return Warp(warps.front().basis(), inc.array().log());
}

Warp compose_warps(const Warp& outer, const Warp& inner) {
    const Eigen::Index m = std::max<Eigen::Index>(201, 4 * outer.basis().size());
    const Eigen::VectorXd x = uniform_points(m);
    Eigen::VectorXd y(m);
    for (Eigen::Index j = 0; j < m; ++j)
        y[j] = outer(std::clamp(inner(x[j]), 0.0, 1.0));
    return Warp::fit(outer.basis(), x, y);
}

Warp invert_warp(const Warp& warp, double tolerance) {
    require(tolerance > 0.0, "tolerance must be positive");
    Eigen::Index n_basis = std::max<Eigen::Index>(warp.basis().size(), 2 * warp.basis().order());
    double achieved = std::numeric_limits<double>::infinity();
    // Enlarge the inverse basis until the round trip meets the tolerance;
    // sharply graded warps need finer resolution than their own basis.
    for (; n_basis <= 256; n_basis *= 2) {
        Warp inv = invert_into_basis(warp, n_basis);
        achieved = roundtrip_error(warp, inv);
        if (achieved < tolerance) return inv;
    }
    std::ostringstream msg;
    msg << "invert_warp: achieved error " << achieved << " exceeds tolerance " << tolerance;
    throw std::runtime_error(msg.str());
}

Curve apply_warp(const Curve& curve, const Warp& warp) {
    require(std::abs(curve.grid().domain_end() - 1.0) < 1e-12, "curve must live on [0,1]");
    const BasisExpansion interp = interpolate_curve(curve);
    const Eigen::VectorXd& t = curve.grid().points();
    Eigen::VectorXd v(t.size());
    for (Eigen::Index p = 0; p < t.size(); ++p)
        v[p] = interp(std::clamp(warp(t[p]), 0.0, 1.0));
    return Curve(curve.grid(), std::move(v));
}

MultiChannelCurve apply_warp(const MultiChannelCurve& curve, const Warp& warp) {
    Eigen::MatrixXd values(curve.grid().size(), curve.n_channels());
    for (Eigen::Index d = 0; d < curve.n_channels(); ++d)
        values.col(d) = apply_warp(curve.channel(d), warp).values();
    return MultiChannelCurve(curve.grid(), std::move(values), curve.channel_labels(), curve.meta());
}

RegistrationResult register_sample(const std::vector<Curve>& curves,
                                   const RegistrationConfig& config) {
    CoreResult core = register_core(curves, config);
    RegistrationResult out;
    out.warps = std::move(core.warps);
    out.template_model = std::move(core.template_model);
    out.objective_trace = std::move(core.objective_trace);
    out.n_iterations = core.n_iterations;
    out.converged = core.converged;
    out.registered.reserve(curves.size());
    for (size_t i = 0; i < curves.size(); ++i) {
        const Curve r = apply_warp(curves[i], out.warps[i]);
        out.registered.emplace_back(r.grid(), r.values(), std::vector<std::string>{"value"});
    }
    return out;
}

RegistrationResult register_by_reference(const std::vector<MultiChannelCurve>& sample,
                                         const std::string& reference_channel,
                                         const RegistrationConfig& config) {
    require(!sample.empty(), "sample must be non-empty");
    std::vector<Curve> reference;
    reference.reserve(sample.size());
    for (const auto& curve : sample) {
        const Eigen::Index d = curve.channel_index(reference_channel);
        if (d < 0)
            throw std::invalid_argument("reference channel '" + reference_channel +
                                        "' missing from sample");
        reference.push_back(curve.channel(d));
    }
    CoreResult core = register_core(reference, config);
    RegistrationResult out;
    out.warps = std::move(core.warps);
    out.template_model = std::move(core.template_model);
    out.objective_trace = std::move(core.objective_trace);
    out.n_iterations = core.n_iterations;
    out.converged = core.converged;
    out.registered.reserve(sample.size());
    for (size_t i = 0; i < sample.size(); ++i)
        out.registered.push_back(apply_warp(sample[i], out.warps[i]));
    return out;
}

}  // namespace aufda
