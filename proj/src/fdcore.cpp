#include "aufda/fdcore.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <stdexcept>
#include <vector>

namespace aufda {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

// Relative slack for domain boundary checks; grids built in floating point
// may overshoot the endpoint by an ulp.
double boundary_tol(double domain_end) { return 1e-12 * std::max(1.0, domain_end); }

constexpr int kMaxOrder = 32;

// Knot span index i with knots[i] <= t < knots[i+1], restricted to
// [order-1, n_fn-1]; t at the right endpoint maps to the last span.
Eigen::Index find_span(const Eigen::VectorXd& knots, int order, double t) {
    const Eigen::Index n_fn = knots.size() - order;
    const double* begin = knots.data() + (order - 1);
    const double* end = knots.data() + n_fn;
    Eigen::Index i = std::upper_bound(begin, end, t) - knots.data() - 1;
    return std::clamp<Eigen::Index>(i, order - 1, n_fn - 1);
}

// Values of the `order` basis functions that are nonzero on t's span
// (Cox-de Boor triangle). out[r] is the value of B_{span-order+1+r}.
void local_basis_values(const Eigen::VectorXd& knots, int order, double t,
                        Eigen::Index span, double* out) {
    double left[kMaxOrder], right[kMaxOrder];
    out[0] = 1.0;
    for (int j = 1; j < order; ++j) {
        left[j] = t - knots[span + 1 - j];
        right[j] = knots[span + j] - t;
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            const double denom = right[r + 1] + left[j - r];
            const double temp = denom != 0.0 ? out[r] / denom : 0.0;
            out[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        out[j] = saved;
    }
}

Eigen::VectorXd eval_all(const Eigen::VectorXd& knots, int order, double t) {
    const Eigen::Index n_fn = knots.size() - order;
    const Eigen::Index span = find_span(knots, order, t);
    double local[kMaxOrder];
    local_basis_values(knots, order, t, span, local);
    Eigen::VectorXd values = Eigen::VectorXd::Zero(n_fn);
    for (int r = 0; r < order; ++r) values[span - order + 1 + r] = local[r];
    return values;
}

// d-th derivative of all basis functions, via the derivative identity
// B'_{i,k} = (k-1) [B_{i,k-1}/(t_{i+k-1}-t_i) - B_{i+1,k-1}/(t_{i+k}-t_{i+1})].
Eigen::VectorXd eval_all_derivative(const Eigen::VectorXd& knots, int order, double t,
                                    int deriv) {
    if (deriv == 0) return eval_all(knots, order, t);
    const Eigen::Index n_fn = knots.size() - order;
    if (deriv >= order) return Eigen::VectorXd::Zero(n_fn);
    const Eigen::VectorXd low = eval_all_derivative(knots, order - 1, t, deriv - 1);
    Eigen::VectorXd out(n_fn);
    for (Eigen::Index i = 0; i < n_fn; ++i) {
        const double da = knots[i + order - 1] - knots[i];
        const double db = knots[i + order] - knots[i + 1];
        const double a = da != 0.0 ? low[i] / da : 0.0;
        const double b = db != 0.0 ? low[i + 1] / db : 0.0;
        out[i] = (order - 1) * (a - b);
    }
    return out;
}

// Gauss-Legendre nodes/weights on [-1, 1] (Newton iteration on P_m).
void gauss_legendre(int m, Eigen::VectorXd& nodes, Eigen::VectorXd& weights) {
    nodes.resize(m);
    weights.resize(m);
    for (int i = 0; i < (m + 1) / 2; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (m + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int j = 2; j <= m; ++j) {
                const double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
                p0 = p1;
                p1 = p2;
            }
            dp = m * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        nodes[i] = -x;
        nodes[m - 1 - i] = x;
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
}

double checked_eval_point(const BSplineBasis& basis, double t) {
    const double tol = boundary_tol(basis.domain_end());
    if (t < -tol || t > basis.domain_end() + tol)
        throw std::domain_error("eval_basis: t=" + std::to_string(t) +
                                " outside basis domain [0, " +
                                std::to_string(basis.domain_end()) + "]");
    return std::clamp(t, 0.0, basis.domain_end());
}

}  // namespace

TimeGrid::TimeGrid(Eigen::VectorXd points, double domain_end)
    : points_(std::move(points)), domain_end_(domain_end) {
    require(domain_end_ > 0.0, "TimeGrid: domain_end must be positive");
    require(points_.size() >= 2, "TimeGrid: needs at least 2 points");
    const double tol = boundary_tol(domain_end_);
    require(points_[0] >= -tol, "TimeGrid: first point must be >= 0");
    require(points_[points_.size() - 1] <= domain_end_ + tol,
            "TimeGrid: last point exceeds domain_end");
    for (Eigen::Index i = 1; i < points_.size(); ++i)
        require(points_[i] > points_[i - 1], "TimeGrid: points must be strictly increasing");
}

TimeGrid TimeGrid::uniform(double domain_end, Eigen::Index n_points) {
    require(n_points >= 2, "TimeGrid::uniform: needs at least 2 points");
    return TimeGrid(Eigen::VectorXd::LinSpaced(n_points, 0.0, domain_end), domain_end);
}

bool TimeGrid::same_points_as(const TimeGrid& other, double tol) const {
    if (points_.size() != other.points_.size()) return false;
    return (points_ - other.points_).cwiseAbs().maxCoeff() <= tol;
}

Eigen::VectorXd trapezoid_weights(const TimeGrid& grid) {
    const auto& t = grid.points();
    const Eigen::Index n = t.size();
    Eigen::VectorXd w(n);
    w[0] = 0.5 * (t[1] - t[0]);
    for (Eigen::Index i = 1; i + 1 < n; ++i) w[i] = 0.5 * (t[i + 1] - t[i - 1]);
    w[n - 1] = 0.5 * (t[n - 1] - t[n - 2]);
    return w;
}

Curve::Curve(TimeGrid grid, Eigen::VectorXd values)
    : grid_(std::move(grid)), values_(std::move(values)) {
    require(values_.size() == grid_.size(), "Curve: values length must match grid");
    require(values_.allFinite(), "Curve: values must be finite");
}

MultiChannelCurve::MultiChannelCurve(TimeGrid grid, Eigen::MatrixXd values,
                                     std::vector<std::string> channel_labels, CurveMeta meta)
    : grid_(std::move(grid)),
      values_(std::move(values)),
      labels_(std::move(channel_labels)),
      meta_(std::move(meta)) {
    require(values_.cols() >= 1, "MultiChannelCurve: needs at least one channel");
    require(values_.rows() == grid_.size(), "MultiChannelCurve: rows must match grid");
    require(static_cast<Eigen::Index>(labels_.size()) == values_.cols(),
            "MultiChannelCurve: one label per channel");
    require(values_.allFinite(), "MultiChannelCurve: values must be finite");
    std::set<std::string> unique(labels_.begin(), labels_.end());
    require(unique.size() == labels_.size(), "MultiChannelCurve: channel labels must be unique");
}

Curve MultiChannelCurve::channel(Eigen::Index d) const {
    require(d >= 0 && d < values_.cols(), "MultiChannelCurve: channel index out of range");
    return Curve(grid_, values_.col(d));
}

Eigen::Index MultiChannelCurve::channel_index(const std::string& label) const {
    const auto it = std::find(labels_.begin(), labels_.end(), label);
    return it == labels_.end() ? -1 : static_cast<Eigen::Index>(it - labels_.begin());
}

BSplineBasis::BSplineBasis(double domain_end, Eigen::VectorXd interior_knots, int order)
    : domain_end_(domain_end), order_(order) {
    require(order_ >= 2, "BSplineBasis: order must be >= 2");
    require(order_ <= kMaxOrder, "BSplineBasis: order too large");
    require(domain_end_ > 0.0, "BSplineBasis: domain_end must be positive");
    for (Eigen::Index i = 0; i < interior_knots.size(); ++i) {
        require(interior_knots[i] > 0.0 && interior_knots[i] < domain_end_,
                "BSplineBasis: interior knots must lie strictly inside (0, domain_end)");
        if (i > 0)
            require(interior_knots[i] >= interior_knots[i - 1],
                    "BSplineBasis: interior knots must be ordered");
    }
    knots_.resize(interior_knots.size() + 2 * order_);
    knots_.head(order_).setZero();
    knots_.segment(order_, interior_knots.size()) = interior_knots;
    knots_.tail(order_).setConstant(domain_end_);
}

Eigen::VectorXd BSplineBasis::interior_knots() const {
    return knots_.segment(order_, knots_.size() - 2 * order_);
}

bool BSplineBasis::same_as(const BSplineBasis& other, double tol) const {
    return order_ == other.order_ && knots_.size() == other.knots_.size() &&
           (knots_ - other.knots_).cwiseAbs().maxCoeff() <= tol;
}

BSplineBasis make_bspline_basis(double domain_end, Eigen::Index n_basis, int order) {
    require(domain_end > 0.0, "make_bspline_basis: domain_end must be positive");
    require(order >= 2, "make_bspline_basis: order must be >= 2");
    require(n_basis >= order, "make_bspline_basis: n_basis must be >= order");
    const Eigen::Index n_interior = n_basis - order;
    Eigen::VectorXd interior(n_interior);
    for (Eigen::Index k = 0; k < n_interior; ++k)
        interior[k] = domain_end * static_cast<double>(k + 1) /
                      static_cast<double>(n_interior + 1);
    return BSplineBasis(domain_end, interior, order);
}

Eigen::VectorXd eval_basis(const BSplineBasis& basis, double t) {
    return eval_all(basis.knots(), basis.order(), checked_eval_point(basis, t));
}

Eigen::VectorXd eval_basis_derivative(const BSplineBasis& basis, double t, int deriv) {
    require(deriv >= 0, "eval_basis_derivative: deriv must be >= 0");
    return eval_all_derivative(basis.knots(), basis.order(), checked_eval_point(basis, t),
                               deriv);
}

Eigen::MatrixXd basis_matrix(const BSplineBasis& basis, const Eigen::VectorXd& points,
                             int deriv) {
    Eigen::MatrixXd B(points.size(), basis.size());
    for (Eigen::Index i = 0; i < points.size(); ++i)
        B.row(i) = deriv == 0 ? eval_basis(basis, points[i]).transpose()
                              : eval_basis_derivative(basis, points[i], deriv).transpose();
    return B;
}

Eigen::MatrixXd curvature_penalty_matrix(const BSplineBasis& basis) {
    const Eigen::Index n = basis.size();
    Eigen::MatrixXd omega = Eigen::MatrixXd::Zero(n, n);
    // B'' is piecewise degree order-3, so order Gauss points per span are
    // more than exact for the product.
    Eigen::VectorXd gx, gw;
    gauss_legendre(basis.order(), gx, gw);
    const auto& knots = basis.knots();
    for (Eigen::Index s = basis.order() - 1; s < n; ++s) {
        const double a = knots[s], b = knots[s + 1];
        if (b <= a) continue;
        const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
        for (Eigen::Index q = 0; q < gx.size(); ++q) {
            const Eigen::VectorXd d2 = eval_basis_derivative(basis, mid + half * gx[q], 2);
            omega.selfadjointView<Eigen::Lower>().rankUpdate(d2, half * gw[q]);
        }
    }
    return omega.selfadjointView<Eigen::Lower>();
}

BasisExpansion::BasisExpansion(BSplineBasis basis, Eigen::VectorXd coefficients)
    : basis_(std::move(basis)), coefficients_(std::move(coefficients)) {
    require(coefficients_.size() == basis_.size(),
            "BasisExpansion: coefficient length must match basis size");
    require(coefficients_.allFinite(), "BasisExpansion: coefficients must be finite");
}

double BasisExpansion::operator()(double t) const {
    const double tc = checked_eval_point(basis_, t);
    const int order = basis_.order();
    const Eigen::Index span = find_span(basis_.knots(), order, tc);
    double local[kMaxOrder];
    local_basis_values(basis_.knots(), order, tc, span, local);
    double value = 0.0;
    for (int r = 0; r < order; ++r) value += local[r] * coefficients_[span - order + 1 + r];
    return value;
}

double BasisExpansion::derivative(double t, int deriv) const {
    return eval_basis_derivative(basis_, t, deriv).dot(coefficients_);
}

BasisExpansion smooth_curve(const Curve& raw, const BSplineBasis& basis, double lambda) {
    require(lambda >= 0.0, "smooth_curve: lambda must be >= 0");
    const double tol = boundary_tol(basis.domain_end());
    require(raw.grid().points()[raw.grid().size() - 1] <= basis.domain_end() + tol &&
                raw.grid().points()[0] >= -tol,
            "smooth_curve: curve grid must lie inside the basis domain");
    const Eigen::Index n = basis.size();
    const Eigen::Index p = raw.grid().size();

    Eigen::MatrixXd design;
    Eigen::VectorXd rhs;
    if (lambda == 0.0) {
        design = basis_matrix(basis, raw.grid().points());
        rhs = raw.values();
    } else {
        // Stacked form [B; sqrt(lambda * w_q) B''(x_q)] keeps the penalized
        // problem a plain least squares and preserves conditioning.
        Eigen::VectorXd gx, gw;
        gauss_legendre(basis.order(), gx, gw);
        const auto& knots = basis.knots();
        std::vector<std::pair<double, double>> quad;  // (point, weight)
        for (Eigen::Index s = basis.order() - 1; s < n; ++s) {
            const double a = knots[s], b = knots[s + 1];
            if (b <= a) continue;
            for (Eigen::Index q = 0; q < gx.size(); ++q)
                quad.emplace_back(0.5 * (a + b) + 0.5 * (b - a) * gx[q],
                                  0.5 * (b - a) * gw[q]);
        }
        design.resize(p + static_cast<Eigen::Index>(quad.size()), n);
        design.topRows(p) = basis_matrix(basis, raw.grid().points());
        for (std::size_t q = 0; q < quad.size(); ++q)
            design.row(p + static_cast<Eigen::Index>(q)) =
                std::sqrt(lambda * quad[q].second) *
                eval_basis_derivative(basis, quad[q].first, 2).transpose();
        rhs = Eigen::VectorXd::Zero(design.rows());
        rhs.head(p) = raw.values();
    }

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    if (qr.rank() < n)
        throw std::runtime_error(
            "smooth_curve: singular normal equations (rank " + std::to_string(qr.rank()) +
            " < " + std::to_string(n) + " basis functions); add points or increase lambda");
    return BasisExpansion(basis, qr.solve(rhs));
}

BasisExpansion interpolate_curve(const Curve& raw, int order) {
    const Eigen::Index p = raw.grid().size();
    const int k = static_cast<int>(std::min<Eigen::Index>(order, p));
    const Eigen::VectorXd& t = raw.grid().points();
    // Averaging knots (interior knot j = mean of the k-1 sample points after
    // t_j): keeps the square collocation system well conditioned at any p,
    // where uniform knots degrade exponentially against a uniform grid.
    Eigen::VectorXd interior(p - k);
    for (Eigen::Index j = 0; j + k < p; ++j) interior[j] = t.segment(j + 1, k - 1).mean();
    return smooth_curve(raw, BSplineBasis(raw.grid().domain_end(), interior, k), 0.0);
}

Curve eval_expansion(const BasisExpansion& fd, const TimeGrid& grid) {
    const double tol = boundary_tol(fd.basis().domain_end());
    require(grid.points()[grid.size() - 1] <= fd.basis().domain_end() + tol,
            "eval_expansion: grid exceeds basis domain");
    Eigen::VectorXd values(grid.size());
    for (Eigen::Index i = 0; i < grid.size(); ++i) values[i] = fd(grid.points()[i]);
    return Curve(grid, values);
}

double l2_inner_product(const Curve& a, const Curve& b) {
    require(a.grid().same_points_as(b.grid()), "l2_inner_product: mismatched grids");
    return trapezoid_weights(a.grid()).dot(a.values().cwiseProduct(b.values()));
}

double l2_inner_product(const BasisExpansion& a, const BasisExpansion& b) {
    require(std::abs(a.basis().domain_end() - b.basis().domain_end()) <=
                boundary_tol(a.basis().domain_end()),
            "l2_inner_product: expansions live on different domains");
    // The product is piecewise polynomial of degree order_a + order_b - 2 on
    // the union of both knot vectors, so per-span Gauss-Legendre with
    // (order_a + order_b) / 2 + 1 points integrates it exactly.
    std::vector<double> cuts;
    const Eigen::VectorXd& ka = a.basis().knots();
    const Eigen::VectorXd& kb = b.basis().knots();
    cuts.insert(cuts.end(), ka.data(), ka.data() + ka.size());
    cuts.insert(cuts.end(), kb.data(), kb.data() + kb.size());
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    Eigen::VectorXd gx, gw;
    gauss_legendre((a.basis().order() + b.basis().order()) / 2 + 1, gx, gw);
    double total = 0.0;
    for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
        const double lo = cuts[s], hi = cuts[s + 1];
        if (hi <= lo) continue;
        const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
        for (Eigen::Index q = 0; q < gx.size(); ++q) {
            const double t = mid + half * gx[q];
            total += half * gw[q] * a(t) * b(t);
        }
    }
    return total;
}

}  // namespace aufda
