#include "aufda/fanova.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "aufda/fdist.hpp"
#include "aufda/parallel.hpp"
#include "aufda/rng.hpp"

namespace aufda {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

// Pointwise equality-constrained least squares min ||Y - Z b||^2, C b = 0,
// through the bordered system [Z'Z, C'; C, 0]. One factorization serves every
// grid point and every permutation replicate.
struct ConstrainedModel {
    Eigen::MatrixXd Z;
    Eigen::Index q, c;
    Eigen::FullPivLU<Eigen::MatrixXd> lu;
    Eigen::Index df_error;

    ConstrainedModel(Eigen::MatrixXd Z_in, const Eigen::MatrixXd& C)
        : Z(std::move(Z_in)), q(Z.cols()), c(C.rows()) {
        Eigen::MatrixXd M = Eigen::MatrixXd::Zero(q + c, q + c);
        M.topLeftCorner(q, q) = Z.transpose() * Z;
        M.topRightCorner(q, c) = C.transpose();
        M.bottomLeftCorner(c, q) = C;
        lu.compute(M);
        if (lu.rank() < q + c) throw std::runtime_error("rank-deficient KKT system");
        // Error df from ranks: parameters effectively available after the
        // constraint are the columns of Z restricted to C's null space.
        const Eigen::MatrixXd kernel = Eigen::FullPivLU<Eigen::MatrixXd>(C).kernel();
        const Eigen::Index effective = (Z * kernel).colPivHouseholderQr().rank();
        df_error = Z.rows() - effective;
    }

    // beta for every grid point at once: q x P.
    Eigen::MatrixXd beta(const Eigen::MatrixXd& Y) const {
        Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(q + c, Y.cols());
        rhs.topRows(q) = Z.transpose() * Y;
        return lu.solve(rhs).topRows(q);
    }

    Eigen::VectorXd sse(const Eigen::MatrixXd& Y) const {
        const Eigen::MatrixXd resid = Y - Z * beta(Y);
        return resid.colwise().squaredNorm().transpose();
    }
};

Eigen::MatrixXd curves_to_matrix(const std::vector<Curve>& y, const TimeGrid& grid) {
    Eigen::MatrixXd Y(static_cast<Eigen::Index>(y.size()), grid.size());
    for (size_t i = 0; i < y.size(); ++i) {
        require(y[i].grid().same_points_as(grid), "curves must share one grid");
        Y.row(static_cast<Eigen::Index>(i)) = y[i].values().transpose();
    }
    return Y;
}

void check_design(const DesignMatrix& Z, const ConstraintRow& L, Eigen::Index n_curves) {
    require(Z.K >= 1 && Z.G >= 1, "design needs K >= 1 and G >= 1");
    require(Z.Z.rows() == (Z.G + 1) * Z.K && Z.Z.cols() == Z.G + 1,
            "design matrix shape inconsistent with K and G");
    require(L.L.size() == Z.Z.cols(), "constraint length must match design columns");
    require(n_curves == Z.Z.rows(), "number of curves must match design rows");
}

std::vector<Interval> zones_above(const Eigen::VectorXd& f, const Eigen::VectorXd& t,
                                  double critical) {
    std::vector<Interval> out;
    Eigen::Index p = 0;
    while (p < f.size()) {
        if (f[p] > critical) {
            const Eigen::Index start = p;
            while (p + 1 < f.size() && f[p + 1] > critical) ++p;
            out.push_back({t[start], t[p]});
        }
        ++p;
    }
    return out;
}

}  // namespace

DesignMatrix build_design_matrix(Eigen::Index K, Eigen::Index G) {
    require(K >= 1, "K must be positive");
    require(G >= 1, "G must be positive");
    DesignMatrix out;
    out.K = K;
    out.G = G;
    out.Z = Eigen::MatrixXd::Zero((G + 1) * K, G + 1);
    out.Z.col(0).setOnes();
    for (Eigen::Index g = 1; g <= G; ++g) out.Z.block(g * K, g, K, 1).setOnes();
    out.column_labels.push_back("grand_mean");
    for (Eigen::Index g = 1; g <= G; ++g) out.column_labels.push_back("alpha_" + std::to_string(g));
    return out;
}

ConstraintRow zero_sum_constraint(Eigen::Index G) {
    require(G >= 1, "G must be positive");
    ConstraintRow row;
    row.L = Eigen::RowVectorXd::Ones(G + 1);
    row.L[0] = 0.0;
    return row;
}

FanovaFit fit_flm(const std::vector<Curve>& y, const DesignMatrix& Z, const ConstraintRow& L) {
    require(!y.empty(), "y must be non-empty");
    check_design(Z, L, static_cast<Eigen::Index>(y.size()));
    const TimeGrid& grid = y.front().grid();
    const Eigen::MatrixXd Y = curves_to_matrix(y, grid);
    const ConstrainedModel model(Z.Z, L.L);
    FanovaFit fit;
    fit.grid = grid;
    fit.beta = model.beta(Y);
    fit.residuals = Y - Z.Z * fit.beta;
    fit.df_error = model.df_error;
    fit.design = Z;
    return fit;
}

Curve sse(const FanovaFit& fit) {
    return Curve(fit.grid, fit.residuals.colwise().squaredNorm().transpose());
}

std::pair<FanovaFit, Curve> fit_reduced_and_ssh0(const std::vector<Curve>& y,
                                                 const DesignMatrix& Z, const ConstraintRow& L,
                                                 Eigen::Index g_tilde) {
    require(!y.empty(), "y must be non-empty");
    check_design(Z, L, static_cast<Eigen::Index>(y.size()));
    require(g_tilde >= 1 && g_tilde <= Z.G, "g_tilde must be in [1, G]");
    const TimeGrid& grid = y.front().grid();
    const Eigen::MatrixXd Y = curves_to_matrix(y, grid);
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(2, Z.Z.cols());
    C.row(0) = L.L;
    C(1, g_tilde) = 1.0;  // H0: alpha_{g_tilde}(t) = 0
    const ConstrainedModel model(Z.Z, C);
    FanovaFit fit;
    fit.grid = grid;
    fit.beta = model.beta(Y);
    fit.residuals = Y - Z.Z * fit.beta;
    fit.df_error = model.df_error;
    fit.design = Z;
    // All rows enter the sum, so the reduced SSE dominates the full one.
    Curve ssh0(grid, fit.residuals.colwise().squaredNorm().transpose());
    return {std::move(fit), std::move(ssh0)};
}

std::string to_string(EffectClass e) {
    switch (e) {
        case EffectClass::none: return "none";
        case EffectClass::locally_strengthening: return "locally_strengthening";
        case EffectClass::locally_inhibiting: return "locally_inhibiting";
        case EffectClass::globally_strengthening: return "globally_strengthening";
    }
    throw std::logic_error("unknown effect class");
}

FTestReport ftest(const std::vector<Curve>& y, const DesignMatrix& Z, const ConstraintRow& L,
                  Eigen::Index g_tilde, double alpha, int n_permutations, std::uint64_t seed,
                  ZoneLevel zone_level) {
    require(!y.empty(), "y must be non-empty");
    check_design(Z, L, static_cast<Eigen::Index>(y.size()));
    require(g_tilde >= 1 && g_tilde <= Z.G, "g_tilde must be in [1, G]");
    require(alpha > 0.0 && alpha < 1.0, "alpha must be in (0,1)");
    require(n_permutations >= 100, "n_permutations below 100 gives an unstable quantile");

    const TimeGrid& grid = y.front().grid();
    const Eigen::MatrixXd Y = curves_to_matrix(y, grid);
    const Eigen::Index N = Y.rows(), P = Y.cols();

    const ConstrainedModel full(Z.Z, L.L);
    Eigen::MatrixXd C0 = Eigen::MatrixXd::Zero(2, Z.Z.cols());
    C0.row(0) = L.L;
    C0(1, g_tilde) = 1.0;
    const ConstrainedModel reduced(Z.Z, C0);

    if (full.df_error < 1) throw std::invalid_argument("df_error must be at least 1");
    const Eigen::Index df_model = reduced.df_error - full.df_error;
    if (df_model < 1) throw std::runtime_error("reduced model is not more constrained");

    // A residual sum of squares below this is rounding debris of an exact
    // fit; treating 0/0 as FRATIO = 0 keeps noise-free data well defined.
    const double scale = Y.cwiseAbs().maxCoeff();
    const double tol_ss = static_cast<double>(N) * std::pow(1e-10 * (1.0 + scale), 2);
    const auto fratio_at = [tol_ss, df_model, full_df = full.df_error](double sse_t,
                                                                       double ssh0_t) {
        const double num = std::max(ssh0_t - sse_t, 0.0);
        if (num <= tol_ss && sse_t <= tol_ss) return 0.0;
        return (num / static_cast<double>(df_model)) /
               (std::max(sse_t, tol_ss) / static_cast<double>(full_df));
    };

    const Eigen::VectorXd sse_obs = full.sse(Y);
    const Eigen::VectorXd ssh0_obs = reduced.sse(Y);
    Eigen::VectorXd fr(P);
    for (Eigen::Index p = 0; p < P; ++p) fr[p] = fratio_at(sse_obs[p], ssh0_obs[p]);

    // Permutation null of the max statistic: relabel rows between neutral and
    // group g_tilde. Draw all permutations up front so the parallel replay is
    // deterministic.
    std::vector<Eigen::Index> pool;
    for (Eigen::Index k = 0; k < Z.K; ++k) pool.push_back(k);
    for (Eigen::Index k = 0; k < Z.K; ++k) pool.push_back(g_tilde * Z.K + k);
    Rng rng(seed);
    std::vector<std::vector<Eigen::Index>> perms(static_cast<size_t>(n_permutations), pool);
    for (auto& perm : perms) rng.shuffle(perm);

    std::vector<double> max_stats(static_cast<size_t>(n_permutations));
    parallel_for(static_cast<size_t>(n_permutations), [&](size_t m) {
        Eigen::MatrixXd Yp = Y;
        for (size_t j = 0; j < pool.size(); ++j) Yp.row(pool[j]) = Y.row(perms[m][j]);
        const Eigen::VectorXd sse_p = full.sse(Yp);
        const Eigen::VectorXd ssh0_p = reduced.sse(Yp);
        double worst = 0.0;
        for (Eigen::Index p = 0; p < P; ++p)
            worst = std::max(worst, fratio_at(sse_p[p], ssh0_p[p]));
        max_stats[m] = worst;
    });
    std::sort(max_stats.begin(), max_stats.end());
    // Empirical (1-alpha) quantile as the ceil((1-alpha)*M)-th order statistic.
    const auto rank = static_cast<size_t>(
        std::clamp<long>(static_cast<long>(std::ceil((1.0 - alpha) * n_permutations)), 1,
                         n_permutations));
    FTestReport report;
    report.fratio = Curve(grid, fr);
    report.sse = Curve(grid, sse_obs);
    report.ssh0 = Curve(grid, ssh0_obs);
    report.df_model = df_model;
    report.df_error = full.df_error;
    report.alpha = alpha;
    report.pointwise_critical =
        f_quantile(FDist{static_cast<double>(df_model), static_cast<double>(full.df_error)},
                   1.0 - alpha);
    report.max_critical = max_stats[rank - 1];
    report.max_fratio = fr.maxCoeff();
    report.zones_pointwise = zones_above(fr, grid.points(), report.pointwise_critical);
    report.zones_max = zones_above(fr, grid.points(), report.max_critical);
    report.significant_zones =
        zone_level == ZoneLevel::pointwise ? report.zones_pointwise : report.zones_max;

    const Eigen::MatrixXd beta = full.beta(Y);
    const double span = grid.points()[P - 1] - grid.points()[0];
    report.effect_class =
        classify_effect(Curve(grid, beta.row(g_tilde).transpose()),
                        Curve(grid, beta.row(0).transpose()), report.significant_zones, span);
    return report;
}

EffectClass classify_effect(const Curve& beta_g, const Curve& mu0,
                            const std::vector<Interval>& zones, double grid_span) {
    require(grid_span > 0.0, "grid_span must be positive");
    (void)mu0;  // categories depend on the effect's own sign pattern
    if (zones.empty()) return EffectClass::none;

    double covered = 0.0;
    for (const auto& z : zones) covered += z.end - z.begin;
    const double coverage = covered / grid_span;

    const Eigen::VectorXd& t = beta_g.grid().points();
    const Eigen::VectorXd& a = beta_g.values();
    Eigen::Index n_zone = 0, n_nonneg = 0;
    double sum = 0.0;
    for (Eigen::Index p = 0; p < t.size(); ++p) {
        for (const auto& z : zones) {
            if (t[p] >= z.begin - 1e-12 && t[p] <= z.end + 1e-12) {
                ++n_zone;
                if (a[p] >= 0.0) ++n_nonneg;
                sum += a[p];
                break;
            }
        }
    }
    if (n_zone == 0) return EffectClass::none;
    const double frac_nonneg = static_cast<double>(n_nonneg) / static_cast<double>(n_zone);
    if (coverage >= 0.7 && frac_nonneg >= 0.9) return EffectClass::globally_strengthening;
    return sum / static_cast<double>(n_zone) >= 0.0 ? EffectClass::locally_strengthening
                                                    : EffectClass::locally_inhibiting;
}

}  // namespace aufda
