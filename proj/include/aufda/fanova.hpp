#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "aufda/fdcore.hpp"

namespace aufda {

/// Indicator design for one grand mean plus G group effects. Rows are grouped
/// in blocks of K: the first block is the neutral group (intercept only),
/// block g >= 1 additionally selects column g.
struct DesignMatrix {
    Eigen::MatrixXd Z;  // (G+1)*K x (G+1), 0/1 entries
    Eigen::Index K = 0;
    Eigen::Index G = 0;
    std::vector<std::string> column_labels;  // grand_mean, alpha_1..alpha_G

    Eigen::Index rows() const { return Z.rows(); }
    Eigen::Index cols() const { return Z.cols(); }
    Eigen::Index row_group(Eigen::Index r) const { return r / K; }
    Eigen::Index row_within_group(Eigen::Index r) const { return r % K; }
};

DesignMatrix build_design_matrix(Eigen::Index K, Eigen::Index G);

/// Pointwise linear constraint L beta(t) = 0.
struct ConstraintRow {
    Eigen::RowVectorXd L;
};

/// The identifiability constraint (0, 1, ..., 1): group effects sum to zero.
ConstraintRow zero_sum_constraint(Eigen::Index G);

/// Equality-constrained least-squares fit at every grid point.
struct FanovaFit {
    TimeGrid grid;
    Eigen::MatrixXd beta;       // (G+1) x P; row 0 = grand mean, row g = alpha_g
    Eigen::MatrixXd residuals;  // N x P
    Eigen::Index df_error = 0;
    DesignMatrix design;

    Curve mu0() const { return Curve(grid, beta.row(0).transpose()); }
    Curve alpha(Eigen::Index g) const { return Curve(grid, beta.row(g).transpose()); }
};

/// Solve min ||y(t) - Z beta(t)||^2 subject to L beta(t) = 0 at each grid
/// point through the bordered KKT system; df_error is rank-based.
FanovaFit fit_flm(const std::vector<Curve>& y, const DesignMatrix& Z, const ConstraintRow& L);

/// Pointwise residual sum of squares of a fit.
Curve sse(const FanovaFit& fit);

/// Refit with the extra pointwise constraint alpha_{g_tilde} = 0 and return
/// the reduced fit plus its residual sum of squares (over all rows).
std::pair<FanovaFit, Curve> fit_reduced_and_ssh0(const std::vector<Curve>& y,
                                                 const DesignMatrix& Z, const ConstraintRow& L,
                                                 Eigen::Index g_tilde);

struct Interval {
    double begin = 0.0;
    double end = 0.0;
};

enum class EffectClass { none, locally_strengthening, locally_inhibiting, globally_strengthening };

std::string to_string(EffectClass e);

/// Which critical line defines `significant_zones`.
enum class ZoneLevel { pointwise, max_statistic };

struct FTestReport {
    Curve fratio;
    Curve sse;
    Curve ssh0;
    Eigen::Index df_model = 0;
    Eigen::Index df_error = 0;
    double pointwise_critical = 0.0;
    double max_critical = 0.0;
    double alpha = 0.0;
    double max_fratio = 0.0;
    std::vector<Interval> zones_pointwise;   // FRATIO above the F quantile
    std::vector<Interval> zones_max;         // FRATIO above the permutation line
    std::vector<Interval> significant_zones; // the configured line's zones
    EffectClass effect_class = EffectClass::none;
};

/// Functional F-test of H0: alpha_{g_tilde} = 0. Pointwise critical value
/// from the F distribution; familywise line from the permutation null of
/// max_t FRATIO(t) under relabeling between neutral and group g_tilde.
FTestReport ftest(const std::vector<Curve>& y, const DesignMatrix& Z, const ConstraintRow& L,
                  Eigen::Index g_tilde, double alpha = 0.05, int n_permutations = 1000,
                  std::uint64_t seed = 0, ZoneLevel zone_level = ZoneLevel::pointwise);

/// Paper-style qualitative label for a significant effect: strengthening
/// everywhere, or locally strengthening/inhibiting inside the zones.
EffectClass classify_effect(const Curve& beta_g, const Curve& mu0,
                            const std::vector<Interval>& zones, double grid_span);

}  // namespace aufda
