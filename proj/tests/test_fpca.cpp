#include <cmath>
#include <numbers>

#include <doctest.h>

#include "aufda/fpca.hpp"
#include "aufda/rng.hpp"
#include "oracles.hpp"

using namespace aufda;

namespace {

MultiChannelCurve from_values(const TimeGrid& grid, Eigen::MatrixXd v,
                              std::vector<std::string> labels = {"value"}) {
    return MultiChannelCurve(grid, std::move(v), std::move(labels));
}

std::vector<MultiChannelCurve> random_sample(int n, Eigen::Index P, Eigen::Index D,
                                             std::uint64_t seed) {
    const TimeGrid grid = TimeGrid::uniform(1.0, P);
    Rng rng(seed);
    std::vector<std::string> labels;
    for (Eigen::Index d = 0; d < D; ++d) labels.push_back("ch" + std::to_string(d));
    std::vector<MultiChannelCurve> sample;
    for (int i = 0; i < n; ++i) {
        Eigen::MatrixXd v(P, D);
        for (Eigen::Index p = 0; p < P; ++p)
            for (Eigen::Index d = 0; d < D; ++d) v(p, d) = rng.gaussian();
        sample.push_back(from_values(grid, std::move(v), labels));
    }
    return sample;
}

double model_inner(const FpcaModel& m, Eigen::Index i, Eigen::Index j) {
    const Eigen::VectorXd w = trapezoid_weights(m.grid);
    double acc = 0.0;
    for (Eigen::Index d = 0; d < m.eigenfunctions[0].cols(); ++d)
        acc += (w.array() * m.eigenfunctions[static_cast<size_t>(i)].col(d).array() *
                m.eigenfunctions[static_cast<size_t>(j)].col(d).array())
                   .sum();
    return acc;
}

// point-major flattened covariance matrix and replicated weights, for oracles
Eigen::VectorXd replicated_weights(const TimeGrid& grid, Eigen::Index D) {
    const Eigen::VectorXd w = trapezoid_weights(grid);
    Eigen::VectorXd out(w.size() * D);
    for (Eigen::Index p = 0; p < w.size(); ++p)
        for (Eigen::Index d = 0; d < D; ++d) out[p * D + d] = w[p];
    return out;
}

}  // namespace

TEST_SUITE("fpca") {

TEST_CASE("mean of one curve is that curve smoothed") {
    const TimeGrid grid = TimeGrid::uniform(1.0, 31);
    Eigen::MatrixXd v(31, 1);
    for (Eigen::Index p = 0; p < 31; ++p) v(p, 0) = std::sin(3.0 * grid.points()[p]);
    const auto sample = std::vector<MultiChannelCurve>{from_values(grid, v)};
    const BSplineBasis basis = make_bspline_basis(1.0, 12, 4);
    const auto mean = mean_function(sample, basis);
    const BasisExpansion direct = smooth_curve(sample[0].channel(0), basis, 0.0);
    REQUIRE(mean.size() == 1);
    for (double t = 0.0; t <= 1.0; t += 0.1)
        CHECK(mean[0](t) == doctest::Approx(direct(t)).epsilon(1e-10));
}

TEST_CASE("mean of mirrored pair vanishes and of constants averages") {
    const TimeGrid grid = TimeGrid::uniform(1.0, 25);
    Eigen::MatrixXd v(25, 1);
    for (Eigen::Index p = 0; p < 25; ++p) v(p, 0) = std::cos(5.0 * grid.points()[p]);
    const BSplineBasis basis = make_bspline_basis(1.0, 10, 4);

    const auto mirrored = std::vector<MultiChannelCurve>{from_values(grid, v),
                                                         from_values(grid, -v)};
    const auto mean0 = mean_function(mirrored, basis);
    for (double t = 0.0; t <= 1.0; t += 0.05) CHECK(std::abs(mean0[0](t)) < 1e-8);

    std::vector<MultiChannelCurve> constants;
    for (const double c : {1.0, 2.0, 3.0})
        constants.push_back(from_values(grid, Eigen::MatrixXd::Constant(25, 1, c)));
    const auto mean2 = mean_function(constants, basis);
    for (double t = 0.0; t <= 1.0; t += 0.05)
        CHECK(mean2[0](t) == doctest::Approx(2.0).epsilon(1e-10));

    CHECK_THROWS_AS(mean_function({}, basis), std::invalid_argument);
}

TEST_CASE("covariance kernel: zero for identical curves, closed form for a mirrored pair") {
    const TimeGrid grid = TimeGrid::uniform(1.0, 15);
    Eigen::MatrixXd f(15, 1);
    for (Eigen::Index p = 0; p < 15; ++p) f(p, 0) = 1.0 + grid.points()[p];
    const BSplineBasis basis = make_bspline_basis(1.0, 8, 4);

    const std::vector<MultiChannelCurve> same{from_values(grid, f), from_values(grid, f)};
    const auto k0 = covariance_kernel(same, mean_function(same, basis), grid);
    CHECK(k0.values().cwiseAbs().maxCoeff() < 1e-20);

    const std::vector<MultiChannelCurve> pair{from_values(grid, f), from_values(grid, -f)};
    const auto k = covariance_kernel(pair, mean_function(pair, basis), grid);
    for (Eigen::Index p = 0; p < 15; ++p)
        for (Eigen::Index q = 0; q < 15; ++q)
            CHECK(k.block(p, q)(0, 0) ==
                  doctest::Approx(2.0 * f(p, 0) * f(q, 0)).epsilon(1e-9));

    CHECK_THROWS_AS(covariance_kernel({from_values(grid, f)}, mean_function(same, basis), grid),
                    std::invalid_argument);
}

TEST_CASE("covariance kernel symmetry on random multichannel data") {
    const auto sample = random_sample(5, 9, 2, 101);
    const TimeGrid& grid = sample[0].grid();
    const BSplineBasis basis = make_bspline_basis(1.0, 6, 4);
    const auto k = covariance_kernel(sample, mean_function(sample, basis), grid);
    const Eigen::MatrixXd& V = k.values();
    CHECK((V - V.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    // C(t,s)[i,j] == C(s,t)[j,i] expressed through blocks
    CHECK((k.block(2, 5) - k.block(5, 2).transpose()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("covariance kernel constructor rejects asymmetry") {
    const TimeGrid grid = TimeGrid::uniform(1.0, 3);
    Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(3, 3);
    bad(0, 1) = 1.0;  // asymmetric
    CHECK_THROWS_AS(CovarianceKernel(grid, 1, bad), std::invalid_argument);
}

TEST_CASE("two-curve sample has one eigenpair with the closed-form eigenvalue") {
    const TimeGrid grid = TimeGrid::uniform(1.0, 41);
    // f with unit L2 norm: sqrt(2) sin(2 pi t) has norm 1 on [0,1]
    Eigen::MatrixXd f(41, 1);
    for (Eigen::Index p = 0; p < 41; ++p)
        f(p, 0) = std::numbers::sqrt2 * std::sin(2.0 * std::numbers::pi * grid.points()[p]);
    Eigen::MatrixXd mu = Eigen::MatrixXd::Constant(41, 1, 1.5);

    const std::vector<MultiChannelCurve> sample{from_values(grid, mu + f),
                                                from_values(grid, mu - f)};
    const auto [model, scores] = fpca(sample, 1, grid);

    // quadrature norm of f is 1 only up to trapezoid error; compare against
    // the grid-level truth: eigenvalue = 2 <f,f>_w
    const Eigen::VectorXd w = trapezoid_weights(grid);
    const double ff = (w.array() * f.col(0).array().square()).sum();
    CHECK(model.eigenvalues[0] == doctest::Approx(2.0 * ff).epsilon(1e-9));

    // eigenfunction is +-f / ||f||_w; sign convention makes the largest
    // magnitude positive, f's peak is positive
    const Eigen::VectorXd fn = f.col(0) / std::sqrt(ff);
    CHECK((model.eigenfunctions[0].col(0) - fn).cwiseAbs().maxCoeff() < 1e-8);

    // scores +-sqrt(ff); score variance reproduces the eigenvalue
    CHECK(std::abs(scores.scores(0, 0)) == doctest::Approx(std::sqrt(ff)).epsilon(1e-9));
    CHECK(scores.scores.col(0).sum() == doctest::Approx(0.0).epsilon(1e-12));
    const double var = scores.scores.col(0).squaredNorm() / (2 - 1);
    CHECK(var == doctest::Approx(model.eigenvalues[0]).epsilon(1e-9));
}

TEST_CASE("identical curves give all-zero eigenvalues") {
    const TimeGrid grid = TimeGrid::uniform(1.0, 21);
    Eigen::MatrixXd v(21, 1);
    for (Eigen::Index p = 0; p < 21; ++p) v(p, 0) = 2.0 + grid.points()[p];
    const std::vector<MultiChannelCurve> sample{from_values(grid, v), from_values(grid, v),
                                                from_values(grid, v)};
    const auto [model, scores] = fpca(sample, 2, grid);
    CHECK(model.eigenvalues.cwiseAbs().maxCoeff() < 1e-12);
    CHECK(scores.scores.cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("orthonormality, ordering, trace identity and score centering on random data") {
    for (const auto& [n, P, D] : {std::tuple{6, 15, 2}, std::tuple{5, 12, 1}}) {
        const auto sample = random_sample(n, P, D, 500 + static_cast<std::uint64_t>(n));
        const TimeGrid& grid = sample[0].grid();
        const Eigen::Index J = n - 1;
        const auto [model, scores] = fpca(sample, J, grid);

        for (Eigen::Index i = 0; i < J; ++i)
            for (Eigen::Index j = 0; j < J; ++j) {
                const double want = i == j ? 1.0 : 0.0;
                CHECK(std::abs(model_inner(model, i, j) - want) < 1e-6);
            }

        for (Eigen::Index j = 0; j + 1 < J; ++j)
            CHECK(model.eigenvalues[j] >= model.eigenvalues[j + 1]);
        CHECK(model.eigenvalues.minCoeff() >= 0.0);

        // trace identity: sum of ALL operator eigenvalues vs the integrated
        // pointwise variance, computed directly from the data; J = n-1
        // already exhausts the sample rank
        const Eigen::VectorXd w = trapezoid_weights(grid);
        double trace = 0.0;
        for (Eigen::Index p = 0; p < P; ++p)
            for (Eigen::Index d = 0; d < D; ++d) {
                double m = 0.0;
                for (const auto& c : sample) m += c.values()(p, d);
                m /= n;
                double var = 0.0;
                for (const auto& c : sample) var += std::pow(c.values()(p, d) - m, 2);
                trace += w[p] * var / (n - 1);
            }
        CHECK(std::abs(model.eigenvalues.sum() - trace) / trace < 1e-6);

        for (Eigen::Index j = 0; j < J; ++j) {
            const double scale = std::sqrt(std::max(model.eigenvalues[j], 1e-300));
            CHECK(std::abs(scores.scores.col(j).mean()) < 1e-8 * scale + 1e-12);
        }
    }
}

TEST_CASE("eigenvalues match the general dense eigensolver oracle") {
    for (const auto& [n, P, D] : {std::tuple{6, 15, 2}, std::tuple{4, 9, 1},
                                  std::tuple{5, 11, 2}}) {
        const auto sample = random_sample(n, P, D, 900 + static_cast<std::uint64_t>(P));
        const TimeGrid& grid = sample[0].grid();
        const auto [model, scores] = fpca(sample, n - 1, grid);

        // covariance built from scratch around the exact pointwise mean,
        // point-major flattening, handed to the general eigensolver
        Eigen::MatrixXd X(n, P * D);
        for (int i = 0; i < n; ++i)
            for (Eigen::Index p = 0; p < P; ++p)
                for (Eigen::Index d = 0; d < D; ++d)
                    X(i, p * D + d) = sample[static_cast<size_t>(i)].values()(p, d);
        const Eigen::RowVectorXd mean = X.colwise().mean();
        X.rowwise() -= mean;
        const Eigen::MatrixXd C = X.transpose() * X / (n - 1);

        const Eigen::VectorXd oracle =
            oracles::operator_eigenvalues(C, replicated_weights(grid, D));
        for (Eigen::Index j = 0; j < model.n_components; ++j) {
            if (oracle[j] < 1e-10) continue;
            CHECK(std::abs(model.eigenvalues[j] - oracle[j]) / oracle[j] < 1e-9);
        }
    }
}

TEST_CASE("component-count preconditions") {
    const auto sample = random_sample(4, 10, 1, 77);
    CHECK_THROWS_AS(fpca(sample, 0, sample[0].grid()), std::invalid_argument);
    CHECK_THROWS_AS(fpca(sample, 4, sample[0].grid()), std::invalid_argument);  // > n-1
    CHECK_THROWS_AS(fpca({sample[0]}, 1, sample[0].grid()), std::invalid_argument);
}

TEST_CASE("scores of the mean are zero; a shifted mean scores its own coefficient") {
    const auto sample = random_sample(6, 13, 1, 314);
    const TimeGrid& grid = sample[0].grid();
    const auto [model, scores] = fpca(sample, 3, grid);

    const MultiChannelCurve mean_curve = from_values(grid, model.mean_values,
                                                     model.channel_labels);
    CHECK(pc_scores(mean_curve, model).cwiseAbs().maxCoeff() < 1e-10);

    const double c = 0.8;
    Eigen::MatrixXd shifted = model.mean_values + c * model.eigenfunctions[0];
    const Eigen::VectorXd s = pc_scores(from_values(grid, shifted, model.channel_labels), model);
    CHECK(s[0] == doctest::Approx(c).epsilon(1e-6));
    for (Eigen::Index j = 1; j < 3; ++j) CHECK(std::abs(s[j]) < 1e-6);
}

TEST_CASE("scores equal the quadrature projection computed independently") {
    const auto sample = random_sample(5, 11, 2, 2718);
    const TimeGrid& grid = sample[0].grid();
    const auto [model, scores] = fpca(sample, 4, grid);
    const Eigen::VectorXd w = trapezoid_weights(grid);

    for (size_t i = 0; i < sample.size(); ++i) {
        const Eigen::MatrixXd centered = sample[i].values() - model.mean_values;
        for (Eigen::Index j = 0; j < 4; ++j) {
            double proj = 0.0;
            for (Eigen::Index d = 0; d < 2; ++d)
                proj += (w.array() * centered.col(d).array() *
                         model.eigenfunctions[static_cast<size_t>(j)].col(d).array())
                            .sum();
            CHECK(scores.scores(static_cast<Eigen::Index>(i), j) ==
                  doctest::Approx(proj).epsilon(1e-9));
        }
    }
}

TEST_CASE("reconstruction: mean at zero scores, completeness at full rank, monotone error") {
    const auto sample = random_sample(6, 14, 2, 99);
    const TimeGrid& grid = sample[0].grid();
    const Eigen::Index J = 5;
    const auto [model, scores] = fpca(sample, J, grid);
    const Eigen::VectorXd w = trapezoid_weights(grid);

    const MultiChannelCurve at_mean = kl_reconstruct(model, Eigen::VectorXd::Zero(J));
    CHECK((at_mean.values() - model.mean_values).cwiseAbs().maxCoeff() < 1e-12);

    auto l2_err = [&](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
        double acc = 0.0;
        for (Eigen::Index d = 0; d < a.cols(); ++d)
            acc += (w.array() * (a.col(d) - b.col(d)).array().square()).sum();
        return std::sqrt(acc);
    };

    for (size_t i = 0; i < sample.size(); ++i) {
        const Eigen::VectorXd row = scores.scores.row(static_cast<Eigen::Index>(i));
        double prev = std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 1; j <= J; ++j) {
            const double err =
                l2_err(kl_reconstruct(model, row.head(j)).values(), sample[i].values());
            CHECK(err <= prev + 1e-12);
            prev = err;
        }
        CHECK(prev < 1e-5);  // full-rank reconstruction
    }

    CHECK_THROWS_AS(kl_reconstruct(model, Eigen::VectorXd::Zero(J + 1)),
                    std::invalid_argument);
}

TEST_CASE("component count selection by explained variance") {
    Eigen::VectorXd ev(4);
    ev << 8.0, 1.0, 0.9, 0.1;
    CHECK(choose_n_components(ev, 0.5) == 1);
    CHECK(choose_n_components(ev, 0.9) == 2);
    CHECK(choose_n_components(ev, 0.95) == 3);
    CHECK(choose_n_components(ev, 0.9999) == 4);
    CHECK(choose_n_components(Eigen::VectorXd::Zero(3), 0.95) == 1);
}

}  // TEST_SUITE
