#include <cmath>
#include <vector>

#include <doctest.h>

#include "aufda/fanova.hpp"
#include "aufda/synth.hpp"

using namespace aufda;

namespace {

ChannelSpec flat_channel(const std::string& label, Eigen::Index G) {
    ChannelSpec ch;
    ch.label = label;
    ch.mu0 = ShapeSpec{0.8, 0.3, {Bump{0.5, 0.2, 0.4}}};
    ch.alphas.resize(static_cast<size_t>(G));
    return ch;
}

std::vector<Curve> channel_curves(const std::vector<MultiChannelCurve>& videos, Eigen::Index d) {
    std::vector<Curve> out;
    for (const auto& v : videos) out.push_back(v.channel(d));
    return out;
}

}  // namespace

TEST_SUITE("synth") {

TEST_CASE("shape evaluation") {
    const ShapeSpec s{1.0, 2.0, {Bump{0.5, 0.1, 3.0}}};
    CHECK(eval_shape(s, 0.5) == doctest::Approx(1.0 + 1.0 + 3.0).epsilon(1e-12));
    CHECK(eval_shape(s, 0.6) ==
          doctest::Approx(1.0 + 1.2 + 3.0 * std::exp(-0.5)).epsilon(1e-12));
    CHECK(eval_shape(ShapeSpec{}, 0.37) == 0.0);
}

TEST_CASE("config validation") {
    SynthConfig cfg;
    cfg.K = 2;
    cfg.G = 2;
    cfg.channels = {flat_channel("AU01", 2), flat_channel("AU02", 2)};

    SynthConfig bad = cfg;
    bad.channels[1].label = "AU01";
    CHECK_THROWS_WITH_AS(generate(bad), doctest::Contains("duplicate channel label"),
                         std::invalid_argument);

    bad = cfg;
    bad.channels[0].alphas.resize(1);
    CHECK_THROWS_WITH_AS(generate(bad), doctest::Contains("exactly G effect shapes"),
                         std::invalid_argument);

    bad = cfg;
    bad.noise_sd = -0.1;
    CHECK_THROWS_AS(generate(bad), std::invalid_argument);

    bad = cfg;
    bad.ar1 = 1.0;
    CHECK_THROWS_AS(generate(bad), std::invalid_argument);
    bad.ar1 = -0.2;
    CHECK_THROWS_AS(generate(bad), std::invalid_argument);

    bad = cfg;
    bad.channels[0].mu0.bumps.push_back(Bump{0.5, 0.0, 1.0});
    CHECK_THROWS_AS(generate(bad), std::invalid_argument);

    bad = cfg;
    bad.channels.clear();
    CHECK_THROWS_AS(generate(bad), std::invalid_argument);

    bad = cfg;
    bad.K = 0;
    CHECK_THROWS_AS(generate(bad), std::invalid_argument);

    bad = cfg;
    bad.warp_sd = 0.05;
    bad.grid = TimeGrid::uniform(2.0, 21);
    CHECK_THROWS_WITH_AS(generate(bad), doctest::Contains("[0,1]"), std::invalid_argument);
}

TEST_CASE("layout: group-major order, labels, metadata") {
    SynthConfig cfg;
    cfg.K = 3;
    cfg.G = 2;
    cfg.grid = TimeGrid::uniform(1.0, 11);
    cfg.channels = {flat_channel("AU06", 2), flat_channel("AU12", 2)};
    cfg.noise_sd = 0.0;
    const auto [videos, truth] = generate(cfg);

    REQUIRE(videos.size() == 9);
    CHECK(truth.labels == std::vector<std::string>{"AU06", "AU12"});
    CHECK(truth.warps.empty());
    for (size_t i = 0; i < videos.size(); ++i) {
        CHECK(videos[i].meta().group == static_cast<int>(i / 3));
        CHECK(videos[i].n_channels() == 2);
        CHECK(videos[i].grid().same_points_as(cfg.grid));
    }
    CHECK(videos[0].meta().video_id == "synth-00-00");
    CHECK(videos[8].meta().video_id == "synth-02-02");
}

TEST_CASE("truth effects sum to zero across groups") {
    SynthConfig cfg;
    cfg.K = 2;
    cfg.G = 5;
    cfg.grid = TimeGrid::uniform(1.0, 31);
    ChannelSpec ch = flat_channel("AU04", 5);
    ch.alphas[0] = ShapeSpec{0.0, 0.0, {Bump{0.4, 0.15, 1.3}}};
    ch.alphas[2] = ShapeSpec{0.2, -0.1, {Bump{0.7, 0.2, 0.6}}};
    cfg.channels = {ch};
    const auto [videos, truth] = generate(cfg);

    CHECK(videos.size() == 12);
    REQUIRE(truth.alphas.size() == 5);
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(31, 1);
    for (const auto& a : truth.alphas) sum += a;
    CHECK(sum.cwiseAbs().maxCoeff() < 1e-12);
    // the configured bump survives recentering up to the shared group average
    CHECK(truth.alphas[0].col(0).maxCoeff() > 0.5);
}

TEST_CASE("noise-free generation is exactly the truth model") {
    SynthConfig cfg;
    cfg.K = 4;
    cfg.G = 3;
    cfg.grid = TimeGrid::uniform(1.0, 41);
    ChannelSpec ch = flat_channel("AU12", 3);
    ch.alphas[1] = ShapeSpec{0.0, 0.0, {Bump{0.55, 0.18, 1.2}}};
    cfg.channels = {ch};
    cfg.noise_sd = 0.0;
    const auto [videos, truth] = generate(cfg);

    for (size_t i = 0; i < videos.size(); ++i) {
        const int g = videos[i].meta().group;
        Eigen::VectorXd want = truth.mu0.col(0);
        if (g > 0) want += truth.alphas[static_cast<size_t>(g - 1)].col(0);
        CHECK((videos[i].channel(0).values() - want).cwiseAbs().maxCoeff() == 0.0);
    }

    // the functional linear model recovers the same truth from the sample
    const DesignMatrix Z = build_design_matrix(cfg.K, cfg.G);
    const FanovaFit fit = fit_flm(channel_curves(videos, 0), Z, zero_sum_constraint(cfg.G));
    CHECK((fit.beta.row(0).transpose() - truth.mu0.col(0)).cwiseAbs().maxCoeff() < 1e-8);
    for (Eigen::Index g = 1; g <= cfg.G; ++g)
        CHECK((fit.beta.row(g).transpose() - truth.alphas[static_cast<size_t>(g - 1)].col(0))
                  .cwiseAbs()
                  .maxCoeff() < 1e-8);
}

TEST_CASE("all-zero effects with no noise give identical curves") {
    SynthConfig cfg;
    cfg.K = 3;
    cfg.G = 4;
    cfg.grid = TimeGrid::uniform(1.0, 21);
    cfg.channels = {flat_channel("AU01", 4)};
    cfg.noise_sd = 0.0;
    const auto [videos, truth] = generate(cfg);
    for (const auto& v : videos)
        CHECK((v.values() - videos.front().values()).cwiseAbs().maxCoeff() == 0.0);
    for (const auto& a : truth.alphas) CHECK(a.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("generation is a pure function of the seed") {
    SynthConfig cfg;
    cfg.K = 2;
    cfg.G = 3;
    cfg.grid = TimeGrid::uniform(1.0, 31);
    cfg.channels = {flat_channel("AU06", 3), flat_channel("AU07", 3)};
    cfg.noise_sd = 0.2;
    cfg.warp_sd = 0.03;
    cfg.seed = 424242;
    const auto [a, ta] = generate(cfg);
    const auto [b, tb] = generate(cfg);
    REQUIRE(a.size() == b.size());
    CHECK((ta.mu0 - tb.mu0).cwiseAbs().maxCoeff() == 0.0);
    for (size_t i = 0; i < a.size(); ++i)
        CHECK((a[i].values() - b[i].values()).cwiseAbs().maxCoeff() == 0.0);

    SynthConfig other = cfg;
    other.seed = 424243;
    const auto [c, tc] = generate(other);
    CHECK((ta.mu0 - tc.mu0).cwiseAbs().maxCoeff() == 0.0);  // truth shapes ignore the seed
    double diff = 0.0;
    for (size_t i = 0; i < a.size(); ++i)
        diff = std::max(diff, (a[i].values() - c[i].values()).cwiseAbs().maxCoeff());
    CHECK(diff > 0.0);
}

TEST_CASE("group means concentrate on the truth") {
    SynthConfig cfg;
    cfg.K = 200;
    cfg.G = 2;
    cfg.grid = TimeGrid::uniform(1.0, 51);
    ChannelSpec ch = flat_channel("AU15", 2);
    ch.alphas[0] = ShapeSpec{0.0, 0.0, {Bump{0.6, 0.2, 0.8}}};
    cfg.channels = {ch};
    cfg.noise_sd = 0.1;
    cfg.seed = 99;
    const auto [videos, truth] = generate(cfg);

    for (int g = 0; g <= 2; ++g) {
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(51);
        for (const auto& v : videos)
            if (v.meta().group == g) mean += v.channel(0).values();
        mean /= 200.0;
        Eigen::VectorXd want = truth.mu0.col(0);
        if (g > 0) want += truth.alphas[static_cast<size_t>(g - 1)].col(0);
        CHECK((mean - want).cwiseAbs().maxCoeff() < 0.03);
    }
}

TEST_CASE("clamping keeps values inside the AU intensity range") {
    SynthConfig cfg;
    cfg.K = 5;
    cfg.G = 2;
    cfg.grid = TimeGrid::uniform(1.0, 41);
    ChannelSpec hot = flat_channel("AU25", 2);
    hot.mu0 = ShapeSpec{4.9, 0.0, {Bump{0.5, 0.2, 1.0}}};  // exceeds 5 near the middle
    ChannelSpec cold = flat_channel("AU26", 2);
    cold.mu0 = ShapeSpec{-0.4, 0.0, {}};
    cfg.channels = {hot, cold};
    cfg.noise_sd = 0.3;
    cfg.clamp = true;
    cfg.seed = 5;
    const auto [videos, truth] = generate(cfg);
    CHECK(truth.mu0.col(0).maxCoeff() > 5.0);  // unclamped truth escapes the range

    double lo = 1e300, hi = -1e300;
    for (const auto& v : videos) {
        lo = std::min(lo, v.values().minCoeff());
        hi = std::max(hi, v.values().maxCoeff());
    }
    CHECK(lo >= 0.0);
    CHECK(hi <= 5.0);
    CHECK(hi == 5.0);  // the hot channel saturates
    CHECK(lo == 0.0);  // the cold channel saturates
}

TEST_CASE("warped generation draws centered warps") {
    SynthConfig cfg;
    cfg.K = 4;
    cfg.G = 2;
    cfg.grid = TimeGrid::uniform(1.0, 51);
    cfg.channels = {flat_channel("AU02", 2)};
    cfg.noise_sd = 0.0;
    cfg.warp_sd = 0.08;
    cfg.seed = 17;
    const auto [videos, truth] = generate(cfg);

    REQUIRE(truth.warps.size() == 12);
    const Warp m = mean_warp(truth.warps);
    double dev = 0.0, spread = 0.0;
    for (int j = 0; j <= 100; ++j) {
        const double t = static_cast<double>(j) / 100.0;
        dev = std::max(dev, std::abs(m(t) - t));
        for (const auto& w : truth.warps) spread = std::max(spread, std::abs(w(t) - t));
    }
    CHECK(dev < 5e-3);     // the set of warps is centered
    CHECK(spread > 1e-3);  // but the individual warps are not the identity

    // noise-free warped curves are the truth read through each warp
    for (size_t i = 0; i < videos.size(); ++i) {
        const int g = videos[i].meta().group;
        for (Eigen::Index p = 0; p < 51; ++p) {
            const double time = std::clamp(truth.warps[i](cfg.grid.points()[p]), 0.0, 1.0);
            double want = eval_shape(cfg.channels[0].mu0, time);
            if (g > 0) {
                // recentered effect: groups share one average, here all zero
                want += 0.0;
            }
            CHECK(videos[i].channel(0).values()[p] == doctest::Approx(want).epsilon(1e-12));
        }
    }
}

TEST_CASE("autocorrelated noise keeps the marginal scale") {
    SynthConfig cfg;
    cfg.K = 60;
    cfg.G = 1;
    cfg.grid = TimeGrid::uniform(1.0, 101);
    ChannelSpec ch;
    ch.label = "AU01";
    ch.alphas.resize(1);
    cfg.channels = {ch};  // zero mean: the curves are pure noise
    cfg.noise_sd = 0.5;
    cfg.ar1 = 0.7;
    cfg.seed = 31;
    const auto [videos, truth] = generate(cfg);
    CHECK(truth.mu0.cwiseAbs().maxCoeff() == 0.0);

    double ss = 0.0, lag = 0.0;
    Eigen::Index n = 0, nlag = 0;
    for (const auto& v : videos) {
        const Eigen::VectorXd x = v.channel(0).values();
        ss += x.squaredNorm();
        n += x.size();
        lag += (x.head(100).array() * x.tail(100).array()).sum();
        nlag += 100;
    }
    const double var = ss / static_cast<double>(n);
    const double rho = lag / static_cast<double>(nlag) / var;
    CHECK(std::abs(var - 0.25) < 0.02);  // stationary variance = noise_sd^2
    CHECK(std::abs(rho - 0.7) < 0.05);   // lag-1 autocorrelation = ar1
}

}  // TEST_SUITE
