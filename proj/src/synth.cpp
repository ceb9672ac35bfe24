#include "aufda/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <stdexcept>

#include "aufda/rng.hpp"

namespace aufda {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

void validate(const SynthConfig& cfg) {
    require(cfg.K >= 1, "K must be positive");
    require(cfg.G >= 1, "G must be positive");
    require(!cfg.channels.empty(), "at least one channel spec required");
    std::set<std::string> seen;
    for (const auto& ch : cfg.channels) {
        require(seen.insert(ch.label).second, "duplicate channel label '" + ch.label + "'");
        require(static_cast<Eigen::Index>(ch.alphas.size()) == cfg.G,
                "channel '" + ch.label + "' needs exactly G effect shapes");
        for (const auto& b : ch.mu0.bumps) require(b.width > 0.0, "bump width must be positive");
        for (const auto& a : ch.alphas)
            for (const auto& b : a.bumps) require(b.width > 0.0, "bump width must be positive");
    }
    require(cfg.noise_sd >= 0.0, "noise_sd must be non-negative");
    require(cfg.warp_sd >= 0.0, "warp_sd must be non-negative");
    require(cfg.ar1 >= 0.0 && cfg.ar1 < 1.0, "ar1 must be in [0,1)");
    if (cfg.warp_sd > 0.0)
        require(std::abs(cfg.grid.domain_end() - 1.0) < 1e-12,
                "warped generation requires the [0,1] domain");
}

// Group effect recentered against the group average, so the zero-sum
// constraint holds exactly wherever the shape is evaluated.
double eval_alpha(const ChannelSpec& ch, Eigen::Index g, double t) {
    double mean = 0.0;
    for (const auto& shape : ch.alphas) mean += eval_shape(shape, t);
    mean /= static_cast<double>(ch.alphas.size());
    return eval_shape(ch.alphas[static_cast<size_t>(g)], t) - mean;
}

// Truth for group g (0 = neutral, no effect) at an arbitrary time.
double eval_truth(const ChannelSpec& ch, Eigen::Index g, double t) {
    const double base = eval_shape(ch.mu0, t);
    return g == 0 ? base : base + eval_alpha(ch, g - 1, t);
}

std::vector<Warp> draw_centered_warps(const SynthConfig& cfg, Eigen::Index n_videos,
                                      const Rng& base) {
    const Warp id = Warp::identity(cfg.warp_basis_size);
    std::vector<Warp> warps;
    warps.reserve(static_cast<size_t>(n_videos));
    Rng stream = base.fork(1);
    for (Eigen::Index i = 0; i < n_videos; ++i) {
        Rng r = stream.fork(static_cast<std::uint64_t>(i));
        Eigen::VectorXd theta = id.coefficients();
        for (Eigen::Index c = 0; c < theta.size(); ++c) theta[c] += cfg.warp_sd * r.gaussian();
        warps.emplace_back(id.basis(), theta);
    }
    // Discrete centering: compose with the inverse mean until the set mean
    // tracks the identity.
    for (int round = 0; round < 3; ++round) {
        const Warp m = mean_warp(warps);
        double dev = 0.0;
        for (int j = 0; j <= 200; ++j) {
            const double t = static_cast<double>(j) / 200.0;
            dev = std::max(dev, std::abs(m(t) - t));
        }
        if (dev < 1e-3) break;
        const Warp m_inv = invert_warp(m, 5e-3);
        for (auto& w : warps) w = compose_warps(w, m_inv);
    }
    return warps;
}

}  // namespace

double eval_shape(const ShapeSpec& shape, double t) {
    double v = shape.intercept + shape.slope * t;
    for (const auto& b : shape.bumps) {
        const double z = (t - b.center) / b.width;
        v += b.amplitude * std::exp(-0.5 * z * z);
    }
    return v;
}

std::pair<std::vector<MultiChannelCurve>, GroundTruth> generate(const SynthConfig& cfg) {
    validate(cfg);
    const Eigen::Index P = cfg.grid.size();
    const Eigen::Index D = static_cast<Eigen::Index>(cfg.channels.size());
    const Eigen::Index n_videos = (cfg.G + 1) * cfg.K;
    const Eigen::VectorXd& t = cfg.grid.points();
    const Rng base(cfg.seed);

    GroundTruth truth;
    truth.grid = cfg.grid;
    truth.mu0.resize(P, D);
    for (Eigen::Index d = 0; d < D; ++d) {
        truth.labels.push_back(cfg.channels[static_cast<size_t>(d)].label);
        for (Eigen::Index p = 0; p < P; ++p)
            truth.mu0(p, d) = eval_shape(cfg.channels[static_cast<size_t>(d)].mu0, t[p]);
    }
    for (Eigen::Index g = 0; g < cfg.G; ++g) {
        Eigen::MatrixXd a(P, D);
        for (Eigen::Index d = 0; d < D; ++d)
            for (Eigen::Index p = 0; p < P; ++p)
                a(p, d) = eval_alpha(cfg.channels[static_cast<size_t>(d)], g, t[p]);
        truth.alphas.push_back(std::move(a));
    }
    if (cfg.warp_sd > 0.0) truth.warps = draw_centered_warps(cfg, n_videos, base);

    std::vector<MultiChannelCurve> curves;
    curves.reserve(static_cast<size_t>(n_videos));
    const Rng noise_base = base.fork(2);
    for (Eigen::Index g = 0; g <= cfg.G; ++g) {
        for (Eigen::Index k = 0; k < cfg.K; ++k) {
            const Eigen::Index i = g * cfg.K + k;
            Eigen::MatrixXd values(P, D);
            for (Eigen::Index d = 0; d < D; ++d) {
                Rng r = noise_base.fork(static_cast<std::uint64_t>(i))
                            .fork(static_cast<std::uint64_t>(d));
                double prev = 0.0;
                for (Eigen::Index p = 0; p < P; ++p) {
                    const double time =
                        truth.warps.empty() ? t[p]
                                            : std::clamp(truth.warps[static_cast<size_t>(i)](t[p]),
                                                         0.0, 1.0);
                    double eps = cfg.noise_sd * r.gaussian();
                    if (cfg.ar1 > 0.0) {
                        eps = p == 0 ? eps : cfg.ar1 * prev + std::sqrt(1.0 - cfg.ar1 * cfg.ar1) * eps;
                        prev = eps;
                    }
                    double v = eval_truth(cfg.channels[static_cast<size_t>(d)], g, time) + eps;
                    if (cfg.clamp) v = std::clamp(v, 0.0, 5.0);
                    values(p, d) = v;
                }
            }
            CurveMeta meta;
            meta.group = static_cast<int>(g);
            meta.group_label = "group" + std::to_string(g);
            char id[32];
            std::snprintf(id, sizeof(id), "synth-%02d-%02d", static_cast<int>(g),
                          static_cast<int>(k));
            meta.video_id = id;
            meta.actor = "synth";
            curves.emplace_back(cfg.grid, std::move(values), truth.labels, std::move(meta));
        }
    }
    return {std::move(curves), std::move(truth)};
}

}  // namespace aufda
