#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "aufda/fdcore.hpp"
#include "aufda/registration.hpp"

namespace aufda {

/// Gaussian bump amplitude * exp(-((t-center)/width)^2 / 2).
struct Bump {
    double center = 0.5;
    double width = 0.1;
    double amplitude = 1.0;
};

/// Parametric shape: linear trend plus a sum of Gaussian bumps.
struct ShapeSpec {
    double intercept = 0.0;
    double slope = 0.0;
    std::vector<Bump> bumps;
};

double eval_shape(const ShapeSpec& shape, double t);

/// One synthetic channel: a grand mean shape and one effect shape per group.
/// Effects are recentered at evaluation time so they sum to zero exactly.
struct ChannelSpec {
    std::string label;
    ShapeSpec mu0;
    std::vector<ShapeSpec> alphas;  // size G (groups 1..G; neutral has none)
};

struct SynthConfig {
    Eigen::Index K = 6;  // curves per group
    Eigen::Index G = 7;  // emotion groups beyond neutral
    TimeGrid grid = TimeGrid::uniform(1.0, 101);
    std::vector<ChannelSpec> channels;
    double noise_sd = 0.1;
    double warp_sd = 0.0;   // coefficient dispersion of random warps (0 = none)
    double ar1 = 0.0;       // optional AR(1) correlation of the noise across points
    bool clamp = false;     // clip outputs to the AU intensity range [0,5]
    Eigen::Index warp_basis_size = 8;
    std::uint64_t seed = 0;
};

/// Everything the generator knows: truth values on the grid (alphas already
/// recentered) and the per-video warps (empty when warp_sd = 0).
struct GroundTruth {
    TimeGrid grid;
    std::vector<std::string> labels;
    Eigen::MatrixXd mu0;                 // P x D
    std::vector<Eigen::MatrixXd> alphas; // G entries, each P x D
    std::vector<Warp> warps;             // (G+1)*K entries or empty
};

/// y_{k,g}(t) = mu0(t) + alpha_g(t) + noise, observed through a random
/// centered warp when warp_sd > 0. Videos are ordered group-major (all
/// neutral first), matching build_design_matrix rows. Each curve reads its
/// own forked RNG stream, so output is independent of generation order.
std::pair<std::vector<MultiChannelCurve>, GroundTruth> generate(const SynthConfig& config);

}  // namespace aufda
