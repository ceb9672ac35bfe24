#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aufda/fanova.hpp"
#include "aufda/io.hpp"
#include "aufda/registration.hpp"
#include "aufda/synth.hpp"

namespace aufda {

/// Full-run settings. JSON config files carry exactly these fields; unknown
/// keys are rejected so typos cannot silently fall back to defaults.
struct PipelineConfig {
    Eigen::Index n_basis = 20;
    int order = 4;
    double lambda = 1e-4;            // roughness penalty of the smoothing step
    Eigen::Index grid_points = 101;  // internal evaluation grid on [0,1]
    std::string reference_au = "AU25";
    RegistrationConfig registration;  // n_components here is the FPCA template J
    double alpha = 0.05;
    int n_permutations = 1000;
    std::uint64_t seed = 0;
    std::vector<std::string> channels = canonical_au_labels();
    ZoneLevel zone_level = ZoneLevel::pointwise;  // line defining effect classes
    std::string out_dir;
};

PipelineConfig parse_pipeline_config(const nlohmann::json& j);
PipelineConfig load_pipeline_config(const std::string& path);

/// Synth scenario files: K, G, grid_points, noise/warp levels and per-channel
/// shape specs.
SynthConfig parse_synth_config(const nlohmann::json& j);
SynthConfig load_synth_config(const std::string& path);

/// One emotion effect on one AU: the fitted effect curve plus its F-test.
struct EffectAnalysis {
    int group = 0;
    std::string emotion;
    Eigen::VectorXd alpha;  // fitted effect on the internal grid
    FTestReport test;
};

struct ChannelAnalysis {
    std::string au;
    Eigen::VectorXd mu0;  // fitted grand mean on the internal grid
    std::vector<EffectAnalysis> effects;  // one per emotion group 1..G
};

struct PipelineResult {
    TimeGrid grid;
    Eigen::Index K = 0;
    Eigen::Index G = 0;
    std::vector<std::string> group_labels;  // size G+1, index = group
    std::vector<ChannelAnalysis> channels;  // canonical config order
    int registration_iterations = 0;
    bool registration_converged = false;
};

/// Per-(AU, emotion) constrained fit and F-test on an already smoothed (and
/// typically registered) sample sharing one grid. Curves may arrive in any
/// order; they are sorted by (group, video id) before the design is built.
PipelineResult analyze_sample(const std::vector<MultiChannelCurve>& sample,
                              const PipelineConfig& config);

/// smooth -> register by reference -> analyze_sample.
PipelineResult run_pipeline(const std::vector<VideoRecord>& videos,
                            const PipelineConfig& config);

/// Ingest every *.csv under input_dir, run, and write report.json,
/// timeline.csv and summary.csv into config.out_dir.
PipelineResult run_pipeline(const PipelineConfig& config, const std::string& input_dir,
                            const Manifest* manifest = nullptr);

nlohmann::ordered_json report_to_json(const PipelineResult& result,
                                      const PipelineConfig& config);

/// report.json, timeline.csv (plot-ready FRATIO lines) and summary.csv
/// (per-emotion significant AUs at the max-statistic level).
void write_report_files(const PipelineResult& result, const PipelineConfig& config,
                        const std::string& out_dir);

/// Plot data for one (AU, emotion) cell of a report:
/// t, mu0, mu0_plus_alpha, fratio, pointwise_crit, max_crit.
std::string emit_plot_data(const nlohmann::ordered_json& report, const std::string& au,
                           const std::string& emotion);

}  // namespace aufda
