#include "aufda/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>

#include "aufda/parallel.hpp"
#include "aufda/rng.hpp"

namespace aufda {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

void check_keys(const json& j, const std::vector<std::string>& allowed,
                const std::string& where) {
    require(j.is_object(), where + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
            throw std::invalid_argument(where + ": unknown key '" + it.key() + "'");
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument(path + ": cannot open file");
    json j;
    in >> j;
    return j;
}

std::string format_value(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::vector<double> to_std(const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

std::string zone_level_name(ZoneLevel z) {
    return z == ZoneLevel::pointwise ? "pointwise" : "max_statistic";
}

ZoneLevel zone_level_from_name(const std::string& s, const std::string& where) {
    if (s == "pointwise") return ZoneLevel::pointwise;
    if (s == "max_statistic") return ZoneLevel::max_statistic;
    throw std::invalid_argument(where + ": zone_level must be 'pointwise' or 'max_statistic'");
}

ordered_json zones_to_json(const std::vector<Interval>& zones) {
    ordered_json out = ordered_json::array();
    for (const auto& z : zones) out.push_back({z.begin, z.end});
    return out;
}

ShapeSpec parse_shape(const json& j, const std::string& where) {
    check_keys(j, {"intercept", "slope", "bumps"}, where);
    ShapeSpec s;
    s.intercept = j.value("intercept", 0.0);
    s.slope = j.value("slope", 0.0);
    if (j.contains("bumps")) {
        require(j["bumps"].is_array(), where + ": bumps must be an array");
        for (const auto& bj : j["bumps"]) {
            check_keys(bj, {"center", "width", "amplitude"}, where + ".bumps");
            Bump b;
            b.center = bj.value("center", 0.5);
            b.width = bj.value("width", 0.1);
            b.amplitude = bj.value("amplitude", 1.0);
            s.bumps.push_back(b);
        }
    }
    return s;
}

}  // namespace

PipelineConfig parse_pipeline_config(const json& j) {
    check_keys(j,
               {"n_basis", "order", "lambda", "grid_points", "reference_au", "registration",
                "alpha", "n_permutations", "seed", "channels", "zone_level", "out_dir"},
               "pipeline config");
    PipelineConfig cfg;
    cfg.n_basis = j.value("n_basis", cfg.n_basis);
    cfg.order = j.value("order", cfg.order);
    cfg.lambda = j.value("lambda", cfg.lambda);
    cfg.grid_points = j.value("grid_points", cfg.grid_points);
    cfg.reference_au = j.value("reference_au", cfg.reference_au);
    cfg.alpha = j.value("alpha", cfg.alpha);
    cfg.n_permutations = j.value("n_permutations", cfg.n_permutations);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.out_dir = j.value("out_dir", cfg.out_dir);
    if (j.contains("zone_level"))
        cfg.zone_level = zone_level_from_name(j["zone_level"].get<std::string>(),
                                              "pipeline config");
    if (j.contains("channels")) {
        cfg.channels = j["channels"].get<std::vector<std::string>>();
    }
    if (j.contains("registration")) {
        const json& r = j["registration"];
        check_keys(r, {"n_components", "max_iter", "tol", "warp_basis_size", "kappa_scale"},
                   "pipeline config.registration");
        cfg.registration.n_components = r.value("n_components", cfg.registration.n_components);
        cfg.registration.max_iter = r.value("max_iter", cfg.registration.max_iter);
        cfg.registration.tol = r.value("tol", cfg.registration.tol);
        cfg.registration.warp_basis_size =
            r.value("warp_basis_size", cfg.registration.warp_basis_size);
        cfg.registration.kappa_scale = r.value("kappa_scale", cfg.registration.kappa_scale);
    }

    require(cfg.order >= 2 && cfg.order <= 10, "pipeline config: order must be in [2,10]");
    require(cfg.n_basis >= cfg.order, "pipeline config: n_basis must be at least order");
    require(cfg.lambda >= 0.0, "pipeline config: lambda must be non-negative");
    require(cfg.grid_points >= 5, "pipeline config: grid_points must be at least 5");
    require(cfg.alpha > 0.0 && cfg.alpha < 1.0, "pipeline config: alpha must be in (0,1)");
    require(cfg.n_permutations >= 100,
            "pipeline config: n_permutations must be at least 100");
    require(!cfg.channels.empty(), "pipeline config: channels must be non-empty");
    std::set<std::string> seen(cfg.channels.begin(), cfg.channels.end());
    require(seen.size() == cfg.channels.size(), "pipeline config: duplicate channel labels");
    require(seen.count(cfg.reference_au) == 1,
            "pipeline config: reference_au '" + cfg.reference_au + "' not among channels");
    return cfg;
}

PipelineConfig load_pipeline_config(const std::string& path) {
    return parse_pipeline_config(read_json_file(path));
}

SynthConfig parse_synth_config(const json& j) {
    check_keys(j,
               {"K", "G", "grid_points", "channels", "noise_sd", "warp_sd", "ar1", "clamp",
                "warp_basis_size", "seed"},
               "synth config");
    SynthConfig cfg;
    cfg.K = j.value("K", cfg.K);
    cfg.G = j.value("G", cfg.G);
    cfg.grid = TimeGrid::uniform(1.0, j.value("grid_points", Eigen::Index{101}));
    cfg.noise_sd = j.value("noise_sd", cfg.noise_sd);
    cfg.warp_sd = j.value("warp_sd", cfg.warp_sd);
    cfg.ar1 = j.value("ar1", cfg.ar1);
    cfg.clamp = j.value("clamp", cfg.clamp);
    cfg.warp_basis_size = j.value("warp_basis_size", cfg.warp_basis_size);
    cfg.seed = j.value("seed", cfg.seed);
    require(j.contains("channels"), "synth config: channels required");
    for (const auto& cj : j["channels"]) {
        check_keys(cj, {"label", "mu0", "alphas"}, "synth config.channels");
        ChannelSpec ch;
        require(cj.contains("label"), "synth config: channel label required");
        ch.label = cj["label"].get<std::string>();
        if (cj.contains("mu0")) ch.mu0 = parse_shape(cj["mu0"], "channel " + ch.label + ".mu0");
        if (cj.contains("alphas"))
            for (const auto& aj : cj["alphas"])
                ch.alphas.push_back(parse_shape(aj, "channel " + ch.label + ".alphas"));
        ch.alphas.resize(static_cast<size_t>(cfg.G));  // pad missing groups with zero effects
        cfg.channels.push_back(std::move(ch));
    }
    return cfg;
}

SynthConfig load_synth_config(const std::string& path) {
    return parse_synth_config(read_json_file(path));
}

PipelineResult analyze_sample(const std::vector<MultiChannelCurve>& sample,
                              const PipelineConfig& cfg) {
    require(!sample.empty(), "no input curves");
    const TimeGrid& grid = sample.front().grid();
    for (const auto& c : sample)
        require(c.grid().same_points_as(grid),
                "curve '" + c.meta().video_id + "' is not on the common grid");

    // Group layout: contiguous groups 0..G, equal size, at least two each.
    std::map<int, std::vector<size_t>> groups;
    for (size_t i = 0; i < sample.size(); ++i) {
        require(sample[i].meta().group >= 0, "video '" + sample[i].meta().video_id +
                                                 "' has a negative group index");
        groups[sample[i].meta().group].push_back(i);
    }
    const int G = groups.rbegin()->first;
    require(G >= 1, "need at least one emotion group besides neutral");
    for (int g = 0; g <= G; ++g)
        require(groups.count(g) == 1, "no videos for group " + std::to_string(g) + " (" +
                                          emotion_label_for_group(g) + ")");
    const size_t K = groups[0].size();
    for (int g = 0; g <= G; ++g) {
        require(groups[g].size() == K, "group " + std::to_string(g) + " has " +
                                           std::to_string(groups[g].size()) +
                                           " videos, group 0 has " + std::to_string(K));
    }
    require(K >= 2, "need at least 2 videos per emotion group");

    std::vector<const MultiChannelCurve*> ordered;
    std::vector<std::string> group_labels;
    for (int g = 0; g <= G; ++g) {
        auto& idx = groups[g];
        std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
            return sample[a].meta().video_id < sample[b].meta().video_id;
        });
        group_labels.push_back(sample[idx.front()].meta().group_label);
        for (size_t i : idx) ordered.push_back(&sample[i]);
    }

    // Constrained fit + F-test per (AU, emotion).
    const Eigen::Index D = static_cast<Eigen::Index>(cfg.channels.size());
    const DesignMatrix Z = build_design_matrix(static_cast<Eigen::Index>(K), G);
    const ConstraintRow L = zero_sum_constraint(G);
    const Rng seeder(cfg.seed);

    PipelineResult result;
    result.grid = grid;
    result.K = static_cast<Eigen::Index>(K);
    result.G = G;
    result.group_labels = group_labels;
    result.channels.resize(static_cast<size_t>(D));

    std::vector<std::vector<Curve>> per_channel_rows(static_cast<size_t>(D));
    for (Eigen::Index d = 0; d < D; ++d) {
        const std::string& label = cfg.channels[static_cast<size_t>(d)];
        auto& rows = per_channel_rows[static_cast<size_t>(d)];
        rows.reserve(ordered.size());
        for (const MultiChannelCurve* curve : ordered) {
            const Eigen::Index c = curve->channel_index(label);
            require(c >= 0, "video '" + curve->meta().video_id + "' has no channel '" +
                                label + "'");
            rows.push_back(curve->channel(c));
        }
    }

    for (Eigen::Index d = 0; d < D; ++d) {
        auto& analysis = result.channels[static_cast<size_t>(d)];
        analysis.au = cfg.channels[static_cast<size_t>(d)];
        const FanovaFit fit = fit_flm(per_channel_rows[static_cast<size_t>(d)], Z, L);
        analysis.mu0 = fit.beta.row(0).transpose();
        analysis.effects.resize(static_cast<size_t>(G));
        for (int g = 1; g <= G; ++g) {
            auto& e = analysis.effects[static_cast<size_t>(g - 1)];
            e.group = g;
            e.emotion = group_labels[static_cast<size_t>(g)];
            e.alpha = fit.beta.row(g).transpose();
        }
    }

    struct Task {
        Eigen::Index d;
        int g;
        std::uint64_t seed;
    };
    std::vector<Task> tasks;
    for (Eigen::Index d = 0; d < D; ++d)
        for (int g = 1; g <= G; ++g)
            tasks.push_back({d, g,
                             seeder.fork(static_cast<std::uint64_t>(d))
                                 .fork(static_cast<std::uint64_t>(g))
                                 .next()});
    parallel_for(tasks.size(), [&](size_t ti) {
        const Task& task = tasks[ti];
        auto& analysis = result.channels[static_cast<size_t>(task.d)];
        try {
            analysis.effects[static_cast<size_t>(task.g - 1)].test =
                ftest(per_channel_rows[static_cast<size_t>(task.d)], Z, L, task.g, cfg.alpha,
                      cfg.n_permutations, task.seed, cfg.zone_level);
        } catch (const std::exception& e) {
            throw std::runtime_error("fanova stage failed for AU '" + analysis.au +
                                     "' emotion '" +
                                     result.group_labels[static_cast<size_t>(task.g)] +
                                     "': " + e.what());
        }
    });
    return result;
}

PipelineResult run_pipeline(const std::vector<VideoRecord>& videos,
                            const PipelineConfig& cfg) {
    require(!videos.empty(), "no input videos");

    // Stage 1: smooth every channel onto the internal grid.
    const TimeGrid grid = TimeGrid::uniform(1.0, cfg.grid_points);
    const BSplineBasis basis = make_bspline_basis(1.0, cfg.n_basis, cfg.order);
    const Eigen::Index D = static_cast<Eigen::Index>(cfg.channels.size());
    std::vector<std::optional<MultiChannelCurve>> smoothed(videos.size());
    parallel_for(videos.size(), [&](size_t i) {
        const VideoRecord& v = videos[i];
        try {
            Eigen::MatrixXd vals(grid.size(), D);
            for (Eigen::Index d = 0; d < D; ++d) {
                const std::string& label = cfg.channels[static_cast<size_t>(d)];
                const Eigen::Index c = v.curve.channel_index(label);
                if (c < 0) throw std::invalid_argument("channel " + label + " missing");
                vals.col(d) =
                    eval_expansion(smooth_curve(v.curve.channel(c), basis, cfg.lambda), grid)
                        .values();
            }
            smoothed[i] = MultiChannelCurve(grid, std::move(vals), cfg.channels, v.meta);
        } catch (const std::exception& e) {
            throw std::runtime_error("smooth stage failed for '" + v.meta.video_id +
                                     "': " + e.what());
        }
    });
    std::vector<MultiChannelCurve> sample;
    sample.reserve(smoothed.size());
    for (auto& s : smoothed) sample.push_back(std::move(*s));

    // Stage 2: registration driven by the reference channel.
    RegistrationResult reg;
    try {
        reg = register_by_reference(sample, cfg.reference_au, cfg.registration);
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("register stage failed: ") + e.what());
    }

    // Stage 3: per-(AU, emotion) analysis of the registered sample.
    PipelineResult result = analyze_sample(reg.registered, cfg);
    result.registration_iterations = reg.n_iterations;
    result.registration_converged = reg.converged;
    return result;
}

PipelineResult run_pipeline(const PipelineConfig& cfg, const std::string& input_dir,
                            const Manifest* manifest) {
    require(fs::is_directory(input_dir), "input directory '" + input_dir + "' not found");
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(input_dir))
        if (entry.is_regular_file() && entry.path().extension() == ".csv")
            files.push_back(entry.path().string());
    std::sort(files.begin(), files.end());
    require(!files.empty(), "no input CSV files in '" + input_dir + "'");
    std::vector<VideoRecord> videos;
    videos.reserve(files.size());
    for (const auto& f : files) videos.push_back(ingest_csv(f, manifest, cfg.channels));
    PipelineResult result = run_pipeline(videos, cfg);
    require(!cfg.out_dir.empty(), "output directory not set");
    write_report_files(result, cfg, cfg.out_dir);
    return result;
}

nlohmann::ordered_json report_to_json(const PipelineResult& result,
                                      const PipelineConfig& cfg) {
    ordered_json j;
    j["schema_version"] = 1;
    j["config"] = {{"n_basis", cfg.n_basis},
                   {"order", cfg.order},
                   {"lambda", cfg.lambda},
                   {"grid_points", cfg.grid_points},
                   {"reference_au", cfg.reference_au},
                   {"alpha", cfg.alpha},
                   {"n_permutations", cfg.n_permutations},
                   {"seed", cfg.seed},
                   {"zone_level", zone_level_name(cfg.zone_level)},
                   {"registration",
                    {{"n_components", cfg.registration.n_components},
                     {"max_iter", cfg.registration.max_iter},
                     {"tol", cfg.registration.tol},
                     {"warp_basis_size", cfg.registration.warp_basis_size},
                     {"kappa_scale", cfg.registration.kappa_scale}}},
                   {"channels", cfg.channels}};
    j["grid"] = to_std(result.grid.points());
    j["registration"] = {{"n_iterations", result.registration_iterations},
                         {"converged", result.registration_converged}};
    ordered_json emotions = ordered_json::array();
    for (size_t g = 1; g < result.group_labels.size(); ++g)
        emotions.push_back({{"group", g}, {"label", result.group_labels[g]}});
    j["emotions"] = emotions;

    ordered_json channels = ordered_json::array();
    for (const auto& ch : result.channels) {
        ordered_json cj;
        cj["au"] = ch.au;
        cj["mu0"] = to_std(ch.mu0);
        ordered_json effects = ordered_json::array();
        for (const auto& e : ch.effects) {
            ordered_json ej;
            ej["group"] = e.group;
            ej["emotion"] = e.emotion;
            ej["alpha"] = to_std(e.alpha);
            ej["fratio"] = to_std(e.test.fratio.values());
            ej["df_model"] = e.test.df_model;
            ej["df_error"] = e.test.df_error;
            ej["pointwise_critical"] = e.test.pointwise_critical;
            ej["max_critical"] = e.test.max_critical;
            ej["max_fratio"] = e.test.max_fratio;
            ej["zones_pointwise"] = zones_to_json(e.test.zones_pointwise);
            ej["zones_max"] = zones_to_json(e.test.zones_max);
            ej["significant_zones"] = zones_to_json(e.test.significant_zones);
            ej["effect_class"] = to_string(e.test.effect_class);
            effects.push_back(std::move(ej));
        }
        cj["effects"] = std::move(effects);
        channels.push_back(std::move(cj));
    }
    j["channels"] = std::move(channels);
    return j;
}

void write_report_files(const PipelineResult& result, const PipelineConfig& cfg,
                        const std::string& out_dir) {
    fs::create_directories(out_dir);
    {
        std::ofstream out(fs::path(out_dir) / "report.json");
        if (!out) throw std::invalid_argument(out_dir + "/report.json: cannot open for writing");
        out << report_to_json(result, cfg).dump(2) << "\n";
    }
    {
        std::ofstream out(fs::path(out_dir) / "timeline.csv");
        if (!out) throw std::invalid_argument(out_dir + "/timeline.csv: cannot open for writing");
        out << "au,emotion,t,fratio,pointwise_critical,max_critical\n";
        const Eigen::VectorXd& t = result.grid.points();
        for (const auto& ch : result.channels)
            for (const auto& e : ch.effects)
                for (Eigen::Index p = 0; p < t.size(); ++p)
                    out << ch.au << "," << e.emotion << "," << format_value(t[p]) << ","
                        << format_value(e.test.fratio.values()[p]) << ","
                        << format_value(e.test.pointwise_critical) << ","
                        << format_value(e.test.max_critical) << "\n";
    }
    {
        std::ofstream out(fs::path(out_dir) / "summary.csv");
        if (!out) throw std::invalid_argument(out_dir + "/summary.csv: cannot open for writing");
        out << "emotion,significant_aus\n";
        for (size_t g = 1; g < result.group_labels.size(); ++g) {
            std::string aus;
            for (const auto& ch : result.channels) {
                const auto& e = ch.effects[g - 1];
                if (!e.test.zones_max.empty()) aus += (aus.empty() ? "" : ";") + ch.au;
            }
            out << result.group_labels[g] << "," << aus << "\n";
        }
    }
}

std::string emit_plot_data(const nlohmann::ordered_json& report, const std::string& au,
                           const std::string& emotion) {
    const auto& channels = report.at("channels");
    const ordered_json* channel = nullptr;
    for (const auto& cj : channels)
        if (cj.at("au").get<std::string>() == au) channel = &cj;
    if (!channel) throw std::invalid_argument("unknown AU '" + au + "'");
    const ordered_json* effect = nullptr;
    for (const auto& ej : channel->at("effects"))
        if (ej.at("emotion").get<std::string>() == emotion) effect = &ej;
    if (!effect) throw std::invalid_argument("unknown emotion '" + emotion + "'");

    const auto t = report.at("grid").get<std::vector<double>>();
    const auto mu0 = channel->at("mu0").get<std::vector<double>>();
    const auto alpha = effect->at("alpha").get<std::vector<double>>();
    const auto fratio = effect->at("fratio").get<std::vector<double>>();
    const double pc = effect->at("pointwise_critical").get<double>();
    const double mc = effect->at("max_critical").get<double>();

    std::ostringstream out;
    out << "t,mu0,mu0_plus_alpha,fratio,pointwise_crit,max_crit\n";
    for (size_t p = 0; p < t.size(); ++p)
        out << format_value(t[p]) << "," << format_value(mu0[p]) << ","
            << format_value(mu0[p] + alpha[p]) << "," << format_value(fratio[p]) << ","
            << format_value(pc) << "," << format_value(mc) << "\n";
    return out.str();
}

}  // namespace aufda
