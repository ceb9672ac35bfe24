// aufda command line front end: smooth / register / fanova / report / synth / run.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "aufda/pipeline.hpp"

namespace fs = std::filesystem;
using namespace aufda;

namespace {

struct CommonOpts {
    std::string config;
    std::string input;
    std::string out;
    std::string manifest;
    std::string reference_au;
    std::uint64_t seed = 0;
    double alpha = 0.05;
    int permutations = 1000;
    bool seed_set = false, alpha_set = false, permutations_set = false, reference_set = false;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool needs_input) {
    cmd->add_option("--config", o.config, "JSON config file");
    auto* in = cmd->add_option("--input", o.input, "input directory");
    if (needs_input) in->required();
    cmd->add_option("--out", o.out, "output directory")->required();
    cmd->add_option("--manifest", o.manifest, "CSV mapping file,group,label[,actor]");
    cmd->add_option("--seed", o.seed, "RNG seed")->each([&](const std::string&) { o.seed_set = true; });
    cmd->add_option("--alpha", o.alpha, "test level")->each([&](const std::string&) { o.alpha_set = true; });
    cmd->add_option("--permutations", o.permutations, "permutation count")
        ->each([&](const std::string&) { o.permutations_set = true; });
    cmd->add_option("--reference-au", o.reference_au, "registration reference channel")
        ->each([&](const std::string&) { o.reference_set = true; });
}

PipelineConfig make_pipeline_config(const CommonOpts& o) {
    PipelineConfig cfg = o.config.empty() ? PipelineConfig{} : load_pipeline_config(o.config);
    if (o.seed_set) cfg.seed = o.seed;
    if (o.alpha_set) cfg.alpha = o.alpha;
    if (o.permutations_set) cfg.n_permutations = o.permutations;
    if (o.reference_set) cfg.reference_au = o.reference_au;
    if (!o.out.empty()) cfg.out_dir = o.out;
    return cfg;
}

std::optional<Manifest> load_manifest(const CommonOpts& o) {
    if (o.manifest.empty()) return std::nullopt;
    return read_manifest(o.manifest);
}

std::vector<std::string> list_csvs(const std::string& dir) {
    if (!fs::is_directory(dir))
        throw std::invalid_argument("input directory '" + dir + "' not found");
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".csv")
            files.push_back(entry.path().string());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw std::invalid_argument("no input CSV files in '" + dir + "'");
    return files;
}

std::vector<MultiChannelCurve> smooth_inputs(const CommonOpts& o, const PipelineConfig& cfg) {
    const auto manifest = load_manifest(o);
    const Manifest* mp = manifest ? &*manifest : nullptr;
    const TimeGrid grid = TimeGrid::uniform(1.0, cfg.grid_points);
    const BSplineBasis basis = make_bspline_basis(1.0, cfg.n_basis, cfg.order);
    std::vector<MultiChannelCurve> out;
    for (const auto& file : list_csvs(o.input)) {
        const VideoRecord rec = ingest_csv(file, mp, cfg.channels);
        Eigen::MatrixXd vals(grid.size(), static_cast<Eigen::Index>(cfg.channels.size()));
        for (Eigen::Index d = 0; d < vals.cols(); ++d) {
            const Eigen::Index c = rec.curve.channel_index(cfg.channels[static_cast<size_t>(d)]);
            vals.col(d) =
                eval_expansion(smooth_curve(rec.curve.channel(c), basis, cfg.lambda), grid)
                    .values();
        }
        out.emplace_back(grid, std::move(vals), cfg.channels, rec.meta);
    }
    return out;
}

std::string stem_of(const std::string& id_or_path) { return fs::path(id_or_path).stem().string(); }

int cmd_smooth(const CommonOpts& o) {
    const PipelineConfig cfg = make_pipeline_config(o);
    fs::create_directories(o.out);
    for (const auto& curve : smooth_inputs(o, cfg)) {
        const std::string path = (fs::path(o.out) / (stem_of(curve.meta().video_id) + ".csv")).string();
        write_curve_csv(curve, path);
    }
    std::cout << "smoothed curves written to " << o.out << "\n";
    return 0;
}

int cmd_register(const CommonOpts& o) {
    const PipelineConfig cfg = make_pipeline_config(o);
    const auto sample = smooth_inputs(o, cfg);
    const RegistrationResult reg = register_by_reference(sample, cfg.reference_au, cfg.registration);
    fs::create_directories(o.out);
    nlohmann::ordered_json diag;
    diag["n_iterations"] = reg.n_iterations;
    diag["converged"] = reg.converged;
    diag["objective_trace"] = reg.objective_trace;
    nlohmann::ordered_json warps = nlohmann::ordered_json::array();
    const Eigen::VectorXd& t = sample.front().grid().points();
    for (size_t i = 0; i < reg.registered.size(); ++i) {
        const auto& curve = reg.registered[i];
        write_curve_csv(curve, (fs::path(o.out) / (stem_of(curve.meta().video_id) + ".csv")).string());
        std::vector<double> h(static_cast<size_t>(t.size()));
        for (Eigen::Index p = 0; p < t.size(); ++p) h[static_cast<size_t>(p)] = reg.warps[i](t[p]);
        warps.push_back({{"video_id", curve.meta().video_id}, {"h", h}});
    }
    diag["warps"] = std::move(warps);
    std::ofstream out(fs::path(o.out) / "registration.json");
    out << diag.dump(2) << "\n";
    std::cout << "registered curves written to " << o.out << "\n";
    return 0;
}

int cmd_fanova(const CommonOpts& o) {
    const PipelineConfig cfg = make_pipeline_config(o);
    const auto manifest = load_manifest(o);
    const Manifest* mp = manifest ? &*manifest : nullptr;
    std::vector<MultiChannelCurve> sample;
    for (const auto& file : list_csvs(o.input)) sample.push_back(read_curve_csv(file, mp));
    const PipelineResult result = analyze_sample(sample, cfg);
    write_report_files(result, cfg, o.out);
    std::cout << "report written to " << o.out << "\n";
    return 0;
}

int cmd_report(const CommonOpts& o, const std::string& au, const std::string& emotion) {
    std::ifstream in(fs::path(o.input) / "report.json");
    if (!in) throw std::invalid_argument(o.input + "/report.json: cannot open file");
    nlohmann::ordered_json report;
    in >> report;
    fs::create_directories(o.out);
    auto emit_one = [&](const std::string& a, const std::string& e) {
        std::ofstream out(fs::path(o.out) / ("plot_" + a + "_" + e + ".csv"));
        out << emit_plot_data(report, a, e);
    };
    if (!au.empty() && !emotion.empty()) {
        emit_one(au, emotion);
    } else {
        for (const auto& cj : report.at("channels"))
            for (const auto& ej : cj.at("effects"))
                emit_one(cj.at("au").get<std::string>(), ej.at("emotion").get<std::string>());
    }
    std::cout << "plot data written to " << o.out << "\n";
    return 0;
}

// Built-in scenario: all 17 channels with a shared baseline and a handful of
// emotion effects on the usual suspects (smiles, brow lowering, jaw drop).
SynthConfig default_synth_scenario() {
    SynthConfig cfg;
    cfg.K = 4;
    cfg.G = 7;
    cfg.grid = TimeGrid::uniform(1.0, 101);
    cfg.noise_sd = 0.1;
    cfg.warp_sd = 0.03;
    cfg.clamp = true;
    auto bump = [](double center, double width, double amplitude) {
        return Bump{center, width, amplitude};
    };
    for (const auto& label : canonical_au_labels()) {
        ChannelSpec ch;
        ch.label = label;
        ch.mu0 = ShapeSpec{0.8, 0.3, {bump(0.5, 0.25, 0.4)}};
        ch.alphas.resize(static_cast<size_t>(cfg.G));
        if (label == "AU06" || label == "AU12")
            ch.alphas[1] = ShapeSpec{0.0, 0.0, {bump(0.55, 0.18, 1.2)}};  // happy
        if (label == "AU04")
            ch.alphas[3] = ShapeSpec{0.1, 0.0, {bump(0.45, 0.2, 1.0)}};  // angry
        if (label == "AU15")
            ch.alphas[2] = ShapeSpec{0.0, 0.0, {bump(0.6, 0.2, 0.8)}};  // sad
        if (label == "AU25" || label == "AU26")
            ch.alphas[6] = ShapeSpec{0.0, 0.0, {bump(0.4, 0.15, 1.0)}};  // surprised
        cfg.channels.push_back(std::move(ch));
    }
    return cfg;
}

int cmd_synth(const CommonOpts& o) {
    SynthConfig cfg = o.config.empty() ? default_synth_scenario() : load_synth_config(o.config);
    if (o.seed_set) cfg.seed = o.seed;
    auto [curves, truth] = generate(cfg);
    fs::create_directories(o.out);
    std::vector<int> counter(static_cast<size_t>(cfg.G) + 1, 0);
    for (const auto& curve : curves) {
        const int g = curve.meta().group;
        const int k = ++counter[static_cast<size_t>(g)];
        char name[64];
        std::snprintf(name, sizeof(name), "02-01-%02d-01-01-01-%02d.csv", g + 1, k);
        VideoRecord rec{(fs::path(o.out) / name).string(), curve.meta(), curve};
        write_video_csv(rec, rec.path);
    }
    std::cout << curves.size() << " synthetic videos written to " << o.out << "\n";
    return 0;
}

int cmd_run(const CommonOpts& o) {
    const PipelineConfig cfg = make_pipeline_config(o);
    const auto manifest = load_manifest(o);
    const PipelineResult result = run_pipeline(cfg, o.input, manifest ? &*manifest : nullptr);
    std::cout << "analyzed " << result.channels.size() << " channels x " << result.G
              << " emotions (K=" << result.K << "); report written to " << cfg.out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"functional ANOVA of facial action unit trajectories"};
    app.require_subcommand(1);

    CommonOpts smooth_o, register_o, fanova_o, report_o, synth_o, run_o;
    std::string report_au, report_emotion;

    add_common(app.add_subcommand("smooth", "smooth raw AU CSVs onto the internal grid"),
               smooth_o, true);
    add_common(app.add_subcommand("register", "smooth and register a sample"), register_o, true);
    add_common(app.add_subcommand("fanova", "fit and test already-smoothed curve files"),
               fanova_o, true);
    auto* report_cmd =
        app.add_subcommand("report", "emit plot data from an existing report.json");
    add_common(report_cmd, report_o, true);
    report_cmd->add_option("--au", report_au, "single AU to plot");
    report_cmd->add_option("--emotion", report_emotion, "single emotion to plot");
    add_common(app.add_subcommand("synth", "generate synthetic AU videos"), synth_o, false);
    add_common(app.add_subcommand("run", "full pipeline: ingest, smooth, register, test"),
               run_o, true);

    CLI11_PARSE(app, argc, argv);
    try {
        if (app.got_subcommand("smooth")) return cmd_smooth(smooth_o);
        if (app.got_subcommand("register")) return cmd_register(register_o);
        if (app.got_subcommand("fanova")) return cmd_fanova(fanova_o);
        if (app.got_subcommand("report")) return cmd_report(report_o, report_au, report_emotion);
        if (app.got_subcommand("synth")) return cmd_synth(synth_o);
        if (app.got_subcommand("run")) return cmd_run(run_o);
    } catch (const std::exception& e) {
        std::cerr << "aufda: error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
