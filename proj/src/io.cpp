#include "aufda/io.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace aufda {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

double parse_double(const std::string& cell, const std::string& context) {
    const std::string s = trim(cell);
    if (s.empty()) fail(context + ": empty numeric cell");
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size()) fail(context + ": unparseable number '" + s + "'");
    return v;
}

long parse_int(const std::string& cell, const std::string& context) {
    const std::string s = trim(cell);
    char* end = nullptr;
    const long v = std::strtol(s.c_str(), &end, 10);
    if (s.empty() || end != s.c_str() + s.size())
        fail(context + ": unparseable integer '" + s + "'");
    return v;
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(path + ": cannot open file");
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
    return lines;
}

std::string format_value(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

CurveMeta meta_from_name(const std::string& path, const Manifest* manifest) {
    const std::string base = std::filesystem::path(path).filename().string();
    const std::string stem = std::filesystem::path(path).stem().string();
    CurveMeta meta;
    meta.video_id = stem;
    if (manifest) {
        const auto it = manifest->entries.find(base);
        if (it == manifest->entries.end()) fail(path + ": file not listed in manifest");
        meta.group = it->second.group;
        meta.group_label = it->second.group_label;
        meta.actor = it->second.actor;
        return meta;
    }
    // RAVDESS convention: modality-vocal-emotion-intensity-statement-
    // repetition-actor; the third field carries the emotion code.
    std::vector<std::string> fields;
    std::stringstream ss(stem);
    std::string f;
    while (std::getline(ss, f, '-')) fields.push_back(f);
    if (fields.size() < 3) fail(path + ": unparseable emotion (expected RAVDESS name or manifest)");
    const long code = parse_int(fields[2], path + ": emotion field");
    if (code < 1 || code > 8)
        fail(path + ": emotion code " + std::to_string(code) + " outside 01..08");
    meta.group = static_cast<int>(code - 1);
    meta.group_label = emotion_label_for_group(meta.group);
    if (fields.size() >= 7) meta.actor = fields[6];
    return meta;
}

}  // namespace

const std::vector<std::string>& canonical_au_labels() {
    static const std::vector<std::string> labels = {
        "AU01", "AU02", "AU04", "AU05", "AU06", "AU07", "AU09", "AU10", "AU12",
        "AU14", "AU15", "AU17", "AU20", "AU23", "AU25", "AU26", "AU45"};
    return labels;
}

std::string emotion_label_for_group(int group) {
    static const char* names[] = {"neutral", "calm",    "happy",   "sad",
                                  "angry",   "fearful", "disgust", "surprised"};
    if (group >= 0 && group < 8) return names[group];
    return "group" + std::to_string(group);
}

Manifest read_manifest(const std::string& path) {
    const std::vector<std::string> lines = read_lines(path);
    if (lines.empty()) fail(path + ": empty manifest");
    const std::vector<std::string> header = split_csv_line(lines[0]);
    if (header.size() < 3 || header[0] != "file" || header[1] != "group" || header[2] != "label")
        fail(path + ": manifest header must be file,group,label[,actor]");
    Manifest m;
    for (size_t r = 1; r < lines.size(); ++r) {
        const auto cells = split_csv_line(lines[r]);
        if (cells.size() < 3) fail(path + " row " + std::to_string(r) + ": too few cells");
        ManifestEntry e;
        e.group = static_cast<int>(parse_int(cells[1], path + " row " + std::to_string(r)));
        e.group_label = cells[2];
        if (cells.size() >= 4) e.actor = cells[3];
        m.entries[cells[0]] = e;
    }
    return m;
}

VideoRecord ingest_csv(const std::string& path, const Manifest* manifest,
                       const std::vector<std::string>& channels) {
    if (channels.empty()) fail(path + ": no channels requested");
    const std::vector<std::string> lines = read_lines(path);
    if (lines.empty()) fail(path + ": empty file");
    if (lines.size() < 3) fail(path + ": need at least two data rows");

    const std::vector<std::string> header = split_csv_line(lines[0]);
    auto column_of = [&](const std::string& name) -> Eigen::Index {
        for (size_t c = 0; c < header.size(); ++c)
            if (header[c] == name) return static_cast<Eigen::Index>(c);
        return -1;
    };
    const Eigen::Index frame_col = column_of("frame");
    if (frame_col < 0) fail(path + ": missing 'frame' column");
    std::vector<Eigen::Index> au_cols;
    std::string missing;
    for (const auto& au : channels) {
        const Eigen::Index c = column_of(au + "_r");
        if (c < 0)
            missing += (missing.empty() ? "" : ", ") + au;
        else
            au_cols.push_back(c);
    }
    if (!missing.empty()) fail(path + ": missing AU columns: " + missing);

    const Eigen::Index n_rows = static_cast<Eigen::Index>(lines.size()) - 1;
    Eigen::VectorXd frames(n_rows);
    Eigen::MatrixXd values(n_rows, static_cast<Eigen::Index>(channels.size()));
    for (Eigen::Index r = 0; r < n_rows; ++r) {
        const std::string context = path + " row " + std::to_string(r + 1);
        const auto cells = split_csv_line(lines[static_cast<size_t>(r) + 1]);
        if (cells.size() != header.size())
            fail(context + ": expected " + std::to_string(header.size()) + " cells, got " +
                 std::to_string(cells.size()));
        frames[r] = parse_double(cells[static_cast<size_t>(frame_col)], context);
        if (r > 0 && frames[r] <= frames[r - 1])
            fail(context + ": frame values must be strictly increasing");
        for (size_t d = 0; d < channels.size(); ++d) {
            const double v = parse_double(cells[static_cast<size_t>(au_cols[d])],
                                          context + " column " + channels[d] + "_r");
            if (v < 0.0 || v > 5.0)
                fail(context + ": " + channels[d] + "_r value " + format_value(v) +
                     " outside [0,5]");
            values(r, static_cast<Eigen::Index>(d)) = v;
        }
    }

    const double f0 = frames[0], span = frames[n_rows - 1] - frames[0];
    Eigen::VectorXd t = (frames.array() - f0) / span;
    t[0] = 0.0;
    t[n_rows - 1] = 1.0;

    CurveMeta meta = meta_from_name(path, manifest);
    return VideoRecord{path, meta,
                       MultiChannelCurve(TimeGrid(std::move(t), 1.0), std::move(values),
                                         channels, std::move(meta))};
}

void write_video_csv(const VideoRecord& record, const std::string& path) {
    std::ofstream out(path);
    if (!out) fail(path + ": cannot open for writing");
    out << "frame";
    for (const auto& au : record.curve.channel_labels()) out << "," << au << "_r";
    out << "\n";
    const Eigen::VectorXd& t = record.curve.grid().points();
    const Eigen::MatrixXd& v = record.curve.values();
    for (Eigen::Index r = 0; r < t.size(); ++r) {
        out << format_value(t[r]);
        for (Eigen::Index d = 0; d < v.cols(); ++d) out << "," << format_value(v(r, d));
        out << "\n";
    }
    if (!out) fail(path + ": write failed");
}

void write_curve_csv(const MultiChannelCurve& curve, const std::string& path) {
    std::ofstream out(path);
    if (!out) fail(path + ": cannot open for writing");
    out << "t";
    for (const auto& label : curve.channel_labels()) out << "," << label;
    out << "\n";
    const Eigen::VectorXd& t = curve.grid().points();
    const Eigen::MatrixXd& v = curve.values();
    for (Eigen::Index r = 0; r < t.size(); ++r) {
        out << format_value(t[r]);
        for (Eigen::Index d = 0; d < v.cols(); ++d) out << "," << format_value(v(r, d));
        out << "\n";
    }
    if (!out) fail(path + ": write failed");
}

MultiChannelCurve read_curve_csv(const std::string& path, const Manifest* manifest) {
    const std::vector<std::string> lines = read_lines(path);
    if (lines.empty()) fail(path + ": empty file");
    if (lines.size() < 3) fail(path + ": need at least two data rows");
    const std::vector<std::string> header = split_csv_line(lines[0]);
    if (header.size() < 2 || header[0] != "t")
        fail(path + ": curve file header must start with 't'");
    const std::vector<std::string> labels(header.begin() + 1, header.end());

    const Eigen::Index n_rows = static_cast<Eigen::Index>(lines.size()) - 1;
    Eigen::VectorXd t(n_rows);
    Eigen::MatrixXd values(n_rows, static_cast<Eigen::Index>(labels.size()));
    for (Eigen::Index r = 0; r < n_rows; ++r) {
        const std::string context = path + " row " + std::to_string(r + 1);
        const auto cells = split_csv_line(lines[static_cast<size_t>(r) + 1]);
        if (cells.size() != header.size())
            fail(context + ": expected " + std::to_string(header.size()) + " cells, got " +
                 std::to_string(cells.size()));
        t[r] = parse_double(cells[0], context);
        for (size_t d = 0; d < labels.size(); ++d)
            values(r, static_cast<Eigen::Index>(d)) =
                parse_double(cells[d + 1], context + " column " + labels[d]);
    }
    const double domain_end = std::max(1.0, t[n_rows - 1]);
    return MultiChannelCurve(TimeGrid(std::move(t), domain_end), std::move(values), labels,
                             meta_from_name(path, manifest));
}

}  // namespace aufda
