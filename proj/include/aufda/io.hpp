#pragma once

#include <map>
#include <string>
#include <vector>

#include "aufda/fdcore.hpp"

namespace aufda {

/// The 17 OpenFace intensity channels in canonical order (without the _r
/// column suffix). Reports and multichannel containers always use this order.
const std::vector<std::string>& canonical_au_labels();

/// RAVDESS emotion name for a group index (0 = neutral .. 7 = surprised;
/// other groups get a generic name).
std::string emotion_label_for_group(int group);

/// Optional sidecar assigning emotions when filenames do not follow the
/// RAVDESS convention. CSV with header: file,group,label[,actor].
struct ManifestEntry {
    int group = 0;
    std::string group_label;
    std::string actor;
};

struct Manifest {
    std::map<std::string, ManifestEntry> entries;  // keyed by basename
};

Manifest read_manifest(const std::string& path);

/// One video's raw AU intensity trajectories on a frame grid normalized to
/// [0,1], plus its emotion assignment.
struct VideoRecord {
    std::string path;
    CurveMeta meta;
    MultiChannelCurve curve;
};

/// Parse an OpenFace-style CSV: a `frame` column plus `<AU>_r` intensity
/// columns for every requested channel. Emotion comes from the manifest when
/// given, otherwise from the RAVDESS filename convention (third hyphen field,
/// 01=neutral .. 08=surprised).
VideoRecord ingest_csv(const std::string& path, const Manifest* manifest = nullptr,
                       const std::vector<std::string>& channels = canonical_au_labels());

/// Emit a record in the same CSV shape with 17 significant digits, so
/// ingest(write(r)) reproduces the values bit for bit.
void write_video_csv(const VideoRecord& record, const std::string& path);

/// Internal curve files (smoothed/registered stages): header t,<label>,...
void write_curve_csv(const MultiChannelCurve& curve, const std::string& path);
MultiChannelCurve read_curve_csv(const std::string& path, const Manifest* manifest = nullptr);

}  // namespace aufda
