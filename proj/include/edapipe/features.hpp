#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "edapipe/signal.hpp"

namespace edapipe::features {

inline constexpr std::size_t kNumFeatures = 11;
inline constexpr std::size_t kNumLabels = 3;
inline constexpr std::size_t kNumColumns = kNumFeatures + kNumLabels;

// Column order of the dataset matrix: 11 features then 3 ground truths.
inline constexpr std::array<std::string_view, kNumColumns> kColumnNames = {
    "sum_peaks", "mean",           "max_peak",  "n_peaks",  "mean_abs", "rms",      "min_peak",
    "std_dev",   "force",          "occlusion_pressure", "muscle_tension", "psm_mean", "psm_mode", "vas"};

enum class Target { psm_mean = 0, psm_mode = 1, vas = 2 };

Target parse_target(std::string_view name);
std::string_view target_name(Target t);
inline std::size_t target_column(Target t) { return kNumFeatures + static_cast<std::size_t>(t); }

struct WindowRange {
    std::size_t begin = 0;
    std::size_t end = 0;  // exclusive
    std::size_t size() const { return end - begin; }
    bool operator==(const WindowRange&) const = default;
};

// Non-overlapping windows of exactly rate * window_s samples; the trailing
// partial window is dropped.
std::vector<WindowRange> window_indices(std::size_t length, double rate, double window_s = 10.0);

using FeatureVector = std::array<double, kNumFeatures>;

// `peaks` may span the whole series; only those inside `range` are used.
FeatureVector extract_window_features(const signal::Series& phasic, const std::vector<signal::Peak>& peaks,
                                      WindowRange range, const acquisition::SessionConfig& config);

struct WindowLabels {
    double psm_mean = 0.0;
    double psm_mode = 0.0;
    double vas = 0.0;
};

WindowLabels fuse_labels(const signal::Series& psm, WindowRange range, double vas_post);

struct WindowRow {
    std::string subject;
    std::size_t window = 0;
    double sum_peaks = 0, mean = 0, max_peak = 0, n_peaks = 0, mean_abs = 0, rms = 0, min_peak = 0, std_dev = 0;
    double force = 0, occlusion_pressure = 0, muscle_tension = 0;
    double psm_mean = 0, psm_mode = 0, vas = 0;

    std::array<double, kNumColumns> values() const;
    static WindowRow from_values(std::string subject, std::size_t window, const std::array<double, kNumColumns>& v);
};

struct DatasetMatrix {
    std::vector<WindowRow> rows;

    std::size_t size() const { return rows.size(); }
    bool empty() const { return rows.empty(); }
};

// Rows concatenated in session order then window order. Throws ConfigError
// when sessions disagree on sample rate.
DatasetMatrix assemble_dataset(const std::vector<signal::ProcessedSession>& sessions, double window_s = 10.0);

inline constexpr std::string_view kDatasetHeader =
    "subject,window,sum_peaks,mean,max_peak,n_peaks,mean_abs,rms,min_peak,std_dev,force,occlusion_pressure,"
    "muscle_tension,psm_mean,psm_mode,vas";

std::string dataset_to_csv(const DatasetMatrix& dataset);
DatasetMatrix dataset_from_csv(std::string_view text);

}  // namespace edapipe::features
