#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "edapipe/acquisition.hpp"

namespace edapipe::signal {

// PSM slider calibration: volts -> ADC counts -> centimetres on the pain scale.
struct ScaleMap {
    double p_ref = 3.3;  // V
    int n_bits = 12;
    double gad_min = 0.0;     // counts at "no pain"
    double gad_max = 4095.0;  // counts at "worst pain"
    double scale_min = 0.0;   // cm
    double scale_max = 10.0;  // cm

    void validate() const;
};

// Counts -> microsiemens transfer of the exosomatic DC sensor.
struct ConductanceMap {
    double vcc = 3.3;  // V
    int n_bits = 12;
    double sensitivity = 0.132;  // V per µS

    void validate() const;
};

enum class Unit { counts, cm, microsiemens };

struct Series {
    std::vector<double> values;
    double rate = 2.0;  // Hz
    Unit unit = Unit::counts;

    std::size_t size() const { return values.size(); }
    // Throws ValidationError when rate <= 0 or a value is non-finite.
    void validate() const;
};

struct Peak {
    std::size_t index = 0;
    double amplitude = 0.0;  // trough-to-peak rise, µS

    bool operator==(const Peak&) const = default;
};

struct Decomposition {
    Series tonic;
    Series phasic;
    std::vector<Peak> peaks;
};

// round(p_analog / p_ref * (2^n - 1)), half-up. Throws RangeError outside [0, p_ref].
std::int64_t analog_to_digital(double p_analog, const ScaleMap& map);

struct ScaleResult {
    double cm = 0.0;
    bool clamped = false;
};

// Linear counts -> cm mapping anchored at (gad_min, scale_min) and (gad_max, scale_max).
// Out-of-range counts are clamped and flagged, or raise RangeError when `strict`.
ScaleResult digital_to_scale(double p_digital, const ScaleMap& map, bool strict = false);
Series digital_to_scale(const Series& counts, const ScaleMap& map, bool strict = false);

Series counts_to_conductance(const Series& counts, const ConductanceMap& map);

// Drops the first `n_samples`. Throws LengthError unless size() > n_samples.
Series trim_baseline(const Series& series, std::size_t n_samples = 120);

// Centered running median over +/- half_window_s, truncated at the edges.
// Even-sized windows average the two middle values.
Series median_filter(const Series& series, double half_window_s = 10.0);

// Tonic = centered moving median over a `tonic_window_s` wide window
// (half-width tonic_window_s / 2); phasic = input - tonic.
Decomposition decompose(const Series& sc, double tonic_window_s = 20.0, double peak_threshold = 0.01);

// Every local maximum whose rise from the preceding trough is >= threshold.
// Plateaus count once, at their first index; series endpoints are never peaks.
std::vector<Peak> detect_peaks(const Series& phasic, double threshold = 0.01);
std::vector<Peak> detect_peaks(std::span<const double> phasic, double threshold = 0.01);

struct ProcessOptions {
    ScaleMap scale;
    ConductanceMap conductance;
    std::size_t baseline_samples = 120;
    double psm_half_window_s = 10.0;
    double tonic_window_s = 20.0;
    double peak_threshold = 0.01;
    bool strict_scale = false;
};

// Per-session signal chain output, all series aligned on the trimmed timeline.
struct ProcessedSession {
    acquisition::SessionConfig config;
    std::vector<std::int64_t> t_ms;
    Series sc;
    Decomposition decomposition;
    Series psm;           // cm, unfiltered
    Series psm_filtered;  // cm
    std::size_t clamped_psm_samples = 0;
};

ProcessedSession process_session(const acquisition::SessionRecord& record, const ProcessOptions& options = {});

// Reads a `sessions/<id>/` directory back into a record.
acquisition::SessionRecord import_session(const std::filesystem::path& session_dir);

// CSV with header t_ms,sc_uS,tonic_uS,phasic_uS,psm_cm,psm_filtered_cm
std::string processed_csv(const ProcessedSession& session);

}  // namespace edapipe::signal
