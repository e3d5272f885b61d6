#include "edapipe/signal.hpp"

#include <algorithm>
#include <cmath>

#include "edapipe/csv.hpp"
#include "edapipe/error.hpp"

namespace edapipe::signal {

void ScaleMap::validate() const {
    if (!(p_ref > 0.0)) throw ValidationError("p_ref", "must be positive");
    if (n_bits < 1 || n_bits > 30) throw ValidationError("n_bits", "must lie in [1, 30]");
    const double full = std::ldexp(1.0, n_bits) - 1.0;
    if (!(gad_min >= 0.0 && gad_min < gad_max && gad_max <= full))
        throw ValidationError("gad_min/gad_max", "need 0 <= gad_min < gad_max <= 2^n - 1");
    if (!(scale_min < scale_max)) throw ValidationError("scale_min/scale_max", "need scale_min < scale_max");
}

void ConductanceMap::validate() const {
    if (!(vcc > 0.0)) throw ValidationError("vcc", "must be positive");
    if (n_bits < 1 || n_bits > 30) throw ValidationError("n_bits", "must lie in [1, 30]");
    if (!(sensitivity > 0.0)) throw ValidationError("sensitivity", "must be positive");
}

void Series::validate() const {
    if (!(rate > 0.0) || !std::isfinite(rate)) throw ValidationError("rate", "must be positive");
    for (double v : values)
        if (!std::isfinite(v)) throw ValidationError("values", "series contains a non-finite sample");
}

std::int64_t analog_to_digital(double p_analog, const ScaleMap& map) {
    map.validate();
    if (!(p_analog >= 0.0 && p_analog <= map.p_ref))
        throw RangeError("p_analog " + format_number(p_analog) + " V outside [0, " + format_number(map.p_ref) + "]");
    const double full = std::ldexp(1.0, map.n_bits) - 1.0;
    // Guard the half-up rounding against representation error (1.65/3.3 etc).
    const double scaled = p_analog * full / map.p_ref;
    const double counts = std::floor(scaled + 0.5 + 1e-9);
    return static_cast<std::int64_t>(std::clamp(counts, 0.0, full));
}

ScaleResult digital_to_scale(double p_digital, const ScaleMap& map, bool strict) {
    ScaleResult r;
    if (p_digital < map.gad_min || p_digital > map.gad_max) {
        if (strict)
            throw RangeError("p_digital " + format_number(p_digital) + " outside [" + format_number(map.gad_min) + ", " +
                             format_number(map.gad_max) + "]");
        p_digital = std::clamp(p_digital, map.gad_min, map.gad_max);
        r.clamped = true;
    }
    r.cm = (p_digital - map.gad_min) * (map.scale_max - map.scale_min) / (map.gad_max - map.gad_min) + map.scale_min;
    return r;
}

Series digital_to_scale(const Series& counts, const ScaleMap& map, bool strict) {
    map.validate();
    Series out{{}, counts.rate, Unit::cm};
    out.values.reserve(counts.size());
    for (double v : counts.values) out.values.push_back(digital_to_scale(v, map, strict).cm);
    return out;
}

Series counts_to_conductance(const Series& counts, const ConductanceMap& map) {
    map.validate();
    if (counts.unit != Unit::counts) throw ValidationError("unit", "conductance transfer expects counts");
    const double full = std::ldexp(1.0, map.n_bits);
    Series out{{}, counts.rate, Unit::microsiemens};
    out.values.reserve(counts.size());
    for (double c : counts.values) out.values.push_back((c / full * map.vcc) / map.sensitivity);
    return out;
}

Series trim_baseline(const Series& series, std::size_t n_samples) {
    if (n_samples == 0) return series;
    if (series.size() <= n_samples)
        throw LengthError("series of " + std::to_string(series.size()) + " samples cannot drop " +
                          std::to_string(n_samples) + " baseline samples");
    Series out{{series.values.begin() + static_cast<std::ptrdiff_t>(n_samples), series.values.end()}, series.rate,
               series.unit};
    return out;
}

namespace {

std::size_t half_window_samples(double half_window_s, double rate) {
    if (!(half_window_s >= 0.0)) throw ValidationError("half_window_s", "must be non-negative");
    return static_cast<std::size_t>(std::floor(half_window_s * rate + 1e-9));
}

std::vector<double> running_median(const std::vector<double>& x, std::size_t half) {
    const std::size_t n = x.size();
    std::vector<double> out(n);
    std::vector<double> window;
    window.reserve(2 * half + 1);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t lo = i >= half ? i - half : 0;
        const std::size_t hi = std::min(n, i + half + 1);
        window.assign(x.begin() + static_cast<std::ptrdiff_t>(lo), x.begin() + static_cast<std::ptrdiff_t>(hi));
        const std::size_t m = window.size();
        auto mid = window.begin() + static_cast<std::ptrdiff_t>(m / 2);
        std::nth_element(window.begin(), mid, window.end());
        if (m % 2 == 1) {
            out[i] = *mid;
        } else {
            const double upper = *mid;
            const double lower = *std::max_element(window.begin(), mid);
            out[i] = 0.5 * (lower + upper);
        }
    }
    return out;
}

}  // namespace

Series median_filter(const Series& series, double half_window_s) {
    series.validate();
    return {running_median(series.values, half_window_samples(half_window_s, series.rate)), series.rate, series.unit};
}

std::vector<Peak> detect_peaks(std::span<const double> x, double threshold) {
    if (!(threshold > 0.0)) throw ValidationError("threshold", "must be positive");
    std::vector<Peak> peaks;
    const std::size_t n = x.size();
    if (n < 3) return peaks;

    // Walk plateau-compressed runs; a run is a local max when both
    // neighbouring runs are lower. `trough` is the lowest value since the
    // previous local max (or the series start).
    double trough = x[0];
    for (std::size_t i = 0; i < n;) {
        std::size_t next = i + 1;
        while (next < n && x[next] == x[i]) ++next;
        const double v = x[i];
        if (i > 0 && next < n && x[i - 1] < v && v > x[next]) {
            if (v - trough >= threshold) peaks.push_back({i, v - trough});
            trough = x[next];
        } else {
            trough = std::min(trough, v);
        }
        i = next;
    }
    return peaks;
}

std::vector<Peak> detect_peaks(const Series& phasic, double threshold) {
    return detect_peaks(std::span<const double>(phasic.values), threshold);
}

Decomposition decompose(const Series& sc, double tonic_window_s, double peak_threshold) {
    sc.validate();
    if (sc.size() < 2) throw LengthError("decomposition needs at least 2 samples");
    if (!(tonic_window_s > 0.0)) throw ValidationError("tonic_window_s", "must be positive");
    Decomposition d;
    d.tonic = {running_median(sc.values, half_window_samples(tonic_window_s / 2.0, sc.rate)), sc.rate, sc.unit};
    d.phasic = {std::vector<double>(sc.size()), sc.rate, sc.unit};
    for (std::size_t i = 0; i < sc.size(); ++i) d.phasic.values[i] = sc.values[i] - d.tonic.values[i];
    d.peaks = detect_peaks(d.phasic, peak_threshold);
    return d;
}

acquisition::SessionRecord import_session(const std::filesystem::path& session_dir) {
    return acquisition::read_session_dir(session_dir);
}

ProcessedSession process_session(const acquisition::SessionRecord& record, const ProcessOptions& options) {
    const auto& cfg = record.config;
    cfg.validate();
    ProcessedSession out;
    out.config = cfg;

    Series eda{{}, cfg.sample_rate, Unit::counts};
    Series psm_counts{{}, cfg.sample_rate, Unit::counts};
    eda.values.reserve(record.frames.size());
    psm_counts.values.reserve(record.frames.size());
    for (const auto& f : record.frames) {
        eda.values.push_back(f.eda_counts);
        psm_counts.values.push_back(f.psm_counts);
    }

    ConductanceMap cmap = options.conductance;
    cmap.n_bits = cfg.adc_bits;
    const Series sc = counts_to_conductance(trim_baseline(eda, options.baseline_samples), cmap);
    out.decomposition = decompose(sc, options.tonic_window_s, options.peak_threshold);
    out.sc = sc;

    options.scale.validate();
    Series psm_cm{{}, cfg.sample_rate, Unit::cm};
    for (double c : psm_counts.values) {
        const auto r = digital_to_scale(c, options.scale, options.strict_scale);
        out.clamped_psm_samples += r.clamped ? 1 : 0;
        psm_cm.values.push_back(r.cm);
    }
    out.psm_filtered = trim_baseline(median_filter(psm_cm, options.psm_half_window_s), options.baseline_samples);
    out.psm = trim_baseline(psm_cm, options.baseline_samples);

    out.t_ms.reserve(out.sc.size());
    for (std::size_t i = options.baseline_samples; i < record.frames.size(); ++i)
        out.t_ms.push_back(record.frames[i].t_ms);
    return out;
}

std::string processed_csv(const ProcessedSession& s) {
    std::string out = "t_ms,sc_uS,tonic_uS,phasic_uS,psm_cm,psm_filtered_cm\n";
    for (std::size_t i = 0; i < s.sc.size(); ++i) {
        out += std::to_string(s.t_ms[i]);
        for (double v : {s.sc.values[i], s.decomposition.tonic.values[i], s.decomposition.phasic.values[i],
                         s.psm.values[i], s.psm_filtered.values[i]}) {
            out += ',';
            out += format_number(v);
        }
        out += '\n';
    }
    return out;
}

}  // namespace edapipe::signal
