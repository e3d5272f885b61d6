#include "edapipe/features.hpp"

#include <algorithm>
#include <cmath>

#include "edapipe/csv.hpp"
#include "edapipe/error.hpp"

namespace edapipe::features {

Target parse_target(std::string_view name) {
    if (name == "psm_mean") return Target::psm_mean;
    if (name == "psm_mode") return Target::psm_mode;
    if (name == "vas") return Target::vas;
    throw ValidationError("target", "unknown target '" + std::string(name) + "' (psm_mean|psm_mode|vas)");
}

std::string_view target_name(Target t) { return kColumnNames[target_column(t)]; }

std::vector<WindowRange> window_indices(std::size_t length, double rate, double window_s) {
    const double exact = rate * window_s;
    const double rounded = std::round(exact);
    if (!(rounded >= 1.0) || std::abs(exact - rounded) > 1e-9)
        throw ValidationError("window_s", "rate x window must be a whole number of samples >= 1");
    const auto w = static_cast<std::size_t>(rounded);
    std::vector<WindowRange> out;
    for (std::size_t b = 0; b + w <= length; b += w) out.push_back({b, b + w});
    return out;
}

FeatureVector extract_window_features(const signal::Series& phasic, const std::vector<signal::Peak>& peaks,
                                      WindowRange range, const acquisition::SessionConfig& config) {
    if (range.end > phasic.size() || range.begin >= range.end)
        throw RangeError("window [" + std::to_string(range.begin) + ", " + std::to_string(range.end) +
                         ") outside series of " + std::to_string(phasic.size()));
    const auto n = static_cast<double>(range.size());
    double sum = 0.0, sum_abs = 0.0, sum_sq = 0.0;
    for (std::size_t i = range.begin; i < range.end; ++i) {
        const double v = phasic.values[i];
        sum += v;
        sum_abs += std::abs(v);
        sum_sq += v * v;
    }
    const double mean = sum / n;
    double ss_dev = 0.0;
    for (std::size_t i = range.begin; i < range.end; ++i) ss_dev += (phasic.values[i] - mean) * (phasic.values[i] - mean);

    double peak_sum = 0.0, peak_max = 0.0, peak_min = 0.0;
    std::size_t count = 0;
    for (const auto& p : peaks) {
        if (p.index < range.begin || p.index >= range.end) continue;
        peak_sum += p.amplitude;
        peak_max = count == 0 ? p.amplitude : std::max(peak_max, p.amplitude);
        peak_min = count == 0 ? p.amplitude : std::min(peak_min, p.amplitude);
        ++count;
    }

    FeatureVector f{};
    f[0] = peak_sum;
    f[1] = mean;
    f[2] = peak_max;
    f[3] = static_cast<double>(count);
    f[4] = sum_abs / n;
    f[5] = std::sqrt(sum_sq / n);
    f[6] = peak_min;
    f[7] = range.size() > 1 ? std::sqrt(ss_dev / (n - 1.0)) : 0.0;
    f[8] = config.mvc_force;
    f[9] = config.occlusion_pressure;
    f[10] = config.stretch_force;
    return f;
}

WindowLabels fuse_labels(const signal::Series& psm, WindowRange range, double vas_post) {
    if (range.end > psm.size() || range.begin >= range.end)
        throw RangeError("window outside PSM series of " + std::to_string(psm.size()));
    const auto first = psm.values.begin() + static_cast<std::ptrdiff_t>(range.begin);
    const auto last = psm.values.begin() + static_cast<std::ptrdiff_t>(range.end);
    double sum = 0.0;
    for (auto it = first; it != last; ++it) sum += *it;
    WindowLabels l;
    l.psm_mean = sum / static_cast<double>(range.size());
    l.psm_mode = *std::max_element(first, last);
    // Guard the max >= mean invariant against summation rounding.
    l.psm_mean = std::min(l.psm_mean, l.psm_mode);
    l.vas = vas_post;
    return l;
}

std::array<double, kNumColumns> WindowRow::values() const {
    return {sum_peaks, mean, max_peak, n_peaks, mean_abs, rms, min_peak, std_dev,
            force, occlusion_pressure, muscle_tension, psm_mean, psm_mode, vas};
}

WindowRow WindowRow::from_values(std::string subject, std::size_t window, const std::array<double, kNumColumns>& v) {
    WindowRow r;
    r.subject = std::move(subject);
    r.window = window;
    r.sum_peaks = v[0];
    r.mean = v[1];
    r.max_peak = v[2];
    r.n_peaks = v[3];
    r.mean_abs = v[4];
    r.rms = v[5];
    r.min_peak = v[6];
    r.std_dev = v[7];
    r.force = v[8];
    r.occlusion_pressure = v[9];
    r.muscle_tension = v[10];
    r.psm_mean = v[11];
    r.psm_mode = v[12];
    r.vas = v[13];
    return r;
}

DatasetMatrix assemble_dataset(const std::vector<signal::ProcessedSession>& sessions, double window_s) {
    DatasetMatrix out;
    if (sessions.empty()) return out;
    const double rate = sessions.front().sc.rate;
    for (const auto& s : sessions) {
        if (s.sc.rate != rate || s.psm_filtered.rate != rate)
            throw ConfigError("session " + s.config.subject_id + " has rate " + format_number(s.sc.rate) +
                              " Hz, expected " + format_number(rate));
        if (s.psm_filtered.size() != s.decomposition.phasic.size())
            throw DataError("session " + s.config.subject_id + ": PSM and EDA series lengths differ");
        const auto windows = window_indices(s.decomposition.phasic.size(), rate, window_s);
        for (std::size_t w = 0; w < windows.size(); ++w) {
            const auto f = extract_window_features(s.decomposition.phasic, s.decomposition.peaks, windows[w], s.config);
            const auto l = fuse_labels(s.psm_filtered, windows[w], s.config.vas_post);
            std::array<double, kNumColumns> v{};
            std::copy(f.begin(), f.end(), v.begin());
            v[11] = l.psm_mean;
            v[12] = l.psm_mode;
            v[13] = l.vas;
            out.rows.push_back(WindowRow::from_values(s.config.subject_id, w, v));
        }
    }
    return out;
}

std::string dataset_to_csv(const DatasetMatrix& dataset) {
    std::string out(kDatasetHeader);
    out += '\n';
    for (const auto& row : dataset.rows) {
        out += row.subject;
        out += ',';
        out += std::to_string(row.window);
        for (double v : row.values()) {
            out += ',';
            out += format_number(v);
        }
        out += '\n';
    }
    return out;
}

DatasetMatrix dataset_from_csv(std::string_view text) {
    const CsvTable table = parse_csv(text);
    DatasetMatrix out;
    if (table.header.empty()) return out;
    const std::size_t subject_col = table.column("subject");
    const std::size_t window_col = table.column("window");
    std::array<std::size_t, kNumColumns> cols{};
    for (std::size_t c = 0; c < kNumColumns; ++c) cols[c] = table.column(kColumnNames[c]);
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& cells = table.rows[r];
        std::array<double, kNumColumns> v{};
        for (std::size_t c = 0; c < kNumColumns; ++c)
            v[c] = parse_number(cells[cols[c]], "row " + std::to_string(r + 1) + " " + std::string(kColumnNames[c]));
        const double window = parse_number(cells[window_col], "window");
        if (window < 0 || window != std::floor(window)) throw DataError("row " + std::to_string(r + 1) + ": bad window");
        out.rows.push_back(WindowRow::from_values(cells[subject_col], static_cast<std::size_t>(window), v));
    }
    return out;
}

}  // namespace edapipe::features
