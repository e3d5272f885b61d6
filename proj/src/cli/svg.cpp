#include <algorithm>
#include <cstdio>
#include <string>

#include "edapipe/cli.hpp"

namespace edapipe::cli {

namespace {

constexpr double kWidth = 960, kPanelHeight = 180, kLeft = 70, kRight = 20, kTop = 30, kGap = 40;

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

struct Panel {
    double y0;
    double lo, hi;
    double t_max;

    double x(double t_s) const { return kLeft + (kWidth - kLeft - kRight) * (t_max > 0 ? t_s / t_max : 0.0); }
    double y(double v) const {
        const double span = hi > lo ? hi - lo : 1.0;
        return y0 + kPanelHeight * (1.0 - (v - lo) / span);
    }
};

Panel make_panel(std::size_t index, std::initializer_list<const std::vector<double>*> series, double t_max) {
    double lo = 0, hi = 0;
    bool first = true;
    for (const auto* s : series) {
        for (double v : *s) {
            lo = first ? v : std::min(lo, v);
            hi = first ? v : std::max(hi, v);
            first = false;
        }
    }
    const double pad = hi > lo ? 0.05 * (hi - lo) : 0.5;
    return Panel{kTop + static_cast<double>(index) * (kPanelHeight + kGap), lo - pad, hi + pad, t_max};
}

std::string polyline(const Panel& p, const std::vector<double>& t_s, const std::vector<double>& v,
                     const char* colour, const char* label) {
    std::string out = "  <polyline class=\"" + std::string(label) + "\" fill=\"none\" stroke=\"" + colour +
                      "\" stroke-width=\"1.2\" points=\"";
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ' ';
        out += fmt(p.x(t_s[i])) + "," + fmt(p.y(v[i]));
    }
    return out + "\"/>\n";
}

std::string frame(const Panel& p, const std::string& title, const std::string& unit) {
    std::string out;
    out += "  <rect x=\"" + fmt(kLeft) + "\" y=\"" + fmt(p.y0) + "\" width=\"" + fmt(kWidth - kLeft - kRight) +
           "\" height=\"" + fmt(kPanelHeight) + "\" fill=\"none\" stroke=\"#999\"/>\n";
    out += "  <text x=\"" + fmt(kLeft) + "\" y=\"" + fmt(p.y0 - 8) + "\" font-size=\"13\">" + title + "</text>\n";
    out += "  <text x=\"8\" y=\"" + fmt(p.y0 + 12) + "\" font-size=\"11\">" + fmt(p.hi) + " " + unit + "</text>\n";
    out += "  <text x=\"8\" y=\"" + fmt(p.y0 + kPanelHeight) + "\" font-size=\"11\">" + fmt(p.lo) + "</text>\n";
    return out;
}

}  // namespace

std::string render_trace_svg(const signal::ProcessedSession& s) {
    std::vector<double> t_s;
    t_s.reserve(s.t_ms.size());
    for (auto t : s.t_ms) t_s.push_back(static_cast<double>(t - s.t_ms.front()) / 1000.0);
    const double t_max = t_s.empty() ? 0.0 : t_s.back();
    const auto& sc = s.sc.values;
    const auto& tonic = s.decomposition.tonic.values;
    const auto& phasic = s.decomposition.phasic.values;

    const Panel top = make_panel(0, {&sc, &tonic}, t_max);
    const Panel mid = make_panel(1, {&phasic}, t_max);
    const Panel bottom = make_panel(2, {&s.psm.values, &s.psm_filtered.values}, t_max);
    const double height = kTop + 3 * kPanelHeight + 2 * kGap + 40;

    std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(kWidth) + "\" height=\"" +
                      fmt(height) + "\" viewBox=\"0 0 " + fmt(kWidth) + " " + fmt(height) + "\">\n";
    out += "  <title>" + s.config.subject_id + "</title>\n";
    out += frame(top, s.config.subject_id + " skin conductance and tonic level", "uS");
    out += polyline(top, t_s, sc, "#1f77b4", "sc");
    out += polyline(top, t_s, tonic, "#ff7f0e", "tonic");
    out += frame(mid, "phasic component and detected peaks", "uS");
    out += polyline(mid, t_s, phasic, "#2ca02c", "phasic");
    for (const auto& pk : s.decomposition.peaks) {
        out += "  <circle class=\"peak\" cx=\"" + fmt(mid.x(t_s[pk.index])) + "\" cy=\"" +
               fmt(mid.y(phasic[pk.index])) + "\" r=\"2.5\" fill=\"#d62728\"/>\n";
    }
    out += frame(bottom, "pain slider, raw and median filtered", "cm");
    out += polyline(bottom, t_s, s.psm.values, "#bbbbbb", "psm");
    out += polyline(bottom, t_s, s.psm_filtered.values, "#9467bd", "psm_filtered");
    out += "  <text x=\"" + fmt(kWidth / 2) + "\" y=\"" + fmt(height - 10) +
           "\" font-size=\"12\" text-anchor=\"middle\">time since trim (s)</text>\n";
    out += "</svg>\n";
    return out;
}

}  // namespace edapipe::cli
