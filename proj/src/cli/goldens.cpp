#include <cmath>

#include "edapipe/cli.hpp"

namespace edapipe::cli {

bool GoldenCheck::pass() const { return informational || std::abs(computed - expected) <= tolerance; }

namespace {

using Rows = std::array<std::array<std::uint64_t, 3>, 3>;

struct PublishedRf {
    const char* name;
    Rows matrix;
    double weighted_tpr_pct;
    double gmean_pct;
    std::array<double, 3> tp_rate, fp_rate, precision, f_measure;
};

// Selected random forests: pooled confusion matrices with the accuracy,
// G-mean and per-class report published for each.
const std::array<PublishedRf, 3> kForests = {{
    {"psm_mean 3 features 23% bag",
     {{{152, 50, 31}, {32, 99, 23}, {14, 10, 143}}},
     71.11, 78.3,
     {0.65, 0.64, 0.85}, {0.14, 0.15, 0.14}, {0.76, 0.62, 0.72}, {0.70, 0.63, 0.78}},
    {"psm_mode 3 features 28% bag",
     {{{152, 50, 32}, {34, 100, 18}, {17, 10, 141}}},
     70.93, 77.9,
     {0.65, 0.65, 0.83}, {0.15, 0.14, 0.13}, {0.74, 0.62, 0.73}, {0.69, 0.64, 0.78}},
    {"vas 4 features 17% bag",
     {{{71, 15, 27}, {7, 83, 58}, {13, 28, 252}}},
     73.28, 74.6,
     {0.62, 0.56, 0.86}, {0.04, 0.10, 0.32}, {0.78, 0.65, 0.74}, {0.69, 0.60, 0.80}},
}};

// The MLP matrix behind the published 75.9% score does not reproduce it; kept
// as a visible, non-failing check.
const Rows kMlpPsmMean3x50 = {{{148, 47, 38}, {57, 77, 20}, {18, 8, 141}}};

constexpr double kTprTol = 0.0001;   // 0.01 percentage points
constexpr double kGmeanTol = 0.005;  // 0.5 percentage points
constexpr double kRateTol = 0.01;

}  // namespace

std::vector<GoldenCheck> golden_checks() {
    std::vector<GoldenCheck> out;
    const char* names[] = {"low", "medium", "high"};
    for (const auto& rf : kForests) {
        const auto cm = eval::ConfusionMatrix::from_rows(rf.matrix);
        out.push_back({rf.name, "weighted_tpr", eval::weighted_tpr(cm), rf.weighted_tpr_pct / 100.0, kTprTol});
        out.push_back({rf.name, "macro_gmean", eval::macro_gmean(cm), rf.gmean_pct / 100.0, kGmeanTol});
        const auto report = eval::class_report(cm);
        for (std::size_t c = 0; c < 3; ++c) {
            const auto& m = report.classes[c];
            const std::string cls = std::string("[") + names[c] + "]";
            out.push_back({rf.name, "tp_rate" + cls, m.tp_rate, rf.tp_rate[c], kRateTol});
            out.push_back({rf.name, "fp_rate" + cls, m.fp_rate, rf.fp_rate[c], kRateTol});
            out.push_back({rf.name, "precision" + cls, m.precision, rf.precision[c], kRateTol});
            out.push_back({rf.name, "f_measure" + cls, m.f_measure, rf.f_measure[c], kRateTol});
        }
    }
    GoldenCheck mlp{"mlp psm_mean 3 features 50 nodes", "macro_gmean",
                    eval::macro_gmean(eval::ConfusionMatrix::from_rows(kMlpPsmMean3x50)), 0.759, kGmeanTol};
    mlp.informational = true;
    out.push_back(mlp);
    return out;
}

}  // namespace edapipe::cli
