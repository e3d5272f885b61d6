#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "edapipe/features.hpp"
#include "edapipe/matrix.hpp"
#include "edapipe/models.hpp"

namespace edapipe::eval {

using select::ClassLabel;
using select::kNumClasses;

// Rows are actual classes (low, medium, high), columns predicted.
struct ConfusionMatrix {
    std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses> counts{};

    static ConfusionMatrix from_rows(std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses> rows) {
        return ConfusionMatrix{rows};
    }

    void add(ClassLabel actual, ClassLabel predicted) {
        ++counts[static_cast<std::size_t>(actual)][static_cast<std::size_t>(predicted)];
    }
    std::uint64_t total() const;
    std::uint64_t trace() const;
    std::uint64_t row_sum(std::size_t i) const;
    std::uint64_t col_sum(std::size_t j) const;

    ConfusionMatrix& operator+=(const ConfusionMatrix& other);
    bool operator==(const ConfusionMatrix&) const = default;
};

// Three lines of three comma-separated counts; '#' comments and one
// non-numeric header line are skipped, as is a leading row-label column.
ConfusionMatrix parse_confusion_csv(std::string_view text);
std::string confusion_to_csv(const ConfusionMatrix& cm);

struct FoldPlan {
    std::size_t k = 10;
    std::uint64_t seed = 0;
    std::vector<std::vector<std::size_t>> folds;  // row indices, ascending within each fold
    bool degenerate = false;  // some class has fewer than k rows
};

// Seeded shuffle within each class followed by round-robin assignment; the
// round-robin position carries across classes so fold sizes stay balanced.
FoldPlan stratified_folds(std::span<const ClassLabel> labels, std::size_t k = 10, std::uint64_t seed = 1);

// trace / total. Throws DataError on an empty matrix.
double weighted_tpr(const ConfusionMatrix& cm);

struct GmeanDetail {
    double score = 0.0;
    std::array<double, kNumClasses> sensitivity{};
    std::array<double, kNumClasses> specificity{};
    bool degenerate = false;  // an empty row or empty complement contributed 0
};

GmeanDetail macro_gmean_detail(const ConfusionMatrix& cm);
double macro_gmean(const ConfusionMatrix& cm);

struct ClassMetrics {
    double tp_rate = 0.0;
    double fp_rate = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f_measure = 0.0;
    std::optional<double> roc_area;
    bool precision_undefined = false;
};

struct ClassReport {
    std::array<ClassMetrics, kNumClasses> classes{};
};

// One-vs-rest area under the ROC curve, trapezoidal over distinct score
// thresholds (ties handled as a single step). Nullopt when a side is empty.
std::optional<double> one_vs_rest_auc(std::span<const double> scores, std::span<const bool> positive);

// ROC areas are filled only when per-row scores and actual labels are given.
ClassReport class_report(const ConfusionMatrix& cm, std::span<const models::Scores> scores = {},
                         std::span<const ClassLabel> actual = {});

using Predictor = std::function<models::Prediction(std::span<const double>)>;
using Trainer = std::function<Predictor(const Matrix& x, std::span<const ClassLabel> y)>;

struct ModelSpec {
    models::ModelKind kind = models::ModelKind::rf;
    models::MlpConfig mlp;
    models::RfConfig rf;
};

Trainer make_trainer(const ModelSpec& spec);

enum class Normalization { global, per_fold };

struct CvResult {
    ConfusionMatrix pooled;
    ClassReport report;
    double weighted_tpr = 0.0;
    double macro_gmean = 0.0;
    bool gmean_degenerate = false;
    std::vector<ClassLabel> predicted;     // per row
    std::vector<models::Scores> scores;    // per row
    std::vector<std::string> warnings;
};

// `x` holds the model inputs. In per_fold mode the min-max scaling is refit on
// every training split and applied (clipped) to the held-out fold.
CvResult run_cv(const Matrix& x, std::span<const ClassLabel> y, const Trainer& trainer, std::size_t k,
                std::uint64_t seed, Normalization mode = Normalization::global);

struct DatasetCvResult {
    CvResult cv;
    std::vector<std::size_t> feature_columns;
};

// Normalizes the dataset, encodes `target`, keeps the top `n_features` by
// ANOVA p-value, then cross-validates `spec`.
DatasetCvResult run_dataset_cv(const features::DatasetMatrix& dataset, features::Target target,
                               const ModelSpec& spec, std::size_t n_features, std::size_t k, std::uint64_t seed,
                               Normalization mode = Normalization::global);

}  // namespace edapipe::eval
