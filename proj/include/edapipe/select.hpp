#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "edapipe/features.hpp"
#include "edapipe/matrix.hpp"

namespace edapipe::select {

enum class ClassLabel : int { low = 0, medium = 1, high = 2 };
inline constexpr std::size_t kNumClasses = 3;
std::string_view class_name(ClassLabel c);

// Per-column min-max scaling. Zero-range columns map to 0 and are flagged.
class MinMaxScaler {
public:
    // Throws LengthError for fewer than 2 rows.
    static MinMaxScaler fit(const Matrix& m);

    // Values outside the fitted range are clipped to [0, 1] when `clip`.
    Matrix transform(const Matrix& m, bool clip = true) const;
    Matrix inverse(const Matrix& normalized) const;

    const std::vector<double>& mins() const { return mins_; }
    const std::vector<double>& maxs() const { return maxs_; }
    const std::vector<bool>& zero_range() const { return zero_range_; }

private:
    std::vector<double> mins_, maxs_;
    std::vector<bool> zero_range_;
};

struct NormalizedMatrix {
    Matrix values;  // rows x 14, every entry in [0, 1]
    MinMaxScaler scaler;
    std::vector<std::string> subjects;

    std::size_t rows() const { return values.rows(); }
    bool zero_range(std::size_t col) const { return scaler.zero_range()[col]; }
};

Matrix dataset_values(const features::DatasetMatrix& dataset);

// Normalizes features and labels together over the whole matrix.
NormalizedMatrix min_max_normalize(const features::DatasetMatrix& dataset);

// <= 0.333333333 low, <= 0.666666666 medium, otherwise high. RangeError outside [0, 1].
ClassLabel encode_class(double normalized_label);

std::vector<ClassLabel> encode_target(const NormalizedMatrix& m, features::Target target);

struct FeatureScore {
    std::size_t index = 0;  // column in the 11-feature block
    std::string name;
    double f_statistic = 0.0;
    double p_value = 1.0;
    bool degenerate = false;
    bool removable = false;
};

struct FeatureRanking {
    std::vector<FeatureScore> entries;  // ascending p, ties in column order
    double cutoff = 0.05;
};

struct AnovaResult {
    double f_statistic = 0.0;
    double p_value = 1.0;
    bool degenerate = false;
};

// One-way ANOVA of `values` grouped by `labels`; empty classes are ignored.
AnovaResult one_way_anova(std::span<const double> values, std::span<const ClassLabel> labels);

FeatureRanking rank_features(const NormalizedMatrix& m, features::Target target, double cutoff = 0.05);
// Same test on explicit columns; `names` labels the columns.
FeatureRanking rank_columns(const Matrix& features, std::span<const ClassLabel> labels,
                            const std::vector<std::string>& names, double cutoff = 0.05);

// Feature indices of the first k ranking entries. Throws ValidationError for k = 0 or k > size.
std::vector<std::size_t> select_top_k(const FeatureRanking& ranking, std::size_t k);

std::string ranking_to_csv(const FeatureRanking& ranking);

}  // namespace edapipe::select
