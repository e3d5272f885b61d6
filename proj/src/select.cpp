#include "edapipe/select.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/fisher_f.hpp>

#include "edapipe/csv.hpp"
#include "edapipe/error.hpp"

namespace edapipe::select {

std::string_view class_name(ClassLabel c) {
    switch (c) {
        case ClassLabel::low: return "low";
        case ClassLabel::medium: return "medium";
        case ClassLabel::high: return "high";
    }
    return "?";
}

MinMaxScaler MinMaxScaler::fit(const Matrix& m) {
    if (m.rows() < 2) throw LengthError("min-max normalization needs at least 2 rows");
    MinMaxScaler s;
    s.mins_.assign(m.cols(), 0.0);
    s.maxs_.assign(m.cols(), 0.0);
    s.zero_range_.assign(m.cols(), false);
    for (std::size_t c = 0; c < m.cols(); ++c) {
        double lo = m(0, c), hi = m(0, c);
        for (std::size_t r = 1; r < m.rows(); ++r) {
            lo = std::min(lo, m(r, c));
            hi = std::max(hi, m(r, c));
        }
        s.mins_[c] = lo;
        s.maxs_[c] = hi;
        s.zero_range_[c] = !(hi > lo);
    }
    return s;
}

Matrix MinMaxScaler::transform(const Matrix& m, bool clip) const {
    if (m.cols() != mins_.size()) throw DataError("scaler fitted on a different column count");
    Matrix out(m.rows(), m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) {
            if (zero_range_[c]) continue;
            double v = (m(r, c) - mins_[c]) / (maxs_[c] - mins_[c]);
            if (clip) v = std::clamp(v, 0.0, 1.0);
            out(r, c) = v;
        }
    }
    return out;
}

Matrix MinMaxScaler::inverse(const Matrix& n) const {
    Matrix out(n.rows(), n.cols());
    for (std::size_t r = 0; r < n.rows(); ++r)
        for (std::size_t c = 0; c < n.cols(); ++c) out(r, c) = mins_[c] + n(r, c) * (maxs_[c] - mins_[c]);
    return out;
}

Matrix dataset_values(const features::DatasetMatrix& dataset) {
    Matrix m(dataset.size(), features::kNumColumns);
    for (std::size_t r = 0; r < dataset.size(); ++r) {
        const auto v = dataset.rows[r].values();
        std::copy(v.begin(), v.end(), m.row(r).begin());
    }
    return m;
}

NormalizedMatrix min_max_normalize(const features::DatasetMatrix& dataset) {
    const Matrix raw = dataset_values(dataset);
    NormalizedMatrix out;
    out.scaler = MinMaxScaler::fit(raw);
    out.values = out.scaler.transform(raw);
    out.subjects.reserve(dataset.size());
    for (const auto& row : dataset.rows) out.subjects.push_back(row.subject);
    return out;
}

ClassLabel encode_class(double v) {
    if (!(v >= 0.0 && v <= 1.0)) throw RangeError("normalized label " + format_number(v) + " outside [0, 1]");
    if (v <= 0.333333333) return ClassLabel::low;
    if (v <= 0.666666666) return ClassLabel::medium;
    return ClassLabel::high;
}

std::vector<ClassLabel> encode_target(const NormalizedMatrix& m, features::Target target) {
    const std::size_t col = features::target_column(target);
    std::vector<ClassLabel> labels;
    labels.reserve(m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r) labels.push_back(encode_class(m.values(r, col)));
    return labels;
}

AnovaResult one_way_anova(std::span<const double> values, std::span<const ClassLabel> labels) {
    if (values.size() != labels.size()) throw DataError("values and labels differ in length");
    std::array<double, kNumClasses> sum{};
    std::array<std::size_t, kNumClasses> count{};
    for (std::size_t i = 0; i < values.size(); ++i) {
        const auto k = static_cast<std::size_t>(labels[i]);
        sum[k] += values[i];
        ++count[k];
    }
    std::size_t groups = 0;
    bool small_group = false;
    for (std::size_t k = 0; k < kNumClasses; ++k) {
        if (count[k] == 0) continue;
        ++groups;
        small_group = small_group || count[k] < 2;
    }
    AnovaResult r;
    if (groups < 2 || small_group) {
        r.degenerate = true;
        return r;
    }
    const auto n = static_cast<double>(values.size());
    const double grand = std::accumulate(sum.begin(), sum.end(), 0.0) / n;
    std::array<double, kNumClasses> mean{};
    for (std::size_t k = 0; k < kNumClasses; ++k) mean[k] = count[k] ? sum[k] / static_cast<double>(count[k]) : 0.0;

    double ss_between = 0.0, ss_within = 0.0;
    for (std::size_t k = 0; k < kNumClasses; ++k)
        ss_between += static_cast<double>(count[k]) * (mean[k] - grand) * (mean[k] - grand);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double d = values[i] - mean[static_cast<std::size_t>(labels[i])];
        ss_within += d * d;
    }
    const double df_between = static_cast<double>(groups - 1);
    const double df_within = n - static_cast<double>(groups);

    if (ss_within <= 0.0) {
        if (ss_between <= 0.0) {
            r.degenerate = true;  // constant feature
        } else {
            r.f_statistic = std::numeric_limits<double>::infinity();
            r.p_value = 0.0;
        }
        return r;
    }
    r.f_statistic = (ss_between / df_between) / (ss_within / df_within);
    const boost::math::fisher_f dist(df_between, df_within);
    r.p_value = std::clamp(boost::math::cdf(boost::math::complement(dist, r.f_statistic)), 0.0, 1.0);
    return r;
}

FeatureRanking rank_columns(const Matrix& feats, std::span<const ClassLabel> labels,
                            const std::vector<std::string>& names, double cutoff) {
    if (feats.rows() != labels.size()) throw DataError("feature rows and labels differ in length");
    if (names.size() != feats.cols()) throw DataError("feature names do not match column count");
    std::array<bool, kNumClasses> seen{};
    for (auto l : labels) seen[static_cast<std::size_t>(l)] = true;
    if (std::count(seen.begin(), seen.end(), true) < 2)
        throw ValidationError("target", "labels must cover at least 2 classes");

    FeatureRanking ranking;
    ranking.cutoff = cutoff;
    std::vector<double> column(feats.rows());
    for (std::size_t c = 0; c < feats.cols(); ++c) {
        for (std::size_t r = 0; r < feats.rows(); ++r) column[r] = feats(r, c);
        const auto a = one_way_anova(column, labels);
        FeatureScore s;
        s.index = c;
        s.name = names[c];
        s.f_statistic = a.f_statistic;
        s.p_value = a.p_value;
        s.degenerate = a.degenerate;
        s.removable = a.p_value > cutoff;
        ranking.entries.push_back(std::move(s));
    }
    std::stable_sort(ranking.entries.begin(), ranking.entries.end(),
                     [](const FeatureScore& a, const FeatureScore& b) { return a.p_value < b.p_value; });
    return ranking;
}

FeatureRanking rank_features(const NormalizedMatrix& m, features::Target target, double cutoff) {
    const auto labels = encode_target(m, target);
    std::vector<std::size_t> cols(features::kNumFeatures);
    std::iota(cols.begin(), cols.end(), 0);
    std::vector<std::string> names;
    for (std::size_t c = 0; c < features::kNumFeatures; ++c) names.emplace_back(features::kColumnNames[c]);
    return rank_columns(m.values.select_cols(cols), labels, names, cutoff);
}

std::vector<std::size_t> select_top_k(const FeatureRanking& ranking, std::size_t k) {
    if (k == 0 || k > ranking.entries.size())
        throw ValidationError("k", "must lie in [1, " + std::to_string(ranking.entries.size()) + "]");
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < k; ++i) out.push_back(ranking.entries[i].index);
    return out;
}

std::string ranking_to_csv(const FeatureRanking& ranking) {
    std::string out = "rank,feature,f_statistic,p_value,removable,degenerate\n";
    for (std::size_t i = 0; i < ranking.entries.size(); ++i) {
        const auto& e = ranking.entries[i];
        out += std::to_string(i + 1) + "," + e.name + "," + format_number(e.f_statistic) + "," +
               format_number(e.p_value) + "," + (e.removable ? "1" : "0") + "," + (e.degenerate ? "1" : "0") + "\n";
    }
    return out;
}

}  // namespace edapipe::select
