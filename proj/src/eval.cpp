#include "edapipe/eval.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <random>

#include "edapipe/csv.hpp"
#include "edapipe/error.hpp"

namespace edapipe::eval {

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t t = 0;
    for (const auto& row : counts)
        for (auto v : row) t += v;
    return t;
}

std::uint64_t ConfusionMatrix::trace() const {
    std::uint64_t t = 0;
    for (std::size_t i = 0; i < kNumClasses; ++i) t += counts[i][i];
    return t;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t i) const {
    return std::accumulate(counts[i].begin(), counts[i].end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t j) const {
    std::uint64_t t = 0;
    for (std::size_t i = 0; i < kNumClasses; ++i) t += counts[i][j];
    return t;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& o) {
    for (std::size_t i = 0; i < kNumClasses; ++i)
        for (std::size_t j = 0; j < kNumClasses; ++j) counts[i][j] += o.counts[i][j];
    return *this;
}

ConfusionMatrix parse_confusion_csv(std::string_view text) {
    ConfusionMatrix cm;
    std::size_t row = 0;
    bool header_skipped = false;
    std::size_t start = 0;
    while (start < text.size()) {
        auto nl = text.find('\n', start);
        if (nl == std::string_view::npos) nl = text.size();
        const auto line = text.substr(start, nl - start);
        start = nl + 1;
        if (line.empty() || line == "\r" || line.front() == '#') continue;
        auto cells = split_csv_line(line);
        if (cells.size() == kNumClasses + 1) cells.erase(cells.begin());  // row label
        auto numeric = [](const std::string& s) {
            return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
        };
        const bool all_numeric = cells.size() == kNumClasses && std::all_of(cells.begin(), cells.end(), numeric);
        if (!all_numeric) {
            if (row == 0 && !header_skipped) {
                header_skipped = true;
                continue;
            }
            throw DataError("confusion matrix row " + std::to_string(row + 1) + " must hold 3 non-negative integers");
        }
        if (row >= kNumClasses) throw DataError("confusion matrix has more than 3 rows");
        for (std::size_t j = 0; j < kNumClasses; ++j) cm.counts[row][j] = std::stoull(cells[j]);
        ++row;
    }
    if (row != kNumClasses) throw DataError("confusion matrix needs exactly 3 rows");
    return cm;
}

std::string confusion_to_csv(const ConfusionMatrix& cm) {
    std::string out = "actual,low,medium,high\n";
    for (std::size_t i = 0; i < kNumClasses; ++i) {
        out += select::class_name(static_cast<ClassLabel>(i));
        for (auto v : cm.counts[i]) out += "," + std::to_string(v);
        out += '\n';
    }
    return out;
}

FoldPlan stratified_folds(std::span<const ClassLabel> labels, std::size_t k, std::uint64_t seed) {
    if (labels.empty()) throw DataError("cannot build folds from an empty label set");
    if (k < 2) throw ValidationError("k", "need at least 2 folds");
    FoldPlan plan;
    plan.k = k;
    plan.seed = seed;
    plan.folds.resize(k);

    std::mt19937_64 rng(seed);
    std::size_t next = 0;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (static_cast<std::size_t>(labels[i]) == c) members.push_back(i);
        if (members.empty()) continue;
        if (members.size() < k) plan.degenerate = true;
        std::shuffle(members.begin(), members.end(), rng);
        for (std::size_t i : members) {
            plan.folds[next].push_back(i);
            next = (next + 1) % k;
        }
    }
    for (auto& f : plan.folds) std::sort(f.begin(), f.end());
    return plan;
}

double weighted_tpr(const ConfusionMatrix& cm) {
    const auto total = cm.total();
    if (total == 0) throw DataError("weighted TPR of an empty confusion matrix");
    return static_cast<double>(cm.trace()) / static_cast<double>(total);
}

GmeanDetail macro_gmean_detail(const ConfusionMatrix& cm) {
    const auto total = cm.total();
    if (total == 0) throw DataError("G-mean of an empty confusion matrix");
    GmeanDetail d;
    double sum = 0.0;
    for (std::size_t i = 0; i < kNumClasses; ++i) {
        const auto tp = cm.counts[i][i];
        const auto row = cm.row_sum(i);
        const auto negatives = total - row;
        if (row == 0 || negatives == 0) {
            d.degenerate = true;
            continue;
        }
        const auto fp = cm.col_sum(i) - tp;
        d.sensitivity[i] = static_cast<double>(tp) / static_cast<double>(row);
        d.specificity[i] = 1.0 - static_cast<double>(fp) / static_cast<double>(negatives);
        sum += std::sqrt(d.sensitivity[i] * d.specificity[i]);
    }
    d.score = sum / static_cast<double>(kNumClasses);
    return d;
}

double macro_gmean(const ConfusionMatrix& cm) { return macro_gmean_detail(cm).score; }

std::optional<double> one_vs_rest_auc(std::span<const double> scores, std::span<const bool> positive) {
    if (scores.size() != positive.size()) throw DataError("scores and labels differ in length");
    const auto n_pos = static_cast<double>(std::count(positive.begin(), positive.end(), true));
    const double n_neg = static_cast<double>(positive.size()) - n_pos;
    if (n_pos == 0 || n_neg == 0) return std::nullopt;

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    // Sweep thresholds from high to low; each group of tied scores moves the
    // ROC point diagonally.
    double area = 0.0, tp = 0.0, fp = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        double dtp = 0.0, dfp = 0.0;
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            (positive[order[j]] ? dtp : dfp) += 1.0;
            ++j;
        }
        area += (dfp / n_neg) * ((tp + tp + dtp) / (2.0 * n_pos));
        tp += dtp;
        fp += dfp;
        i = j;
    }
    return area;
}

ClassReport class_report(const ConfusionMatrix& cm, std::span<const models::Scores> scores,
                         std::span<const ClassLabel> actual) {
    const auto total = cm.total();
    ClassReport r;
    const bool with_roc = !scores.empty();
    if (with_roc && scores.size() != actual.size()) throw DataError("scores and actual labels differ in length");
    std::vector<double> class_scores(scores.size());
    // std::vector<bool> is not contiguous, so the flags live in a plain array.
    auto positive = std::make_unique<bool[]>(scores.size());
    for (std::size_t i = 0; i < kNumClasses; ++i) {
        auto& m = r.classes[i];
        const double tp = static_cast<double>(cm.counts[i][i]);
        const double row = static_cast<double>(cm.row_sum(i));
        const double col = static_cast<double>(cm.col_sum(i));
        const double negatives = static_cast<double>(total) - row;
        m.tp_rate = row > 0 ? tp / row : 0.0;
        m.recall = m.tp_rate;
        m.fp_rate = negatives > 0 ? (col - tp) / negatives : 0.0;
        m.precision_undefined = col == 0;
        m.precision = col > 0 ? tp / col : 0.0;
        m.f_measure = m.precision + m.recall > 0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
        if (with_roc) {
            for (std::size_t row_i = 0; row_i < scores.size(); ++row_i) {
                class_scores[row_i] = scores[row_i][i];
                positive[row_i] = static_cast<std::size_t>(actual[row_i]) == i;
            }
            m.roc_area = one_vs_rest_auc(class_scores, std::span<const bool>(positive.get(), scores.size()));
        }
    }
    return r;
}

Trainer make_trainer(const ModelSpec& spec) {
    return [spec](const Matrix& x, std::span<const ClassLabel> y) -> Predictor {
        auto model = std::make_shared<models::TrainedModel>();
        if (spec.kind == models::ModelKind::mlp) {
            auto cfg = spec.mlp;
            cfg.input_dim = x.cols();
            *model = models::train_mlp(x, y, cfg);
        } else {
            *model = models::train_rf(x, y, spec.rf);
        }
        return [model](std::span<const double> row) { return model->predict(row); };
    };
}

CvResult run_cv(const Matrix& x, std::span<const ClassLabel> y, const Trainer& trainer, std::size_t k,
                std::uint64_t seed, Normalization mode) {
    if (x.rows() != y.size()) throw DataError("feature rows and labels differ in length");
    const FoldPlan plan = stratified_folds(y, k, seed);
    CvResult result;
    result.predicted.assign(y.size(), ClassLabel::low);
    result.scores.assign(y.size(), models::Scores{});
    if (plan.degenerate) result.warnings.push_back("some class has fewer rows than folds");

    std::array<bool, kNumClasses> present{};
    for (auto l : y) present[static_cast<std::size_t>(l)] = true;

    std::vector<char> in_test(y.size());
    for (std::size_t f = 0; f < plan.folds.size(); ++f) {
        const auto& test = plan.folds[f];
        if (test.empty()) continue;
        std::fill(in_test.begin(), in_test.end(), 0);
        for (auto i : test) in_test[i] = 1;
        std::vector<std::size_t> train;
        for (std::size_t i = 0; i < y.size(); ++i)
            if (!in_test[i]) train.push_back(i);

        Matrix x_train = x.select_rows(train);
        Matrix x_test = x.select_rows(test);
        if (mode == Normalization::per_fold && x_train.rows() >= 2) {
            const auto scaler = select::MinMaxScaler::fit(x_train);
            x_train = scaler.transform(x_train);
            x_test = scaler.transform(x_test);
        }
        std::vector<ClassLabel> y_train;
        y_train.reserve(train.size());
        for (auto i : train) y_train.push_back(y[i]);

        std::array<bool, kNumClasses> in_fold{}, in_train{};
        for (auto i : test) in_fold[static_cast<std::size_t>(y[i])] = true;
        for (auto l : y_train) in_train[static_cast<std::size_t>(l)] = true;
        for (std::size_t c = 0; c < kNumClasses; ++c) {
            if (present[c] && !in_fold[c])
                result.warnings.push_back("fold " + std::to_string(f) + " has no " +
                                          std::string(select::class_name(static_cast<ClassLabel>(c))) + " rows");
        }

        Predictor predictor;
        if (std::count(in_train.begin(), in_train.end(), true) < 2) {
            // A single-class training split can only predict that class.
            const auto only = y_train.empty() ? ClassLabel::low : y_train.front();
            result.warnings.push_back("fold " + std::to_string(f) + " trains on a single class");
            predictor = [only](std::span<const double>) {
                models::Prediction p;
                p.label = only;
                p.scores[static_cast<std::size_t>(only)] = 1.0;
                return p;
            };
        } else {
            predictor = trainer(x_train, y_train);
        }
        for (std::size_t t = 0; t < test.size(); ++t) {
            const auto p = predictor(x_test.row(t));
            result.predicted[test[t]] = p.label;
            result.scores[test[t]] = p.scores;
            result.pooled.add(y[test[t]], p.label);
        }
    }

    result.weighted_tpr = weighted_tpr(result.pooled);
    const auto g = macro_gmean_detail(result.pooled);
    result.macro_gmean = g.score;
    result.gmean_degenerate = g.degenerate;
    result.report = class_report(result.pooled, result.scores, y);
    return result;
}

DatasetCvResult run_dataset_cv(const features::DatasetMatrix& dataset, features::Target target,
                               const ModelSpec& spec, std::size_t n_features, std::size_t k, std::uint64_t seed,
                               Normalization mode) {
    const auto normalized = select::min_max_normalize(dataset);
    const auto labels = select::encode_target(normalized, target);
    const auto ranking = select::rank_features(normalized, target);
    DatasetCvResult out;
    out.feature_columns = select::select_top_k(ranking, n_features);
    const Matrix x = mode == Normalization::global ? normalized.values.select_cols(out.feature_columns)
                                                   : select::dataset_values(dataset).select_cols(out.feature_columns);
    out.cv = run_cv(x, labels, make_trainer(spec), k, seed, mode);
    return out;
}

}  // namespace edapipe::eval
