#include <random>

#include "cohort.hpp"
#include "doctest.h"
#include "edapipe/error.hpp"
#include "edapipe/select.hpp"

using namespace edapipe;
using namespace edapipe::select;

namespace {

Matrix column(std::vector<double> v) {
    Matrix m(v.size(), 1);
    for (std::size_t i = 0; i < v.size(); ++i) m(i, 0) = v[i];
    return m;
}

std::vector<double> col_values(const Matrix& m, std::size_t c) {
    std::vector<double> out;
    for (std::size_t r = 0; r < m.rows(); ++r) out.push_back(m(r, c));
    return out;
}

}  // namespace

TEST_CASE("min-max scaling") {
    auto s = MinMaxScaler::fit(column({0, 5, 10}));
    CHECK(col_values(s.transform(column({0, 5, 10})), 0) == std::vector<double>{0, 0.5, 1});
    s = MinMaxScaler::fit(column({2, 4, 10}));
    CHECK(col_values(s.transform(column({2, 4, 10})), 0) == std::vector<double>{0, 0.25, 1});
    s = MinMaxScaler::fit(column({3, 3, 3}));
    CHECK(s.zero_range()[0]);
    CHECK(col_values(s.transform(column({3, 3, 3})), 0) == std::vector<double>{0, 0, 0});
    CHECK_THROWS_AS(MinMaxScaler::fit(column({1})), LengthError);

    // held-out values are clipped unless asked otherwise
    s = MinMaxScaler::fit(column({0, 10}));
    CHECK(col_values(s.transform(column({-5, 15})), 0) == std::vector<double>{0, 1});
    CHECK(col_values(s.transform(column({-5, 15}), false), 0) == std::vector<double>{-0.5, 1.5});
}

TEST_CASE("normalization round trip") {
    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> u(-1e3, 1e3);
    Matrix m(50, 6);
    for (std::size_t r = 0; r < 50; ++r)
        for (std::size_t c = 0; c < 6; ++c) m(r, c) = u(gen);
    const auto s = MinMaxScaler::fit(m);
    const auto back = s.inverse(s.transform(m));
    for (std::size_t r = 0; r < 50; ++r)
        for (std::size_t c = 0; c < 6; ++c) CHECK(std::abs(back(r, c) - m(r, c)) < 1e-12 * std::max(1.0, std::abs(m(r, c))));
}

TEST_CASE("normalized cohort matrix") {
    const auto n = min_max_normalize(testing::cohort_dataset());
    REQUIRE(n.rows() == 630);
    REQUIRE(n.values.cols() == 14);
    for (double v : n.values.data()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    features::DatasetMatrix one;
    one.rows.push_back(testing::cohort_dataset().rows[0]);
    CHECK_THROWS_AS(min_max_normalize(one), LengthError);
}

TEST_CASE("class encoding bands") {
    CHECK(encode_class(0.0) == ClassLabel::low);
    CHECK(encode_class(0.333333333) == ClassLabel::low);
    CHECK(encode_class(0.333333334) == ClassLabel::medium);
    CHECK(encode_class(0.5) == ClassLabel::medium);
    CHECK(encode_class(0.666666666) == ClassLabel::medium);
    CHECK(encode_class(0.666666667) == ClassLabel::high);
    CHECK(encode_class(1.0) == ClassLabel::high);
    CHECK_THROWS_AS(encode_class(-0.01), RangeError);
    CHECK_THROWS_AS(encode_class(1.01), RangeError);
    CHECK_THROWS_AS(encode_class(std::nan("")), RangeError);
    CHECK(class_name(ClassLabel::medium) == "medium");
}

TEST_CASE("one-way ANOVA against an independent reference") {
    // reference statistic and p-value from a separate statistics package
    const std::vector<double> v = {0.1, 0.2, 0.15, 0.3, 0.4, 0.5, 0.45, 0.6, 0.9, 0.8, 0.7, 0.75};
    const std::vector<ClassLabel> y = {ClassLabel::low,    ClassLabel::low,    ClassLabel::low,  ClassLabel::low,
                                       ClassLabel::medium, ClassLabel::medium, ClassLabel::medium, ClassLabel::high,
                                       ClassLabel::high,   ClassLabel::high,   ClassLabel::high, ClassLabel::high};
    auto a = one_way_anova(v, y);
    CHECK(a.f_statistic == doctest::Approx(41.48780487804876).epsilon(1e-10));
    CHECK(a.p_value == doctest::Approx(2.8679016371813147e-05).epsilon(1e-8));
    CHECK_FALSE(a.degenerate);

    const std::vector<double> w = {1, 2, 3, 4, 5, 2, 3, 4, 5, 6.5};
    std::vector<ClassLabel> two(10, ClassLabel::low);
    std::fill(two.begin() + 5, two.end(), ClassLabel::high);
    a = one_way_anova(w, two);
    CHECK(a.f_statistic == doctest::Approx(1.09009009009009).epsilon(1e-10));
    CHECK(a.p_value == doctest::Approx(0.32697099790709294).epsilon(1e-8));

    // constant column carries no between-group variance
    a = one_way_anova(std::vector<double>(10, 0.3), two);
    CHECK(a.p_value == 1.0);
    CHECK(a.degenerate);
}

TEST_CASE("ranking") {
    std::mt19937_64 gen(3);
    std::normal_distribution<double> noise(0.0, 1.0);
    const std::size_t n = 90;
    Matrix f(n, 3);
    std::vector<ClassLabel> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = static_cast<ClassLabel>(i % 3);
        f(i, 0) = noise(gen);
        f(i, 1) = static_cast<double>(i % 3) / 2.0;  // identical to the label
        f(i, 2) = 0.25;
    }
    const auto r = rank_columns(f, y, {"noise", "label", "flat"});
    REQUIRE(r.entries.size() == 3);
    CHECK(r.entries[0].name == "label");
    CHECK(r.entries[0].p_value < 1e-12);
    CHECK(r.entries[2].name == "flat");
    CHECK(r.entries[2].p_value == 1.0);
    CHECK(r.entries[2].degenerate);
    CHECK(r.entries[2].removable);
    for (std::size_t i = 1; i < 3; ++i) CHECK(r.entries[i - 1].p_value <= r.entries[i].p_value);

    CHECK(select_top_k(r, 3).size() == 3);
    CHECK(select_top_k(r, 1) == std::vector<std::size_t>{1});
    CHECK_THROWS_AS(select_top_k(r, 0), ValidationError);
    CHECK_THROWS_AS(select_top_k(r, 4), ValidationError);

    const auto csv = ranking_to_csv(r);
    CHECK(csv.rfind("rank,feature,f_statistic,p_value,removable,degenerate\n1,label,", 0) == 0);

    CHECK_THROWS_AS(rank_columns(f, std::vector<ClassLabel>(n, ClassLabel::low), {"a", "b", "c"}), ValidationError);
}

TEST_CASE("equal p-values keep column order") {
    Matrix f(6, 3);
    std::vector<ClassLabel> y = {ClassLabel::low, ClassLabel::low, ClassLabel::low,
                                 ClassLabel::high, ClassLabel::high, ClassLabel::high};
    const double vals[6] = {0.1, 0.3, 0.2, 0.8, 0.7, 0.9};
    for (std::size_t i = 0; i < 6; ++i) {
        f(i, 0) = 0.5;
        f(i, 1) = vals[i];
        f(i, 2) = vals[i];
    }
    const auto r = rank_columns(f, y, {"a", "b", "c"});
    CHECK(select_top_k(r, 2) == std::vector<std::size_t>{1, 2});
}

TEST_CASE("noise features are rarely significant") {
    std::mt19937_64 gen(2024);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::uniform_int_distribution<int> cls(0, 2);
    int hits = 0;
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> v(60);
        std::vector<ClassLabel> y(60);
        for (std::size_t i = 0; i < 60; ++i) {
            v[i] = noise(gen);
            y[i] = static_cast<ClassLabel>(cls(gen));
        }
        if (one_way_anova(v, y).p_value < 0.05) ++hits;
    }
    CHECK(hits <= 20);
}

TEST_CASE("affine invariance") {
    const auto& ds = testing::cohort_dataset();
    auto scaled = ds;
    for (auto& r : scaled.rows) {
        r.mean = 3.0 * r.mean + 7.0;
        r.rms = 0.01 * r.rms - 2.0;
        r.psm_mean = 2.5 * r.psm_mean + 1.0;
    }
    const auto a = min_max_normalize(ds);
    const auto b = min_max_normalize(scaled);
    CHECK(encode_target(a, features::Target::psm_mean) == encode_target(b, features::Target::psm_mean));
    const auto ra = rank_features(a, features::Target::psm_mean);
    const auto rb = rank_features(b, features::Target::psm_mean);
    REQUIRE(ra.entries.size() == 11);
    for (std::size_t i = 0; i < 11; ++i) CHECK(ra.entries[i].index == rb.entries[i].index);
}
