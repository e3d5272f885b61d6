#include <cmath>
#include <random>

#include "doctest.h"
#include "edapipe/error.hpp"
#include "edapipe/signal.hpp"
#include "support.hpp"

using namespace edapipe;
using namespace edapipe::signal;

namespace {

Series make(std::vector<double> v, Unit unit = Unit::microsiemens, double rate = 2.0) {
    Series s;
    s.values = std::move(v);
    s.rate = rate;
    s.unit = unit;
    return s;
}

}  // namespace

TEST_CASE("analog_to_digital anchors and half-up rounding") {
    ScaleMap m;
    CHECK(analog_to_digital(3.3, m) == 4095);
    CHECK(analog_to_digital(0.0, m) == 0);
    // 1.65 / 3.3 * 4095 = 2047.5 exactly in real arithmetic
    CHECK(analog_to_digital(1.65, m) == 2048);
    CHECK_THROWS_AS(analog_to_digital(3.31, m), RangeError);
    CHECK_THROWS_AS(analog_to_digital(-0.01, m), RangeError);
}

TEST_CASE("digital_to_scale is the affine map between the anchors") {
    ScaleMap m;
    CHECK(digital_to_scale(0.0, m).cm == 0.0);
    CHECK(digital_to_scale(4095.0, m).cm == 10.0);
    CHECK(digital_to_scale(2048.0, m).cm == doctest::Approx(5.001221001221).epsilon(1e-12));
    // three collinear points
    const double a = digital_to_scale(1000.0, m).cm, b = digital_to_scale(1500.0, m).cm, c = digital_to_scale(2000.0, m).cm;
    CHECK(b - a == doctest::Approx(c - b).epsilon(1e-12));

    ScaleMap shifted;
    shifted.gad_min = 100;
    shifted.gad_max = 3900;
    shifted.scale_min = 1.0;
    shifted.scale_max = 9.0;
    CHECK(digital_to_scale(100.0, shifted).cm == 1.0);
    CHECK(digital_to_scale(3900.0, shifted).cm == 9.0);
}

TEST_CASE("digital_to_scale clamps and flags, strict mode raises") {
    ScaleMap m;
    m.gad_min = 100;
    m.gad_max = 4000;
    auto lo = digital_to_scale(50.0, m);
    CHECK(lo.clamped);
    CHECK(lo.cm == 0.0);
    auto hi = digital_to_scale(4095.0, m);
    CHECK(hi.clamped);
    CHECK(hi.cm == 10.0);
    CHECK_FALSE(digital_to_scale(2000.0, m).clamped);
    CHECK_THROWS_AS(digital_to_scale(4095.0, m, true), RangeError);
}

TEST_CASE("ADC round trip hits the scale anchors exactly") {
    ScaleMap m;
    CHECK(digital_to_scale(static_cast<double>(analog_to_digital(0.0, m)), m).cm == m.scale_min);
    CHECK(digital_to_scale(static_cast<double>(analog_to_digital(m.p_ref, m)), m).cm == m.scale_max);
}

TEST_CASE("scale map validation") {
    ScaleMap m;
    m.gad_max = 5000;
    CHECK_THROWS_AS(m.validate(), ValidationError);
    ScaleMap inverted;
    inverted.scale_min = 10;
    inverted.scale_max = 0;
    CHECK_THROWS_AS(inverted.validate(), ValidationError);
}

TEST_CASE("counts_to_conductance") {
    ConductanceMap m;
    auto out = counts_to_conductance(make({0.0, 4095.0}, Unit::counts), m);
    CHECK(out.unit == Unit::microsiemens);
    CHECK(out.values[0] == 0.0);
    // Full scale is 4095/4096 of vcc/sensitivity = 25 uS.
    CHECK(out.values[1] == doctest::Approx(25.0).epsilon(0.001));
    CHECK(out.values[1] == doctest::Approx(4095.0 / 4096.0 * 25.0).epsilon(1e-12));

    ConductanceMap doubled = m;
    doubled.sensitivity *= 2;
    auto in = make({10.0, 500.0, 3000.0}, Unit::counts);
    auto a = counts_to_conductance(in, m), b = counts_to_conductance(in, doubled);
    for (std::size_t i = 0; i < 3; ++i) CHECK(b.values[i] == doctest::Approx(a.values[i] / 2).epsilon(1e-15));

    CHECK_THROWS_AS(counts_to_conductance(make({1.0}, Unit::cm), m), ValidationError);
}

TEST_CASE("trim_baseline") {
    auto s = make(std::vector<double>(960, 1.0));
    CHECK(trim_baseline(s).size() == 840);
    CHECK(trim_baseline(s, 0).values == s.values);
    CHECK_THROWS_AS(trim_baseline(make(std::vector<double>(120, 1.0))), LengthError);
    std::vector<double> ramp(130);
    for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = static_cast<double>(i);
    auto t = trim_baseline(make(ramp));
    CHECK(t.values.front() == 120.0);
}

TEST_CASE("median_filter basics") {
    auto constant = make(std::vector<double>(50, 3.5), Unit::cm);
    CHECK(median_filter(constant).values == constant.values);

    std::vector<double> spike(100, 2.0);
    spike[50] = 7.0;
    auto f = median_filter(make(spike, Unit::cm));
    CHECK(f.values[50] == 2.0);
    CHECK(f.size() == spike.size());

    std::vector<double> mono(80);
    std::mt19937_64 rng(3);
    double acc = 0;
    for (auto& v : mono) v = acc += std::uniform_real_distribution<double>(0, 1)(rng);
    auto g = median_filter(make(mono, Unit::cm));
    for (std::size_t i = 1; i < g.size(); ++i) CHECK(g.values[i] >= g.values[i - 1]);

    // even-sized edge window: first sample sees indices 0..20 = 21 values (odd);
    // with a 0.5 s half window at 2 Hz the edge window is {x0, x1}.
    auto h = median_filter(make({1.0, 4.0, 10.0}, Unit::cm), 0.5);
    CHECK(h.values[0] == 2.5);
    CHECK(h.values[1] == 4.0);
    CHECK(h.values[2] == 7.0);
}

TEST_CASE("median_filter matches brute-force windowed median") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const auto x = testing::random_piecewise_linear(rng, 50);
        const double half_s = std::uniform_int_distribution<int>(0, 8)(rng) / 2.0;
        const auto got = median_filter(make(x, Unit::cm), half_s).values;
        const auto want = testing::brute_median_filter(x, static_cast<std::size_t>(half_s * 2));
        REQUIRE(got == want);
    }
}

TEST_CASE("decompose: constant, ramp, impulse") {
    auto c = decompose(make(std::vector<double>(100, 4.2)));
    for (double v : c.tonic.values) CHECK(v == 4.2);
    for (double v : c.phasic.values) CHECK(v == 0.0);
    CHECK(c.peaks.empty());

    std::vector<double> ramp(200);
    for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = 3.0 + 0.0009 * static_cast<double>(i);
    auto r = decompose(make(ramp));
    double worst = 0;
    for (double v : r.phasic.values) worst = std::max(worst, std::abs(v));
    CHECK(worst < 0.01);

    // ramp plus one SCR: 1 s rise, 4 s decay, 0.5 uS
    std::vector<double> scr = ramp;
    for (std::size_t i = 100; i < scr.size(); ++i) {
        const double t = (static_cast<double>(i) - 100.0) / 2.0;
        scr[i] += t < 1.0 ? 0.5 * t : 0.5 * std::exp(-(t - 1.0) / 4.0);
    }
    auto s = decompose(make(scr));
    double excursion = 0;
    for (std::size_t i = 95; i < 115; ++i) excursion = std::max(excursion, s.phasic.values[i]);
    CHECK(excursion >= 0.4);
    CHECK_FALSE(s.peaks.empty());

    CHECK_THROWS_AS(decompose(make({1.0})), LengthError);
}

TEST_CASE("decompose reconstructs its input") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> noise(0, 0.2);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> x(300);
        double level = 5;
        for (auto& v : x) v = (level += noise(rng) * 0.1) + noise(rng);
        auto d = decompose(make(x));
        for (std::size_t i = 0; i < x.size(); ++i)
            REQUIRE(std::abs(d.tonic.values[i] + d.phasic.values[i] - x[i]) < 1e-9);
        for (std::size_t k = 1; k < d.peaks.size(); ++k) CHECK(d.peaks[k].index > d.peaks[k - 1].index);
        for (const auto& p : d.peaks) CHECK(p.amplitude >= 0.01);
    }
}

TEST_CASE("detect_peaks examples") {
    CHECK(detect_peaks(std::vector<double>(30, 0.0), 0.01).empty());

    std::vector<double> bump(21, 0.0);
    for (int i = 0; i <= 10; ++i) bump[static_cast<std::size_t>(i)] = 0.05 * i;
    for (int i = 11; i <= 20; ++i) bump[static_cast<std::size_t>(i)] = 0.05 * (20 - i);
    auto p = detect_peaks(std::span<const double>(bump), 0.01);
    REQUIRE(p.size() == 1);
    CHECK(p[0].index == 10);
    CHECK(p[0].amplitude == doctest::Approx(0.5).epsilon(1e-9));

    std::vector<double> small = {0.0, 0.009, 0.0};
    CHECK(detect_peaks(std::span<const double>(small), 0.01).empty());
    CHECK_THROWS_AS(detect_peaks(std::span<const double>(small), 0.0), ValidationError);

    // endpoints are never peaks
    std::vector<double> edges = {1.0, 0.0, 0.0, 1.0};
    CHECK(detect_peaks(std::span<const double>(edges), 0.01).empty());
}

TEST_CASE("detect_peaks is invariant to a constant offset") {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 100; ++trial) {
        auto x = testing::random_piecewise_linear(rng);
        auto y = x;
        for (auto& v : y) v += 0.25;  // exact in binary for multiples of 1/64
        auto a = detect_peaks(std::span<const double>(x), 0.05), b = detect_peaks(std::span<const double>(y), 0.05);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].index == b[i].index);
            CHECK(a[i].amplitude == doctest::Approx(b[i].amplitude).epsilon(1e-12));
        }
    }
}

TEST_CASE("detect_peaks matches the exhaustive scanner") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 300; ++trial) {
        const auto x = testing::random_piecewise_linear(rng);
        const auto got = detect_peaks(std::span<const double>(x), 0.03);
        const auto want = testing::scan_peaks(x, 0.03);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].index == want[i].index);
            CHECK(got[i].amplitude == want[i].amplitude);
        }
    }
}

TEST_CASE("series validation rejects bad input") {
    CHECK_THROWS_AS(median_filter(make({1.0, NAN}, Unit::cm)), ValidationError);
    CHECK_THROWS_AS(median_filter(make({1.0}, Unit::cm, 0.0)), ValidationError);
}
