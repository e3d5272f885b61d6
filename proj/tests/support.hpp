#pragma once

// Helpers shared by the unit and acceptance tests.

#include <algorithm>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("edapipe-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::string str(const std::string& leaf = "") const { return leaf.empty() ? path_.string() : (path_ / leaf).string(); }

private:
    std::filesystem::path path_;
};

// Brute-force median of x[lo, hi): sort a copy, average the middle pair when even.
inline double brute_median(const std::vector<double>& x, std::size_t lo, std::size_t hi) {
    std::vector<double> w(x.begin() + static_cast<long>(lo), x.begin() + static_cast<long>(hi));
    std::sort(w.begin(), w.end());
    const std::size_t n = w.size();
    return n % 2 ? w[n / 2] : 0.5 * (w[n / 2 - 1] + w[n / 2]);
}

inline std::vector<double> brute_median_filter(const std::vector<double>& x, std::size_t half) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const std::size_t lo = i >= half ? i - half : 0;
        const std::size_t hi = std::min(x.size(), i + half + 1);
        out[i] = brute_median(x, lo, hi);
    }
    return out;
}

struct ScannedPeak {
    std::size_t index;
    double amplitude;
};

// Exhaustive local-extrema scan: every strict local-maximum plateau (first
// index of the plateau, never touching either end) is located first; its rise
// is measured from the lowest sample since the previous such plateau ended.
inline std::vector<ScannedPeak> scan_peaks(const std::vector<double>& x, double threshold) {
    struct Plateau {
        std::size_t start, end;
    };
    std::vector<Plateau> maxima;
    const std::size_t n = x.size();
    for (std::size_t s = 1; s < n; ++s) {
        if (x[s - 1] >= x[s]) continue;  // must rise into the plateau
        std::size_t e = s;
        while (e + 1 < n && x[e + 1] == x[s]) ++e;
        if (e + 1 < n && x[e + 1] < x[s]) maxima.push_back({s, e + 1});
    }
    std::vector<ScannedPeak> out;
    std::size_t from = 0;
    for (const auto& m : maxima) {
        double low = x[from];
        for (std::size_t i = from; i <= m.start; ++i) low = std::min(low, x[i]);
        if (x[m.start] - low >= threshold) out.push_back({m.start, x[m.start] - low});
        from = m.end;
    }
    return out;
}

// Random piecewise-linear signal with occasional flat runs; knot values are
// multiples of 1/64 so plateaus and ties are exact.
inline std::vector<double> random_piecewise_linear(std::mt19937_64& rng, std::size_t max_len = 60) {
    std::uniform_int_distribution<std::size_t> len_d(3, max_len), seg_d(1, 6), val_d(0, 64);
    std::bernoulli_distribution flat(0.15);
    const std::size_t len = len_d(rng);
    std::vector<double> x;
    double prev = static_cast<double>(val_d(rng)) / 64.0;
    x.push_back(prev);
    while (x.size() < len) {
        const std::size_t seg = seg_d(rng);
        const double next = flat(rng) ? prev : static_cast<double>(val_d(rng)) / 64.0;
        for (std::size_t k = 1; k <= seg && x.size() < len; ++k)
            x.push_back(prev + (next - prev) * static_cast<double>(k) / static_cast<double>(seg));
        prev = next;
    }
    return x;
}

}  // namespace testing
