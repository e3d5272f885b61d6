#pragma once

// Reference checks shared by the unit and acceptance tests.

#include <cmath>
#include <map>
#include <random>

#include "edapipe/eval.hpp"
#include "edapipe/models.hpp"

namespace testing {

// ||analytic - numeric|| / (||analytic|| + ||numeric||) using central differences.
inline double gradient_relative_error(const edapipe::models::MlpConfig& c, std::vector<double> params,
                                      const edapipe::Matrix& x, std::span<const edapipe::select::ClassLabel> y,
                                      double step = 1e-5) {
    const auto analytic = edapipe::models::mlp_gradient(c, params, x, y);
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t p = 0; p < params.size(); ++p) {
        const double keep = params[p];
        params[p] = keep + step;
        const double up = edapipe::models::mlp_loss(c, params, x, y);
        params[p] = keep - step;
        const double down = edapipe::models::mlp_loss(c, params, x, y);
        params[p] = keep;
        const double numeric = (up - down) / (2.0 * step);
        diff += (analytic[p] - numeric) * (analytic[p] - numeric);
        na += analytic[p] * analytic[p];
        nn += numeric * numeric;
    }
    const double denom = std::sqrt(na) + std::sqrt(nn);
    return denom == 0.0 ? 0.0 : std::sqrt(diff) / denom;
}

struct RandomNet {
    edapipe::models::MlpConfig config;
    std::vector<double> params;
    edapipe::Matrix x;
    std::vector<edapipe::select::ClassLabel> y;
};

// k <= 4 inputs, h <= 5 hidden units, weights in [-1, 1].
inline RandomNet random_net(std::mt19937_64& gen) {
    std::uniform_int_distribution<std::size_t> k(1, 4), h(1, 5), rows(3, 12);
    std::uniform_int_distribution<int> cls(0, 2);
    std::uniform_real_distribution<double> u(-1.0, 1.0), unit(0.0, 1.0);
    RandomNet net;
    net.config.input_dim = k(gen);
    net.config.hidden_nodes = h(gen);
    net.params.resize(edapipe::models::mlp_param_count(net.config));
    for (double& w : net.params) w = u(gen);
    net.x = edapipe::Matrix(rows(gen), net.config.input_dim);
    for (std::size_t r = 0; r < net.x.rows(); ++r) {
        for (std::size_t c = 0; c < net.x.cols(); ++c) net.x(r, c) = unit(gen);
        net.y.push_back(static_cast<edapipe::select::ClassLabel>(cls(gen)));
    }
    return net;
}

// Folds are disjoint, cover every row, and per-class counts differ by at most one.
inline bool fold_plan_ok(const edapipe::eval::FoldPlan& plan, std::span<const edapipe::select::ClassLabel> labels) {
    std::vector<int> seen(labels.size(), 0);
    for (const auto& f : plan.folds)
        for (auto r : f) {
            if (r >= labels.size() || seen[r]++) return false;
        }
    for (int s : seen)
        if (s != 1) return false;
    for (int c = 0; c < 3; ++c) {
        std::size_t lo = SIZE_MAX, hi = 0;
        for (const auto& f : plan.folds) {
            std::size_t n = 0;
            for (auto r : f) n += static_cast<int>(labels[r]) == c;
            lo = std::min(lo, n);
            hi = std::max(hi, n);
        }
        if (hi - lo > 1) return false;
    }
    return true;
}

}  // namespace testing
