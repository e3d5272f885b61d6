#include "edapipe/models.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numeric>
#include <random>
#include <sstream>

#include "edapipe/error.hpp"

namespace edapipe::models {

ClassLabel argmax_label(const Scores& s) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < kNumClasses; ++k)
        if (s[k] > s[best]) best = k;
    return static_cast<ClassLabel>(best);
}

Scores Prediction::normalized() const {
    const double total = scores[0] + scores[1] + scores[2];
    Scores out{};
    for (std::size_t k = 0; k < kNumClasses; ++k) out[k] = total > 0.0 ? scores[k] / total : 1.0 / kNumClasses;
    return out;
}

void MlpConfig::validate() const {
    if (input_dim < 1) throw ConfigError("mlp input_dim must be >= 1");
    if (hidden_nodes < 1) throw ConfigError("mlp hidden_nodes must be >= 1");
    if (output_dim != kNumClasses) throw ConfigError("mlp output_dim must be 3");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("mlp learning_rate must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("mlp momentum must lie in [0, 1)");
    if (epochs < 1) throw ConfigError("mlp epochs must be >= 1");
}

void RfConfig::validate() const {
    if (n_trees < 1) throw ConfigError("rf n_trees must be >= 1");
    if (!(bag_percent > 0.0 && bag_percent <= 100.0)) throw ConfigError("rf bag_percent must lie in (0, 100]");
}

std::size_t RfConfig::split_candidates(std::size_t m) const {
    if (features_per_split > 0) return std::min(features_per_split, m);
    return std::min<std::size_t>(m, static_cast<std::size_t>(std::floor(std::log2(static_cast<double>(m)))) + 1);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

namespace {

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

void check_training_data(const Matrix& x, std::span<const ClassLabel> y) {
    if (x.empty()) throw ValidationError("x", "training set is empty");
    if (x.rows() != y.size()) throw DataError("feature rows and labels differ in length");
    std::array<bool, kNumClasses> seen{};
    for (auto l : y) seen[static_cast<std::size_t>(l)] = true;
    if (std::count(seen.begin(), seen.end(), true) < 2)
        throw ValidationError("y", "labels must cover at least 2 classes");
}

// Forward pass into `hidden` and `out`; returns nothing, buffers sized by caller.
void mlp_forward(const MlpConfig& c, const double* p, const double* x, double* hidden, double* out) {
    const std::size_t k = c.input_dim, h = c.hidden_nodes;
    for (std::size_t j = 0; j < h; ++j) {
        const double* w = p + j * (k + 1);
        double z = w[k];
        for (std::size_t i = 0; i < k; ++i) z += w[i] * x[i];
        hidden[j] = sigmoid(z);
    }
    const double* w2 = p + h * (k + 1);
    for (std::size_t o = 0; o < c.output_dim; ++o) {
        const double* w = w2 + o * (h + 1);
        double z = w[h];
        for (std::size_t j = 0; j < h; ++j) z += w[j] * hidden[j];
        out[o] = sigmoid(z);
    }
}

// Adds scale * dL/dp for one sample to `grad`; returns the sample loss.
double mlp_backward(const MlpConfig& c, const double* p, const double* x, ClassLabel label, double* hidden,
                    double* out, double* delta_hidden, double* grad, double scale) {
    const std::size_t k = c.input_dim, h = c.hidden_nodes;
    mlp_forward(c, p, x, hidden, out);
    const double* w2 = p + h * (k + 1);
    double* g2 = grad + h * (k + 1);
    std::fill(delta_hidden, delta_hidden + h, 0.0);
    double loss = 0.0;
    for (std::size_t o = 0; o < c.output_dim; ++o) {
        const double target = static_cast<std::size_t>(label) == o ? 1.0 : 0.0;
        const double err = out[o] - target;
        loss += 0.5 * err * err;
        const double d = err * out[o] * (1.0 - out[o]);
        const double* w = w2 + o * (h + 1);
        double* g = g2 + o * (h + 1);
        for (std::size_t j = 0; j < h; ++j) {
            g[j] += scale * d * hidden[j];
            delta_hidden[j] += d * w[j];
        }
        g[h] += scale * d;
    }
    for (std::size_t j = 0; j < h; ++j) {
        const double d = delta_hidden[j] * hidden[j] * (1.0 - hidden[j]);
        double* g = grad + j * (k + 1);
        for (std::size_t i = 0; i < k; ++i) g[i] += scale * d * x[i];
        g[k] += scale * d;
    }
    return loss;
}

void check_mlp_shapes(const MlpConfig& c, std::span<const double> params, const Matrix& x) {
    c.validate();
    if (params.size() != mlp_param_count(c)) throw DataError("parameter vector has the wrong length");
    if (x.cols() != c.input_dim) throw DataError("input width does not match mlp input_dim");
}

}  // namespace

std::size_t mlp_param_count(const MlpConfig& c) {
    return c.hidden_nodes * (c.input_dim + 1) + c.output_dim * (c.hidden_nodes + 1);
}

Scores MlpModel::forward(std::span<const double> x) const {
    std::vector<double> hidden(config.hidden_nodes);
    Scores out{};
    mlp_forward(config, params.data(), x.data(), hidden.data(), out.data());
    return out;
}

double mlp_loss(const MlpConfig& c, std::span<const double> params, const Matrix& x, std::span<const ClassLabel> y) {
    check_mlp_shapes(c, params, x);
    std::vector<double> hidden(c.hidden_nodes);
    Scores out{};
    double total = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) {
        mlp_forward(c, params.data(), x.row(r).data(), hidden.data(), out.data());
        for (std::size_t o = 0; o < c.output_dim; ++o) {
            const double err = out[o] - (static_cast<std::size_t>(y[r]) == o ? 1.0 : 0.0);
            total += 0.5 * err * err;
        }
    }
    return total / static_cast<double>(x.rows());
}

std::vector<double> mlp_gradient(const MlpConfig& c, std::span<const double> params, const Matrix& x,
                                 std::span<const ClassLabel> y) {
    check_mlp_shapes(c, params, x);
    std::vector<double> grad(params.size(), 0.0), hidden(c.hidden_nodes), delta(c.hidden_nodes);
    Scores out{};
    const double scale = 1.0 / static_cast<double>(x.rows());
    for (std::size_t r = 0; r < x.rows(); ++r)
        mlp_backward(c, params.data(), x.row(r).data(), y[r], hidden.data(), out.data(), delta.data(), grad.data(),
                     scale);
    return grad;
}

TrainedModel train_mlp(const Matrix& x, std::span<const ClassLabel> y, const MlpConfig& config) {
    config.validate();
    check_training_data(x, y);
    if (x.cols() != config.input_dim) throw DataError("input width does not match mlp input_dim");

    MlpModel model;
    model.config = config;
    model.params.resize(mlp_param_count(config));
    std::mt19937_64 rng(config.seed);
    std::uniform_real_distribution<double> init(-0.5, 0.5);
    for (double& w : model.params) w = init(rng);

    const std::size_t n = x.rows();
    std::vector<double> grad(model.params.size()), step(model.params.size(), 0.0);
    std::vector<double> hidden(config.hidden_nodes), delta(config.hidden_nodes);
    Scores out{};
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t r : order) {
            std::fill(grad.begin(), grad.end(), 0.0);
            epoch_loss += mlp_backward(config, model.params.data(), x.row(r).data(), y[r], hidden.data(), out.data(),
                                       delta.data(), grad.data(), 1.0);
            for (std::size_t p = 0; p < grad.size(); ++p) {
                step[p] = -config.learning_rate * grad[p] + config.momentum * step[p];
                model.params[p] += step[p];
            }
        }
        if (!std::isfinite(epoch_loss)) throw TrainingDivergedError(epoch + 1, "non-finite loss");
    }
    model.final_loss = mlp_loss(config, model.params, x, y);
    if (!std::isfinite(model.final_loss)) throw TrainingDivergedError(config.epochs, "non-finite final loss");
    return TrainedModel(std::move(model));
}

const TreeNode& DecisionTree::leaf_for(std::span<const double> x) const {
    std::size_t i = 0;
    while (nodes[i].feature >= 0) {
        const auto& n = nodes[i];
        i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
    }
    return nodes[i];
}

ClassLabel DecisionTree::vote(std::span<const double> x) const { return argmax_label(leaf_for(x).counts); }

std::size_t DecisionTree::depth() const {
    std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};
    std::size_t deepest = 0;
    while (!stack.empty()) {
        const auto [i, d] = stack.back();
        stack.pop_back();
        deepest = std::max(deepest, d);
        if (nodes[i].feature >= 0) {
            stack.push_back({static_cast<std::size_t>(nodes[i].left), d + 1});
            stack.push_back({static_cast<std::size_t>(nodes[i].right), d + 1});
        }
    }
    return deepest;
}

Scores ForestModel::vote_fractions(std::span<const double> x) const {
    Scores votes{};
    for (const auto& t : trees) votes[static_cast<std::size_t>(t.vote(x))] += 1.0;
    for (double& v : votes) v /= static_cast<double>(trees.size());
    return votes;
}

namespace {

using Counts = std::array<double, kNumClasses>;

double entropy(const Counts& c, double total) {
    double h = 0.0;
    for (double v : c)
        if (v > 0.0) {
            const double p = v / total;
            h -= p * std::log2(p);
        }
    return h;
}

struct Split {
    bool valid = false;
    std::size_t feature = 0;
    double threshold = 0.0;
    double gain = -1.0;
};

class TreeBuilder {
public:
    TreeBuilder(const Matrix& x, std::span<const ClassLabel> y, std::size_t candidates, std::uint64_t seed)
        : x_(x), y_(y), candidates_(candidates), rng_(seed) {}

    DecisionTree build(std::vector<std::size_t> idx) {
        DecisionTree tree;
        grow(tree, std::move(idx));
        return tree;
    }

private:
    int grow(DecisionTree& tree, std::vector<std::size_t> idx) {
        TreeNode node;
        for (std::size_t i : idx) node.counts[static_cast<std::size_t>(y_[i])] += 1.0;
        const auto node_id = static_cast<int>(tree.nodes.size());
        tree.nodes.push_back(node);

        const auto classes = std::count_if(node.counts.begin(), node.counts.end(), [](double c) { return c > 0.0; });
        if (classes <= 1) return node_id;
        const Split split = find_split(idx, node.counts);
        if (!split.valid) return node_id;

        std::vector<std::size_t> left, right;
        for (std::size_t i : idx) (x_(i, split.feature) <= split.threshold ? left : right).push_back(i);
        idx.clear();
        idx.shrink_to_fit();
        const int l = grow(tree, std::move(left));
        const int r = grow(tree, std::move(right));
        auto& n = tree.nodes[static_cast<std::size_t>(node_id)];
        n.feature = static_cast<int>(split.feature);
        n.threshold = split.threshold;
        n.left = l;
        n.right = r;
        return node_id;
    }

    // Best entropy split over `candidates_` random features; when none of them
    // can separate the node, keeps drawing features until one can.
    Split find_split(const std::vector<std::size_t>& idx, const Counts& parent) {
        std::vector<std::size_t> features(x_.cols());
        std::iota(features.begin(), features.end(), 0);
        std::shuffle(features.begin(), features.end(), rng_);
        const auto total = static_cast<double>(idx.size());
        const double parent_h = entropy(parent, total);

        Split best;
        std::vector<std::size_t> sorted(idx);
        for (std::size_t n = 0; n < features.size(); ++n) {
            if (n >= candidates_ && best.valid) break;
            const std::size_t f = features[n];
            std::sort(sorted.begin(), sorted.end(), [&](std::size_t a, std::size_t b) {
                const double va = x_(a, f), vb = x_(b, f);
                return va < vb || (va == vb && a < b);
            });
            Counts left{};
            for (std::size_t p = 0; p + 1 < sorted.size(); ++p) {
                left[static_cast<std::size_t>(y_[sorted[p]])] += 1.0;
                const double v = x_(sorted[p], f), next = x_(sorted[p + 1], f);
                if (!(v < next)) continue;
                Counts right{};
                for (std::size_t k = 0; k < kNumClasses; ++k) right[k] = parent[k] - left[k];
                const auto nl = static_cast<double>(p + 1);
                const double nr = total - nl;
                const double gain = parent_h - (nl / total) * entropy(left, nl) - (nr / total) * entropy(right, nr);
                if (!best.valid || gain > best.gain) {
                    double thr = v + (next - v) / 2.0;
                    if (!(thr < next)) thr = v;
                    best = {true, f, thr, gain};
                }
            }
        }
        return best;
    }

    const Matrix& x_;
    std::span<const ClassLabel> y_;
    std::size_t candidates_;
    std::mt19937_64 rng_;
};

}  // namespace

TrainedModel train_rf(const Matrix& x, std::span<const ClassLabel> y, const RfConfig& config) {
    config.validate();
    check_training_data(x, y);
    const std::size_t n = x.rows();
    const auto bag = static_cast<std::size_t>(std::ceil(config.bag_percent / 100.0 * static_cast<double>(n) - 1e-9));
    if (bag < 1) throw ConfigError("rf bag size rounds to zero rows");

    ForestModel forest;
    forest.config = config;
    forest.input_dim = x.cols();
    forest.trees.reserve(config.n_trees);
    const std::size_t candidates = config.split_candidates(x.cols());

    std::vector<std::array<std::size_t, kNumClasses>> oob_votes(n, {0, 0, 0});
    std::vector<bool> in_bag(n);
    for (std::size_t t = 0; t < config.n_trees; ++t) {
        const std::uint64_t tree_seed = derive_seed(config.seed, t);
        std::mt19937_64 rng(tree_seed);
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        std::vector<std::size_t> sample(bag);
        std::fill(in_bag.begin(), in_bag.end(), false);
        for (auto& s : sample) {
            s = pick(rng);
            in_bag[s] = true;
        }
        TreeBuilder builder(x, y, candidates, derive_seed(tree_seed, 1));
        forest.trees.push_back(builder.build(std::move(sample)));
        for (std::size_t r = 0; r < n; ++r)
            if (!in_bag[r]) ++oob_votes[r][static_cast<std::size_t>(forest.trees.back().vote(x.row(r)))];
    }

    std::size_t correct = 0;
    for (std::size_t r = 0; r < n; ++r) {
        const auto& v = oob_votes[r];
        if (v[0] + v[1] + v[2] == 0) continue;
        ++forest.oob_rows;
        const Scores s{static_cast<double>(v[0]), static_cast<double>(v[1]), static_cast<double>(v[2])};
        correct += argmax_label(s) == y[r] ? 1 : 0;
    }
    forest.oob_accuracy = forest.oob_rows ? static_cast<double>(correct) / static_cast<double>(forest.oob_rows) : 0.0;
    return TrainedModel(std::move(forest));
}

std::string_view kind_name(ModelKind kind) { return kind == ModelKind::mlp ? "mlp" : "rf"; }

std::size_t TrainedModel::input_dim() const {
    return kind() == ModelKind::mlp ? mlp().config.input_dim : forest().input_dim;
}

Prediction TrainedModel::predict(std::span<const double> x) const {
    if (x.size() != input_dim())
        throw DataError("input has " + std::to_string(x.size()) + " features, model expects " +
                        std::to_string(input_dim()));
    Prediction p;
    p.scores = kind() == ModelKind::mlp ? mlp().forward(x) : forest().vote_fractions(x);
    p.label = argmax_label(p.scores);
    return p;
}

Prediction predict(const TrainedModel& model, std::span<const double> x) { return model.predict(x); }

namespace {

constexpr const char* kMagic = "edapipe-model";
constexpr int kFormatVersion = 1;

std::string hex(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%a", v);
    return buf;
}

double parse_hex(const std::string& s) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0') throw DataError("model file: bad number '" + s + "'");
    return v;
}

template <typename T>
T expect(std::istream& in, const char* what) {
    T v{};
    if (!(in >> v)) throw DataError(std::string("model file: missing ") + what);
    return v;
}

void expect_word(std::istream& in, const std::string& word) {
    const auto got = expect<std::string>(in, word.c_str());
    if (got != word) throw DataError("model file: expected '" + word + "', found '" + got + "'");
}

double read_hex(std::istream& in, const char* what) { return parse_hex(expect<std::string>(in, what)); }

}  // namespace

std::string save_model(const TrainedModel& model) {
    std::ostringstream out;
    out << kMagic << ' ' << kFormatVersion << '\n';
    out << "kind " << kind_name(model.kind()) << '\n';
    out << "input_dim " << model.input_dim() << '\n';
    out << "target " << (model.target.empty() ? "-" : model.target) << '\n';
    out << "features " << model.feature_columns.size();
    for (auto c : model.feature_columns) out << ' ' << c;
    out << '\n';
    if (model.kind() == ModelKind::mlp) {
        const auto& m = model.mlp();
        const auto& c = m.config;
        out << "hidden_nodes " << c.hidden_nodes << '\n'
            << "output_dim " << c.output_dim << '\n'
            << "learning_rate " << hex(c.learning_rate) << '\n'
            << "momentum " << hex(c.momentum) << '\n'
            << "epochs " << c.epochs << '\n'
            << "seed " << c.seed << '\n'
            << "final_loss " << hex(m.final_loss) << '\n'
            << "params " << m.params.size() << '\n';
        for (double p : m.params) out << hex(p) << '\n';
    } else {
        const auto& f = model.forest();
        const auto& c = f.config;
        out << "n_trees " << c.n_trees << '\n'
            << "bag_percent " << hex(c.bag_percent) << '\n'
            << "features_per_split " << c.features_per_split << '\n'
            << "batch_size " << c.batch_size << '\n'
            << "seed " << c.seed << '\n'
            << "oob_accuracy " << hex(f.oob_accuracy) << '\n'
            << "oob_rows " << f.oob_rows << '\n';
        for (std::size_t t = 0; t < f.trees.size(); ++t) {
            out << "tree " << t << ' ' << f.trees[t].nodes.size() << '\n';
            for (const auto& n : f.trees[t].nodes) {
                out << n.feature << ' ' << hex(n.threshold) << ' ' << n.left << ' ' << n.right;
                for (double v : n.counts) out << ' ' << v;
                out << '\n';
            }
        }
    }
    out << "end\n";
    return out.str();
}

TrainedModel load_model(std::string_view bytes) {
    std::istringstream in{std::string(bytes)};
    expect_word(in, kMagic);
    if (const int version = expect<int>(in, "version"); version != kFormatVersion)
        throw DataError("model file: unsupported version " + std::to_string(version));
    expect_word(in, "kind");
    const auto kind = expect<std::string>(in, "kind");
    expect_word(in, "input_dim");
    const auto input_dim = expect<std::size_t>(in, "input_dim");
    expect_word(in, "target");
    auto target = expect<std::string>(in, "target");
    expect_word(in, "features");
    std::vector<std::size_t> columns(expect<std::size_t>(in, "feature count"));
    for (auto& c : columns) c = expect<std::size_t>(in, "feature column");

    TrainedModel model;
    if (kind == "mlp") {
        MlpModel m;
        m.config.input_dim = input_dim;
        expect_word(in, "hidden_nodes");
        m.config.hidden_nodes = expect<std::size_t>(in, "hidden_nodes");
        expect_word(in, "output_dim");
        m.config.output_dim = expect<std::size_t>(in, "output_dim");
        expect_word(in, "learning_rate");
        m.config.learning_rate = read_hex(in, "learning_rate");
        expect_word(in, "momentum");
        m.config.momentum = read_hex(in, "momentum");
        expect_word(in, "epochs");
        m.config.epochs = expect<std::size_t>(in, "epochs");
        expect_word(in, "seed");
        m.config.seed = expect<std::uint64_t>(in, "seed");
        expect_word(in, "final_loss");
        m.final_loss = read_hex(in, "final_loss");
        expect_word(in, "params");
        m.params.resize(expect<std::size_t>(in, "param count"));
        for (double& p : m.params) p = read_hex(in, "param");
        m.config.validate();
        if (m.params.size() != mlp_param_count(m.config)) throw DataError("model file: parameter count mismatch");
        model = TrainedModel(std::move(m));
    } else if (kind == "rf") {
        ForestModel f;
        f.input_dim = input_dim;
        expect_word(in, "n_trees");
        f.config.n_trees = expect<std::size_t>(in, "n_trees");
        expect_word(in, "bag_percent");
        f.config.bag_percent = read_hex(in, "bag_percent");
        expect_word(in, "features_per_split");
        f.config.features_per_split = expect<std::size_t>(in, "features_per_split");
        expect_word(in, "batch_size");
        f.config.batch_size = expect<std::size_t>(in, "batch_size");
        expect_word(in, "seed");
        f.config.seed = expect<std::uint64_t>(in, "seed");
        expect_word(in, "oob_accuracy");
        f.oob_accuracy = read_hex(in, "oob_accuracy");
        expect_word(in, "oob_rows");
        f.oob_rows = expect<std::size_t>(in, "oob_rows");
        f.config.validate();
        for (std::size_t t = 0; t < f.config.n_trees; ++t) {
            expect_word(in, "tree");
            if (expect<std::size_t>(in, "tree index") != t) throw DataError("model file: trees out of order");
            DecisionTree tree;
            tree.nodes.resize(expect<std::size_t>(in, "node count"));
            for (auto& n : tree.nodes) {
                n.feature = expect<int>(in, "feature");
                n.threshold = read_hex(in, "threshold");
                n.left = expect<int>(in, "left");
                n.right = expect<int>(in, "right");
                for (double& v : n.counts) v = expect<double>(in, "count");
            }
            const auto size = static_cast<int>(tree.nodes.size());
            if (size == 0) throw DataError("model file: empty tree");
            for (int i = 0; i < size; ++i) {
                const auto& n = tree.nodes[static_cast<std::size_t>(i)];
                if (n.feature >= static_cast<int>(input_dim)) throw DataError("model file: feature out of range");
                // Children always follow their parent, which rules out cycles.
                if (n.feature >= 0 && (n.left <= i || n.left >= size || n.right <= i || n.right >= size))
                    throw DataError("model file: child index out of range");
            }
            f.trees.push_back(std::move(tree));
        }
        model = TrainedModel(std::move(f));
    } else {
        throw DataError("model file: unknown kind '" + kind + "'");
    }
    expect_word(in, "end");
    model.target = target == "-" ? std::string{} : std::move(target);
    model.feature_columns = std::move(columns);
    return model;
}

}  // namespace edapipe::models
