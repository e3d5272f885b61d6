#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "edapipe/matrix.hpp"
#include "edapipe/select.hpp"

namespace edapipe::models {

using select::ClassLabel;
using select::kNumClasses;

using Scores = std::array<double, kNumClasses>;

// argmax with ties resolved toward the lower class (low < medium < high).
ClassLabel argmax_label(const Scores& scores);

struct Prediction {
    ClassLabel label = ClassLabel::low;
    Scores scores{};

    // Scores rescaled to sum to one (uniform when they sum to zero).
    Scores normalized() const;
};

struct MlpConfig {
    std::size_t input_dim = 3;
    std::size_t hidden_nodes = 10;
    std::size_t output_dim = 3;
    double learning_rate = 0.3;
    double momentum = 0.2;
    std::size_t epochs = 500;
    std::uint64_t seed = 1;

    void validate() const;
};

struct RfConfig {
    std::size_t n_trees = 100;
    double bag_percent = 100.0;
    std::size_t features_per_split = 0;  // 0 selects floor(log2(m)) + 1
    std::size_t batch_size = 50;         // recorded only; has no effect on training
    std::uint64_t seed = 1;

    void validate() const;
    std::size_t split_candidates(std::size_t n_features) const;
};

// Single hidden layer, sigmoid hidden and output units. Parameters are laid
// out as hidden rows [w_1..w_k, bias] followed by output rows [w_1..w_h, bias].
struct MlpModel {
    MlpConfig config;
    std::vector<double> params;
    double final_loss = 0.0;

    Scores forward(std::span<const double> x) const;
};

std::size_t mlp_param_count(const MlpConfig& config);

// Mean over rows of 0.5 * sum_j (output_j - onehot_j)^2.
double mlp_loss(const MlpConfig& config, std::span<const double> params, const Matrix& x,
                std::span<const ClassLabel> y);
// Analytic gradient of mlp_loss with respect to params.
std::vector<double> mlp_gradient(const MlpConfig& config, std::span<const double> params, const Matrix& x,
                                 std::span<const ClassLabel> y);

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;  // go left when x[feature] <= threshold
    int left = -1;
    int right = -1;
    std::array<double, kNumClasses> counts{};  // training class counts reaching the node
};

struct DecisionTree {
    std::vector<TreeNode> nodes;

    const TreeNode& leaf_for(std::span<const double> x) const;
    ClassLabel vote(std::span<const double> x) const;
    std::size_t depth() const;
};

struct ForestModel {
    RfConfig config;
    std::size_t input_dim = 0;
    std::vector<DecisionTree> trees;
    double oob_accuracy = 0.0;
    std::size_t oob_rows = 0;  // rows with at least one out-of-bag vote

    Scores vote_fractions(std::span<const double> x) const;
};

enum class ModelKind { mlp, rf };
std::string_view kind_name(ModelKind kind);

class TrainedModel {
public:
    TrainedModel() = default;
    explicit TrainedModel(MlpModel m) : impl_(std::move(m)) {}
    explicit TrainedModel(ForestModel m) : impl_(std::move(m)) {}

    ModelKind kind() const { return std::holds_alternative<MlpModel>(impl_) ? ModelKind::mlp : ModelKind::rf; }
    std::size_t input_dim() const;
    // Throws DataError on dimension mismatch.
    Prediction predict(std::span<const double> x) const;

    const MlpModel& mlp() const { return std::get<MlpModel>(impl_); }
    const ForestModel& forest() const { return std::get<ForestModel>(impl_); }

    // Provenance recorded in saved files.
    std::string target;
    std::vector<std::size_t> feature_columns;

private:
    std::variant<MlpModel, ForestModel> impl_;
};

// Preconditions: x non-empty, y covers at least two classes. Deterministic in config.seed.
TrainedModel train_mlp(const Matrix& x, std::span<const ClassLabel> y, const MlpConfig& config);
TrainedModel train_rf(const Matrix& x, std::span<const ClassLabel> y, const RfConfig& config);

Prediction predict(const TrainedModel& model, std::span<const double> x);

// Versioned text format; doubles are written as hex floats so load(save(m)) is exact.
std::string save_model(const TrainedModel& model);
TrainedModel load_model(std::string_view bytes);

// Mixes a master seed with a stream index (splitmix64).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

}  // namespace edapipe::models
