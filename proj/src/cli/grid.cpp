#include "edapipe/cli.hpp"
#include "edapipe/csv.hpp"
#include "edapipe/error.hpp"

namespace edapipe::cli {

using models::ModelKind;

std::vector<GridPoint> model_grid(ModelKind kind, const std::string& grid, features::Target target) {
    std::vector<GridPoint> out;
    if (grid == "paper") {
        for (std::size_t k : {3, 4, 7}) {
            if (kind == ModelKind::mlp) {
                for (std::size_t h : {10, 50, 100}) out.push_back({kind, k, h, 0.0});
            } else {
                for (double bag : {17.0, 23.0, 28.0}) out.push_back({kind, k, 0, bag});
            }
        }
        return out;
    }
    if (grid == "selected") {
        using features::Target;
        if (kind == ModelKind::mlp) {
            switch (target) {
                case Target::psm_mean: return {{kind, 3, 50, 0.0}, {kind, 4, 50, 0.0}};
                case Target::psm_mode: return {{kind, 7, 100, 0.0}};
                case Target::vas: return {{kind, 3, 10, 0.0}};
            }
        } else {
            switch (target) {
                case Target::psm_mean: return {{kind, 3, 0, 23.0}};
                case Target::psm_mode: return {{kind, 3, 0, 23.0}, {kind, 3, 0, 28.0}};
                case Target::vas: return {{kind, 4, 0, 17.0}};
            }
        }
    }
    throw ValidationError("grid", "expected 'paper' or 'selected', got '" + grid + "'");
}

GridResult evaluate_point(const features::DatasetMatrix& dataset, features::Target target, const GridPoint& point,
                          std::uint64_t seed, std::size_t folds, eval::Normalization mode) {
    eval::ModelSpec spec;
    spec.kind = point.kind;
    spec.mlp.hidden_nodes = point.hidden_nodes ? point.hidden_nodes : spec.mlp.hidden_nodes;
    spec.mlp.seed = seed;
    spec.rf.bag_percent = point.bag_percent > 0 ? point.bag_percent : spec.rf.bag_percent;
    spec.rf.seed = seed;
    GridResult r;
    r.target = target;
    r.point = point;
    r.result = eval::run_dataset_cv(dataset, target, spec, point.n_features, folds, seed, mode);
    return r;
}

std::string grid_csv_header() {
    return "target,model,n_features,hidden_nodes,bag_percent,features,weighted_tpr,macro_gmean,"
           "tp_rate_low,tp_rate_medium,tp_rate_high,fp_rate_low,fp_rate_medium,fp_rate_high\n";
}

std::string grid_csv_row(const GridResult& r) {
    const auto& cv = r.result.cv;
    std::string cols;
    for (std::size_t i = 0; i < r.result.feature_columns.size(); ++i) {
        if (i) cols += ';';
        cols += features::kColumnNames[r.result.feature_columns[i]];
    }
    std::string out = std::string(features::target_name(r.target)) + "," + std::string(models::kind_name(r.point.kind)) +
                      "," + std::to_string(r.point.n_features) + "," +
                      (r.point.kind == ModelKind::mlp ? std::to_string(r.point.hidden_nodes) : "") + "," +
                      (r.point.kind == ModelKind::rf ? format_number(r.point.bag_percent) : "") + "," + cols + "," +
                      format_number(cv.weighted_tpr) + "," + format_number(cv.macro_gmean);
    for (const auto& m : cv.report.classes) out += "," + format_number(m.tp_rate);
    for (const auto& m : cv.report.classes) out += "," + format_number(m.fp_rate);
    return out + "\n";
}

}  // namespace edapipe::cli
