#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "edapipe/eval.hpp"
#include "edapipe/features.hpp"
#include "edapipe/signal.hpp"

namespace edapipe::cli {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int { ok = 0, config_error = 2, data_error = 3, golden_mismatch = 4, stage_failure = 5 };

// Parses and runs one command line (args[0] is the program name). Never throws;
// errors are reported on `err` and mapped to an exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

// Reproduction record written next to every primary output as <output>.manifest.json.
struct RunManifest {
    std::string command;
    std::vector<std::string> argv;
    nlohmann::ordered_json config = nlohmann::ordered_json::object();
    nlohmann::ordered_json seeds = nlohmann::ordered_json::object();
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;

    // Checksums are taken from the files at the time of the call.
    nlohmann::ordered_json to_json() const;
    void write(const std::filesystem::path& path) const;
};

// Figure-style overlay of conductance, tonic, phasic and the filtered pain
// slider against time, with detected peaks marked.
std::string render_trace_svg(const signal::ProcessedSession& session);

struct GoldenCheck {
    std::string table;   // source matrix
    std::string metric;  // e.g. "weighted_tpr", "tp_rate[high]"
    double computed = 0.0;
    double expected = 0.0;
    double tolerance = 0.0;
    bool informational = false;  // reported but never fails the run
    bool pass() const;
};

std::vector<GoldenCheck> golden_checks();

struct GridPoint {
    models::ModelKind kind = models::ModelKind::rf;
    std::size_t n_features = 3;
    std::size_t hidden_nodes = 0;  // mlp only
    double bag_percent = 0.0;      // rf only
};

// "paper" is the full 3x3 sweep per family; "selected" keeps only the
// configurations singled out for the G-mean comparison.
std::vector<GridPoint> model_grid(models::ModelKind kind, const std::string& grid, features::Target target);

struct GridResult {
    features::Target target = features::Target::psm_mean;
    GridPoint point;
    eval::DatasetCvResult result;
};

GridResult evaluate_point(const features::DatasetMatrix& dataset, features::Target target, const GridPoint& point,
                          std::uint64_t seed, std::size_t folds, eval::Normalization mode);

std::string grid_csv_header();
std::string grid_csv_row(const GridResult& r);

}  // namespace edapipe::cli
