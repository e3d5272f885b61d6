#include <sstream>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "edapipe/acquisition.hpp"
#include "edapipe/cli.hpp"
#include "edapipe/error.hpp"
#include "edapipe/eval.hpp"
#include "edapipe/features.hpp"
#include "edapipe/models.hpp"
#include "edapipe/select.hpp"
#include "edapipe/signal.hpp"

namespace py = pybind11;
using namespace edapipe;

namespace {

using Rows = std::array<std::array<std::uint64_t, 3>, 3>;

signal::Series series(const std::vector<double>& v, double rate, signal::Unit unit) {
    signal::Series s;
    s.values = v;
    s.rate = rate;
    s.unit = unit;
    return s;
}

py::dict session_dict(const acquisition::SessionRecord& rec) {
    std::vector<std::int64_t> t_ms;
    std::vector<std::int32_t> eda, psm;
    for (const auto& f : rec.frames) {
        t_ms.push_back(f.t_ms);
        eda.push_back(f.eda_counts);
        psm.push_back(f.psm_counts);
    }
    py::dict d;
    d["config"] = acquisition::config_to_json(rec.config).dump();
    d["subject_id"] = rec.id();
    d["t_ms"] = t_ms;
    d["eda_counts"] = eda;
    d["psm_counts"] = psm;
    return d;
}

py::dict report_dict(const eval::ClassReport& r) {
    py::dict out;
    for (std::size_t c = 0; c < eval::kNumClasses; ++c) {
        const auto& m = r.classes[c];
        py::dict d;
        d["tp_rate"] = m.tp_rate;
        d["fp_rate"] = m.fp_rate;
        d["precision"] = m.precision;
        d["recall"] = m.recall;
        d["f_measure"] = m.f_measure;
        d["roc_area"] = m.roc_area ? py::cast(*m.roc_area) : py::none();
        d["precision_undefined"] = m.precision_undefined;
        out[py::str(std::string(select::class_name(static_cast<select::ClassLabel>(c))))] = d;
    }
    return out;
}

}  // namespace

PYBIND11_MODULE(_edapipe, m) {
    m.doc() = "Objective pain pipeline: EDA conditioning, features, selection, models and metrics";
    m.attr("__version__") = cli::kVersion;

    py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<RangeError>(m, "RangeError", PyExc_ValueError);
    py::register_exception<LengthError>(m, "LengthError", PyExc_ValueError);
    py::register_exception<DataError>(m, "DataError", PyExc_ValueError);

    m.def("simulate_subject", [](const std::string& subject_id, std::uint64_t seed) {
        if (!acquisition::is_valid_subject_id(subject_id))
            throw ValidationError("subject_id", "'" + subject_id + "' does not match 22-102-S1 followed by 3 digits");
        const std::size_t number = std::stoul(subject_id.substr(subject_id.size() - 3));
        auto s = acquisition::make_cohort(std::max<std::size_t>(number, 1), seed).back();
        s.config.subject_id = subject_id;
        return session_dict(acquisition::simulate_subject(s.config, {}, s.generator));
    }, py::arg("subject_id"), py::arg("seed"), "Simulate one session; the subject is drawn from the cohort of `seed`.");

    m.def("counts_to_conductance", [](const std::vector<double>& counts, int n_bits) {
        signal::ConductanceMap map;
        map.n_bits = n_bits;
        return signal::counts_to_conductance(series(counts, 2.0, signal::Unit::counts), map).values;
    }, py::arg("counts"), py::arg("n_bits") = 12);

    m.def("digital_to_scale", [](double counts) { return signal::digital_to_scale(counts, {}).cm; },
          py::arg("counts"), "Slider counts to cm on the default 0..4095 -> 0..10 map.");

    m.def("median_filter", [](const std::vector<double>& v, double rate, double half_window_s) {
        return signal::median_filter(series(v, rate, signal::Unit::cm), half_window_s).values;
    }, py::arg("values"), py::arg("rate") = 2.0, py::arg("half_window_s") = 10.0);

    m.def("decompose", [](const std::vector<double>& sc, double rate, double tonic_window_s, double threshold) {
        const auto d = signal::decompose(series(sc, rate, signal::Unit::microsiemens), tonic_window_s, threshold);
        std::vector<std::pair<std::size_t, double>> peaks;
        for (const auto& p : d.peaks) peaks.emplace_back(p.index, p.amplitude);
        return py::make_tuple(d.tonic.values, d.phasic.values, peaks);
    }, py::arg("sc"), py::arg("rate") = 2.0, py::arg("tonic_window_s") = 20.0, py::arg("threshold") = 0.01,
       "Returns (tonic, phasic, [(index, amplitude), ...]).");

    m.def("detect_peaks", [](const std::vector<double>& phasic, double threshold) {
        std::vector<std::pair<std::size_t, double>> out;
        for (const auto& p : signal::detect_peaks(std::span<const double>(phasic), threshold))
            out.emplace_back(p.index, p.amplitude);
        return out;
    }, py::arg("phasic"), py::arg("threshold") = 0.01);

    m.def("build_dataset", [](const std::string& store) {
        std::vector<signal::ProcessedSession> sessions;
        for (const auto& dir : acquisition::list_session_dirs(store))
            sessions.push_back(signal::process_session(signal::import_session(dir)));
        return features::dataset_to_csv(features::assemble_dataset(sessions));
    }, py::arg("store"), "Process every session under `store` and return the dataset CSV.");

    m.def("rank_features", [](const std::string& dataset_csv, const std::string& target) {
        const auto ds = features::dataset_from_csv(dataset_csv);
        const auto ranking = select::rank_features(select::min_max_normalize(ds), features::parse_target(target));
        std::vector<std::tuple<std::string, double, double>> out;
        for (const auto& e : ranking.entries) out.emplace_back(e.name, e.f_statistic, e.p_value);
        return out;
    }, py::arg("dataset_csv"), py::arg("target"), "[(feature, F, p)] in ascending p.");

    m.def("encode_class", [](double v) { return static_cast<int>(select::encode_class(v)); });

    m.def("stratified_folds", [](const std::vector<int>& labels, std::size_t k, std::uint64_t seed) {
        std::vector<select::ClassLabel> ls;
        for (int l : labels) {
            if (l < 0 || l > 2) throw ValidationError("labels", "class indices must be 0, 1 or 2");
            ls.push_back(static_cast<select::ClassLabel>(l));
        }
        return eval::stratified_folds(ls, k, seed).folds;
    }, py::arg("labels"), py::arg("k") = 10, py::arg("seed") = 1);

    m.def("weighted_tpr", [](const Rows& rows) { return eval::weighted_tpr(eval::ConfusionMatrix::from_rows(rows)); });
    m.def("macro_gmean", [](const Rows& rows) { return eval::macro_gmean(eval::ConfusionMatrix::from_rows(rows)); });
    m.def("class_report", [](const Rows& rows) {
        return report_dict(eval::class_report(eval::ConfusionMatrix::from_rows(rows)));
    });

    m.def("evaluate", [](const std::string& dataset_csv, const std::string& target, const std::string& model,
                         std::size_t n_features, std::size_t hidden, double bag, std::uint64_t seed, std::size_t folds) {
        cli::GridPoint p;
        p.kind = model == "mlp" ? models::ModelKind::mlp : models::ModelKind::rf;
        if (model != "mlp" && model != "rf") throw ValidationError("model", "expected 'mlp' or 'rf'");
        p.n_features = n_features;
        p.hidden_nodes = hidden;
        p.bag_percent = bag;
        const auto r = cli::evaluate_point(features::dataset_from_csv(dataset_csv), features::parse_target(target), p,
                                           seed, folds, eval::Normalization::global);
        py::dict d;
        d["confusion"] = r.result.cv.pooled.counts;
        d["weighted_tpr"] = r.result.cv.weighted_tpr;
        d["macro_gmean"] = r.result.cv.macro_gmean;
        d["report"] = report_dict(r.result.cv.report);
        std::vector<std::string> names;
        for (auto c : r.result.feature_columns) names.emplace_back(features::kColumnNames[c]);
        d["features"] = names;
        return d;
    }, py::arg("dataset_csv"), py::arg("target"), py::arg("model") = "rf", py::arg("n_features") = 3,
       py::arg("hidden") = 10, py::arg("bag") = 23.0, py::arg("seed") = 1, py::arg("folds") = 10);

    m.def("golden_checks", [] {
        std::vector<std::tuple<std::string, std::string, double, double, bool>> out;
        for (const auto& c : cli::golden_checks()) out.emplace_back(c.table, c.metric, c.computed, c.expected, c.pass());
        return out;
    }, "[(source, metric, computed, expected, passed)].");

    m.def("run_cli", [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        std::vector<std::string> argv = {"edapipe"};
        argv.insert(argv.end(), args.begin(), args.end());
        int code;
        {
            py::gil_scoped_release release;
            code = cli::run_cli(argv, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
    }, py::arg("args"), "Run a CLI command in-process; returns (exit_code, stdout, stderr).");
}
