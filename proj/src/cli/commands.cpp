#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "edapipe/acquisition.hpp"
#include "edapipe/cli.hpp"
#include "edapipe/csv.hpp"
#include "edapipe/error.hpp"
#include "edapipe/ingest.hpp"
#include "edapipe/models.hpp"
#include "edapipe/select.hpp"

namespace edapipe::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

// A failure inside a named demo stage.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& what)
        : Error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

void ensure_writable_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw ConfigError("output directory " + dir.string() + " is not writable");
    const fs::path probe = dir / ".edapipe-write-probe";
    {
        std::ofstream f(probe);
        if (!f) throw ConfigError("output directory " + dir.string() + " is not writable");
    }
    fs::remove(probe, ec);
}

void ensure_writable_file(const fs::path& file) {
    const fs::path parent = file.parent_path().empty() ? fs::path(".") : file.parent_path();
    ensure_writable_dir(parent);
}

std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& text) {
    const auto colon = text.rfind(':');
    if (colon == std::string::npos) throw ValidationError("endpoint", "expected host:port, got '" + text + "'");
    const std::string host = colon == 0 ? "127.0.0.1" : text.substr(0, colon);
    const double port = parse_number(text.substr(colon + 1), "port");
    if (port < 0 || port > 65535 || port != static_cast<double>(static_cast<int>(port)))
        throw ValidationError("endpoint", "port out of range in '" + text + "'");
    return {host, static_cast<std::uint16_t>(port)};
}

models::ModelKind parse_kind(const std::string& name) {
    if (name == "mlp") return models::ModelKind::mlp;
    if (name == "rf") return models::ModelKind::rf;
    throw ValidationError("model", "expected 'mlp' or 'rf', got '" + name + "'");
}

eval::Normalization parse_normalization(const std::string& name) {
    if (name == "global") return eval::Normalization::global;
    if (name == "per-fold") return eval::Normalization::per_fold;
    throw ValidationError("normalization", "expected 'global' or 'per-fold', got '" + name + "'");
}

// CLI11 only reads config files for the top-level app, so a subcommand's
// --config file is parsed here and each key not already given on the command
// line is appended as a flag. Keys may be bare or sit under a [subcommand] section.
std::vector<std::string> with_config_file(const std::vector<std::string>& args) {
    if (args.size() < 2) return args;
    std::string path;
    for (std::size_t i = 2; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
    }
    if (path.empty()) return args;
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path);
    std::vector<CLI::ConfigItem> items;
    try {
        items = CLI::ConfigINI().from_config(in);
    } catch (const CLI::ParseError& e) {
        throw ConfigError(path + ": " + e.what());
    }
    const std::string& command = args[1];
    auto given = [&args](const std::string& flag) {
        for (std::size_t i = 2; i < args.size(); ++i)
            if (args[i] == flag || args[i].rfind(flag + "=", 0) == 0) return true;
        return false;
    };
    std::vector<std::string> out = args;
    for (const auto& item : items) {
        const bool ours = item.parents.empty() || (item.parents.size() == 1 && item.parents[0] == command);
        if (!ours || item.name.empty() || item.name == "config") continue;
        const std::string flag = "--" + item.name;
        if (given(flag)) continue;
        if (item.inputs.size() == 1 && (item.inputs[0] == "true" || item.inputs[0] == "false")) {
            if (item.inputs[0] == "true") out.push_back(flag);
            continue;
        }
        for (const auto& value : item.inputs) {
            out.push_back(flag);
            out.push_back(value);
        }
    }
    return out;
}

std::string manifest_path(const std::string& output) { return output + ".manifest.json"; }

// Resolved option values of one subcommand, flags > config file > environment > defaults.
ordered_json resolved_config(const CLI::App& sub) {
    ordered_json j = ordered_json::object();
    for (const CLI::Option* opt : sub.get_options()) {
        const std::string name = opt->get_single_name();
        if (name == "help" || name == "config" || name.empty()) continue;
        if (opt->get_expected_min() == 0) {
            j[name] = opt->count() > 0 && opt->as<bool>();
            continue;
        }
        if (opt->count() > 0) {
            const auto& res = opt->results();
            j[name] = res.size() == 1 ? res.front() : CLI::detail::join(res, " ");
        } else {
            j[name] = opt->get_default_str();
        }
    }
    return j;
}

// Argument list that replays a command from its resolved config alone.
std::vector<std::string> replay_args(const std::string& command, const ordered_json& config) {
    std::vector<std::string> args = {"edapipe", command};
    for (const auto& [key, value] : config.items()) {
        if (value.is_boolean()) {
            if (value.get<bool>()) args.push_back("--" + key);
        } else if (!value.get<std::string>().empty()) {
            args.push_back("--" + key);
            args.push_back(value.get<std::string>());
        }
    }
    return args;
}

// Commands without randomness pass no seed.
RunManifest make_manifest(const CLI::App& sub, std::optional<std::uint64_t> seed = std::nullopt) {
    RunManifest m;
    m.command = sub.get_name();
    m.config = resolved_config(sub);
    m.argv = replay_args(m.command, m.config);
    if (seed) m.seeds["master"] = *seed;
    return m;
}

signal::ProcessOptions process_options(std::size_t baseline, double tonic_window, double threshold,
                                       double psm_half_window, bool strict) {
    signal::ProcessOptions o;
    o.baseline_samples = baseline;
    o.tonic_window_s = tonic_window;
    o.peak_threshold = threshold;
    o.psm_half_window_s = psm_half_window;
    o.strict_scale = strict;
    return o;
}

acquisition::CohortSubject subject_for(const std::string& id, std::uint64_t seed) {
    if (!acquisition::is_valid_subject_id(id))
        throw ValidationError("subject_id", "'" + id + "' does not match 22-102-S1 followed by 3 digits");
    // The subject with number N is the N-th member of the cohort drawn from `seed`.
    const std::size_t number = static_cast<std::size_t>(std::stoul(id.substr(id.size() - 3)));
    auto cohort = acquisition::make_cohort(std::max<std::size_t>(number, 1), seed);
    auto subject = cohort.back();
    subject.config.subject_id = id;
    return subject;
}

struct ProcessingFlags {
    std::size_t baseline = 120;
    double tonic_window = 20.0;
    double peak_threshold = 0.01;
    double psm_half_window = 10.0;
    bool strict_scale = false;

    void add(CLI::App* sub) {
        sub->add_option("--baseline", baseline, "Baseline samples trimmed from each session");
        sub->add_option("--tonic-window", tonic_window, "Tonic median window (s)");
        sub->add_option("--peak-threshold", peak_threshold, "Minimum SCR amplitude (uS)");
        sub->add_option("--psm-half-window", psm_half_window, "Pain slider median half-window (s)");
        sub->add_flag("--strict-scale", strict_scale, "Fail on slider counts outside the calibrated range");
    }
    signal::ProcessOptions options() const {
        return process_options(baseline, tonic_window, peak_threshold, psm_half_window, strict_scale);
    }
};

std::vector<signal::ProcessedSession> process_store(const fs::path& store, const signal::ProcessOptions& opts) {
    std::vector<signal::ProcessedSession> sessions;
    for (const auto& dir : acquisition::list_session_dirs(store))
        sessions.push_back(signal::process_session(signal::import_session(dir), opts));
    if (sessions.empty()) throw DataError("no sessions under " + store.string());
    return sessions;
}

void print_cv(std::ostream& out, const GridResult& r) {
    char line[256];
    std::snprintf(line, sizeof line, "%-8s %-3s k=%zu %-9s weighted_tpr=%.4f macro_gmean=%.4f\n",
                  std::string(features::target_name(r.target)).c_str(),
                  std::string(models::kind_name(r.point.kind)).c_str(), r.point.n_features,
                  (r.point.kind == models::ModelKind::mlp ? "h=" + std::to_string(r.point.hidden_nodes)
                                                          : "bag=" + format_number(r.point.bag_percent))
                      .c_str(),
                  r.result.cv.weighted_tpr, r.result.cv.macro_gmean);
    out << line;
}

std::string report_table(const eval::ConfusionMatrix& cm, const eval::ClassReport& report) {
    std::string out = "class,tp_rate,fp_rate,precision,recall,f_measure,roc_area,precision_undefined\n";
    for (std::size_t c = 0; c < eval::kNumClasses; ++c) {
        const auto& m = report.classes[c];
        out += std::string(select::class_name(static_cast<select::ClassLabel>(c))) + "," + format_number(m.tp_rate) +
               "," + format_number(m.fp_rate) + "," + format_number(m.precision) + "," + format_number(m.recall) +
               "," + format_number(m.f_measure) + "," + (m.roc_area ? format_number(*m.roc_area) : "") + "," +
               (m.precision_undefined ? "1" : "0") + "\n";
    }
    out += "weighted_tpr," + format_number(eval::weighted_tpr(cm)) + "\n";
    out += "macro_gmean," + format_number(eval::macro_gmean(cm)) + "\n";
    return out;
}

// Picks the first configuration with the highest weighted TPR.
const GridResult& best_of(const std::vector<GridResult>& results) {
    const GridResult* best = &results.front();
    for (const auto& r : results)
        if (r.result.cv.weighted_tpr > best->result.cv.weighted_tpr) best = &r;
    return *best;
}

models::TrainedModel train_final(const features::DatasetMatrix& dataset, features::Target target,
                                 const GridPoint& point, std::uint64_t seed, std::size_t trees, std::size_t epochs) {
    const auto normalized = select::min_max_normalize(dataset);
    const auto labels = select::encode_target(normalized, target);
    const auto cols = select::select_top_k(select::rank_features(normalized, target), point.n_features);
    const Matrix x = normalized.values.select_cols(cols);
    models::TrainedModel model;
    if (point.kind == models::ModelKind::mlp) {
        models::MlpConfig cfg;
        cfg.input_dim = cols.size();
        cfg.hidden_nodes = point.hidden_nodes;
        cfg.epochs = epochs;
        cfg.seed = seed;
        model = models::train_mlp(x, labels, cfg);
    } else {
        models::RfConfig cfg;
        cfg.bag_percent = point.bag_percent;
        cfg.n_trees = trees;
        cfg.seed = seed;
        model = models::train_rf(x, labels, cfg);
    }
    model.target = std::string(features::target_name(target));
    model.feature_columns = cols;
    return model;
}

// ---------------------------------------------------------------- commands

struct Context {
    std::ostream& out;
    std::ostream& err;
};

int cmd_simulate(const Context& ctx, const CLI::App& sub, const std::string& subject, std::size_t cohort_size,
                 std::uint64_t seed, const std::string& out_dir, const std::string& stream, double pace_ms) {
    std::vector<acquisition::CohortSubject> subjects;
    if (cohort_size > 0) {
        subjects = acquisition::make_cohort(cohort_size, seed);
    } else {
        if (subject.empty()) throw ConfigError("simulate needs --subject or --cohort");
        subjects.push_back(subject_for(subject, seed));
    }
    if (out_dir.empty() && stream.empty()) throw ConfigError("simulate needs --out and/or --stream");

    std::vector<acquisition::SessionRecord> records;
    for (const auto& s : subjects) records.push_back(acquisition::simulate_subject(s.config, {}, s.generator));

    int status = ExitCode::ok;
    if (!stream.empty()) {
        const auto [host, port] = parse_endpoint(stream);
        acquisition::IngestClient client(host, port);
        for (const auto& rec : records) {
            const auto pace = std::chrono::duration<double, std::milli>(pace_ms);
            const auto report = acquisition::stream_session(client, rec, [&](std::size_t i) {
                if (i > 0 && pace_ms > 0) std::this_thread::sleep_for(pace);
            });
            ctx.out << rec.id() << ": sent " << report.sent << ", accepted " << report.accepted << ", rejected "
                    << report.rejections.size() << "\n";
            for (const auto& r : report.rejections) ctx.err << "  " << r << "\n";
            if (!report.rejections.empty()) status = ExitCode::data_error;
        }
    }
    if (!out_dir.empty()) {
        ensure_writable_dir(out_dir);
        RunManifest manifest = make_manifest(sub, seed);
        for (const auto& rec : records) {
            auto closed = rec;
            closed.status = acquisition::SessionStatus::closed;
            acquisition::write_session_dir(out_dir, closed);
            manifest.outputs.push_back((fs::path(out_dir) / rec.id() / "meta.json").string());
            manifest.outputs.push_back((fs::path(out_dir) / rec.id() / "frames.ndjson").string());
            manifest.seeds[rec.id()] = rec.config.seed;
            ctx.out << "wrote " << (fs::path(out_dir) / rec.id()).string() << " (" << rec.frames.size()
                    << " frames)\n";
        }
        const std::string name = cohort_size > 0 ? "cohort" : subjects.front().config.subject_id;
        manifest.write(fs::path(out_dir) / (name + ".manifest.json"));
    }
    return status;
}

int cmd_serve(const Context& ctx, const CLI::App& sub, const std::string& listen, const std::string& store_dir,
              std::size_t rate_cap, double duration_s, const std::string& port_file) {
    const auto [host, port] = parse_endpoint(listen);
    ensure_writable_dir(store_dir);
    acquisition::SessionStore store(store_dir);
    acquisition::IngestOptions opts;
    opts.host = host;
    opts.port = port;
    opts.rate_cap_per_minute = rate_cap;
    auto server = acquisition::serve_ingest(store, opts);
    ctx.out << "listening on " << host << ":" << server->port() << "\n" << std::flush;
    if (!port_file.empty()) write_text_file(port_file, std::to_string(server->port()) + "\n");
    if (duration_s > 0) {
        std::this_thread::sleep_for(std::chrono::duration<double>(duration_s));
        server->stop();
    }
    server->wait();
    RunManifest manifest = make_manifest(sub);
    for (const auto& id : store.session_ids()) manifest.outputs.push_back((fs::path(store_dir) / id).string());
    manifest.write(fs::path(store_dir) / "serve.manifest.json");
    return ExitCode::ok;
}

int cmd_process(const Context& ctx, const CLI::App& sub, const std::string& session_dir, const std::string& out,
                const std::string& svg, const ProcessingFlags& flags) {
    ensure_writable_file(out);
    const auto processed = signal::process_session(signal::import_session(session_dir), flags.options());
    write_text_file(out, signal::processed_csv(processed));
    RunManifest manifest = make_manifest(sub, processed.config.seed);
    manifest.inputs = {(fs::path(session_dir) / "meta.json").string(), (fs::path(session_dir) / "frames.ndjson").string()};
    manifest.outputs.push_back(out);
    if (!svg.empty()) {
        ensure_writable_file(svg);
        write_text_file(svg, render_trace_svg(processed));
        manifest.outputs.push_back(svg);
    }
    manifest.write(manifest_path(out));
    ctx.out << processed.config.subject_id << ": " << processed.sc.size() << " samples, "
            << processed.decomposition.peaks.size() << " peaks, " << processed.clamped_psm_samples
            << " clamped slider samples\n";
    return ExitCode::ok;
}

int cmd_features(const Context& ctx, const CLI::App& sub, const std::string& store, const std::string& out,
                 double window_s, const ProcessingFlags& flags) {
    ensure_writable_file(out);
    const auto sessions = process_store(store, flags.options());
    const auto dataset = features::assemble_dataset(sessions, window_s);
    write_text_file(out, features::dataset_to_csv(dataset));
    RunManifest manifest = make_manifest(sub);
    for (const auto& dir : acquisition::list_session_dirs(store))
        manifest.inputs.push_back((dir / "frames.ndjson").string());
    manifest.outputs.push_back(out);
    manifest.write(manifest_path(out));
    ctx.out << "dataset: " << dataset.size() << " rows x " << features::kNumColumns << " columns from "
            << sessions.size() << " sessions\n";
    return ExitCode::ok;
}

int cmd_select(const Context& ctx, const CLI::App& sub, const std::string& dataset_path, const std::string& target_name,
               std::size_t k, double cutoff, const std::string& report) {
    const auto target = features::parse_target(target_name);
    const auto dataset = features::dataset_from_csv(read_text_file(dataset_path));
    const auto normalized = select::min_max_normalize(dataset);
    const auto ranking = select::rank_features(normalized, target, cutoff);
    const auto top = select::select_top_k(ranking, k);
    ctx.out << "top " << k << " for " << target_name << ":";
    for (auto c : top) ctx.out << " " << features::kColumnNames[c];
    ctx.out << "\nremovable (p > " << format_number(cutoff) << "):";
    for (const auto& e : ranking.entries)
        if (e.removable) ctx.out << " " << e.name;
    ctx.out << "\n";
    if (!report.empty()) {
        ensure_writable_file(report);
        write_text_file(report, select::ranking_to_csv(ranking));
        RunManifest manifest = make_manifest(sub);
        manifest.inputs.push_back(dataset_path);
        manifest.outputs.push_back(report);
        manifest.write(manifest_path(report));
    }
    return ExitCode::ok;
}

struct TrainFlags {
    std::string dataset, target = "psm_mean", model = "rf", out;
    std::size_t k = 3, hidden = 10, trees = 100, epochs = 500;
    double bag = 100.0;
    std::uint64_t seed = 1;
};

int cmd_train(const Context& ctx, const CLI::App& sub, const TrainFlags& f) {
    ensure_writable_file(f.out);
    const auto target = features::parse_target(f.target);
    const auto dataset = features::dataset_from_csv(read_text_file(f.dataset));
    GridPoint point{parse_kind(f.model), f.k, f.hidden, f.bag};
    const auto model = train_final(dataset, target, point, f.seed, f.trees, f.epochs);
    write_text_file(f.out, models::save_model(model));
    RunManifest manifest = make_manifest(sub, f.seed);
    manifest.inputs.push_back(f.dataset);
    manifest.outputs.push_back(f.out);
    manifest.write(manifest_path(f.out));
    ctx.out << "trained " << models::kind_name(point.kind) << " on " << dataset.size() << " rows, features:";
    for (auto c : model.feature_columns) ctx.out << " " << features::kColumnNames[c];
    if (point.kind == models::ModelKind::mlp)
        ctx.out << ", final loss " << format_number(model.mlp().final_loss);
    else
        ctx.out << ", out-of-bag accuracy " << format_number(model.forest().oob_accuracy);
    ctx.out << "\n";
    return ExitCode::ok;
}

struct EvaluateFlags {
    std::string dataset, target = "psm_mean", model = "rf", grid = "paper", report, cm, normalization = "global";
    std::size_t k = 3, hidden = 10, folds = 10;
    double bag = 23.0;
    std::uint64_t seed = 1;
};

int cmd_evaluate(const Context& ctx, const CLI::App& sub, const EvaluateFlags& f) {
    if (!f.report.empty()) ensure_writable_file(f.report);
    if (!f.cm.empty()) ensure_writable_file(f.cm);
    const auto target = features::parse_target(f.target);
    const auto kind = parse_kind(f.model);
    const auto mode = parse_normalization(f.normalization);
    const auto dataset = features::dataset_from_csv(read_text_file(f.dataset));
    const auto points = f.grid == "single" ? std::vector<GridPoint>{{kind, f.k, f.hidden, f.bag}}
                                           : model_grid(kind, f.grid, target);
    std::vector<GridResult> results;
    std::string csv = grid_csv_header();
    for (const auto& p : points) {
        results.push_back(evaluate_point(dataset, target, p, f.seed, f.folds, mode));
        print_cv(ctx.out, results.back());
        for (const auto& w : results.back().result.cv.warnings) ctx.err << "warning: " << w << "\n";
        csv += grid_csv_row(results.back());
    }
    const auto& best = best_of(results);
    ctx.out << "best: ";
    print_cv(ctx.out, best);
    RunManifest manifest = make_manifest(sub, f.seed);
    manifest.inputs.push_back(f.dataset);
    if (!f.cm.empty()) {
        write_text_file(f.cm, eval::confusion_to_csv(best.result.cv.pooled));
        manifest.outputs.push_back(f.cm);
    }
    if (!f.report.empty()) {
        write_text_file(f.report, csv);
        manifest.outputs.push_back(f.report);
        manifest.write(manifest_path(f.report));
    } else if (!f.cm.empty()) {
        manifest.write(manifest_path(f.cm));
    }
    return ExitCode::ok;
}

int cmd_metrics(const Context& ctx, const CLI::App& sub, const std::string& cm_path, const std::string& report) {
    const auto cm = eval::parse_confusion_csv(read_text_file(cm_path));
    const auto table = report_table(cm, eval::class_report(cm));
    ctx.out << table;
    const auto g = eval::macro_gmean_detail(cm);
    if (g.degenerate) ctx.err << "warning: a class has an empty row or empty complement\n";
    if (!report.empty()) {
        ensure_writable_file(report);
        write_text_file(report, table);
        RunManifest manifest = make_manifest(sub);
        manifest.inputs.push_back(cm_path);
        manifest.outputs.push_back(report);
        manifest.write(manifest_path(report));
    }
    return ExitCode::ok;
}

int cmd_goldens(const Context& ctx, const CLI::App& sub, const std::string& report) {
    const auto checks = golden_checks();
    std::size_t failures = 0;
    std::string csv = "source,metric,computed,expected,tolerance,status\n";
    for (const auto& c : checks) {
        const char* status = c.informational ? "info" : (c.pass() ? "pass" : "FAIL");
        if (!c.pass()) ++failures;
        char line[256];
        std::snprintf(line, sizeof line, "%-4s %-34s %-20s computed %.6f expected %.4f (tol %.4f)\n", status,
                      c.table.c_str(), c.metric.c_str(), c.computed, c.expected, c.tolerance);
        ctx.out << line;
        csv += c.table + "," + c.metric + "," + format_number(c.computed) + "," + format_number(c.expected) + "," +
               format_number(c.tolerance) + "," + status + "\n";
    }
    if (!report.empty()) {
        ensure_writable_file(report);
        write_text_file(report, csv);
        RunManifest manifest = make_manifest(sub);
        manifest.outputs.push_back(report);
        manifest.write(manifest_path(report));
    }
    if (failures > 0) {
        ctx.err << failures << " golden check(s) outside tolerance\n";
        return ExitCode::golden_mismatch;
    }
    ctx.out << "all " << checks.size() << " golden checks within tolerance\n";
    return ExitCode::ok;
}

struct DemoFlags {
    std::string out;
    std::uint64_t seed = 1;
    std::size_t subjects = 15, folds = 10, trees = 100, epochs = 500;
    std::string grid = "paper", normalization = "global";
};

template <class F>
auto stage(const std::string& name, std::ostream& log, F&& body) {
    log << "[" << name << "]\n" << std::flush;
    try {
        return body();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(name, e.what());
    }
}

int cmd_demo(const Context& ctx, const CLI::App& sub, const DemoFlags& f) {
    const fs::path out(f.out);
    ensure_writable_dir(out);
    const auto mode = parse_normalization(f.normalization);
    model_grid(models::ModelKind::rf, f.grid, features::Target::psm_mean);  // validates --grid early
    RunManifest manifest = make_manifest(sub, f.seed);
    const fs::path sessions_dir = out / "sessions";

    const auto cohort = stage("simulate", ctx.out, [&] {
        ensure_writable_dir(sessions_dir);
        auto subjects = acquisition::make_cohort(f.subjects, f.seed);
        for (const auto& s : subjects) {
            auto rec = acquisition::simulate_subject(s.config, {}, s.generator);
            rec.status = acquisition::SessionStatus::closed;
            acquisition::write_session_dir(sessions_dir, rec);
            manifest.seeds[s.config.subject_id] = s.config.seed;
        }
        return subjects;
    });

    const auto processed = stage("process", ctx.out, [&] {
        auto sessions = process_store(sessions_dir, {});
        const auto& first = sessions.front();
        const std::string id = first.config.subject_id;
        write_text_file((out / ("processed_" + id + ".csv")).string(), signal::processed_csv(first));
        write_text_file((out / ("trace_" + id + ".svg")).string(), render_trace_svg(first));
        manifest.outputs.push_back((out / ("processed_" + id + ".csv")).string());
        manifest.outputs.push_back((out / ("trace_" + id + ".svg")).string());
        return sessions;
    });

    const auto dataset = stage("features", ctx.out, [&] {
        auto d = features::assemble_dataset(processed);
        write_text_file((out / "dataset.csv").string(), features::dataset_to_csv(d));
        manifest.outputs.push_back((out / "dataset.csv").string());
        ctx.out << "  " << d.size() << " windows from " << cohort.size() << " subjects\n";
        return d;
    });

    const std::array<features::Target, 3> targets = {features::Target::psm_mean, features::Target::psm_mode,
                                                     features::Target::vas};
    stage("select", ctx.out, [&] {
        const auto normalized = select::min_max_normalize(dataset);
        for (auto t : targets) {
            const auto path = out / ("ranking_" + std::string(features::target_name(t)) + ".csv");
            write_text_file(path.string(), select::ranking_to_csv(select::rank_features(normalized, t)));
            manifest.outputs.push_back(path.string());
        }
        return 0;
    });

    std::vector<std::pair<features::Target, std::vector<GridResult>>> per_family;
    stage("evaluate", ctx.out, [&] {
        std::string grid_csv = grid_csv_header();
        for (auto t : targets) {
            for (auto kind : {models::ModelKind::rf, models::ModelKind::mlp}) {
                std::vector<GridResult> results;
                for (const auto& p : model_grid(kind, f.grid, t)) {
                    results.push_back(evaluate_point(dataset, t, p, f.seed, f.folds, mode));
                    grid_csv += grid_csv_row(results.back());
                    ctx.out << "  ";
                    print_cv(ctx.out, results.back());
                }
                per_family.emplace_back(t, std::move(results));
            }
        }
        write_text_file((out / "grid.csv").string(), grid_csv);
        manifest.outputs.push_back((out / "grid.csv").string());
        return 0;
    });

    stage("train", ctx.out, [&] {
        const fs::path model_dir = out / "models";
        ensure_writable_dir(model_dir);
        std::string results = "target,model,n_features,hidden_nodes,bag_percent,weighted_tpr,macro_gmean,rows\n";
        for (const auto& [t, family] : per_family) {
            const auto& best = best_of(family);
            const std::string tag = std::string(features::target_name(t)) + "_" +
                                    std::string(models::kind_name(best.point.kind));
            const auto model = train_final(dataset, t, best.point, f.seed, f.trees, f.epochs);
            write_text_file((model_dir / (tag + ".model")).string(), models::save_model(model));
            write_text_file((out / ("cm_" + tag + ".csv")).string(), eval::confusion_to_csv(best.result.cv.pooled));
            manifest.outputs.push_back((model_dir / (tag + ".model")).string());
            manifest.outputs.push_back((out / ("cm_" + tag + ".csv")).string());
            const auto& cv = best.result.cv;
            results += std::string(features::target_name(t)) + "," +
                       std::string(models::kind_name(best.point.kind)) + "," + std::to_string(best.point.n_features) +
                       "," + (best.point.kind == models::ModelKind::mlp ? std::to_string(best.point.hidden_nodes) : "") +
                       "," + (best.point.kind == models::ModelKind::rf ? format_number(best.point.bag_percent) : "") +
                       "," + format_number(cv.weighted_tpr) + "," + format_number(cv.macro_gmean) + "," +
                       std::to_string(cv.pooled.total()) + "\n";
        }
        write_text_file((out / "results.csv").string(), results);
        manifest.outputs.push_back((out / "results.csv").string());
        ctx.out << results;
        return 0;
    });

    manifest.write(out / "manifest.json");
    return ExitCode::ok;
}

int cmd_replay(const Context& ctx, const std::string& manifest_file) {
    const auto j = nlohmann::json::parse(read_text_file(manifest_file), nullptr, false);
    if (j.is_discarded() || !j.contains("argv") || !j["argv"].is_array())
        throw DataError(manifest_file + " is not a run manifest");
    const auto args = j["argv"].get<std::vector<std::string>>();
    ctx.out << "replaying:";
    for (const auto& a : args) ctx.out << " " << a;
    ctx.out << "\n";
    return run_cli(args, ctx.out, ctx.err);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Objective pain pipeline: simulate, ingest, process, learn and evaluate EDA sessions", "edapipe"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();

    std::uint64_t seed = 1;
    auto add_seed = [&seed](CLI::App* sub) {
        sub->add_option("--seed", seed, "Master seed")->envname("EDAPIPE_SEED");
    };
    // Values are merged into the arguments before parsing (see with_config_file).
    std::string config_file;
    auto add_config = [&config_file](CLI::App* sub) {
        sub->add_option("--config", config_file, "Flat key=value file; command-line flags take precedence");
    };

    // simulate
    std::string subject, out_dir, stream;
    std::size_t cohort = 0;
    double pace_ms = 0.0;
    auto* simulate = app.add_subcommand("simulate", "Generate synthetic sessions");
    simulate->add_option("--subject", subject, "Subject id, 22-102-S1NNN");
    simulate->add_option("--cohort", cohort, "Generate subjects 001..N instead of one");
    add_seed(simulate);
    simulate->add_option("--out", out_dir, "Session store directory");
    simulate->add_option("--stream", stream, "Stream frames to an ingest server at host:port");
    simulate->add_option("--pace-ms", pace_ms, "Delay between streamed frames (ms)");
    add_config(simulate);

    // serve
    std::string listen = "127.0.0.1:7070", store_dir, port_file;
    std::size_t rate_cap = 150;
    double duration_s = 0.0;
    auto* serve = app.add_subcommand("serve", "Run the ingest service");
    serve->add_option("--listen", listen, "host:port; port 0 picks a free port");
    serve->add_option("--store", store_dir, "Session store directory")->required();
    serve->add_option("--rate-cap", rate_cap, "Frames per minute per connection");
    serve->add_option("--duration", duration_s, "Stop after this many seconds (0 runs until killed)");
    serve->add_option("--port-file", port_file, "Write the bound port here");
    add_config(serve);

    // process
    std::string session_dir, process_out, svg;
    ProcessingFlags pflags;
    auto* process = app.add_subcommand("process", "Condition one session and decompose its EDA");
    process->add_option("--session", session_dir, "Session directory")->required();
    process->add_option("--out", process_out, "Processed CSV")->required();
    process->add_option("--svg", svg, "Optional SVG trace");
    pflags.add(process);
    add_config(process);

    // features
    std::string feature_store, feature_out;
    double window_s = 10.0;
    ProcessingFlags fflags;
    auto* feats = app.add_subcommand("features", "Build the windowed feature dataset from a session store");
    feats->add_option("--store", feature_store, "Session store directory")->required();
    feats->add_option("--out", feature_out, "Dataset CSV")->required();
    feats->add_option("--window", window_s, "Window length (s)");
    fflags.add(feats);
    add_config(feats);

    // select
    std::string sel_dataset, sel_target = "psm_mean", sel_report;
    std::size_t sel_k = 3;
    double cutoff = 0.05;
    auto* sel = app.add_subcommand("select", "Rank features by one-way ANOVA p-value");
    sel->add_option("--dataset", sel_dataset, "Dataset CSV")->required();
    sel->add_option("--target", sel_target, "psm_mean, psm_mode or vas");
    sel->add_option("--k", sel_k, "Number of features to keep");
    sel->add_option("--cutoff", cutoff, "p-value above which a feature is marked removable");
    sel->add_option("--report", sel_report, "Ranking CSV");
    add_config(sel);

    // train
    TrainFlags tflags;
    auto* train = app.add_subcommand("train", "Train one model on the full dataset");
    train->add_option("--dataset", tflags.dataset, "Dataset CSV")->required();
    train->add_option("--target", tflags.target, "psm_mean, psm_mode or vas");
    train->add_option("--model", tflags.model, "mlp or rf");
    train->add_option("--k", tflags.k, "Number of top-ranked features");
    train->add_option("--hidden", tflags.hidden, "MLP hidden nodes");
    train->add_option("--epochs", tflags.epochs, "MLP epochs");
    train->add_option("--bag", tflags.bag, "RF bag percentage");
    train->add_option("--trees", tflags.trees, "RF tree count");
    train->add_option("--seed", tflags.seed, "Master seed")->envname("EDAPIPE_SEED");
    train->add_option("--out", tflags.out, "Model file")->required();
    add_config(train);

    // evaluate
    EvaluateFlags eflags;
    auto* evaluate = app.add_subcommand("evaluate", "Stratified cross-validation over a configuration grid");
    evaluate->add_option("--dataset", eflags.dataset, "Dataset CSV")->required();
    evaluate->add_option("--target", eflags.target, "psm_mean, psm_mode or vas");
    evaluate->add_option("--model", eflags.model, "mlp or rf");
    evaluate->add_option("--grid", eflags.grid, "paper, selected or single");
    evaluate->add_option("--k", eflags.k, "Features for --grid single");
    evaluate->add_option("--hidden", eflags.hidden, "Hidden nodes for --grid single");
    evaluate->add_option("--bag", eflags.bag, "Bag percentage for --grid single");
    evaluate->add_option("--folds", eflags.folds, "Number of folds");
    evaluate->add_option("--normalization", eflags.normalization, "global or per-fold");
    evaluate->add_option("--seed", eflags.seed, "Master seed")->envname("EDAPIPE_SEED");
    evaluate->add_option("--report", eflags.report, "Per-configuration results CSV");
    evaluate->add_option("--cm", eflags.cm, "Pooled confusion matrix of the best configuration");
    add_config(evaluate);

    // metrics
    std::string cm_path, metrics_report;
    auto* metrics = app.add_subcommand("metrics", "Metrics from an external 3x3 confusion matrix");
    metrics->add_option("--cm", cm_path, "Confusion matrix CSV")->required();
    metrics->add_option("--report", metrics_report, "Write the table as CSV");
    add_config(metrics);

    // demo
    DemoFlags dflags;
    auto* demo = app.add_subcommand("demo", "End-to-end run on a synthetic cohort");
    demo->add_option("--out", dflags.out, "Output directory")->required();
    demo->add_option("--seed", dflags.seed, "Master seed")->envname("EDAPIPE_SEED");
    demo->add_option("--subjects", dflags.subjects, "Cohort size");
    demo->add_option("--grid", dflags.grid, "paper or selected");
    demo->add_option("--folds", dflags.folds, "Number of folds");
    demo->add_option("--trees", dflags.trees, "RF tree count for the final models");
    demo->add_option("--epochs", dflags.epochs, "MLP epochs for the final models");
    demo->add_option("--normalization", dflags.normalization, "global or per-fold");
    add_config(demo);

    // goldens
    std::string golden_report;
    auto* goldens = app.add_subcommand("goldens", "Check metric arithmetic against the published tables");
    goldens->add_option("--report", golden_report, "Write the checks as CSV");

    // replay
    std::string replay_manifest;
    auto* replay = app.add_subcommand("replay", "Re-run a command from its manifest");
    replay->add_option("--manifest", replay_manifest, "Manifest JSON")->required();

    std::vector<std::string> full;
    try {
        full = with_config_file(args);
    } catch (const Error& e) {
        err << "config error: " << e.what() << "\n";
        return ExitCode::config_error;
    }
    std::vector<const char*> argv;
    for (const auto& a : full) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? ExitCode::ok : ExitCode::config_error;
    }

    const Context ctx{out, err};
    try {
        if (*simulate) return cmd_simulate(ctx, *simulate, subject, cohort, seed, out_dir, stream, pace_ms);
        if (*serve) return cmd_serve(ctx, *serve, listen, store_dir, rate_cap, duration_s, port_file);
        if (*process) return cmd_process(ctx, *process, session_dir, process_out, svg, pflags);
        if (*feats) return cmd_features(ctx, *feats, feature_store, feature_out, window_s, fflags);
        if (*sel) return cmd_select(ctx, *sel, sel_dataset, sel_target, sel_k, cutoff, sel_report);
        if (*train) return cmd_train(ctx, *train, tflags);
        if (*evaluate) return cmd_evaluate(ctx, *evaluate, eflags);
        if (*metrics) return cmd_metrics(ctx, *metrics, cm_path, metrics_report);
        if (*demo) return cmd_demo(ctx, *demo, dflags);
        if (*goldens) return cmd_goldens(ctx, *goldens, golden_report);
        if (*replay) return cmd_replay(ctx, replay_manifest);
    } catch (const StageError& e) {
        err << "error: " << e.what() << "\n";
        return ExitCode::stage_failure;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return ExitCode::config_error;
    } catch (const ValidationError& e) {
        err << "config error: " << e.what() << "\n";
        return ExitCode::config_error;
    } catch (const TrainingDivergedError& e) {
        err << "error: " << e.what() << "\n";
        return ExitCode::stage_failure;
    } catch (const Error& e) {
        err << "data error: " << e.what() << "\n";
        return ExitCode::data_error;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return ExitCode::stage_failure;
    }
    return ExitCode::config_error;
}

}  // namespace edapipe::cli
