#include "edapipe/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <regex>
#include <sstream>

#include "edapipe/error.hpp"

namespace edapipe::acquisition {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

bool is_valid_subject_id(std::string_view id) {
    static const std::regex pattern(R"(22-102-S1[0-9]{3})");
    return std::regex_match(id.begin(), id.end(), pattern);
}

void SessionConfig::validate() const {
    if (!is_valid_subject_id(subject_id))
        throw ValidationError("subject_id", "'" + subject_id + "' does not match 22-102-S1XXX");
    if (!(sample_rate > 0.0) || !std::isfinite(sample_rate))
        throw ValidationError("sample_rate", "must be positive");
    if (!(vas_post >= 0.0 && vas_post <= 10.0)) throw ValidationError("vas_post", "must lie in [0, 10] cm");
    if (!(mvc_force >= 0.0)) throw ValidationError("mvc_force", "must be non-negative");
    if (!(occlusion_pressure >= 0.0)) throw ValidationError("occlusion_pressure", "must be non-negative");
    if (!(stretch_force >= 0.0)) throw ValidationError("stretch_force", "must be non-negative");
    if (adc_bits < 1 || adc_bits > 30) throw ValidationError("adc_bits", "must lie in [1, 30]");
}

std::int64_t frame_time_ms(std::uint64_t seq, double sample_rate) {
    return std::llround(static_cast<double>(seq) * 1000.0 / sample_rate);
}

void PhaseProfile::validate() const {
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError(name, "duration must be positive");
    };
    positive(baseline_s, "baseline_s");
    positive(grip_s, "grip_s");
    positive(occlusion_s, "occlusion_s");
    positive(stretch_s, "stretch_s");
    positive(recovery_s, "recovery_s");
    if (stretch_s > occlusion_s) throw ValidationError("stretch_s", "stretch must fit inside occlusion");
}

double latent_pain(double t_s, const PhaseProfile& p, const GeneratorParams& gen) {
    const double peak = gen.pain_peak_cm;
    const double grip_end = p.baseline_s + p.grip_s;
    const double stretch_start = grip_end + p.occlusion_s - p.stretch_s;
    const double occlusion_end = grip_end + p.occlusion_s;
    auto lerp = [](double a, double b, double f) { return a + (b - a) * f; };

    double level = 0.0;
    if (t_s < p.baseline_s) {
        level = 0.0;
    } else if (t_s < grip_end) {
        level = lerp(0.0, 0.35 * peak, (t_s - p.baseline_s) / p.grip_s);
    } else if (t_s < stretch_start) {
        // Ischaemic pain builds fast early in the occlusion, then levels off.
        const double f = (t_s - grip_end) / (p.occlusion_s - p.stretch_s);
        level = lerp(0.35 * peak, 0.85 * peak, std::sqrt(f));
    } else if (t_s < occlusion_end) {
        level = lerp(0.85 * peak, peak, (t_s - stretch_start) / p.stretch_s);
    } else {
        level = gen.recovery_tau_s > 0.0 ? peak * std::exp(-(t_s - occlusion_end) / gen.recovery_tau_s) : 0.0;
    }
    return std::clamp(level, 0.0, 10.0);
}

namespace {

// Fast-rise / exponential-decay SCR shape normalized to unit peak.
std::vector<double> scr_kernel(double rate, double rise_s, double decay_s) {
    const auto n = static_cast<std::size_t>(std::ceil(8.0 * decay_s * rate)) + 1;
    std::vector<double> k(n);
    double peak = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double tau = static_cast<double>(i) / rate;
        k[i] = (1.0 - std::exp(-tau / rise_s)) * std::exp(-tau / decay_s);
        peak = std::max(peak, k[i]);
    }
    if (peak > 0.0)
        for (double& v : k) v /= peak;
    return k;
}

}  // namespace

SessionRecord simulate_subject(const SessionConfig& config, const PhaseProfile& profile, const GeneratorParams& gen) {
    config.validate();
    profile.validate();

    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> unit_normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const double rate = config.sample_rate;
    const auto n = static_cast<std::size_t>(std::llround(profile.total_s() * rate));
    const std::int32_t adc_max = config.adc_max();
    const double counts_per_us = std::ldexp(1.0, config.adc_bits) * gen.sensitivity / gen.vcc;

    std::vector<double> latent(n);
    for (std::size_t i = 0; i < n; ++i) latent[i] = latent_pain(static_cast<double>(i) / rate, profile, gen);

    // Phasic conductance: SCR events arrive as a Bernoulli process whose rate
    // and amplitude grow with latent pain.
    std::vector<double> phasic(n, 0.0);
    const bool scr_enabled = gen.scr_rise_s > 0.0 && gen.scr_decay_s > 0.0;
    const auto kernel = scr_enabled ? scr_kernel(rate, gen.scr_rise_s, gen.scr_decay_s) : std::vector<double>{};
    for (std::size_t i = 0; i < n; ++i) {
        const double pain = latent[i] / 10.0;
        const double event_rate = gen.scr_base_rate_hz + gen.scr_rate_gain_hz * pain;
        const double draw = unit(rng);
        const double jitter = std::exp(0.3 * unit_normal(rng));
        if (!scr_enabled || draw >= event_rate / rate) continue;
        const double amp = (gen.scr_base_amp_us + gen.scr_amp_gain_us * pain) * jitter;
        for (std::size_t j = 0; j < kernel.size() && i + j < n; ++j) phasic[i + j] += amp * kernel[j];
    }

    SessionRecord record;
    record.config = config;
    record.frames.reserve(n);
    constexpr double kPi = 3.14159265358979323846;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / rate;
        const double tonic = gen.tonic_base_us + gen.tonic_gain_us * latent[i] / 10.0 +
                             gen.tonic_wander_us * std::sin(2.0 * kPi * t / 200.0);
        const double sc = tonic + phasic[i];
        const double eda = sc * counts_per_us + gen.eda_noise_counts * unit_normal(rng);

        double psm = latent[i] / 10.0 * adc_max + gen.psm_noise_counts * unit_normal(rng);
        const double glitch_draw = unit(rng);
        const double glitch_sign = unit(rng) < 0.5 ? -1.0 : 1.0;
        if (glitch_draw < gen.psm_glitch_prob) psm += glitch_sign * gen.psm_glitch_counts;

        StreamFrame f;
        f.session_id = config.subject_id;
        f.seq = i;
        f.t_ms = frame_time_ms(i, rate);
        f.eda_counts = static_cast<std::int32_t>(std::clamp<double>(std::llround(eda), 0, adc_max));
        f.psm_counts = static_cast<std::int32_t>(std::clamp<double>(std::llround(psm), 0, adc_max));
        record.frames.push_back(std::move(f));
    }
    record.status = SessionStatus::closed;
    return record;
}

std::vector<CohortSubject> make_cohort(std::size_t n_subjects, std::uint64_t seed, const PhaseProfile& profile) {
    if (n_subjects > 999) throw ValidationError("n_subjects", "subject ids allow at most 999 subjects");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> unit_normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

    std::vector<CohortSubject> cohort;
    cohort.reserve(n_subjects);
    for (std::size_t s = 0; s < n_subjects; ++s) {
        CohortSubject subject;
        auto& c = subject.config;
        auto& g = subject.generator;
        char id[16];
        std::snprintf(id, sizeof id, "22-102-S1%03zu", s + 1);
        c.subject_id = id;
        c.mvc_force = std::round(uniform(90.0, 170.0) * 10.0) / 10.0;
        c.occlusion_pressure = std::round(uniform(200.0, 250.0));
        c.stretch_force = std::round(uniform(20.0, 60.0) * 10.0) / 10.0;
        c.seed = rng();

        g.pain_peak_cm = std::clamp(6.0 + 0.04 * (c.stretch_force - 40.0) + 0.8 * unit_normal(rng), 1.0, 10.0);
        g.tonic_base_us = uniform(2.0, 10.0);
        g.scr_rate_gain_hz = uniform(0.08, 0.22);
        g.scr_amp_gain_us = uniform(0.3, 0.9);
        g.psm_noise_counts = uniform(5.0, 20.0);

        const double terminal = latent_pain(profile.baseline_s + profile.grip_s + profile.occlusion_s - 1e-9, profile, g);
        c.vas_post = std::clamp(std::round(terminal + 1.0 * unit_normal(rng)), 0.0, 10.0);
        cohort.push_back(std::move(subject));
    }
    return cohort;
}

ordered_json config_to_json(const SessionConfig& c) {
    ordered_json j;
    j["subject_id"] = c.subject_id;
    j["mvc_force"] = c.mvc_force;
    j["occlusion_pressure"] = c.occlusion_pressure;
    j["stretch_force"] = c.stretch_force;
    j["vas_post"] = c.vas_post;
    j["sample_rate"] = c.sample_rate;
    j["seed"] = c.seed;
    j["adc_bits"] = c.adc_bits;
    return j;
}

SessionConfig config_from_json(const json& j) {
    try {
        SessionConfig c;
        c.subject_id = j.at("subject_id").get<std::string>();
        c.mvc_force = j.value("mvc_force", 0.0);
        c.occlusion_pressure = j.value("occlusion_pressure", 0.0);
        c.stretch_force = j.value("stretch_force", 0.0);
        c.vas_post = j.value("vas_post", 0.0);
        c.sample_rate = j.value("sample_rate", 2.0);
        c.seed = j.value("seed", std::uint64_t{0});
        c.adc_bits = j.value("adc_bits", 12);
        return c;
    } catch (const json::exception& e) {
        throw DataError(std::string("bad session config: ") + e.what());
    }
}

std::string frame_to_line(const StreamFrame& f) {
    ordered_json j;
    j["session"] = f.session_id;
    j["seq"] = f.seq;
    j["t_ms"] = f.t_ms;
    j["eda"] = f.eda_counts;
    j["psm"] = f.psm_counts;
    return j.dump();
}

StreamFrame frame_from_json(const json& j) {
    if (!j.is_object()) throw DataError("frame record must be a JSON object");
    auto integer = [&](const char* key) -> const json& {
        const auto it = j.find(key);
        if (it == j.end()) throw DataError(std::string("missing field '") + key + "'");
        if (!it->is_number_integer()) throw DataError(std::string("field '") + key + "' must be an integer");
        return *it;
    };
    const auto session = j.find("session");
    if (session == j.end() || !session->is_string()) throw DataError("field 'session' must be a string");

    StreamFrame f;
    f.session_id = session->get<std::string>();
    const auto& seq = integer("seq");
    if (seq.is_number_unsigned() || seq.get<std::int64_t>() >= 0)
        f.seq = seq.get<std::uint64_t>();
    else
        throw DataError("field 'seq' must be non-negative");
    f.t_ms = integer("t_ms").get<std::int64_t>();
    const auto eda = integer("eda").get<std::int64_t>();
    const auto psm = integer("psm").get<std::int64_t>();
    if (eda < INT32_MIN || eda > INT32_MAX || psm < INT32_MIN || psm > INT32_MAX)
        throw DataError("counts out of integer range");
    f.eda_counts = static_cast<std::int32_t>(eda);
    f.psm_counts = static_cast<std::int32_t>(psm);
    return f;
}

std::string frame_violation(const StreamFrame& f, const SessionConfig& c) {
    if (f.session_id != c.subject_id) return "session id mismatch";
    if (f.t_ms != frame_time_ms(f.seq, c.sample_rate))
        return "t_ms " + std::to_string(f.t_ms) + " does not match seq " + std::to_string(f.seq);
    if (f.eda_counts < 0 || f.eda_counts > c.adc_max()) return "eda counts outside ADC range";
    if (f.psm_counts < 0 || f.psm_counts > c.adc_max()) return "psm counts outside ADC range";
    return {};
}

namespace {

std::string_view status_name(SessionStatus s) { return s == SessionStatus::open ? "open" : "closed"; }

ordered_json meta_json(const SessionRecord& r) {
    ordered_json j;
    j["session"] = r.id();
    j["status"] = status_name(r.status);
    j["frame_count"] = r.frames.size();
    j["config"] = config_to_json(r.config);
    return j;
}

SessionStatus parse_status(const std::string& s) {
    if (s == "open") return SessionStatus::open;
    if (s == "closed") return SessionStatus::closed;
    throw DataError("unknown session status '" + s + "'");
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << bytes;
}

std::vector<StreamFrame> parse_frame_lines(std::istream& in, std::size_t first_line) {
    std::vector<StreamFrame> frames;
    std::string line;
    std::size_t lineno = first_line;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            frames.push_back(frame_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw DataError("line " + std::to_string(lineno) + ": " + e.what());
        } catch (const DataError& e) {
            throw DataError("line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return frames;
}

}  // namespace

void write_session_dir(const fs::path& root, const SessionRecord& record) {
    const fs::path dir = root / record.id();
    fs::create_directories(dir);
    write_file(dir / "meta.json", meta_json(record).dump(2) + "\n");
    std::string frames;
    for (const auto& f : record.frames) frames += frame_to_line(f) + "\n";
    write_file(dir / "frames.ndjson", frames);
}

SessionRecord read_session_dir(const fs::path& dir) {
    SessionRecord r;
    try {
        const json meta = json::parse(read_file(dir / "meta.json"));
        r.config = config_from_json(meta.at("config"));
        r.status = parse_status(meta.at("status").get<std::string>());
    } catch (const json::exception& e) {
        throw DataError(dir.string() + "/meta.json: " + e.what());
    }
    const fs::path frames_path = dir / "frames.ndjson";
    if (fs::exists(frames_path)) {
        std::istringstream in(read_file(frames_path));
        r.frames = parse_frame_lines(in, 0);
    }
    for (const auto& f : r.frames) {
        if (auto why = frame_violation(f, r.config); !why.empty())
            throw DataError(dir.string() + ": frame " + std::to_string(f.seq) + ": " + why);
    }
    return r;
}

std::vector<fs::path> list_session_dirs(const fs::path& root) {
    if (!fs::is_directory(root)) throw NotFoundError("session store " + root.string() + " does not exist");
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(root))
        if (entry.is_directory() && fs::exists(entry.path() / "meta.json")) dirs.push_back(entry.path());
    std::sort(dirs.begin(), dirs.end());
    return dirs;
}

ExportFormat parse_export_format(std::string_view name) {
    if (name == "ndjson" || name == "json") return ExportFormat::ndjson;
    if (name == "csv") return ExportFormat::csv;
    throw ValidationError("format", "unknown export format '" + std::string(name) + "'");
}

std::string export_record(const SessionRecord& r, ExportFormat format) {
    std::string out;
    if (format == ExportFormat::csv) {
        out = "seq,t_ms,eda,psm\n";
        for (const auto& f : r.frames)
            out += std::to_string(f.seq) + "," + std::to_string(f.t_ms) + "," + std::to_string(f.eda_counts) + "," +
                   std::to_string(f.psm_counts) + "\n";
        return out;
    }
    out = meta_json(r).dump() + "\n";
    for (const auto& f : r.frames) out += frame_to_line(f) + "\n";
    return out;
}

SessionRecord parse_ndjson_export(std::string_view bytes) {
    std::istringstream in{std::string(bytes)};
    std::string first;
    if (!std::getline(in, first)) throw DataError("empty export");
    SessionRecord r;
    try {
        const json meta = json::parse(first);
        r.config = config_from_json(meta.at("config"));
        r.status = parse_status(meta.at("status").get<std::string>());
    } catch (const json::exception& e) {
        throw DataError(std::string("export header: ") + e.what());
    }
    r.frames = parse_frame_lines(in, 1);
    return r;
}

std::string_view to_string(AppendStatus s) {
    switch (s) {
        case AppendStatus::accepted: return "accepted";
        case AppendStatus::unknown_session: return "unknown_session";
        case AppendStatus::closed_session: return "closed_session";
        case AppendStatus::ordering: return "ordering";
        case AppendStatus::gap: return "gap";
        case AppendStatus::invalid: return "invalid";
    }
    return "invalid";
}

SessionStore::SessionStore(fs::path root) : root_(std::move(root)) {
    fs::create_directories(root_);
    for (const auto& dir : list_session_dirs(root_)) {
        auto entry = std::make_shared<Entry>();
        entry->record = read_session_dir(dir);
        sessions_.emplace(entry->record.id(), std::move(entry));
    }
}

std::shared_ptr<SessionStore::Entry> SessionStore::find(const std::string& id) const {
    std::lock_guard lock(mu_);
    const auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
}

void SessionStore::write_meta(const Entry& entry) const {
    write_file(root_ / entry.record.id() / "meta.json", meta_json(entry.record).dump(2) + "\n");
}

std::string SessionStore::open_session(const SessionConfig& config) {
    config.validate();
    auto entry = std::make_shared<Entry>();
    entry->record.config = config;
    entry->record.status = SessionStatus::open;
    {
        std::lock_guard lock(mu_);
        if (sessions_.count(config.subject_id)) throw ConflictError("session " + config.subject_id + " already exists");
        sessions_.emplace(config.subject_id, entry);
    }
    std::lock_guard lock(entry->mu);
    fs::create_directories(root_ / config.subject_id);
    write_meta(*entry);
    write_file(root_ / config.subject_id / "frames.ndjson", "");
    return config.subject_id;
}

AppendResult SessionStore::append(const StreamFrame& frame) {
    AppendResult result;
    result.seq = frame.seq;
    auto entry = find(frame.session_id);
    if (!entry) {
        result.status = AppendStatus::unknown_session;
        result.reason = "no session '" + frame.session_id + "'";
        return result;
    }
    std::lock_guard lock(entry->mu);
    auto& rec = entry->record;
    if (rec.status == SessionStatus::closed) {
        result.status = AppendStatus::closed_session;
        result.reason = "session is closed";
        return result;
    }
    const std::uint64_t expected = rec.frames.size();
    if (!rec.frames.empty() && frame.seq <= rec.frames.back().seq) {
        result.status = AppendStatus::ordering;
        result.reason = "seq " + std::to_string(frame.seq) + " <= last stored " + std::to_string(rec.frames.back().seq);
        return result;
    }
    if (frame.seq != expected) {
        result.status = AppendStatus::gap;
        result.reason = "expected seq " + std::to_string(expected);
        return result;
    }
    if (auto why = frame_violation(frame, rec.config); !why.empty()) {
        result.status = AppendStatus::invalid;
        result.reason = std::move(why);
        return result;
    }
    std::ofstream out(root_ / rec.id() / "frames.ndjson", std::ios::binary | std::ios::app);
    out << frame_to_line(frame) << '\n';
    out.flush();
    if (!out) throw DataError("cannot append to session " + rec.id());
    rec.frames.push_back(frame);
    return result;
}

SessionRecord SessionStore::close_session(const std::string& id) {
    auto entry = find(id);
    if (!entry) throw NotFoundError("no session '" + id + "'");
    std::lock_guard lock(entry->mu);
    if (entry->record.status == SessionStatus::closed) throw ConflictError("session " + id + " already closed");
    entry->record.status = SessionStatus::closed;
    write_meta(*entry);
    return entry->record;
}

std::string SessionStore::export_session(const std::string& id, ExportFormat format) const {
    return export_record(snapshot(id), format);
}

SessionRecord SessionStore::snapshot(const std::string& id) const {
    auto entry = find(id);
    if (!entry) throw NotFoundError("no session '" + id + "'");
    std::lock_guard lock(entry->mu);
    return entry->record;
}

std::vector<std::string> SessionStore::session_ids() const {
    std::lock_guard lock(mu_);
    std::vector<std::string> ids;
    for (const auto& [id, _] : sessions_) ids.push_back(id);
    return ids;
}

}  // namespace edapipe::acquisition
