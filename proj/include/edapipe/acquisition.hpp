#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace edapipe::acquisition {

// Subject identifiers look like "22-102-S1007".
bool is_valid_subject_id(std::string_view id);

struct SessionConfig {
    std::string subject_id;
    double mvc_force = 0.0;           // N, 35% MVC setpoint
    double occlusion_pressure = 0.0;  // mmHg
    double stretch_force = 0.0;       // N
    double vas_post = 0.0;            // cm, [0, 10]
    double sample_rate = 2.0;         // Hz
    std::uint64_t seed = 0;
    int adc_bits = 12;

    // Throws ValidationError naming the first offending field.
    void validate() const;
    std::int32_t adc_max() const { return static_cast<std::int32_t>((std::int64_t{1} << adc_bits) - 1); }

    bool operator==(const SessionConfig&) const = default;
};

// Milliseconds since session start of sample `seq`.
std::int64_t frame_time_ms(std::uint64_t seq, double sample_rate);

struct StreamFrame {
    std::string session_id;
    std::uint64_t seq = 0;
    std::int64_t t_ms = 0;
    std::int32_t eda_counts = 0;
    std::int32_t psm_counts = 0;

    bool operator==(const StreamFrame&) const = default;
};

// Durations in seconds. Stretch occupies the final `stretch_s` of occlusion.
struct PhaseProfile {
    double baseline_s = 60.0;
    double grip_s = 120.0;
    double occlusion_s = 180.0;
    double stretch_s = 60.0;
    double recovery_s = 120.0;

    void validate() const;
    double total_s() const { return baseline_s + grip_s + occlusion_s + recovery_s; }
};

// Knobs of the synthetic PainGad generator. Setting every gain and noise
// term to zero yields a flat, pain-free session.
struct GeneratorParams {
    double pain_peak_cm = 7.0;  // latent pain at the end of stretch
    double recovery_tau_s = 45.0;

    double psm_noise_counts = 12.0;
    double psm_glitch_prob = 0.01;  // per-sample probability of a slider spike
    double psm_glitch_counts = 600.0;

    double tonic_base_us = 5.0;
    double tonic_gain_us = 1.0;  // tonic rise at latent 10 cm
    double tonic_wander_us = 0.1;
    double scr_base_rate_hz = 0.02;
    double scr_rate_gain_hz = 0.15;  // added rate at latent 10 cm
    double scr_base_amp_us = 0.05;
    double scr_amp_gain_us = 0.6;  // added amplitude at latent 10 cm
    double scr_rise_s = 1.0;
    double scr_decay_s = 4.0;
    double eda_noise_counts = 0.5;

    // Counts -> conductance transfer the generator inverts.
    double vcc = 3.3;
    double sensitivity = 0.132;
};

// Latent pain (cm on 0..10) at time `t_s` since session start.
double latent_pain(double t_s, const PhaseProfile& profile, const GeneratorParams& gen);

enum class SessionStatus { open, closed };

struct SessionRecord {
    SessionConfig config;
    std::vector<StreamFrame> frames;
    SessionStatus status = SessionStatus::open;

    const std::string& id() const { return config.subject_id; }
};

SessionRecord simulate_subject(const SessionConfig& config, const PhaseProfile& profile = {},
                               const GeneratorParams& gen = {});

struct CohortSubject {
    SessionConfig config;
    GeneratorParams generator;
};

// Synthetic cohort. Each subject's VAS is a noisy integer quantization of the
// latent pain at the end of the stretch phase; PSM tracks the latent continuously.
std::vector<CohortSubject> make_cohort(std::size_t n_subjects, std::uint64_t seed,
                                       const PhaseProfile& profile = {});

// JSON forms shared by the wire protocol and on-disk layout.
nlohmann::ordered_json config_to_json(const SessionConfig& config);
SessionConfig config_from_json(const nlohmann::json& j);
std::string frame_to_line(const StreamFrame& frame);
// Throws DataError on malformed input.
StreamFrame frame_from_json(const nlohmann::json& j);

// Checks a frame against the StreamFrame invariants for `config`. Returns an
// empty string when valid, otherwise the reason.
std::string frame_violation(const StreamFrame& frame, const SessionConfig& config);

// sessions/<id>/meta.json + frames.ndjson
void write_session_dir(const std::filesystem::path& root, const SessionRecord& record);
SessionRecord read_session_dir(const std::filesystem::path& session_dir);
// Session directories under `root`, sorted by id.
std::vector<std::filesystem::path> list_session_dirs(const std::filesystem::path& root);

enum class ExportFormat { ndjson, csv };
ExportFormat parse_export_format(std::string_view name);

std::string export_record(const SessionRecord& record, ExportFormat format);
// Inverse of export_record for the ndjson format.
SessionRecord parse_ndjson_export(std::string_view bytes);

enum class AppendStatus { accepted, unknown_session, closed_session, ordering, gap, invalid };
std::string_view to_string(AppendStatus status);

struct AppendResult {
    AppendStatus status = AppendStatus::accepted;
    std::uint64_t seq = 0;
    std::string reason;
    bool ok() const { return status == AppendStatus::accepted; }
};

// Persistent, thread-safe session store rooted at a `sessions/` directory.
// Appends to one session are serialized; different sessions proceed in parallel.
class SessionStore {
public:
    explicit SessionStore(std::filesystem::path root);

    const std::filesystem::path& root() const { return root_; }

    std::string open_session(const SessionConfig& config);
    AppendResult append(const StreamFrame& frame);
    SessionRecord close_session(const std::string& id);
    std::string export_session(const std::string& id, ExportFormat format) const;
    SessionRecord snapshot(const std::string& id) const;
    std::vector<std::string> session_ids() const;

private:
    struct Entry {
        mutable std::mutex mu;
        SessionRecord record;
    };
    std::shared_ptr<Entry> find(const std::string& id) const;
    void write_meta(const Entry& entry) const;

    std::filesystem::path root_;
    mutable std::mutex mu_;
    std::map<std::string, std::shared_ptr<Entry>> sessions_;
};

}  // namespace edapipe::acquisition
