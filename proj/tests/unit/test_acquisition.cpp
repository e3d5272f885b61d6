#include <fstream>

#include "doctest.h"
#include "edapipe/acquisition.hpp"
#include "edapipe/error.hpp"
#include "edapipe/signal.hpp"
#include "support.hpp"

using namespace edapipe;
using namespace edapipe::acquisition;

namespace {

SessionConfig valid_config(const std::string& id = "22-102-S1007") {
    SessionConfig c;
    c.subject_id = id;
    c.mvc_force = 120;
    c.occlusion_pressure = 220;
    c.stretch_force = 40;
    c.vas_post = 6;
    c.seed = 7;
    return c;
}

StreamFrame frame(const std::string& id, std::uint64_t seq, std::int32_t eda = 2000, std::int32_t psm = 300) {
    return {id, seq, frame_time_ms(seq, 2.0), eda, psm};
}

}  // namespace

TEST_CASE("subject id pattern") {
    CHECK(is_valid_subject_id("22-102-S1007"));
    CHECK(is_valid_subject_id("22-102-S1000"));
    CHECK_FALSE(is_valid_subject_id("S1007"));
    CHECK_FALSE(is_valid_subject_id("22-102-S10070"));
    CHECK_FALSE(is_valid_subject_id("22-102-S2007"));
    CHECK_FALSE(is_valid_subject_id("22-102-S10a7"));
}

TEST_CASE("session config validation names the field") {
    auto c = valid_config("S1007");
    try {
        c.validate();
        FAIL("expected a validation error");
    } catch (const ValidationError& e) {
        CHECK(e.field() == "subject_id");
    }
    auto bad_vas = valid_config();
    bad_vas.vas_post = 10.5;
    CHECK_THROWS_AS(bad_vas.validate(), ValidationError);
    auto bad_rate = valid_config();
    bad_rate.sample_rate = 0;
    CHECK_THROWS_AS(bad_rate.validate(), ValidationError);
    auto bad_force = valid_config();
    bad_force.stretch_force = -1;
    CHECK_THROWS_AS(bad_force.validate(), ValidationError);
    CHECK_NOTHROW(valid_config().validate());
}

TEST_CASE("simulate_subject: timeline, ranges, determinism") {
    const auto cfg = valid_config();
    const auto a = simulate_subject(cfg);
    REQUIRE(a.frames.size() == 960);
    CHECK(a.frames.front().t_ms == 0);
    for (std::size_t i = 0; i < a.frames.size(); ++i) {
        const auto& f = a.frames[i];
        CHECK(f.seq == i);
        CHECK(f.t_ms == static_cast<std::int64_t>(i) * 500);
        CHECK(f.eda_counts >= 0);
        CHECK(f.eda_counts <= 4095);
        CHECK(f.psm_counts >= 0);
        CHECK(f.psm_counts <= 4095);
        CHECK(f.session_id == cfg.subject_id);
    }
    const auto b = simulate_subject(cfg);
    CHECK(a.frames == b.frames);
    auto other = cfg;
    other.seed = 8;
    CHECK_FALSE(simulate_subject(other).frames == a.frames);
}

TEST_CASE("simulate_subject with a silent generator gives a flat zero-pain slider") {
    GeneratorParams g;
    g.pain_peak_cm = 0;
    g.psm_noise_counts = 0;
    g.psm_glitch_prob = 0;
    const auto rec = simulate_subject(valid_config(), {}, g);
    for (const auto& f : rec.frames) REQUIRE(f.psm_counts == 0);
}

TEST_CASE("simulate_subject rejects invalid config") {
    CHECK_THROWS_AS(simulate_subject(valid_config("bad")), ValidationError);
}

TEST_CASE("latent pain follows the protocol phases") {
    PhaseProfile p;
    GeneratorParams g;
    CHECK(p.total_s() == 480.0);
    CHECK(latent_pain(10, p, g) == 0.0);
    const double grip_mid = latent_pain(120, p, g), occl = latent_pain(250, p, g), stretch = latent_pain(350, p, g);
    const double recovery = latent_pain(450, p, g);
    CHECK(grip_mid > 0.0);
    CHECK(occl > grip_mid);
    CHECK(stretch > occl);
    CHECK(recovery < stretch);
    for (double t = 0; t < 480; t += 0.5) {
        const double v = latent_pain(t, p, g);
        CHECK(v >= 0.0);
        CHECK(v <= 10.0);
    }
}

TEST_CASE("cohort generation") {
    const auto cohort = make_cohort(15, 1);
    REQUIRE(cohort.size() == 15);
    CHECK(cohort.front().config.subject_id == "22-102-S1001");
    CHECK(cohort.back().config.subject_id == "22-102-S1015");
    for (const auto& s : cohort) {
        CHECK_NOTHROW(s.config.validate());
        CHECK(s.config.vas_post == std::round(s.config.vas_post));
    }
    CHECK(make_cohort(15, 1).back().config == cohort.back().config);
    // a prefix of a larger cohort is the smaller cohort
    CHECK(make_cohort(5, 1)[4].config == cohort[4].config);
}

TEST_CASE("wire format line") {
    const StreamFrame f{"22-102-S1007", 12, 6000, 2051, 310};
    CHECK(frame_to_line(f) == R"({"session":"22-102-S1007","seq":12,"t_ms":6000,"eda":2051,"psm":310})");
    CHECK(frame_from_json(nlohmann::json::parse(frame_to_line(f))) == f);
    CHECK_THROWS_AS(frame_from_json(nlohmann::json::parse(R"({"session":"x","seq":-1})")), DataError);
}

TEST_CASE("frame invariants") {
    const auto cfg = valid_config();
    CHECK(frame_violation(frame(cfg.subject_id, 3), cfg).empty());
    auto late = frame(cfg.subject_id, 3);
    late.t_ms += 1;
    CHECK_FALSE(frame_violation(late, cfg).empty());
    CHECK_FALSE(frame_violation(frame(cfg.subject_id, 3, 4096), cfg).empty());
    CHECK_FALSE(frame_violation(frame(cfg.subject_id, 3, 10, -1), cfg).empty());
}

TEST_CASE("session directory and export round trips") {
    testing::TempDir dir("acq");
    auto rec = simulate_subject(valid_config());
    rec.status = SessionStatus::closed;
    write_session_dir(dir.path(), rec);
    CHECK(std::filesystem::exists(dir.path() / "22-102-S1007" / "meta.json"));
    CHECK(std::filesystem::exists(dir.path() / "22-102-S1007" / "frames.ndjson"));
    const auto back = read_session_dir(dir.path() / "22-102-S1007");
    CHECK(back.config == rec.config);
    CHECK(back.frames == rec.frames);
    CHECK(back.status == SessionStatus::closed);

    const auto imported = signal::import_session(dir.path() / "22-102-S1007");
    CHECK(imported.frames == rec.frames);

    const auto nd = export_record(rec, ExportFormat::ndjson);
    CHECK(parse_ndjson_export(nd).frames == rec.frames);
    const auto csv = export_record(rec, ExportFormat::csv);
    CHECK(csv.rfind("seq,t_ms,eda,psm\n", 0) == 0);
    CHECK(parse_export_format("csv") == ExportFormat::csv);
    CHECK_THROWS_AS(parse_export_format("xml"), ValidationError);
    CHECK(list_session_dirs(dir.path()).size() == 1);
}

TEST_CASE("session store lifecycle") {
    testing::TempDir dir("store");
    SessionStore store(dir.path());
    const auto cfg = valid_config();
    CHECK(store.open_session(cfg) == cfg.subject_id);
    CHECK_THROWS_AS(store.open_session(cfg), ConflictError);
    CHECK_THROWS_AS(store.open_session(valid_config("S1007")), ValidationError);

    CHECK(store.append(frame(cfg.subject_id, 0)).ok());
    CHECK(store.append(frame(cfg.subject_id, 1)).ok());
    CHECK(store.append(frame(cfg.subject_id, 1)).status == AppendStatus::ordering);
    CHECK(store.append(frame(cfg.subject_id, 0)).status == AppendStatus::ordering);
    CHECK(store.append(frame(cfg.subject_id, 5)).status == AppendStatus::gap);
    CHECK(store.append(frame(cfg.subject_id, 2, 5000)).status == AppendStatus::invalid);
    CHECK(store.append(frame("22-102-S1999", 0)).status == AppendStatus::unknown_session);
    CHECK(store.snapshot(cfg.subject_id).frames.size() == 2);

    const auto closed = store.close_session(cfg.subject_id);
    CHECK(closed.frames.size() == 2);
    CHECK(store.append(frame(cfg.subject_id, 2)).status == AppendStatus::closed_session);
    CHECK_THROWS_AS(store.close_session(cfg.subject_id), ConflictError);
    CHECK_THROWS_AS(store.close_session("22-102-S1999"), NotFoundError);
    CHECK_THROWS_AS(store.export_session("22-102-S1999", ExportFormat::csv), NotFoundError);
    CHECK(parse_ndjson_export(store.export_session(cfg.subject_id, ExportFormat::ndjson)).frames.size() == 2);

    // a fresh store over the same directory sees the persisted session
    SessionStore reopened(dir.path());
    const auto snap = reopened.snapshot(cfg.subject_id);
    CHECK(snap.frames.size() == 2);
    CHECK(snap.status == SessionStatus::closed);
}
