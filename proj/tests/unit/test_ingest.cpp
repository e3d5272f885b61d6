#include <atomic>
#include <thread>

#include "doctest.h"
#include "edapipe/acquisition.hpp"
#include "edapipe/error.hpp"
#include "edapipe/ingest.hpp"
#include "support.hpp"

using namespace edapipe;
using namespace edapipe::acquisition;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

// Manually advanced time source shared by a test and the code under test.
struct VirtualClock {
    std::atomic<std::int64_t> ms{0};
    IngestClock fn() {
        return [this] { return Clock::time_point(std::chrono::milliseconds(ms.load())); };
    }
};

SessionConfig config_for(const std::string& id) {
    SessionConfig c;
    c.subject_id = id;
    c.seed = 3;
    return c;
}

std::string open_line(const std::string& id) {
    json j;
    j["op"] = "open";
    j["config"] = config_to_json(config_for(id));
    return j.dump();
}

StreamFrame frame(const std::string& id, std::uint64_t seq) { return {id, seq, frame_time_ms(seq, 2.0), 100, 100}; }

}  // namespace

TEST_CASE("rate limiter sliding window") {
    RateLimiter lim(3, std::chrono::milliseconds(1000));
    const Clock::time_point t0{};
    CHECK(lim.admit(t0));
    CHECK(lim.admit(t0 + std::chrono::milliseconds(10)));
    CHECK(lim.admit(t0 + std::chrono::milliseconds(20)));
    CHECK_FALSE(lim.admit(t0 + std::chrono::milliseconds(30)));
    CHECK_FALSE(lim.admit(t0 + std::chrono::milliseconds(999)));
    CHECK(lim.admit(t0 + std::chrono::milliseconds(1000)));  // the first admission expired
    CHECK_FALSE(lim.admit(t0 + std::chrono::milliseconds(1005)));
}

TEST_CASE("connection replies") {
    testing::TempDir dir("conn");
    SessionStore store(dir.path());
    VirtualClock clock;
    IngestConnection conn(store, 150, clock.fn());
    const std::string id = "22-102-S1007";

    auto reply = json::parse(conn.handle_line(open_line(id)));
    CHECK(reply["ok"] == true);
    CHECK(json::parse(conn.handle_line(open_line(id)))["error"] == "conflict");

    reply = json::parse(conn.handle_line(frame_to_line(frame(id, 0))));
    CHECK(reply["ok"] == true);
    CHECK(reply["seq"] == 0);

    CHECK(json::parse(conn.handle_line(frame_to_line(frame(id, 0))))["error"] == "ordering");
    CHECK(json::parse(conn.handle_line(frame_to_line(frame(id, 4))))["error"] == "gap");
    CHECK(json::parse(conn.handle_line(frame_to_line(frame("22-102-S1999", 0))))["error"] == "unknown_session");
    CHECK(json::parse(conn.handle_line("not json"))["error"] == "malformed");
    CHECK(json::parse(conn.handle_line("[1,2]"))["error"] == "malformed");
    CHECK(json::parse(conn.handle_line(R"({"session":"22-102-S1007","seq":1})"))["error"] == "malformed");
    CHECK(json::parse(conn.handle_line(R"({"op":"dance"})"))["error"] == "malformed");
    auto bad = frame(id, 1);
    bad.eda_counts = 99999;
    CHECK(json::parse(conn.handle_line(frame_to_line(bad)))["error"] == "invalid");

    reply = json::parse(conn.handle_line(R"({"op":"close","session":"22-102-S1007"})"));
    CHECK(reply["ok"] == true);
    CHECK(reply["frames"] == 1);
    CHECK(json::parse(conn.handle_line(frame_to_line(frame(id, 1))))["error"] == "closed_session");
    CHECK(json::parse(conn.handle_line(R"({"op":"close","session":"22-102-S1999"})"))["error"] == "unknown_session");
    CHECK(store.snapshot(id).frames.size() == 1);
}

TEST_CASE("151st frame in one minute is throttled") {
    testing::TempDir dir("throttle");
    SessionStore store(dir.path());
    VirtualClock clock;
    IngestConnection conn(store, 150, clock.fn());
    const std::string id = "22-102-S1001";
    conn.handle_line(open_line(id));
    for (std::uint64_t s = 0; s < 150; ++s) {
        clock.ms += 100;
        REQUIRE(json::parse(conn.handle_line(frame_to_line(frame(id, s))))["ok"] == true);
    }
    clock.ms += 100;
    const auto reply = json::parse(conn.handle_line(frame_to_line(frame(id, 150))));
    CHECK(reply["error"] == "throttled");
    CHECK(reply["seq"] == 150);
    CHECK(store.snapshot(id).frames.size() == 150);
    // once the window slides past the first admission the same frame goes through
    clock.ms = 100 + 60000;
    CHECK(json::parse(conn.handle_line(frame_to_line(frame(id, 150))))["ok"] == true);
}

TEST_CASE("server streams a full session over TCP") {
    testing::TempDir dir("server");
    SessionStore store(dir.path());
    IngestOptions opts;
    opts.rate_cap_per_minute = 100000;
    auto server = serve_ingest(store, opts);
    REQUIRE(server->port() != 0);

    const auto subject = make_cohort(2, 9).back();
    const auto rec = simulate_subject(subject.config, {}, subject.generator);
    IngestClient client("127.0.0.1", server->port());
    const auto report = stream_session(client, rec);
    CHECK(report.sent == 960);
    CHECK(report.accepted == 960);
    CHECK(report.rejections.empty());
    const auto stored = store.snapshot(rec.id());
    CHECK(stored.status == SessionStatus::closed);
    CHECK(stored.frames == rec.frames);

    // second connection: replaying the session is refused as a duplicate open
    IngestClient again("127.0.0.1", server->port());
    CHECK_THROWS_AS(stream_session(again, rec), ConflictError);
    server->stop();
    server->wait();
}

TEST_CASE("concurrent connections to distinct sessions") {
    testing::TempDir dir("concurrent");
    SessionStore store(dir.path());
    IngestOptions opts;
    opts.rate_cap_per_minute = 100000;
    auto server = serve_ingest(store, opts);
    const auto cohort = make_cohort(4, 2);
    std::vector<std::thread> threads;
    std::atomic<std::size_t> accepted{0};
    for (const auto& s : cohort) {
        threads.emplace_back([&, s] {
            auto rec = simulate_subject(s.config, {}, s.generator);
            rec.frames.resize(200);
            IngestClient c("127.0.0.1", server->port());
            accepted += stream_session(c, rec).accepted;
        });
    }
    for (auto& t : threads) t.join();
    CHECK(accepted == 800);
    CHECK(store.session_ids().size() == 4);
    server->stop();
    server->wait();
}
