#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "edapipe/acquisition.hpp"

namespace edapipe::acquisition {

using IngestClock = std::function<std::chrono::steady_clock::time_point()>;

// Sliding one-minute admission window.
class RateLimiter {
public:
    explicit RateLimiter(std::size_t cap_per_window, std::chrono::milliseconds window = std::chrono::minutes(1));
    bool admit(std::chrono::steady_clock::time_point now);
    std::size_t cap() const { return cap_; }

private:
    std::size_t cap_;
    std::chrono::milliseconds window_;
    std::deque<std::chrono::steady_clock::time_point> admitted_;
};

struct IngestOptions {
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;  // 0 picks an ephemeral port
    std::size_t rate_cap_per_minute = 150;
    IngestClock clock;  // steady_clock::now when empty
};

// Per-connection protocol state machine. Each input line yields exactly one
// response line. Lines are either frame records
//   {"session":"22-102-S1007","seq":12,"t_ms":6000,"eda":2051,"psm":310}
// or control records {"op":"open","config":{...}} / {"op":"close","session":id}.
class IngestConnection {
public:
    IngestConnection(SessionStore& store, std::size_t rate_cap, IngestClock clock);
    std::string handle_line(std::string_view line);

    std::size_t frames_accepted() const { return accepted_; }

private:
    std::string handle_frame(const nlohmann::json& j);
    std::string handle_op(const nlohmann::json& j);

    SessionStore& store_;
    RateLimiter limiter_;
    IngestClock clock_;
    std::size_t accepted_ = 0;
};

// TCP server speaking the newline-delimited protocol, one thread per connection.
class IngestServer {
public:
    IngestServer(SessionStore& store, IngestOptions options);
    ~IngestServer();
    IngestServer(const IngestServer&) = delete;
    IngestServer& operator=(const IngestServer&) = delete;

    std::uint16_t port() const { return port_; }
    void stop();
    // Blocks until stop() is called from another thread.
    void wait();

private:
    void accept_loop();
    void serve_connection(int fd);

    SessionStore& store_;
    IngestOptions options_;
    int listen_fd_ = -1;
    std::uint16_t port_ = 0;
    std::atomic<bool> stopping_{false};
    std::thread acceptor_;
    std::mutex conn_mu_;
    std::vector<std::thread> workers_;
    std::vector<int> conn_fds_;
};

std::unique_ptr<IngestServer> serve_ingest(SessionStore& store, IngestOptions options);

// Blocking line-oriented client.
class IngestClient {
public:
    IngestClient(const std::string& host, std::uint16_t port);
    ~IngestClient();
    IngestClient(const IngestClient&) = delete;
    IngestClient& operator=(const IngestClient&) = delete;

    // Sends one line and returns the server's one-line reply.
    std::string request(std::string_view line);

private:
    int fd_ = -1;
    std::string buffer_;
};

struct StreamReport {
    std::size_t sent = 0;
    std::size_t accepted = 0;
    std::vector<std::string> rejections;
};

// Opens the session on the server, streams every frame, and closes it.
// `before_frame` runs ahead of each frame send (pacing hook).
StreamReport stream_session(IngestClient& client, const SessionRecord& record,
                            const std::function<void(std::size_t)>& before_frame = {});

}  // namespace edapipe::acquisition
