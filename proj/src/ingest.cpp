#include "edapipe/ingest.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "edapipe/error.hpp"

namespace edapipe::acquisition {

using nlohmann::json;
using nlohmann::ordered_json;

RateLimiter::RateLimiter(std::size_t cap, std::chrono::milliseconds window) : cap_(cap), window_(window) {}

bool RateLimiter::admit(std::chrono::steady_clock::time_point now) {
    while (!admitted_.empty() && now - admitted_.front() >= window_) admitted_.pop_front();
    if (admitted_.size() >= cap_) return false;
    admitted_.push_back(now);
    return true;
}

namespace {

std::string reject(std::string_view code, const std::string& reason, const json* seq = nullptr) {
    ordered_json r;
    r["ok"] = false;
    r["error"] = code;
    r["reason"] = reason;
    if (seq) r["seq"] = *seq;
    return r.dump();
}

IngestClock default_clock(IngestClock clock) {
    if (clock) return clock;
    return [] { return std::chrono::steady_clock::now(); };
}

}  // namespace

IngestConnection::IngestConnection(SessionStore& store, std::size_t rate_cap, IngestClock clock)
    : store_(store), limiter_(rate_cap), clock_(default_clock(std::move(clock))) {}

std::string IngestConnection::handle_line(std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        return reject("malformed", e.what());
    }
    if (!j.is_object()) return reject("malformed", "record must be a JSON object");
    if (j.contains("op")) return handle_op(j);
    return handle_frame(j);
}

std::string IngestConnection::handle_frame(const json& j) {
    StreamFrame frame;
    try {
        frame = frame_from_json(j);
    } catch (const DataError& e) {
        return reject("malformed", e.what());
    }
    const json seq = frame.seq;
    if (!limiter_.admit(clock_()))
        return reject("throttled", "over " + std::to_string(limiter_.cap()) + " frames per minute", &seq);

    const AppendResult result = store_.append(frame);
    if (!result.ok()) return reject(to_string(result.status), result.reason, &seq);
    ++accepted_;
    ordered_json r;
    r["ok"] = true;
    r["session"] = frame.session_id;
    r["seq"] = frame.seq;
    return r.dump();
}

std::string IngestConnection::handle_op(const json& j) {
    const auto& op = j.at("op");
    if (!op.is_string()) return reject("malformed", "'op' must be a string");
    const auto name = op.get<std::string>();
    try {
        ordered_json r;
        r["ok"] = true;
        r["op"] = name;
        if (name == "open") {
            if (!j.contains("config")) return reject("malformed", "open requires 'config'");
            r["session"] = store_.open_session(config_from_json(j.at("config")));
        } else if (name == "close") {
            const auto it = j.find("session");
            if (it == j.end() || !it->is_string()) return reject("malformed", "close requires 'session'");
            const auto rec = store_.close_session(it->get<std::string>());
            r["session"] = rec.id();
            r["frames"] = rec.frames.size();
        } else {
            return reject("malformed", "unknown op '" + name + "'");
        }
        return r.dump();
    } catch (const ValidationError& e) {
        return reject("invalid", e.what());
    } catch (const ConflictError& e) {
        return reject("conflict", e.what());
    } catch (const NotFoundError& e) {
        return reject("unknown_session", e.what());
    } catch (const DataError& e) {
        return reject("malformed", e.what());
    }
}

IngestServer::IngestServer(SessionStore& store, IngestOptions options)
    : store_(store), options_(std::move(options)) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    hints.ai_flags = AI_PASSIVE | AI_NUMERICSERV;
    addrinfo* res = nullptr;
    const std::string port = std::to_string(options_.port);
    if (int rc = ::getaddrinfo(options_.host.c_str(), port.c_str(), &hints, &res); rc != 0)
        throw ConfigError("cannot resolve listen address " + options_.host + ": " + ::gai_strerror(rc));

    for (addrinfo* ai = res; ai; ai = ai->ai_next) {
        int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
        if (fd < 0) continue;
        int one = 1;
        ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        if (::bind(fd, ai->ai_addr, ai->ai_addrlen) == 0 && ::listen(fd, 64) == 0) {
            listen_fd_ = fd;
            break;
        }
        ::close(fd);
    }
    ::freeaddrinfo(res);
    if (listen_fd_ < 0) throw ConfigError("cannot listen on " + options_.host + ":" + port + ": " + std::strerror(errno));

    sockaddr_storage bound{};
    socklen_t len = sizeof bound;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &len);
    if (bound.ss_family == AF_INET)
        port_ = ntohs(reinterpret_cast<sockaddr_in*>(&bound)->sin_port);
    else
        port_ = ntohs(reinterpret_cast<sockaddr_in6*>(&bound)->sin6_port);

    acceptor_ = std::thread([this] { accept_loop(); });
}

IngestServer::~IngestServer() { stop(); }

void IngestServer::accept_loop() {
    while (!stopping_) {
        pollfd pfd{listen_fd_, POLLIN, 0};
        if (::poll(&pfd, 1, 100) <= 0) continue;
        int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) continue;
        std::lock_guard lock(conn_mu_);
        if (stopping_) {
            ::close(fd);
            break;
        }
        conn_fds_.push_back(fd);
        workers_.emplace_back([this, fd] {
            serve_connection(fd);
            std::lock_guard done(conn_mu_);
            std::erase(conn_fds_, fd);
            ::close(fd);
        });
    }
}

void IngestServer::serve_connection(int fd) {
    IngestConnection conn(store_, options_.rate_cap_per_minute, options_.clock);
    std::string buffer;
    char chunk[4096];
    while (!stopping_) {
        const ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
        if (n <= 0) break;
        buffer.append(chunk, static_cast<std::size_t>(n));
        std::size_t start = 0;
        for (std::size_t nl; (nl = buffer.find('\n', start)) != std::string::npos; start = nl + 1) {
            std::string reply = conn.handle_line(std::string_view(buffer).substr(start, nl - start)) + "\n";
            if (::send(fd, reply.data(), reply.size(), MSG_NOSIGNAL) < 0) return;
        }
        buffer.erase(0, start);
        if (buffer.size() > (1u << 20)) {
            const std::string reply = reject("malformed", "line too long") + "\n";
            ::send(fd, reply.data(), reply.size(), MSG_NOSIGNAL);
            buffer.clear();
        }
    }
}

void IngestServer::stop() {
    if (stopping_.exchange(true)) return;
    if (acceptor_.joinable()) acceptor_.join();
    std::vector<std::thread> workers;
    {
        std::lock_guard lock(conn_mu_);
        for (int fd : conn_fds_) ::shutdown(fd, SHUT_RDWR);
        workers.swap(workers_);
    }
    for (auto& t : workers) t.join();
    ::close(listen_fd_);
    listen_fd_ = -1;
}

void IngestServer::wait() {
    while (!stopping_) std::this_thread::sleep_for(std::chrono::milliseconds(200));
}

std::unique_ptr<IngestServer> serve_ingest(SessionStore& store, IngestOptions options) {
    return std::make_unique<IngestServer>(store, std::move(options));
}

IngestClient::IngestClient(const std::string& host, std::uint16_t port) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    const std::string service = std::to_string(port);
    if (int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &res); rc != 0)
        throw ConfigError("cannot resolve " + host + ": " + ::gai_strerror(rc));
    for (addrinfo* ai = res; ai; ai = ai->ai_next) {
        int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
        if (fd < 0) continue;
        if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) {
            fd_ = fd;
            break;
        }
        ::close(fd);
    }
    ::freeaddrinfo(res);
    if (fd_ < 0) throw ConfigError("cannot connect to " + host + ":" + service);
}

IngestClient::~IngestClient() {
    if (fd_ >= 0) ::close(fd_);
}

std::string IngestClient::request(std::string_view line) {
    std::string out(line);
    out += '\n';
    for (std::size_t off = 0; off < out.size();) {
        const ssize_t n = ::send(fd_, out.data() + off, out.size() - off, MSG_NOSIGNAL);
        if (n <= 0) throw DataError("connection lost while sending");
        off += static_cast<std::size_t>(n);
    }
    char chunk[4096];
    std::size_t nl;
    while ((nl = buffer_.find('\n')) == std::string::npos) {
        const ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
        if (n <= 0) throw DataError("connection closed before reply");
        buffer_.append(chunk, static_cast<std::size_t>(n));
    }
    std::string reply = buffer_.substr(0, nl);
    buffer_.erase(0, nl + 1);
    return reply;
}

StreamReport stream_session(IngestClient& client, const SessionRecord& record,
                            const std::function<void(std::size_t)>& before_frame) {
    StreamReport report;
    ordered_json open;
    open["op"] = "open";
    open["config"] = config_to_json(record.config);
    const json opened = json::parse(client.request(open.dump()));
    if (!opened.value("ok", false))
        throw ConflictError("server refused session " + record.id() + ": " + opened.value("reason", std::string{}));

    for (std::size_t i = 0; i < record.frames.size(); ++i) {
        if (before_frame) before_frame(i);
        const std::string reply = client.request(frame_to_line(record.frames[i]));
        ++report.sent;
        if (json::parse(reply).value("ok", false))
            ++report.accepted;
        else
            report.rejections.push_back(reply);
    }

    ordered_json close;
    close["op"] = "close";
    close["session"] = record.id();
    client.request(close.dump());
    return report;
}

}  // namespace edapipe::acquisition
