#include "simcampaign/simstub.hpp"

#include <cerrno>
#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <random>
#include <thread>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include "simcampaign/clock.hpp"

namespace simcampaign {

namespace {

class Socket {
public:
    explicit Socket(int fd) : fd_(fd) {}
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;
    ~Socket() {
        if (fd_ >= 0) ::close(fd_);
    }
    int fd() const { return fd_; }

private:
    int fd_;
};

bool write_heartbeat(const std::filesystem::path& path, std::int64_t start,
                     std::optional<std::int64_t> end) {
    std::ofstream out(path, std::ios::trunc);
    out << "start " << start << "\n";
    if (end) out << "end " << *end << "\n";
    return static_cast<bool>(out);
}

}  // namespace

std::optional<FailMode> parse_fail_mode(std::string_view text) {
    if (text == "none") return FailMode::none;
    if (text == "skip_bind") return FailMode::skip_bind;
    if (text == "crash_at_start") return FailMode::crash_at_start;
    return std::nullopt;
}

std::string stub_csv(std::uint64_t seed, std::int64_t rows) {
    std::mt19937_64 rng(seed);
    std::string out = "run_id,step,value\n";
    char line[96];
    for (std::int64_t step = 0; step < rows; ++step) {
        // 53 high bits -> [0,1); std distributions are not portable across libraries.
        const double value = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        std::snprintf(line, sizeof line, "%" PRIu64 ",%lld,%.6f\n", seed,
                      static_cast<long long>(step), value);
        out += line;
    }
    return out;
}

int stub_main(const StubConfig& cfg) {
    if (cfg.fail_mode == FailMode::crash_at_start) {
        std::cerr << "stub: crash_at_start requested\n";
        return 1;
    }
    if (cfg.duration_s <= 0 || cfg.rows < 1) {
        std::cerr << "stub: duration must be > 0 and rows >= 1\n";
        return 1;
    }

    std::optional<Socket> listener;
    if (cfg.fail_mode != FailMode::skip_bind) {
        if (cfg.port < 1 || cfg.port > 65535) {
            std::cerr << "stub: SIM_PORT missing or out of range\n";
            return 1;
        }
        listener.emplace(::socket(AF_INET, SOCK_STREAM, 0));
        if (listener->fd() < 0) {
            std::cerr << "stub: socket: " << std::strerror(errno) << "\n";
            return 1;
        }
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(static_cast<std::uint16_t>(cfg.port));
        addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        if (::bind(listener->fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 ||
            ::listen(listener->fd(), 1) != 0) {
            std::cerr << "stub: could not bind port " << cfg.port << ": " << std::strerror(errno)
                      << "\n";
            return kStubBindFailure;
        }
    }

    const std::int64_t started = now_ms();
    if (!cfg.heartbeat.empty()) write_heartbeat(cfg.heartbeat, started, std::nullopt);

    std::this_thread::sleep_for(std::chrono::duration<double>(cfg.duration_s));

    if (!cfg.output.empty()) {
        std::ofstream out(cfg.output, std::ios::binary | std::ios::trunc);
        out << stub_csv(cfg.seed, cfg.rows);
        if (!out) {
            std::cerr << "stub: cannot write " << cfg.output << "\n";
            return 1;
        }
    }
    if (!cfg.heartbeat.empty()) write_heartbeat(cfg.heartbeat, started, now_ms());
    return 0;
}

std::optional<Heartbeat> read_heartbeat(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) return std::nullopt;
    Heartbeat hb;
    bool have_start = false;
    std::string key;
    std::int64_t value = 0;
    while (in >> key >> value) {
        if (key == "start") {
            hb.started_ms = value;
            have_start = true;
        } else if (key == "end") {
            hb.ended_ms = value;
        }
    }
    if (!have_start) return std::nullopt;
    return hb;
}

}  // namespace simcampaign
