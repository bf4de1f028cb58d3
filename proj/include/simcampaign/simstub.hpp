#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace simcampaign {

enum class FailMode { none, skip_bind, crash_at_start };

std::optional<FailMode> parse_fail_mode(std::string_view text);

struct StubConfig {
    std::int64_t port = 0;
    double duration_s = 1.0;
    std::int64_t rows = 10;
    FailMode fail_mode = FailMode::none;
    std::uint64_t seed = 0;
    std::filesystem::path output;     // CSV destination
    std::filesystem::path heartbeat;  // start/end timestamp file
};

inline constexpr int kStubBindFailure = 98;

/// Stand-in simulator. Binds a TCP listener on 127.0.0.1:port, records its
/// start time, sleeps duration_s, writes `rows` CSV lines and exits 0.
/// Returns 98 if the port is taken (no CSV is written), 1 for crash_at_start
/// or bad configuration.
int stub_main(const StubConfig& cfg);

/// The deterministic value column for a seed: same seed, same sequence.
std::string stub_csv(std::uint64_t seed, std::int64_t rows);

struct Heartbeat {
    std::int64_t started_ms = 0;
    std::optional<std::int64_t> ended_ms;
};

std::optional<Heartbeat> read_heartbeat(const std::filesystem::path& path);

}  // namespace simcampaign
