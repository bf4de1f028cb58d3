#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "simcampaign/fanout.hpp"
#include "simcampaign/manifest.hpp"
#include "simcampaign/scheduler.hpp"

namespace simcampaign {

struct ExitStatus {
    enum class Kind { succeeded, failed, killed_walltime };
    Kind kind = Kind::succeeded;
    int code = 0;  // meaningful for failed only

    static ExitStatus succeeded() { return {Kind::succeeded, 0}; }
    static ExitStatus failed(int code) { return {Kind::failed, code}; }
    static ExitStatus killed_walltime() { return {Kind::killed_walltime, 0}; }

    bool operator==(const ExitStatus&) const = default;
};

struct RunRecord {
    std::int64_t instance_id = 0;
    std::int64_t job_index = 0;
    std::int64_t node_index = 0;
    std::int64_t slot_index = 0;
    std::int64_t started_at = 0;  // ms since epoch
    std::int64_t ended_at = 0;
    ExitStatus exit_status;
    double walltime_s = 0;
    std::optional<double> cpu_time_s;
    std::optional<double> peak_ram_mb;

    bool operator==(const RunRecord&) const = default;
};

/// Exit code recorded when fork/exec of the child fails.
inline constexpr int kSpawnFailure = -1;

struct ExecOptions {
    // Defaults to the manifest's walltime_minutes. Tests shorten it.
    std::optional<std::chrono::milliseconds> walltime;
    std::chrono::milliseconds grace{5000};
    std::chrono::milliseconds poll{10};
    // Defaults to {output_dir}/records.jsonl.
    std::optional<std::filesystem::path> records_path;
};

/// Runs jobs strictly in job_index order. Within a job at most
/// nodes*slots_per_node children are alive, and at most slots_per_node per
/// node index. Each child runs `/bin/sh -c command` in its workdir with
/// SIM_PORT, SIM_DISPLAY and SIM_OUTPUT set; stdout/stderr go to
/// {workdir}/stdout.log and {workdir}/stderr.log. Records are appended to
/// the record stream as each instance finishes and returned in instance order.
std::vector<RunRecord> run_job_array(const DistributionPlan& plan, const Manifest& m,
                                     const std::vector<InstancePlan>& instances,
                                     const ExecOptions& options = {});

std::string record_to_json(const RunRecord& r);
RunRecord record_from_json(const std::string& line);

std::filesystem::path records_path(const std::filesystem::path& output_dir);

struct RecordStream {
    std::vector<RunRecord> completed;  // latest completion per instance, by instance_id
    std::vector<std::int64_t> running;  // started without a completion
    std::vector<std::string> problems;  // unparseable lines, missing file
};

/// Reads the record stream; tolerant of a torn final line and corrupt lines.
RecordStream read_record_stream(const std::filesystem::path& path);

struct StatusSummary {
    std::int64_t pending = 0;
    std::int64_t running = 0;
    std::int64_t succeeded = 0;
    std::int64_t failed = 0;
    std::int64_t killed = 0;
    std::vector<std::string> problems;

    bool operator==(const StatusSummary&) const = default;
};

/// Counts partition total_runs. Safe to call while a campaign is running.
StatusSummary status(const std::filesystem::path& state_dir, std::int64_t total_runs);

/// Runs `qsub_exe script` and returns its stdout with trailing newline removed.
/// Throws std::runtime_error if the command cannot be run or exits non-zero.
std::string submit(const std::filesystem::path& script, const std::string& qsub_exe = "qsub");

}  // namespace simcampaign
