#include "simcampaign/localexec.hpp"

#include <algorithm>
#include <cerrno>
#include <csignal>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <thread>

#include <fcntl.h>
#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include "simcampaign/clock.hpp"

namespace simcampaign {

namespace fs = std::filesystem;
using nlohmann::json;
using steady = std::chrono::steady_clock;

namespace {

std::string status_name(ExitStatus::Kind kind) {
    switch (kind) {
        case ExitStatus::Kind::succeeded: return "succeeded";
        case ExitStatus::Kind::failed: return "failed";
        case ExitStatus::Kind::killed_walltime: return "killed_walltime";
    }
    return "failed";
}

struct Child {
    std::size_t slot;  // index into the job's assignment list
    pid_t pid = -1;
    std::int64_t started_at = 0;
    steady::time_point deadline;
    std::optional<steady::time_point> term_sent;
    bool killed = false;
};

// Child side of fork(). Only async-signal-safe calls until exec.
[[noreturn]] void exec_child(const std::string& command, const fs::path& workdir,
                             const std::vector<std::string>& env) {
    ::setpgid(0, 0);
    if (::chdir(workdir.c_str()) != 0) _exit(127);
    for (const auto& kv : env) ::putenv(const_cast<char*>(kv.c_str()));
    int out = ::open("stdout.log", O_WRONLY | O_CREAT | O_TRUNC, 0644);
    int err = ::open("stderr.log", O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (out >= 0) ::dup2(out, STDOUT_FILENO);
    if (err >= 0) ::dup2(err, STDERR_FILENO);
    int devnull = ::open("/dev/null", O_RDONLY);
    if (devnull >= 0) ::dup2(devnull, STDIN_FILENO);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
}

double seconds(const timeval& tv) {
    return static_cast<double>(tv.tv_sec) + static_cast<double>(tv.tv_usec) / 1e6;
}

class RecordWriter {
public:
    explicit RecordWriter(const fs::path& path) : out_(path, std::ios::app) {
        if (!out_) throw std::runtime_error("cannot open record stream " + path.string());
    }

    void started(const Assignment& a, std::int64_t at) {
        json line = {{"event", "started"},
                     {"instance_id", a.instance_id},
                     {"job_index", a.job_index},
                     {"node_index", a.node_index},
                     {"slot_index", a.slot_index},
                     {"started_at", at}};
        out_ << line.dump() << '\n' << std::flush;
    }

    void completed(const RunRecord& r) { out_ << record_to_json(r) << '\n' << std::flush; }

private:
    std::ofstream out_;
};

}  // namespace

fs::path records_path(const fs::path& output_dir) { return output_dir / "records.jsonl"; }

std::string record_to_json(const RunRecord& r) {
    json j = {{"event", "completed"},
              {"instance_id", r.instance_id},
              {"job_index", r.job_index},
              {"node_index", r.node_index},
              {"slot_index", r.slot_index},
              {"started_at", r.started_at},
              {"ended_at", r.ended_at},
              {"exit_status", status_name(r.exit_status.kind)},
              {"walltime_s", r.walltime_s}};
    if (r.exit_status.kind == ExitStatus::Kind::failed) j["exit_code"] = r.exit_status.code;
    j["cpu_time_s"] = r.cpu_time_s ? json(*r.cpu_time_s) : json(nullptr);
    j["peak_ram_mb"] = r.peak_ram_mb ? json(*r.peak_ram_mb) : json(nullptr);
    return j.dump();
}

RunRecord record_from_json(const std::string& line) {
    const json j = json::parse(line);
    RunRecord r;
    r.instance_id = j.at("instance_id").get<std::int64_t>();
    r.job_index = j.at("job_index").get<std::int64_t>();
    r.node_index = j.at("node_index").get<std::int64_t>();
    r.slot_index = j.at("slot_index").get<std::int64_t>();
    r.started_at = j.at("started_at").get<std::int64_t>();
    r.ended_at = j.at("ended_at").get<std::int64_t>();
    r.walltime_s = j.at("walltime_s").get<double>();
    const auto kind = j.at("exit_status").get<std::string>();
    if (kind == "succeeded") {
        r.exit_status = ExitStatus::succeeded();
    } else if (kind == "killed_walltime") {
        r.exit_status = ExitStatus::killed_walltime();
    } else if (kind == "failed") {
        r.exit_status = ExitStatus::failed(j.value("exit_code", kSpawnFailure));
    } else {
        throw std::runtime_error("unknown exit_status \"" + kind + "\"");
    }
    if (j.contains("cpu_time_s") && !j["cpu_time_s"].is_null())
        r.cpu_time_s = j["cpu_time_s"].get<double>();
    if (j.contains("peak_ram_mb") && !j["peak_ram_mb"].is_null())
        r.peak_ram_mb = j["peak_ram_mb"].get<double>();
    return r;
}

std::vector<RunRecord> run_job_array(const DistributionPlan& plan, const Manifest& m,
                                     const std::vector<InstancePlan>& instances,
                                     const ExecOptions& options) {
    std::map<std::int64_t, const InstancePlan*> by_id;
    for (const auto& p : instances) by_id[p.instance_id] = &p;
    for (const auto& a : plan.assignments) {
        if (!by_id.contains(a.instance_id))
            throw std::invalid_argument("no instance plan for instance " +
                                        std::to_string(a.instance_id));
    }

    const auto walltime = options.walltime.value_or(std::chrono::minutes(m.walltime_minutes));
    const std::int64_t total_cap = plan.nodes * plan.slots_per_node;
    RecordWriter writer(options.records_path.value_or(records_path(m.output_dir)));

    std::vector<RunRecord> records;
    records.reserve(plan.assignments.size());

    for (std::int64_t job = 0; job < plan.jobs; ++job) {
        std::vector<const Assignment*> members;
        for (const auto& a : plan.assignments)
            if (a.job_index == job) members.push_back(&a);

        std::vector<Child> running;
        std::map<std::int64_t, std::int64_t> per_node;
        std::size_t next = 0;

        auto finish = [&](const Child& c, ExitStatus status, std::optional<rusage> usage) {
            const Assignment& a = *members[c.slot];
            RunRecord r;
            r.instance_id = a.instance_id;
            r.job_index = a.job_index;
            r.node_index = a.node_index;
            r.slot_index = a.slot_index;
            r.started_at = c.started_at;
            r.ended_at = std::max(now_ms(), c.started_at);
            r.exit_status = status;
            r.walltime_s = static_cast<double>(r.ended_at - r.started_at) / 1000.0;
            if (usage) {
                r.cpu_time_s = seconds(usage->ru_utime) + seconds(usage->ru_stime);
                r.peak_ram_mb = static_cast<double>(usage->ru_maxrss) / 1024.0;
            }
            writer.completed(r);
            records.push_back(r);
        };

        while (next < members.size() || !running.empty()) {
            // Launch in assignment order while the node and total caps allow.
            while (next < members.size() && static_cast<std::int64_t>(running.size()) < total_cap) {
                const Assignment& a = *members[next];
                if (per_node[a.node_index] >= plan.slots_per_node) break;
                const InstancePlan& inst = *by_id.at(a.instance_id);

                std::error_code ec;
                fs::remove(inst.workdir / "out.csv", ec);
                fs::remove(inst.workdir / "heartbeat", ec);

                const std::vector<std::string> env = {
                    "SIM_PORT=" + std::to_string(inst.port),
                    "SIM_DISPLAY=" + std::to_string(inst.display),
                    "SIM_OUTPUT=" + (inst.workdir / "out.csv").string()};

                Child c;
                c.slot = next++;
                c.started_at = now_ms();
                c.deadline = steady::now() + walltime;
                writer.started(a, c.started_at);
                c.pid = ::fork();
                if (c.pid == 0) exec_child(inst.command, inst.workdir, env);
                if (c.pid < 0) {
                    finish(c, ExitStatus::failed(kSpawnFailure), std::nullopt);
                    continue;
                }
                ::setpgid(c.pid, c.pid);
                ++per_node[a.node_index];
                running.push_back(c);
            }

            for (auto it = running.begin(); it != running.end();) {
                int wstatus = 0;
                rusage usage{};
                const pid_t done = ::wait4(it->pid, &wstatus, WNOHANG, &usage);
                if (done == it->pid) {
                    ExitStatus status;
                    if (it->killed) {
                        status = ExitStatus::killed_walltime();
                    } else if (WIFEXITED(wstatus) && WEXITSTATUS(wstatus) == 0) {
                        status = ExitStatus::succeeded();
                    } else if (WIFEXITED(wstatus)) {
                        status = ExitStatus::failed(WEXITSTATUS(wstatus));
                    } else {
                        status = ExitStatus::failed(128 + WTERMSIG(wstatus));
                    }
                    // Reap anything the shell left behind in the group.
                    ::kill(-it->pid, SIGKILL);
                    finish(*it, status, usage);
                    --per_node[members[it->slot]->node_index];
                    it = running.erase(it);
                    continue;
                }
                if (done < 0 && errno == ECHILD) {
                    finish(*it, ExitStatus::failed(kSpawnFailure), std::nullopt);
                    --per_node[members[it->slot]->node_index];
                    it = running.erase(it);
                    continue;
                }

                const auto now = steady::now();
                if (!it->term_sent && now >= it->deadline) {
                    it->killed = true;
                    it->term_sent = now;
                    ::kill(-it->pid, SIGTERM);
                } else if (it->term_sent && now >= *it->term_sent + options.grace) {
                    ::kill(-it->pid, SIGKILL);
                }
                ++it;
            }
            if (!running.empty()) std::this_thread::sleep_for(options.poll);
        }
    }

    std::sort(records.begin(), records.end(),
              [](const RunRecord& a, const RunRecord& b) { return a.instance_id < b.instance_id; });
    return records;
}

RecordStream read_record_stream(const fs::path& path) {
    RecordStream stream;
    std::ifstream in(path);
    if (!in) {
        stream.problems.push_back("no record stream at " + path.string());
        return stream;
    }
    std::map<std::int64_t, RunRecord> completed;
    std::map<std::int64_t, bool> started;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            const auto event = j.value("event", std::string("completed"));
            const auto id = j.at("instance_id").get<std::int64_t>();
            if (event == "started") {
                started[id] = true;
                completed.erase(id);
            } else {
                completed[id] = record_from_json(line);
                started.erase(id);
            }
        } catch (const std::exception& e) {
            stream.problems.push_back(path.string() + ":" + std::to_string(line_no) + ": " +
                                      e.what());
        }
    }
    for (auto& [id, r] : completed) stream.completed.push_back(std::move(r));
    for (const auto& [id, _] : started) stream.running.push_back(id);
    return stream;
}

StatusSummary status(const fs::path& state_dir, std::int64_t total_runs) {
    StatusSummary s;
    const auto path = records_path(state_dir);
    RecordStream stream;
    if (fs::exists(path)) stream = read_record_stream(path);
    s.problems = stream.problems;

    for (const auto& r : stream.completed) {
        switch (r.exit_status.kind) {
            case ExitStatus::Kind::succeeded: ++s.succeeded; break;
            case ExitStatus::Kind::failed: ++s.failed; break;
            case ExitStatus::Kind::killed_walltime: ++s.killed; break;
        }
    }
    s.running = static_cast<std::int64_t>(stream.running.size());
    s.pending = std::max<std::int64_t>(0, total_runs - s.running - s.succeeded - s.failed - s.killed);
    return s;
}

std::string submit(const fs::path& script, const std::string& qsub_exe) {
    const std::string command = "'" + qsub_exe + "' '" + script.string() + "'";
    FILE* pipe = ::popen(command.c_str(), "r");
    if (!pipe) throw std::runtime_error("cannot run " + qsub_exe + ": " + std::strerror(errno));
    std::string output;
    char buf[256];
    while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) output.append(buf, n);
    const int rc = ::pclose(pipe);
    if (rc != 0)
        throw std::runtime_error(qsub_exe + " exited with status " +
                                 std::to_string(WIFEXITED(rc) ? WEXITSTATUS(rc) : rc));
    while (!output.empty() && (output.back() == '\n' || output.back() == '\r')) output.pop_back();
    return output;
}

}  // namespace simcampaign
