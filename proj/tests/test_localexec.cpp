#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <map>
#include <thread>

#include "simcampaign/localexec.hpp"
#include "simcampaign/simstub.hpp"
#include "testutil.hpp"

using namespace simcampaign;
namespace fs = std::filesystem;
using namespace std::chrono_literals;

namespace {

std::int64_t max_overlap(const std::vector<std::pair<std::int64_t, std::int64_t>>& intervals) {
    std::int64_t best = 0;
    for (const auto& [t, _] : intervals) {
        std::int64_t live = 0;
        for (const auto& [s, e] : intervals)
            if (s <= t && t < e) ++live;
        best = std::max(best, live);
    }
    return best;
}

std::vector<InstancePlan> manual_instances(const fs::path& root, std::int64_t n,
                                           const std::string& command) {
    std::vector<InstancePlan> out;
    for (std::int64_t i = 0; i < n; ++i) {
        const auto dir = root / ("i" + std::to_string(i));
        fs::create_directories(dir);
        out.push_back({i, 29000 + i, 99 + i, dir, command});
    }
    return out;
}

}  // namespace

TEST_CASE("12 stub instances on 2 nodes x 2 slots run in 3 waves") {
    testutil::TempDir dir;
    auto m = testutil::stub_manifest(dir.path(), 12, 2, 2, 0.5);
    const auto instances = fan_out(m, 12);
    const auto plan = plan_distribution(12, 2, 2);
    const auto t0 = std::chrono::steady_clock::now();
    const auto records = run_job_array(plan, m, instances);
    const auto elapsed = std::chrono::steady_clock::now() - t0;

    REQUIRE(records.size() == 12);
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        CHECK(r.instance_id == static_cast<std::int64_t>(i));
        CHECK(r.exit_status == ExitStatus::succeeded());
        CHECK(r.ended_at >= r.started_at);
        CHECK(std::abs(r.walltime_s - (r.ended_at - r.started_at) / 1000.0) < 1.0);
        CHECK(r.cpu_time_s.has_value());
        CHECK(r.peak_ram_mb.has_value());
    }
    CHECK(elapsed >= 1500ms);  // three sequential waves of 0.5 s

    // Jobs are strictly sequential.
    for (const auto& later : records)
        for (const auto& earlier : records)
            if (later.job_index == earlier.job_index + 1) CHECK(later.started_at >= earlier.ended_at);

    std::vector<std::pair<std::int64_t, std::int64_t>> all;
    std::map<std::int64_t, std::vector<std::pair<std::int64_t, std::int64_t>>> per_node;
    for (const auto& r : records) {
        const auto hb = read_heartbeat(instances[static_cast<std::size_t>(r.instance_id)].workdir / "heartbeat");
        REQUIRE(hb);
        REQUIRE(hb->ended_ms);
        all.emplace_back(hb->started_ms, *hb->ended_ms);
        per_node[r.node_index].emplace_back(hb->started_ms, *hb->ended_ms);
    }
    CHECK(max_overlap(all) <= 4);
    for (const auto& [node, intervals] : per_node) CHECK(max_overlap(intervals) <= 2);

    // Environment reached the child.
    const auto out = testutil::read_file(instances[3].workdir / "out.csv");
    CHECK(out.rfind("run_id,step,value\n3,0,", 0) == 0);

    const auto s = status(m.output_dir, 12);
    CHECK(s == StatusSummary{0, 0, 12, 0, 0, {}});
}

TEST_CASE("per-node cap holds when one job has more instances than a node") {
    testutil::TempDir dir;
    Manifest m;
    m.output_dir = dir.path();
    m.walltime_minutes = 1;
    // Environment-only command: record SIM_* then sleep.
    const auto instances = manual_instances(
        dir.path(), 6, "echo $SIM_PORT $SIM_DISPLAY > env.txt; echo start $(date +%s%3N) > iv; "
                       "sleep 0.3; echo end $(date +%s%3N) >> iv");
    DistributionPlan plan = plan_distribution(6, 3, 2);
    const auto records = run_job_array(plan, m, instances);
    REQUIRE(records.size() == 6);
    for (const auto& r : records) CHECK(r.exit_status == ExitStatus::succeeded());
    CHECK(testutil::read_file(instances[4].workdir / "env.txt") == "29004 103\n");
}

TEST_CASE("failures and spawn problems are recorded, not fatal") {
    testutil::TempDir dir;
    Manifest m;
    m.output_dir = dir.path();
    m.walltime_minutes = 1;
    auto instances = manual_instances(dir.path(), 3, "exit 0");
    instances[1].command = "exit 7";
    instances[2].workdir = dir.path() / "does-not-exist";
    const auto records = run_job_array(plan_distribution(3, 1, 3), m, instances);
    CHECK(records[0].exit_status == ExitStatus::succeeded());
    CHECK(records[1].exit_status == ExitStatus::failed(7));
    CHECK(records[2].exit_status == ExitStatus::failed(127));
    const auto s = status(dir.path(), 3);
    CHECK(s.succeeded == 1);
    CHECK(s.failed == 2);
}

TEST_CASE("walltime override terminates slow children") {
    testutil::TempDir dir;
    Manifest m;
    m.output_dir = dir.path();
    m.walltime_minutes = 1;
    const auto instances = manual_instances(dir.path(), 2, "sleep 30");
    ExecOptions options;
    options.walltime = 400ms;
    options.grace = 200ms;
    const auto t0 = std::chrono::steady_clock::now();
    const auto records = run_job_array(plan_distribution(2, 1, 2), m, instances, options);
    CHECK(std::chrono::steady_clock::now() - t0 < 5s);
    for (const auto& r : records) {
        CHECK(r.exit_status == ExitStatus::killed_walltime());
        CHECK(r.walltime_s >= 0.4 - 0.001);
    }
    CHECK(status(dir.path(), 2).killed == 2);
}

TEST_CASE("walltime escalates to SIGKILL when SIGTERM is ignored") {
    testutil::TempDir dir;
    Manifest m;
    m.output_dir = dir.path();
    const auto instances = manual_instances(dir.path(), 1, "trap '' TERM; sleep 30 & wait; sleep 30");
    ExecOptions options;
    options.walltime = 200ms;
    options.grace = 300ms;
    const auto t0 = std::chrono::steady_clock::now();
    const auto records = run_job_array(plan_distribution(1, 1, 1), m, instances, options);
    CHECK(std::chrono::steady_clock::now() - t0 < 5s);
    CHECK(records[0].exit_status == ExitStatus::killed_walltime());
}

TEST_CASE("slow: a 120 s stub is killed at the 1 minute walltime") {
    testutil::TempDir dir;
    auto m = testutil::stub_manifest(dir.path(), 1, 1, 1, 120);
    const auto instances = fan_out(m, 1);
    const auto records = run_job_array(plan_distribution(1, 1, 1), m, instances);
    REQUIRE(records.size() == 1);
    CHECK(records[0].exit_status == ExitStatus::killed_walltime());
    CHECK(records[0].walltime_s >= 59);
    CHECK(records[0].walltime_s <= 65);
}

TEST_CASE("single stub instance succeeds in about its duration") {
    testutil::TempDir dir;
    auto m = testutil::stub_manifest(dir.path(), 1, 1, 1, 1);
    const auto records = run_job_array(plan_distribution(1, 1, 1), m, fan_out(m, 1));
    REQUIRE(records.size() == 1);
    CHECK(records[0].exit_status == ExitStatus::succeeded());
    CHECK(records[0].walltime_s >= 1.0);
    CHECK(records[0].walltime_s <= 2.0);
}

TEST_CASE("status partitions the record stream") {
    testutil::TempDir dir;
    CHECK(status(dir.path(), 5) == StatusSummary{5, 0, 0, 0, 0, {}});

    RunRecord done;
    done.instance_id = 0;
    done.exit_status = ExitStatus::succeeded();
    RunRecord failed = done;
    failed.instance_id = 2;
    failed.exit_status = ExitStatus::failed(98);
    {
        std::ofstream out(records_path(dir.path()));
        out << R"({"event":"started","instance_id":0,"job_index":0,"node_index":0,"slot_index":0,"started_at":1})"
            << "\n"
            << record_to_json(done) << "\n"
            << R"({"event":"started","instance_id":1,"job_index":0,"node_index":1,"slot_index":0,"started_at":2})"
            << "\n"
            << record_to_json(failed) << "\n"
            << "this is not json\n"
            << R"({"event":"completed","instance_id":3,"job_ind)";  // torn final line
    }
    const auto s = status(dir.path(), 5);
    CHECK(s.pending == 2);
    CHECK(s.running == 1);
    CHECK(s.succeeded == 1);
    CHECK(s.failed == 1);
    CHECK(s.killed == 0);
    CHECK(s.problems.size() == 2);
    CHECK(status(dir.path(), 5) == s);
}

TEST_CASE("status is readable while a campaign is appending") {
    testutil::TempDir dir;
    Manifest m;
    m.output_dir = dir.path();
    const auto instances = manual_instances(dir.path(), 4, "sleep 0.4");
    std::thread runner([&] { run_job_array(plan_distribution(4, 1, 2), m, instances); });
    std::this_thread::sleep_for(200ms);
    const auto mid = status(dir.path(), 4);
    runner.join();
    CHECK(mid.pending + mid.running + mid.succeeded + mid.failed + mid.killed == 4);
    CHECK(mid.running == 2);
    CHECK(status(dir.path(), 4).succeeded == 4);
}

TEST_CASE("record JSON round trip") {
    RunRecord r;
    r.instance_id = 5;
    r.job_index = 1;
    r.node_index = 2;
    r.slot_index = 3;
    r.started_at = 1000;
    r.ended_at = 3500;
    r.walltime_s = 2.5;
    r.exit_status = ExitStatus::failed(98);
    r.cpu_time_s = 0.25;
    CHECK(record_from_json(record_to_json(r)) == r);
    r.exit_status = ExitStatus::killed_walltime();
    r.peak_ram_mb = 12.5;
    CHECK(record_from_json(record_to_json(r)) == r);
}

TEST_CASE("submit passes the script to the scheduler command") {
    testutil::TempDir dir;
    const auto qsub = dir.path() / "qsub";
    testutil::write_file(qsub, "#!/bin/sh\necho \"1234[].pbs01 $1\"\n");
    fs::permissions(qsub, fs::perms::owner_all);
    testutil::write_file(dir.path() / "job.pbs", "#!/bin/bash\n");
    CHECK(submit(dir.path() / "job.pbs", qsub.string()) ==
          "1234[].pbs01 " + (dir.path() / "job.pbs").string());

    testutil::write_file(qsub, "#!/bin/sh\necho 'qsub: bad queue' >&2\nexit 3\n");
    CHECK_THROWS_AS(submit(dir.path() / "job.pbs", qsub.string()), std::runtime_error);
}
