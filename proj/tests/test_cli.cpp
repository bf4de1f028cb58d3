#include <doctest.h>

#include "simcampaign/localexec.hpp"
#include "testutil.hpp"

using namespace simcampaign;
namespace fs = std::filesystem;

namespace {

std::string cli(const std::string& args) { return "'" + std::string(SIMCAMPAIGN_EXE) + "' " + args; }

fs::path write_manifest(const fs::path& root, const std::string& extra) {
    testutil::write_file(root / "template" / "world.wbt", testutil::kWorld);
    const auto path = root / "m.json";
    testutil::write_file(path, R"({"campaign_name":"highway","template_dir":"template",
        "world_file":"world.wbt","output_dir":"out")" + extra + "}");
    return path;
}

}  // namespace

TEST_CASE("unknown verb prints usage and exits 64") {
    auto r = testutil::run(cli("frobnicate"));
    CHECK(r.exit_code == 64);
    CHECK(r.output.find("usage") != std::string::npos);
    CHECK(testutil::run(cli("")).exit_code == 64);
    CHECK(testutil::run(cli("plan")).exit_code == 64);  // --manifest required
}

TEST_CASE("plan prints one job of 48 assignments for the cluster shape") {
    testutil::TempDir dir;
    const auto m = write_manifest(dir.path(), R"(,"total_runs":48,"nodes":6,"slots_per_node":8)");
    const auto r = testutil::run(cli("plan --manifest '" + m.string() + "'"));
    REQUIRE(r.exit_code == 0);
    CHECK(r.output.find("jobs 1\n") != std::string::npos);
    CHECK(r.output.find("assignments 48\n") != std::string::npos);
    CHECK(r.output.find("\n47 0 5 7\n") != std::string::npos);
}

TEST_CASE("invalid manifests exit 1") {
    testutil::TempDir dir;
    auto m = write_manifest(dir.path(), R"(,"total_runs":4,"port_stride":0)");
    auto r = testutil::run(cli("plan --manifest '" + m.string() + "'"));
    CHECK(r.exit_code == 1);
    CHECK(r.output.find("port_stride") != std::string::npos);

    testutil::write_file(m, "{ not json");
    CHECK(testutil::run(cli("plan --manifest '" + m.string() + "'")).exit_code == 1);
    CHECK(testutil::run(cli("plan --manifest /nonexistent.json")).exit_code == 1);
}

TEST_CASE("verbs compose end to end") {
    testutil::TempDir dir;
    const std::string tmpl = "\"'" + std::string(SIMCAMPAIGN_EXE) +
                             "' stub --duration 0.2 --rows 4 --seed {instance_id}\"";
    const auto m = write_manifest(dir.path(), R"(,"total_runs":6,"nodes":2,"slots_per_node":2,
        "walltime_minutes":1,"command_template":)" + tmpl);
    const std::string flag = " --manifest '" + m.string() + "'";
    const auto out = dir.path() / "out";

    REQUIRE(testutil::run(cli("fanout" + flag)).exit_code == 0);
    CHECK(fs::exists(out / "plan.json"));
    CHECK(fs::is_directory(out / "instance_0005"));

    REQUIRE(testutil::run(cli("script" + flag)).exit_code == 0);
    const auto script = testutil::read_file(out / "job.pbs");
    CHECK(script.find("#PBS -J 0-1\n") != std::string::npos);
    CHECK(script.find((out / "commands.txt").string()) != std::string::npos);
    const auto plans = read_plan_index(out / "plan.json");
    CHECK(testutil::read_file(out / "commands.txt") == render_command_list(plans));

    auto r = testutil::run(cli("run-local" + flag));
    REQUIRE(r.exit_code == 0);
    CHECK(r.output.find("completion_rate 1") != std::string::npos);

    // Records exist: refuses without --force (stdin is not a terminal).
    CHECK(testutil::run(cli("run-local" + flag + " < /dev/null")).exit_code == 2);

    r = testutil::run(cli("status" + flag));
    REQUIRE(r.exit_code == 0);
    CHECK(r.output.find("succeeded 6\n") != std::string::npos);
    CHECK(r.output.find("pending 0\n") != std::string::npos);

    REQUIRE(testutil::run(cli("collect" + flag)).exit_code == 0);
    const auto merged = testutil::read_file(out / "merged.csv");
    CHECK(std::count(merged.begin(), merged.end(), '\n') == 1 + 6 * 4);
    CHECK(testutil::read_file(out / "summary.json").find("\"completion_rate\": 1.0") !=
          std::string::npos);

    r = testutil::run(cli("report" + flag + " --table"));
    REQUIRE(r.exit_code == 0);
    CHECK(fs::exists(out / "evaluation.json"));
    CHECK(r.output.find("timestamp") != std::string::npos);

    // Second run with --force replaces records.
    REQUIRE(testutil::run(cli("run-local" + flag + " --force")).exit_code == 0);
    CHECK(status(out, 6).succeeded == 6);
}

TEST_CASE("SIMCAMPAIGN_OUTPUT overrides the manifest output_dir") {
    testutil::TempDir dir;
    const auto m = write_manifest(dir.path(), R"(,"total_runs":2)");
    const auto elsewhere = dir.path() / "elsewhere";
    const auto r = testutil::run("SIMCAMPAIGN_OUTPUT='" + elsewhere.string() + "' " +
                                 cli("fanout --manifest '" + m.string() + "'"));
    REQUIRE(r.exit_code == 0);
    CHECK(fs::exists(elsewhere / "plan.json"));
    CHECK_FALSE(fs::exists(dir.path() / "out"));
}

TEST_CASE("submit pipes the script to the configured qsub") {
    testutil::TempDir dir;
    const auto m = write_manifest(dir.path(), R"(,"total_runs":2)");
    const auto qsub = dir.path() / "fake-qsub";
    testutil::write_file(qsub, "#!/bin/sh\necho 4242[].sched\n");
    fs::permissions(qsub, fs::perms::owner_all);
    const auto r = testutil::run(cli("submit --manifest '" + m.string() + "' --qsub '" +
                                     qsub.string() + "'"));
    REQUIRE(r.exit_code == 0);
    CHECK(r.output == "4242[].sched\n");
    CHECK(fs::exists(dir.path() / "out" / "job.pbs"));
}
