#include <doctest.h>

#include <map>

#include "simcampaign/collector.hpp"
#include "simcampaign/simstub.hpp"
#include "testutil.hpp"

using namespace simcampaign;
namespace fs = std::filesystem;

namespace {

RunRecord record(std::int64_t id, ExitStatus status, double wall = 1.0) {
    RunRecord r;
    r.instance_id = id;
    r.exit_status = status;
    r.walltime_s = wall;
    return r;
}

std::map<std::int64_t, fs::path> workdirs_with_output(const fs::path& root, std::int64_t n,
                                                      std::int64_t rows) {
    std::map<std::int64_t, fs::path> dirs;
    for (std::int64_t i = 0; i < n; ++i) {
        const auto dir = root / ("instance_" + std::to_string(i));
        testutil::write_file(dir / "out.csv", stub_csv(static_cast<std::uint64_t>(i), rows));
        dirs[i] = dir;
    }
    return dirs;
}

std::size_t lines(const std::string& text) {
    return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

}  // namespace

TEST_CASE("collect merges succeeded runs in instance order") {
    testutil::TempDir dir;
    const auto dirs = workdirs_with_output(dir.path(), 12, 10);
    std::vector<RunRecord> records;
    for (std::int64_t i = 11; i >= 0; --i) records.push_back(record(i, ExitStatus::succeeded()));

    const auto merged = dir.path() / "merged.csv";
    const auto ds = collect(records, dirs, merged);
    CHECK(ds.rows == 120);
    CHECK(ds.runs_included == 12);
    CHECK(ds.integrity_errors.empty());
    const auto text = testutil::read_file(merged);
    CHECK(lines(text) == 121);
    CHECK(text.rfind("instance_id,run_id,step,value\n0,0,0,", 0) == 0);
    CHECK(text.find("\n11,11,9,") != std::string::npos);

    // Idempotent.
    collect(records, dirs, merged);
    CHECK(testutil::read_file(merged) == text);
}

TEST_CASE("collect with no records writes only the header") {
    testutil::TempDir dir;
    const auto ds = collect(std::vector<RunRecord>{}, std::map<std::int64_t, fs::path>{},
                            dir.path() / "merged.csv");
    CHECK(ds.rows == 0);
    CHECK(ds.runs_included == 0);
    CHECK(testutil::read_file(dir.path() / "merged.csv") == "instance_id,run_id,step,value\n");
}

TEST_CASE("collect skips failed runs and reports missing output") {
    testutil::TempDir dir;
    auto dirs = workdirs_with_output(dir.path(), 4, 10);
    std::vector<RunRecord> records = {record(0, ExitStatus::succeeded()),
                                      record(1, ExitStatus::failed(98)),
                                      record(2, ExitStatus::succeeded()),
                                      record(3, ExitStatus::succeeded())};
    auto ds = collect(records, dirs, dir.path() / "merged.csv");
    CHECK(ds.runs_included == 3);
    CHECK(ds.rows == 30);

    fs::remove(dirs[2] / "out.csv");
    records.push_back(record(4, ExitStatus::killed_walltime()));
    ds = collect(records, dirs, dir.path() / "merged.csv");
    CHECK(ds.runs_included == 2);
    CHECK(ds.rows == 20);
    REQUIRE(ds.integrity_errors.size() == 1);
    CHECK(ds.integrity_errors[0].find("instance 2") != std::string::npos);
}

TEST_CASE("completion_rate") {
    std::vector<RunRecord> all_ok(2304, record(0, ExitStatus::succeeded()));
    CHECK(completion_rate(all_ok) == 1.0);
    std::vector<RunRecord> three_of_four(3, record(0, ExitStatus::succeeded()));
    three_of_four.push_back(record(3, ExitStatus::failed(1)));
    CHECK(completion_rate(three_of_four) == 0.75);
    CHECK_THROWS_AS(completion_rate({}), UndefinedRate);
}

TEST_CASE("resource_summary") {
    auto a = record(0, ExitStatus::succeeded(), 100);
    auto b = record(1, ExitStatus::succeeded(), 200);
    auto s = resource_summary({a, b});
    CHECK(s.mean_walltime_s == 150);
    CHECK(s.samples == 2);
    CHECK_FALSE(s.mean_cpu_time_s.has_value());

    // A 6x8-shaped record: walltime 245, cpu 690, ram 2.3 GB.
    auto t = record(0, ExitStatus::succeeded(), 245);
    t.cpu_time_s = 690;
    t.peak_ram_mb = 2.3 * kMbPerGb;
    s = resource_summary({t, t, t});
    CHECK(s.mean_walltime_s == doctest::Approx(245));
    CHECK(*s.mean_cpu_time_s == doctest::Approx(690));
    CHECK(*s.mean_peak_ram_mb / kMbPerGb == doctest::Approx(2.3));
    CHECK(*s.mean_cpu_percent == doctest::Approx(690.0 / 245.0 * 100.0));

    auto no_cpu = t;
    no_cpu.cpu_time_s.reset();
    s = resource_summary({t, no_cpu});
    CHECK(s.samples == 2);
    CHECK(s.cpu_samples == 1);
    CHECK(s.ram_samples == 2);

    CHECK_THROWS_AS(resource_summary({}), MissingAccounting);
}
