#include "simcampaign/collector.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

namespace simcampaign {

namespace fs = std::filesystem;

namespace {

constexpr const char* kHeader = "instance_id,run_id,step,value\n";

}  // namespace

AggregateDataset collect(const std::vector<RunRecord>& records,
                         const std::map<std::int64_t, fs::path>& workdirs,
                         const fs::path& output_path) {
    AggregateDataset result;
    result.output_path = output_path;

    std::vector<const RunRecord*> ordered;
    for (const auto& r : records)
        if (r.exit_status.kind == ExitStatus::Kind::succeeded) ordered.push_back(&r);
    std::sort(ordered.begin(), ordered.end(),
              [](const RunRecord* a, const RunRecord* b) { return a->instance_id < b->instance_id; });

    std::ofstream out(output_path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + output_path.string());
    out << kHeader;

    for (const RunRecord* r : ordered) {
        const auto id = std::to_string(r->instance_id);
        auto dir = workdirs.find(r->instance_id);
        if (dir == workdirs.end()) {
            result.integrity_errors.push_back("instance " + id + ": no workdir known");
            continue;
        }
        const fs::path csv = dir->second / "out.csv";
        std::ifstream in(csv, std::ios::binary);
        if (!in) {
            result.integrity_errors.push_back("instance " + id + ": missing " + csv.string());
            continue;
        }
        std::string line;
        std::string body;
        std::int64_t rows = 0;
        bool header = true;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (header) {
                header = false;
                continue;
            }
            if (line.empty()) continue;
            body += id;
            body += ',';
            body += line;
            body += '\n';
            ++rows;
        }
        out << body;
        result.rows += rows;
        ++result.runs_included;
    }
    if (!out) throw std::runtime_error("write failed: " + output_path.string());
    return result;
}

AggregateDataset collect(const std::vector<RunRecord>& records,
                         const std::vector<InstancePlan>& instances, const fs::path& output_path) {
    std::map<std::int64_t, fs::path> workdirs;
    for (const auto& p : instances) workdirs[p.instance_id] = p.workdir;
    return collect(records, workdirs, output_path);
}

double completion_rate(const std::vector<RunRecord>& records) {
    if (records.empty()) throw UndefinedRate("completion rate of zero records is undefined");
    const auto ok = std::count_if(records.begin(), records.end(), [](const RunRecord& r) {
        return r.exit_status.kind == ExitStatus::Kind::succeeded;
    });
    return static_cast<double>(ok) / static_cast<double>(records.size());
}

ResourceSummary resource_summary(const std::vector<RunRecord>& records) {
    if (records.empty()) throw MissingAccounting("no records: walltime_s, cpu_time_s, peak_ram_mb absent");

    ResourceSummary s;
    double wall = 0, cpu = 0, ram = 0, pct = 0;
    std::int64_t pct_samples = 0;
    for (const auto& r : records) {
        wall += r.walltime_s;
        ++s.samples;
        if (r.cpu_time_s) {
            cpu += *r.cpu_time_s;
            ++s.cpu_samples;
            if (r.walltime_s > 0) {
                pct += *r.cpu_time_s / r.walltime_s * 100.0;
                ++pct_samples;
            }
        }
        if (r.peak_ram_mb) {
            ram += *r.peak_ram_mb;
            ++s.ram_samples;
        }
    }
    s.mean_walltime_s = wall / static_cast<double>(s.samples);
    if (s.cpu_samples > 0) s.mean_cpu_time_s = cpu / static_cast<double>(s.cpu_samples);
    if (s.ram_samples > 0) s.mean_peak_ram_mb = ram / static_cast<double>(s.ram_samples);
    if (pct_samples > 0) s.mean_cpu_percent = pct / static_cast<double>(pct_samples);
    return s;
}

std::string summary_json(const std::vector<RunRecord>& records, const AggregateDataset& dataset) {
    nlohmann::json j;
    j["total_records"] = records.size();
    j["completion_rate"] = records.empty() ? nlohmann::json(nullptr)
                                           : nlohmann::json(completion_rate(records));
    j["merged_rows"] = dataset.rows;
    j["runs_included"] = dataset.runs_included;
    j["integrity_errors"] = dataset.integrity_errors;
    if (!records.empty()) {
        const auto s = resource_summary(records);
        auto opt = [](const std::optional<double>& v) {
            return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
        };
        j["mean_walltime_s"] = s.mean_walltime_s;
        j["mean_cpu_time_s"] = opt(s.mean_cpu_time_s);
        j["mean_peak_ram_gb"] =
            s.mean_peak_ram_mb ? nlohmann::json(*s.mean_peak_ram_mb / kMbPerGb) : nlohmann::json(nullptr);
        j["mean_cpu_percent"] = opt(s.mean_cpu_percent);
        j["samples"] = s.samples;
        j["cpu_samples"] = s.cpu_samples;
        j["ram_samples"] = s.ram_samples;
    }
    return j.dump(2) + "\n";
}

}  // namespace simcampaign
