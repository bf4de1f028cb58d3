#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "simcampaign/fanout.hpp"
#include "simcampaign/localexec.hpp"

namespace simcampaign {

struct AggregateDataset {
    std::int64_t rows = 0;
    std::int64_t runs_included = 0;
    std::filesystem::path output_path;
    // Succeeded runs whose output was missing or unreadable.
    std::vector<std::string> integrity_errors;
};

/// Merges {workdir}/out.csv of every succeeded record into output_path,
/// ordered by instance_id, with a leading instance_id column. The input
/// header is written once.
AggregateDataset collect(const std::vector<RunRecord>& records,
                         const std::map<std::int64_t, std::filesystem::path>& workdirs,
                         const std::filesystem::path& output_path);

AggregateDataset collect(const std::vector<RunRecord>& records,
                         const std::vector<InstancePlan>& instances,
                         const std::filesystem::path& output_path);

class UndefinedRate : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

double completion_rate(const std::vector<RunRecord>& records);

struct ResourceSummary {
    double mean_walltime_s = 0;
    std::optional<double> mean_cpu_time_s;
    std::optional<double> mean_peak_ram_mb;
    std::optional<double> mean_cpu_percent;
    std::int64_t samples = 0;  // records contributing walltime
    std::int64_t cpu_samples = 0;
    std::int64_t ram_samples = 0;
};

class MissingAccounting : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

ResourceSummary resource_summary(const std::vector<RunRecord>& records);

inline constexpr double kMbPerGb = 1024.0;

/// summary.json: completion rate plus the ResourceSummary fields, RAM in GB.
std::string summary_json(const std::vector<RunRecord>& records, const AggregateDataset& dataset);

}  // namespace simcampaign
