#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "simcampaign/collector.hpp"

namespace simcampaign {

struct ThroughputConfig {
    std::int64_t nodes = 6;
    std::int64_t slots = 8;
    std::int64_t walltime_minutes = 15;
};

struct SeriesPoint {
    double t_minutes = 0;
    std::int64_t runs = 0;

    bool operator==(const SeriesPoint&) const = default;
};

using Series = std::vector<SeriesPoint>;

/// Completed runs after t minutes when every job of nodes*slots instances
/// takes exactly one walltime: nodes * slots * floor(t / walltime).
std::int64_t throughput(double t_minutes, const ThroughputConfig& cfg);

Series throughput_series(const std::vector<double>& timestamps, const ThroughputConfig& cfg);

class ZeroDenominator : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

double speedup(double runs_a, double runs_b);

struct ScalingPrediction {
    std::int64_t runs = 0;
    double speedup = 0;
};

ScalingPrediction predict_scaling(std::int64_t new_nodes, ThroughputConfig cfg, double t_minutes,
                                  double baseline_runs);

/// Signed percent difference (serial - parallel) / parallel * 100 for
/// walltime, cpu_time, ram and cpu_percent. Fields missing on either side
/// are left out; a zero parallel mean throws ZeroDenominator.
std::map<std::string, double> compare_configs(const ResourceSummary& serial,
                                              const ResourceSummary& parallel);

/// Externally measured series (e.g. the single-machine baseline), loaded
/// from JSON of the form {"source": "...", "series": [[t, runs], ...]}.
struct ReferenceSeries {
    std::string source;
    Series series;
};

ReferenceSeries load_reference_series(const std::filesystem::path& path);

/// Reference per-run resource columns for a serial and a parallel setup,
/// JSON {"serial": {...}, "parallel": {...}} with walltime_s, cpu_time_s,
/// ram_gb and optionally cpu_percent.
struct ReferenceComparison {
    ResourceSummary serial;
    ResourceSummary parallel;
};

ReferenceComparison load_reference_comparison(const std::filesystem::path& path);

struct EvaluationReport {
    ThroughputConfig config;
    Series series;
    Series baseline_series;
    std::string baseline_source;
    double speedup = 0;
    std::map<std::string, double> deltas;
};

/// Models the configured cluster at the baseline's timestamps and compares
/// the final points.
EvaluationReport evaluate(const ThroughputConfig& cfg, const ReferenceSeries& baseline,
                          const std::map<std::string, double>& deltas);

std::string report_json(const EvaluationReport& report);

/// Three-column text table: timestamp, baseline, modeled.
std::string report_table(const EvaluationReport& report);

}  // namespace simcampaign
