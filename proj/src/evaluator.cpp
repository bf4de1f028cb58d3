#include "simcampaign/evaluator.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace simcampaign {

using nlohmann::json;

namespace {

json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

double round2(double v) { return std::round(v * 100.0) / 100.0; }

ResourceSummary reference_summary(const json& j) {
    ResourceSummary s;
    s.samples = 1;
    s.mean_walltime_s = j.at("walltime_s").get<double>();
    if (j.contains("cpu_time_s")) {
        s.mean_cpu_time_s = j["cpu_time_s"].get<double>();
        s.cpu_samples = 1;
    }
    if (j.contains("ram_gb")) {
        s.mean_peak_ram_mb = j["ram_gb"].get<double>() * kMbPerGb;
        s.ram_samples = 1;
    }
    if (j.contains("cpu_percent")) s.mean_cpu_percent = j["cpu_percent"].get<double>();
    return s;
}

}  // namespace

std::int64_t throughput(double t_minutes, const ThroughputConfig& cfg) {
    if (t_minutes < 0 || cfg.walltime_minutes < 1) return 0;
    const auto waves =
        static_cast<std::int64_t>(std::floor(t_minutes / static_cast<double>(cfg.walltime_minutes)));
    return cfg.nodes * cfg.slots * waves;
}

Series throughput_series(const std::vector<double>& timestamps, const ThroughputConfig& cfg) {
    Series out;
    out.reserve(timestamps.size());
    for (double t : timestamps) out.push_back({t, throughput(t, cfg)});
    return out;
}

double speedup(double runs_a, double runs_b) {
    if (runs_b == 0) throw ZeroDenominator("speedup against zero baseline runs");
    return runs_a / runs_b;
}

ScalingPrediction predict_scaling(std::int64_t new_nodes, ThroughputConfig cfg, double t_minutes,
                                  double baseline_runs) {
    cfg.nodes = new_nodes;
    ScalingPrediction p;
    p.runs = throughput(t_minutes, cfg);
    p.speedup = speedup(static_cast<double>(p.runs), baseline_runs);
    return p;
}

std::map<std::string, double> compare_configs(const ResourceSummary& serial,
                                              const ResourceSummary& parallel) {
    std::map<std::string, double> deltas;
    auto delta = [&](const std::string& name, const std::optional<double>& s,
                     const std::optional<double>& p) {
        if (!s || !p) return;
        if (*p == 0) throw ZeroDenominator("parallel mean " + name + " is zero");
        deltas[name] = (*s - *p) / *p * 100.0;
    };
    delta("walltime", serial.mean_walltime_s, parallel.mean_walltime_s);
    delta("cpu_time", serial.mean_cpu_time_s, parallel.mean_cpu_time_s);
    delta("ram", serial.mean_peak_ram_mb, parallel.mean_peak_ram_mb);
    delta("cpu_percent", serial.mean_cpu_percent, parallel.mean_cpu_percent);
    return deltas;
}

ReferenceSeries load_reference_series(const std::filesystem::path& path) {
    const json j = read_json(path);
    ReferenceSeries ref;
    ref.source = j.value("source", std::string());
    for (const auto& point : j.at("series"))
        ref.series.push_back({point.at(0).get<double>(), point.at(1).get<std::int64_t>()});
    return ref;
}

ReferenceComparison load_reference_comparison(const std::filesystem::path& path) {
    const json j = read_json(path);
    return {reference_summary(j.at("serial")), reference_summary(j.at("parallel"))};
}

EvaluationReport evaluate(const ThroughputConfig& cfg, const ReferenceSeries& baseline,
                          const std::map<std::string, double>& deltas) {
    EvaluationReport report;
    report.config = cfg;
    report.baseline_series = baseline.series;
    report.baseline_source = baseline.source;
    std::vector<double> timestamps;
    for (const auto& p : baseline.series) timestamps.push_back(p.t_minutes);
    report.series = throughput_series(timestamps, cfg);
    if (!report.series.empty())
        report.speedup = speedup(static_cast<double>(report.series.back().runs),
                                 static_cast<double>(report.baseline_series.back().runs));
    report.deltas = deltas;
    return report;
}

std::string report_json(const EvaluationReport& report) {
    auto series = [](const Series& s) {
        json out = json::array();
        for (const auto& p : s) out.push_back({{"t_minutes", p.t_minutes}, {"runs", p.runs}});
        return out;
    };
    json j;
    j["config"] = {{"nodes", report.config.nodes},
                   {"slots", report.config.slots},
                   {"walltime_minutes", report.config.walltime_minutes}};
    j["series"] = series(report.series);
    j["baseline_series"] = series(report.baseline_series);
    j["baseline_source"] = report.baseline_source;
    j["speedup"] = round2(report.speedup);
    json deltas = json::object();
    for (const auto& [name, value] : report.deltas) deltas[name] = round2(value);
    j["deltas"] = deltas;
    return j.dump(2) + "\n";
}

std::string report_table(const EvaluationReport& report) {
    std::ostringstream out;
    char line[96];
    std::snprintf(line, sizeof line, "%-10s %10s %10s\n", "timestamp", "baseline", "modeled");
    out << line;
    for (std::size_t i = 0; i < report.series.size(); ++i) {
        const auto& p = report.series[i];
        const auto base = i < report.baseline_series.size() ? report.baseline_series[i].runs : 0;
        std::snprintf(line, sizeof line, "%-10g %10lld %10lld\n", p.t_minutes,
                      static_cast<long long>(base), static_cast<long long>(p.runs));
        out << line;
    }
    std::snprintf(line, sizeof line, "speedup %.2f\n", report.speedup);
    out << line;
    return out.str();
}

}  // namespace simcampaign
