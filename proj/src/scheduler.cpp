#include "simcampaign/scheduler.hpp"

#include <cstdio>
#include <sstream>

namespace simcampaign {

DistributionPlan plan_distribution(std::int64_t total_runs, std::int64_t nodes, std::int64_t slots) {
    DistributionPlan plan;
    plan.nodes = nodes;
    plan.slots_per_node = slots;
    if (total_runs < 1 || nodes < 1 || slots < 1) return plan;

    const std::int64_t per_job = nodes * slots;
    plan.jobs = (total_runs + per_job - 1) / per_job;
    plan.assignments.reserve(static_cast<std::size_t>(total_runs));
    for (std::int64_t i = 0; i < total_runs; ++i) {
        const std::int64_t r = i % per_job;
        plan.assignments.push_back({i, i / per_job, r % nodes, r / nodes});
    }
    return plan;
}

JobArraySpec job_array_spec(const Manifest& m, const std::filesystem::path& command_file) {
    const auto plan = plan_distribution(m.total_runs, m.nodes, m.slots_per_node);
    JobArraySpec spec;
    spec.campaign_name = m.campaign_name;
    spec.jobs = plan.jobs;
    spec.nodes = m.nodes;
    spec.slots_per_node = m.slots_per_node;
    spec.node_profile = m.node_profile;
    spec.walltime_minutes = m.walltime_minutes;
    spec.queue = m.queue;
    spec.launch_command_file = std::filesystem::absolute(command_file).lexically_normal();
    return spec;
}

std::string format_walltime(std::int64_t minutes) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%02lld:%02lld:00", static_cast<long long>(minutes / 60),
                  static_cast<long long>(minutes % 60));
    return buf;
}

std::string render_pbs(const JobArraySpec& spec) {
    const std::int64_t per_job = spec.nodes * spec.slots_per_node;
    std::ostringstream out;
    out << "#!/bin/bash\n";
    out << "#PBS -N " << spec.campaign_name << "\n";
    out << "#PBS -q " << spec.queue << "\n";
    out << "#PBS -l select=" << spec.nodes << ":ncpus=" << spec.node_profile.cores
        << ":mem=" << spec.node_profile.ram_gb << "gb\n";
    out << "#PBS -l walltime=" << format_walltime(spec.walltime_minutes) << "\n";
    if (spec.jobs > 1) out << "#PBS -J 0-" << (spec.jobs - 1) << "\n";
    out << "\n";
    out << "COMMANDS=\"" << spec.launch_command_file.string() << "\"\n";
    out << "PER_JOB=" << per_job << "\n";
    out << "INDEX=${PBS_ARRAY_INDEX:-0}\n";
    out << "FIRST=$((INDEX * PER_JOB + 1))\n";
    out << "LAST=$((FIRST + PER_JOB - 1))\n";
    out << "\n";
    out << "mapfile -t HOSTS < <(sort -u \"${PBS_NODEFILE:-/dev/null}\")\n";
    out << "if [ ${#HOSTS[@]} -eq 0 ]; then HOSTS=(localhost); fi\n";
    out << "\n";
    out << "r=0\n";
    out << "while IFS= read -r cmd; do\n";
    out << "  host=${HOSTS[$((r % ${#HOSTS[@]}))]}\n";
    out << "  if [ \"$host\" = localhost ]; then\n";
    out << "    bash -c \"$cmd\" < /dev/null &\n";
    out << "  else\n";
    out << "    ssh -n \"$host\" \"$cmd\" &\n";
    out << "  fi\n";
    out << "  r=$((r + 1))\n";
    out << "done < <(sed -n \"${FIRST},${LAST}p\" \"$COMMANDS\")\n";
    out << "wait\n";
    return out.str();
}

std::string render_command_list(const std::vector<InstancePlan>& plans) {
    std::string out;
    for (const auto& p : plans) {
        out += p.command;
        out += '\n';
    }
    return out;
}

}  // namespace simcampaign
