#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "simcampaign/fanout.hpp"
#include "simcampaign/manifest.hpp"

namespace simcampaign {

struct Assignment {
    std::int64_t instance_id = 0;
    std::int64_t job_index = 0;
    std::int64_t node_index = 0;
    std::int64_t slot_index = 0;

    bool operator==(const Assignment&) const = default;
};

struct DistributionPlan {
    std::vector<Assignment> assignments;  // ordered by instance_id
    std::int64_t jobs = 0;
    std::int64_t nodes = 0;
    std::int64_t slots_per_node = 0;
};

/// Instance i goes to job i / (nodes*slots); inside a job the remainder r is
/// dealt round-robin: node r % nodes, slot r / nodes.
DistributionPlan plan_distribution(std::int64_t total_runs, std::int64_t nodes, std::int64_t slots);

struct JobArraySpec {
    std::string campaign_name;
    std::int64_t jobs = 1;
    std::int64_t nodes = 1;
    std::int64_t slots_per_node = 1;
    NodeProfile node_profile;
    std::int64_t walltime_minutes = 15;
    std::string queue;
    std::filesystem::path launch_command_file;
};

JobArraySpec job_array_spec(const Manifest& m, const std::filesystem::path& command_file);

/// 90 -> "01:30:00".
std::string format_walltime(std::int64_t minutes);

/// PBS Professional job-array script. Array element k runs lines
/// k*nodes*slots+1 .. (k+1)*nodes*slots of the command file, dealing them
/// round-robin over the hosts in $PBS_NODEFILE exactly as plan_distribution
/// deals instances over node indices.
std::string render_pbs(const JobArraySpec& spec);

/// One command per line; line number (from 0) is the instance id.
std::string render_command_list(const std::vector<InstancePlan>& plans);

}  // namespace simcampaign
