#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "simcampaign/manifest.hpp"

namespace simcampaign {

struct InstancePlan {
    std::int64_t instance_id = 0;
    std::int64_t port = 0;
    std::int64_t display = 0;
    std::filesystem::path workdir;
    std::string command;

    bool operator==(const InstancePlan&) const = default;
};

class FanoutError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class PortRangeError : public FanoutError {
public:
    using FanoutError::FanoutError;
};

class PortTokenError : public FanoutError {
public:
    enum class Kind { not_found, ambiguous };
    PortTokenError(Kind kind, const std::string& what) : FanoutError(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

/// [base, base+stride, ..., base+stride*(n-1)]. Throws PortRangeError past 65535.
std::vector<std::int64_t> port_ladder(std::int64_t base_port, std::int64_t stride, std::int64_t n);

/// The n smallest integers >= start that are not occupied, ascending.
std::vector<std::int64_t> display_ladder(std::int64_t start, const std::set<std::int64_t>& occupied,
                                         std::int64_t n);

/// Replaces the single port token in a world file. A token is either the
/// `{{PORT}}` placeholder or a whole line of the form `port <integer>`
/// (leading and trailing whitespace allowed).
std::string rewrite_port(std::string_view world_text, std::int64_t port);

/// Returns the value of the single `port <integer>` line, or throws PortTokenError.
std::int64_t extract_port(std::string_view world_text);

struct FanoutOptions {
    std::set<std::int64_t> occupied_displays;
    // Substituted for {self} in a custom command_template.
    std::string self_exe;
};

/// Copies template_dir into output_dir/instance_NNNN for ids 0..n-1 and
/// rewrites each copy's world file. Ports and displays repeat with period
/// instances_per_job, since jobs of one campaign never overlap in time.
std::vector<InstancePlan> fan_out(const Manifest& m, std::int64_t n, const FanoutOptions& options = {});

/// Launch command for one instance. The default templates are
///   headless: xvfb-run -a -n {display} singularity exec {image} webots --batch --mode=fast {workdir}/{world_file}
///   gui:      singularity exec {image} webots {workdir}/{world_file}
/// A manifest command_template replaces them; it may use {image} {workdir}
/// {world_file} {display} {mode} {instance_id} and {self}.
std::string render_command(const InstancePlan& p, const Manifest& m, std::string_view self_exe = {});

std::filesystem::path instance_dir_name(std::int64_t instance_id);

void write_plan_index(const std::filesystem::path& path, const std::vector<InstancePlan>& plans);
std::vector<InstancePlan> read_plan_index(const std::filesystem::path& path);

}  // namespace simcampaign
