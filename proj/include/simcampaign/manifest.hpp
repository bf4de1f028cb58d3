#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace simcampaign {

/// Resources requested for every compute node of a job.
struct NodeProfile {
    std::int64_t cores = 40;
    std::int64_t ram_gb = 744;
    std::int64_t scratch_gb = 1843;
    std::int64_t gpus = 2;

    bool operator==(const NodeProfile&) const = default;
};

enum class Mode { headless, gui };

std::string_view to_string(Mode mode);

/// A campaign definition. Numeric fields are signed so that out-of-range
/// values survive parsing and are reported by validate().
struct Manifest {
    std::string campaign_name;
    std::filesystem::path template_dir;
    std::filesystem::path world_file;
    std::int64_t total_runs = 0;
    std::int64_t nodes = 6;
    std::int64_t slots_per_node = 8;
    std::int64_t base_port = 8873;
    std::int64_t port_stride = 7;
    std::int64_t display_start = 99;
    std::int64_t walltime_minutes = 15;
    std::string queue = "dice";
    NodeProfile node_profile;
    Mode mode = Mode::headless;
    std::string container_image = "webots.sif";
    std::filesystem::path output_dir;
    std::optional<std::string> command_template;

    // Keys present in the document that are not part of the schema.
    // Not serialized; validate() reports each one.
    std::vector<std::string> unknown_fields;

    std::int64_t instances_per_job() const { return nodes * slots_per_node; }

    bool operator==(const Manifest&) const = default;
};

class ManifestError : public std::runtime_error {
public:
    enum class Kind { syntax, missing_field, type_error, io };

    ManifestError(Kind kind, std::string field, std::size_t line, std::size_t column,
                  const std::string& what);

    Kind kind() const { return kind_; }
    const std::string& field() const { return field_; }
    std::size_t line() const { return line_; }
    std::size_t column() const { return column_; }

private:
    Kind kind_;
    std::string field_;
    std::size_t line_;
    std::size_t column_;
};

Manifest parse_manifest(std::string_view document);

/// Reads and parses a manifest file. Relative template_dir and output_dir
/// are resolved against the directory holding the file.
Manifest load_manifest(const std::filesystem::path& path);

std::string serialize_manifest(const Manifest& m);

/// Every invariant violation, in a stable order. Empty means valid.
std::vector<std::string> validate(const Manifest& m, bool check_filesystem = false);

}  // namespace simcampaign
