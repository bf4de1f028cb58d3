#include "simcampaign/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace simcampaign {

using nlohmann::json;

namespace {

constexpr std::int64_t kMaxPort = 65535;
constexpr std::int64_t kMinPort = 1024;

const std::set<std::string>& known_fields() {
    static const std::set<std::string> fields = {
        "campaign_name", "template_dir",     "world_file",   "total_runs",
        "nodes",         "slots_per_node",   "base_port",    "port_stride",
        "display_start", "walltime_minutes", "queue",        "node_profile",
        "mode",          "container_image",  "output_dir",   "command_template"};
    return fields;
}

ManifestError missing(const std::string& field) {
    return ManifestError(ManifestError::Kind::missing_field, field, 0, 0,
                         "missing required field \"" + field + "\"");
}

ManifestError wrong_type(const std::string& field, std::string_view expected) {
    return ManifestError(ManifestError::Kind::type_error, field, 0, 0,
                         "field \"" + field + "\" must be " + std::string(expected));
}

std::string get_string(const json& obj, const std::string& key, const std::string& scope = {}) {
    const auto& v = obj.at(key);
    if (!v.is_string()) throw wrong_type(scope + key, "a string");
    return v.get<std::string>();
}

std::int64_t get_int(const json& obj, const std::string& key, const std::string& scope = {}) {
    const auto& v = obj.at(key);
    if (!v.is_number_integer()) throw wrong_type(scope + key, "an integer");
    return v.get<std::int64_t>();
}

template <typename T, typename Getter>
void optional_field(const json& obj, const std::string& key, T& out, Getter get) {
    if (obj.contains(key)) out = get(obj, key);
}

// nlohmann reports a byte offset; callers want line/column.
std::pair<std::size_t, std::size_t> line_column(std::string_view text, std::size_t offset) {
    std::size_t line = 1;
    std::size_t column = 1;
    offset = std::min(offset, text.size());
    for (std::size_t i = 0; i + 1 < offset; ++i) {
        if (text[i] == '\n') {
            ++line;
            column = 1;
        } else {
            ++column;
        }
    }
    return {line, column};
}

NodeProfile parse_profile(const json& v) {
    if (!v.is_object()) throw wrong_type("node_profile", "an object");
    NodeProfile p;
    const std::string scope = "node_profile.";
    for (const auto& [key, _] : v.items()) {
        if (key != "cores" && key != "ram_gb" && key != "scratch_gb" && key != "gpus")
            throw ManifestError(ManifestError::Kind::type_error, scope + key, 0, 0,
                                "unknown node_profile field \"" + key + "\"");
    }
    auto get = [&](const json& o, const std::string& k) { return get_int(o, k, scope); };
    optional_field(v, "cores", p.cores, get);
    optional_field(v, "ram_gb", p.ram_gb, get);
    optional_field(v, "scratch_gb", p.scratch_gb, get);
    optional_field(v, "gpus", p.gpus, get);
    return p;
}

Mode parse_mode(const json& obj) {
    const auto text = get_string(obj, "mode");
    if (text == "headless") return Mode::headless;
    if (text == "gui") return Mode::gui;
    throw wrong_type("mode", "one of \"headless\", \"gui\"");
}

}  // namespace

std::string_view to_string(Mode mode) {
    return mode == Mode::gui ? "gui" : "headless";
}

ManifestError::ManifestError(Kind kind, std::string field, std::size_t line, std::size_t column,
                             const std::string& what)
    : std::runtime_error(what),
      kind_(kind),
      field_(std::move(field)),
      line_(line),
      column_(column) {}

Manifest parse_manifest(std::string_view document) {
    json doc;
    try {
        doc = json::parse(document.begin(), document.end());
    } catch (const json::parse_error& e) {
        auto [line, column] = line_column(document, e.byte);
        std::ostringstream msg;
        msg << "manifest syntax error at line " << line << ", column " << column << ": "
            << e.what();
        throw ManifestError(ManifestError::Kind::syntax, {}, line, column, msg.str());
    }
    if (!doc.is_object())
        throw ManifestError(ManifestError::Kind::syntax, {}, 1, 1,
                            "manifest syntax error at line 1, column 1: top level must be an object");

    for (const char* required :
         {"campaign_name", "template_dir", "world_file", "total_runs", "output_dir"}) {
        if (!doc.contains(required)) throw missing(required);
    }

    Manifest m;
    m.campaign_name = get_string(doc, "campaign_name");
    m.template_dir = get_string(doc, "template_dir");
    m.world_file = get_string(doc, "world_file");
    m.total_runs = get_int(doc, "total_runs");
    m.output_dir = get_string(doc, "output_dir");

    auto as_int = [](const json& o, const std::string& k) { return get_int(o, k); };
    auto as_string = [](const json& o, const std::string& k) { return get_string(o, k); };
    optional_field(doc, "nodes", m.nodes, as_int);
    optional_field(doc, "slots_per_node", m.slots_per_node, as_int);
    optional_field(doc, "base_port", m.base_port, as_int);
    optional_field(doc, "port_stride", m.port_stride, as_int);
    optional_field(doc, "display_start", m.display_start, as_int);
    optional_field(doc, "walltime_minutes", m.walltime_minutes, as_int);
    optional_field(doc, "queue", m.queue, as_string);
    optional_field(doc, "container_image", m.container_image, as_string);
    if (doc.contains("node_profile")) m.node_profile = parse_profile(doc.at("node_profile"));
    if (doc.contains("mode")) m.mode = parse_mode(doc);
    if (doc.contains("command_template")) m.command_template = get_string(doc, "command_template");

    for (const auto& [key, _] : doc.items()) {
        if (!known_fields().contains(key)) m.unknown_fields.push_back(key);
    }
    return m;
}

Manifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ManifestError(ManifestError::Kind::io, {}, 0, 0,
                            "cannot read manifest " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    Manifest m = parse_manifest(buf.str());

    const auto base = std::filesystem::absolute(path).parent_path();
    if (m.template_dir.is_relative()) m.template_dir = (base / m.template_dir).lexically_normal();
    if (m.output_dir.is_relative()) m.output_dir = (base / m.output_dir).lexically_normal();
    return m;
}

std::string serialize_manifest(const Manifest& m) {
    json doc = json::object();
    doc["campaign_name"] = m.campaign_name;
    doc["template_dir"] = m.template_dir.string();
    doc["world_file"] = m.world_file.string();
    doc["total_runs"] = m.total_runs;
    doc["nodes"] = m.nodes;
    doc["slots_per_node"] = m.slots_per_node;
    doc["base_port"] = m.base_port;
    doc["port_stride"] = m.port_stride;
    doc["display_start"] = m.display_start;
    doc["walltime_minutes"] = m.walltime_minutes;
    doc["queue"] = m.queue;
    doc["node_profile"] = {{"cores", m.node_profile.cores},
                           {"ram_gb", m.node_profile.ram_gb},
                           {"scratch_gb", m.node_profile.scratch_gb},
                           {"gpus", m.node_profile.gpus}};
    doc["mode"] = std::string(to_string(m.mode));
    doc["container_image"] = m.container_image;
    doc["output_dir"] = m.output_dir.string();
    if (m.command_template) doc["command_template"] = *m.command_template;
    return doc.dump(2) + "\n";
}

std::vector<std::string> validate(const Manifest& m, bool check_filesystem) {
    std::vector<std::string> out;
    auto require = [&](bool ok, std::string message) {
        if (!ok) out.push_back(std::move(message));
    };

    require(!m.campaign_name.empty(), "campaign_name must be non-empty");
    require(m.campaign_name.find_first_of(" \t\r\n") == std::string::npos,
            "campaign_name must not contain whitespace");
    require(!m.queue.empty(), "queue must be non-empty");
    require(m.total_runs >= 1, "total_runs must be >= 1");
    require(m.nodes >= 1, "nodes must be >= 1");
    require(m.slots_per_node >= 1, "slots_per_node must be >= 1");
    require(m.port_stride >= 1, "port_stride must be >= 1 (ports must be distinct)");
    require(m.walltime_minutes >= 1, "walltime_minutes must be >= 1");
    require(m.display_start >= 0, "display_start must be >= 0");
    require(m.base_port >= kMinPort, "base_port must be >= 1024");

    if (m.nodes >= 1 && m.slots_per_node >= 1 && m.port_stride >= 0) {
        const std::int64_t last = m.base_port + m.port_stride * (m.instances_per_job() - 1);
        require(last <= kMaxPort, "port range exceeds 65535: base_port + port_stride*(" +
                                      std::to_string(m.instances_per_job()) + "-1) = " +
                                      std::to_string(last));
    }

    const auto& p = m.node_profile;
    require(p.cores >= 1, "node_profile.cores must be >= 1");
    require(p.ram_gb >= 0, "node_profile.ram_gb must be >= 0");
    require(p.scratch_gb >= 0, "node_profile.scratch_gb must be >= 0");
    require(p.gpus >= 0, "node_profile.gpus must be >= 0");

    for (const auto& key : m.unknown_fields) out.push_back("unknown field \"" + key + "\"");

    if (check_filesystem) {
        std::error_code ec;
        if (!std::filesystem::is_directory(m.template_dir, ec)) {
            out.push_back("template_dir does not exist: " + m.template_dir.string());
        } else if (!std::filesystem::is_regular_file(m.template_dir / m.world_file, ec)) {
            out.push_back("world_file does not exist: " + (m.template_dir / m.world_file).string());
        }
    }
    return out;
}

}  // namespace simcampaign
