#include "simcampaign/fanout.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>

#include <json.hpp>

namespace simcampaign {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kPlaceholder = "{{PORT}}";

struct PortToken {
    std::size_t begin;  // byte offset of the integer (or placeholder)
    std::size_t length;
    std::int64_t value;  // -1 for the placeholder
};

bool is_blank(char c) { return c == ' ' || c == '\t' || c == '\r'; }

// Matches `\s*port\s+<digits>\s*` on one line.
std::optional<PortToken> match_port_line(std::string_view text, std::size_t line_begin,
                                         std::size_t line_end) {
    std::size_t i = line_begin;
    while (i < line_end && is_blank(text[i])) ++i;
    if (text.substr(i, 4) != "port" || i + 4 > line_end) return std::nullopt;
    i += 4;
    const std::size_t ws = i;
    while (i < line_end && is_blank(text[i])) ++i;
    if (i == ws) return std::nullopt;
    const std::size_t digits = i;
    while (i < line_end && std::isdigit(static_cast<unsigned char>(text[i]))) ++i;
    if (i == digits) return std::nullopt;
    const std::size_t digits_end = i;
    while (i < line_end && is_blank(text[i])) ++i;
    if (i != line_end) return std::nullopt;

    std::int64_t value = 0;
    auto [ptr, ec] = std::from_chars(text.data() + digits, text.data() + digits_end, value);
    if (ec != std::errc()) return std::nullopt;
    return PortToken{digits, digits_end - digits, value};
}

std::vector<PortToken> find_tokens(std::string_view text) {
    std::vector<PortToken> tokens;
    for (std::size_t pos = text.find(kPlaceholder); pos != std::string_view::npos;
         pos = text.find(kPlaceholder, pos + kPlaceholder.size())) {
        tokens.push_back({pos, kPlaceholder.size(), -1});
    }
    std::size_t begin = 0;
    while (begin <= text.size()) {
        std::size_t end = text.find('\n', begin);
        if (end == std::string_view::npos) end = text.size();
        if (auto t = match_port_line(text, begin, end)) tokens.push_back(*t);
        begin = end + 1;
    }
    return tokens;
}

const PortToken& single_token(const std::vector<PortToken>& tokens) {
    if (tokens.empty())
        throw PortTokenError(PortTokenError::Kind::not_found,
                             "no port token ({{PORT}} or a `port <n>` line) in world file");
    if (tokens.size() > 1)
        throw PortTokenError(PortTokenError::Kind::ambiguous,
                             "found " + std::to_string(tokens.size()) +
                                 " port tokens in world file; refusing ambiguous rewrite");
    return tokens.front();
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FanoutError("cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const fs::path& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FanoutError("cannot write " + path.string());
    out << text;
    if (!out) throw FanoutError("write failed: " + path.string());
}

void replace_all(std::string& text, std::string_view from, std::string_view to) {
    for (std::size_t pos = text.find(from); pos != std::string::npos;
         pos = text.find(from, pos + to.size())) {
        text.replace(pos, from.size(), to);
    }
}

}  // namespace

std::vector<std::int64_t> port_ladder(std::int64_t base_port, std::int64_t stride, std::int64_t n) {
    if (n < 1) throw FanoutError("port ladder needs n >= 1");
    if (stride < 0) throw FanoutError("port stride must be nonnegative");
    const std::int64_t last = base_port + stride * (n - 1);
    if (base_port < 1 || last > 65535)
        throw PortRangeError("port ladder " + std::to_string(base_port) + ".." +
                             std::to_string(last) + " exceeds 65535");
    std::vector<std::int64_t> ports(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) ports[static_cast<std::size_t>(i)] = base_port + stride * i;
    return ports;
}

std::vector<std::int64_t> display_ladder(std::int64_t start, const std::set<std::int64_t>& occupied,
                                         std::int64_t n) {
    std::vector<std::int64_t> displays;
    displays.reserve(static_cast<std::size_t>(std::max<std::int64_t>(n, 0)));
    for (std::int64_t d = start; static_cast<std::int64_t>(displays.size()) < n; ++d) {
        if (!occupied.contains(d)) displays.push_back(d);
    }
    return displays;
}

std::string rewrite_port(std::string_view world_text, std::int64_t port) {
    const auto tokens = find_tokens(world_text);
    const auto& token = single_token(tokens);
    std::string out(world_text);
    out.replace(token.begin, token.length, std::to_string(port));
    return out;
}

std::int64_t extract_port(std::string_view world_text) {
    const auto tokens = find_tokens(world_text);
    const auto& token = single_token(tokens);
    if (token.value < 0)
        throw PortTokenError(PortTokenError::Kind::not_found, "port token is an unfilled placeholder");
    return token.value;
}

fs::path instance_dir_name(std::int64_t instance_id) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "instance_%04lld", static_cast<long long>(instance_id));
    return buf;
}

std::string render_command(const InstancePlan& p, const Manifest& m, std::string_view self_exe) {
    std::string command;
    if (m.command_template) {
        command = *m.command_template;
    } else if (m.mode == Mode::headless) {
        command =
            "xvfb-run -a -n {display} singularity exec {image} webots --batch --mode=fast "
            "{workdir}/{world_file}";
    } else {
        command = "singularity exec {image} webots {workdir}/{world_file}";
    }
    const auto workdir = fs::absolute(p.workdir).lexically_normal().string();
    replace_all(command, "{display}", std::to_string(p.display));
    replace_all(command, "{image}", m.container_image);
    replace_all(command, "{workdir}", workdir);
    replace_all(command, "{world_file}", m.world_file.string());
    replace_all(command, "{mode}", to_string(m.mode));
    replace_all(command, "{instance_id}", std::to_string(p.instance_id));
    replace_all(command, "{self}", self_exe);
    return command;
}

std::vector<InstancePlan> fan_out(const Manifest& m, std::int64_t n, const FanoutOptions& options) {
    if (n < 1) throw FanoutError("fan_out needs n >= 1");
    const std::int64_t period = std::min(n, std::max<std::int64_t>(m.instances_per_job(), 1));
    const auto ports = port_ladder(m.base_port, m.port_stride, period);
    const auto displays = display_ladder(m.display_start, options.occupied_displays, period);

    const fs::path world_src = m.template_dir / m.world_file;
    const std::string world_text = read_file(world_src);
    const fs::path root = fs::absolute(m.output_dir).lexically_normal();

    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec) throw FanoutError("cannot create " + root.string() + ": " + ec.message());

    std::vector<InstancePlan> plans;
    plans.reserve(static_cast<std::size_t>(n));
    for (std::int64_t id = 0; id < n; ++id) {
        InstancePlan p;
        p.instance_id = id;
        p.port = ports[static_cast<std::size_t>(id % period)];
        p.display = displays[static_cast<std::size_t>(id % period)];
        p.workdir = root / instance_dir_name(id);

        std::string rewritten;
        try {
            rewritten = rewrite_port(world_text, p.port);
        } catch (const PortTokenError& e) {
            throw PortTokenError(e.kind(), "instance " + std::to_string(id) + ": " + e.what());
        }

        fs::remove_all(p.workdir, ec);
        if (ec) throw FanoutError("cannot remove " + p.workdir.string() + ": " + ec.message());
        fs::copy(m.template_dir, p.workdir, fs::copy_options::recursive, ec);
        if (ec)
            throw FanoutError("cannot copy " + m.template_dir.string() + " to " +
                              p.workdir.string() + ": " + ec.message());
        write_file(p.workdir / m.world_file, rewritten);

        p.command = render_command(p, m, options.self_exe);
        plans.push_back(std::move(p));
    }
    return plans;
}

void write_plan_index(const fs::path& path, const std::vector<InstancePlan>& plans) {
    nlohmann::json doc = nlohmann::json::array();
    for (const auto& p : plans) {
        doc.push_back({{"instance_id", p.instance_id},
                       {"port", p.port},
                       {"display", p.display},
                       {"workdir", fs::absolute(p.workdir).lexically_normal().string()},
                       {"command", p.command}});
    }
    write_file(path, doc.dump(2) + "\n");
}

std::vector<InstancePlan> read_plan_index(const fs::path& path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw FanoutError("corrupt plan index " + path.string() + ": " + e.what());
    }
    std::vector<InstancePlan> plans;
    try {
        for (const auto& item : doc) {
            plans.push_back({item.at("instance_id").get<std::int64_t>(),
                             item.at("port").get<std::int64_t>(),
                             item.at("display").get<std::int64_t>(),
                             item.at("workdir").get<std::string>(),
                             item.at("command").get<std::string>()});
        }
    } catch (const nlohmann::json::exception& e) {
        throw FanoutError("corrupt plan index " + path.string() + ": " + e.what());
    }
    return plans;
}

}  // namespace simcampaign
