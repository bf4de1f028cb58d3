// simcampaign: fan out, distribute, run and evaluate a simulation campaign.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>

#include <unistd.h>

#include <CLI11.hpp>

#include "simcampaign/collector.hpp"
#include "simcampaign/evaluator.hpp"
#include "simcampaign/fanout.hpp"
#include "simcampaign/localexec.hpp"
#include "simcampaign/manifest.hpp"
#include "simcampaign/scheduler.hpp"
#include "simcampaign/simstub.hpp"

#ifndef SIMCAMPAIGN_DATA_DIR
#define SIMCAMPAIGN_DATA_DIR "data"
#endif

namespace fs = std::filesystem;
using namespace simcampaign;

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kExecution = 2;
constexpr int kUsage = 64;

const std::set<std::string> kVerbs = {"plan",   "fanout", "script",  "run-local", "submit",
                                      "status", "collect", "report", "stub"};

// Manifest-level problems exit 1, everything else that fails while doing
// the work exits 2.
struct ValidationFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string usage() {
    return "usage: simcampaign <verb> --manifest <path> [--force] [--table]\n"
           "verbs: plan fanout script run-local submit status collect report stub\n";
}

std::string self_exe() {
    std::error_code ec;
    auto p = fs::read_symlink("/proc/self/exe", ec);
    return ec ? std::string("simcampaign") : p.string();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

Manifest load_checked(const std::string& path) {
    Manifest m;
    try {
        m = load_manifest(path);
    } catch (const ManifestError& e) {
        throw ValidationFailure(e.what());
    }
    if (const char* env = std::getenv("SIMCAMPAIGN_OUTPUT"); env && *env)
        m.output_dir = fs::absolute(env).lexically_normal();
    const auto violations = validate(m, true);
    if (!violations.empty()) {
        std::string msg = "manifest " + path + " is invalid:";
        for (const auto& v : violations) msg += "\n  - " + v;
        throw ValidationFailure(msg);
    }
    return m;
}

fs::path plan_index(const Manifest& m) { return m.output_dir / "plan.json"; }

std::vector<InstancePlan> do_fanout(const Manifest& m) {
    FanoutOptions options;
    options.self_exe = self_exe();
    auto plans = fan_out(m, m.total_runs, options);
    write_plan_index(plan_index(m), plans);
    return plans;
}

std::vector<InstancePlan> plans_for(const Manifest& m) {
    if (fs::exists(plan_index(m))) {
        auto plans = read_plan_index(plan_index(m));
        if (static_cast<std::int64_t>(plans.size()) == m.total_runs) return plans;
    }
    return do_fanout(m);
}

int cmd_plan(const Manifest& m) {
    const auto plan = plan_distribution(m.total_runs, m.nodes, m.slots_per_node);
    std::cout << "jobs " << plan.jobs << "\n";
    std::cout << "assignments " << plan.assignments.size() << "\n";
    std::cout << "instance_id job_index node_index slot_index\n";
    for (const auto& a : plan.assignments)
        std::cout << a.instance_id << ' ' << a.job_index << ' ' << a.node_index << ' '
                  << a.slot_index << '\n';
    return kOk;
}

int cmd_fanout(const Manifest& m) {
    const auto plans = do_fanout(m);
    std::cout << "fanned out " << plans.size() << " instances under " << m.output_dir.string()
              << "\n";
    return kOk;
}

fs::path write_script(const Manifest& m) {
    const auto plans = plans_for(m);
    const auto commands = m.output_dir / "commands.txt";
    write_text(commands, render_command_list(plans));
    write_text(m.output_dir / "job.pbs", render_pbs(job_array_spec(m, commands)));
    return commands;
}

int cmd_script(const Manifest& m) {
    const auto commands = write_script(m);
    std::cout << "wrote " << (m.output_dir / "job.pbs").string() << " and " << commands.string()
              << "\n";
    return kOk;
}

bool confirm_replace(const fs::path& records) {
    if (!::isatty(STDIN_FILENO)) return false;
    std::cout << records.string() << " exists; replace prior records? [y/N] " << std::flush;
    std::string answer;
    std::getline(std::cin, answer);
    return answer == "y" || answer == "Y" || answer == "yes";
}

int cmd_run_local(const Manifest& m, bool force) {
    const auto records_file = records_path(m.output_dir);
    if (fs::exists(records_file) && !force && !confirm_replace(records_file)) {
        std::cerr << "refusing to replace " << records_file.string() << " (use --force)\n";
        return kExecution;
    }
    const auto plans = plans_for(m);
    fs::remove(records_file);
    const auto plan = plan_distribution(m.total_runs, m.nodes, m.slots_per_node);
    const auto records = run_job_array(plan, m, plans);
    const double rate = completion_rate(records);
    std::cout << "records " << records.size() << "\n";
    std::cout << "completion_rate " << rate << "\n";
    return rate == 1.0 ? kOk : kExecution;
}

int cmd_submit(const Manifest& m, const std::string& qsub) {
    const auto script = m.output_dir / "job.pbs";
    if (!fs::exists(script)) write_script(m);
    std::cout << submit(script, qsub) << "\n";
    return kOk;
}

int cmd_status(const Manifest& m) {
    const auto s = status(m.output_dir, m.total_runs);
    for (const auto& p : s.problems) std::cerr << "warning: " << p << "\n";
    std::cout << "pending " << s.pending << "\nrunning " << s.running << "\nsucceeded "
              << s.succeeded << "\nfailed " << s.failed << "\nkilled " << s.killed << "\n";
    return kOk;
}

int cmd_collect(const Manifest& m) {
    const auto stream = read_record_stream(records_path(m.output_dir));
    for (const auto& p : stream.problems) std::cerr << "warning: " << p << "\n";
    const auto plans = plans_for(m);
    const auto dataset = collect(stream.completed, plans, m.output_dir / "merged.csv");
    for (const auto& e : dataset.integrity_errors) std::cerr << "integrity: " << e << "\n";
    write_text(m.output_dir / "summary.json", summary_json(stream.completed, dataset));
    std::cout << "merged " << dataset.runs_included << " runs, " << dataset.rows << " rows into "
              << dataset.output_path.string() << "\n";
    return kOk;
}

int cmd_report(const Manifest& m, bool table, const std::string& baseline,
               const std::string& reference) {
    const ThroughputConfig cfg{m.nodes, m.slots_per_node, m.walltime_minutes};
    const auto base = load_reference_series(baseline);
    std::map<std::string, double> deltas;
    if (!reference.empty()) {
        const auto cmp = load_reference_comparison(reference);
        deltas = compare_configs(cmp.serial, cmp.parallel);
    }
    const auto report = evaluate(cfg, base, deltas);
    fs::create_directories(m.output_dir);
    write_text(m.output_dir / "evaluation.json", report_json(report));
    if (table) std::cout << report_table(report);
    else std::cout << "wrote " << (m.output_dir / "evaluation.json").string() << "\n";
    return kOk;
}

int cmd_stub(double duration, std::int64_t rows, std::uint64_t seed, const std::string& fail_mode) {
    StubConfig cfg;
    const auto mode = parse_fail_mode(fail_mode);
    if (!mode) {
        std::cerr << "stub: unknown --fail-mode " << fail_mode << "\n";
        return kUsage;
    }
    cfg.fail_mode = *mode;
    cfg.duration_s = duration;
    cfg.rows = rows;
    cfg.seed = seed;
    if (const char* port = std::getenv("SIM_PORT")) cfg.port = std::atoll(port);
    const char* output = std::getenv("SIM_OUTPUT");
    cfg.output = output && *output ? fs::path(output) : fs::path("out.csv");
    cfg.heartbeat = "heartbeat";
    return stub_main(cfg);
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2 || !kVerbs.contains(argv[1])) {
        if (argc >= 2 && (std::string(argv[1]) == "--help" || std::string(argv[1]) == "-h")) {
            std::cout << usage();
            return kOk;
        }
        std::cerr << usage();
        return kUsage;
    }

    CLI::App app{"Simulation campaign orchestrator", "simcampaign"};
    app.require_subcommand(1);

    std::string manifest_path;
    bool force = false;
    bool table = false;
    std::string qsub = "qsub";
    std::string baseline = std::string(SIMCAMPAIGN_DATA_DIR) + "/baseline_pc.json";
    std::string reference = std::string(SIMCAMPAIGN_DATA_DIR) + "/resource_reference.json";
    double duration = 1.0;
    std::int64_t rows = 10;
    std::uint64_t seed = 0;
    std::string fail_mode = "none";

    std::map<std::string, CLI::App*> sub;
    for (const auto& verb : kVerbs) {
        auto* cmd = app.add_subcommand(verb);
        sub[verb] = cmd;
        if (verb == "stub") continue;
        cmd->add_option("--manifest", manifest_path, "campaign manifest (JSON)")->required();
    }
    sub["run-local"]->add_flag("--force", force, "replace existing records without asking");
    sub["report"]->add_flag("--table", table, "print the throughput table");
    sub["report"]->add_option("--baseline", baseline, "reference throughput series");
    sub["report"]->add_option("--reference", reference,
                              "reference serial/parallel resource columns (empty to skip)");
    sub["submit"]->add_option("--qsub", qsub, "scheduler submit command");
    sub["stub"]->add_option("--duration", duration, "seconds to run")->check(CLI::PositiveNumber);
    sub["stub"]->add_option("--rows", rows, "CSV rows to emit")->check(CLI::PositiveNumber);
    sub["stub"]->add_option("--seed", seed, "output seed");
    sub["stub"]->add_option("--fail-mode", fail_mode, "none|skip_bind|crash_at_start");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    try {
        if (sub["stub"]->parsed()) return cmd_stub(duration, rows, seed, fail_mode);

        const Manifest m = load_checked(manifest_path);
        if (sub["plan"]->parsed()) return cmd_plan(m);
        if (sub["fanout"]->parsed()) return cmd_fanout(m);
        if (sub["script"]->parsed()) return cmd_script(m);
        if (sub["run-local"]->parsed()) return cmd_run_local(m, force);
        if (sub["submit"]->parsed()) return cmd_submit(m, qsub);
        if (sub["status"]->parsed()) return cmd_status(m);
        if (sub["collect"]->parsed()) return cmd_collect(m);
        if (sub["report"]->parsed()) return cmd_report(m, table, baseline, reference);
    } catch (const ValidationFailure& e) {
        std::cerr << e.what() << "\n";
        return kValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExecution;
    }
    return kUsage;
}
