// isacsim: deterministic desk-scale ISaC network simulator CLI.
//
//   isacsim run <scenario.json> [--seed N] [--out DIR] [--dump-periodograms]
//               [--api-listen HOST:PORT] [--api-consumer NAME]
//   isacsim validate <scenario.json>
//   isacsim report <trace.jsonl> [--out DIR]
//
// ISACSIM_LOG=debug enables progress logging on stderr.

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include "isacsim/sim.hpp"

#ifndef _WIN32
#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>
#endif

namespace {

bool log_enabled() {
    const char* env = std::getenv("ISACSIM_LOG");
    return env != nullptr && std::string(env) != "" && std::string(env) != "off";
}

void log_line(const std::string& msg) {
    if (log_enabled()) std::cerr << "[isacsim] " << msg << "\n";
}

int cmd_validate(const std::string& path) {
    auto errors = isacsim::sim::validate_scenario_file(path);
    if (errors.empty()) {
        std::cout << "ok: " << path << "\n";
        return 0;
    }
    for (const auto& e : errors) std::cout << "error " << e << "\n";
    return 1;
}

int cmd_run(const std::string& path, std::optional<std::uint64_t> seed, const std::string& out_dir,
            bool dump_periodograms) {
    auto config = isacsim::sim::load_scenario(path);
    if (seed) config.seed = *seed;
    log_line("running scenario " + path + " with seed " + std::to_string(config.seed));
    auto result = isacsim::sim::run(config, dump_periodograms);
    isacsim::sim::write_report(result, out_dir);
    const auto& m = result.metrics;
    std::cout << "sessions=" << m.sessions << " precision=" << m.detection_precision
              << " recall=" << m.detection_recall << " loc_rmse_m=" << m.localization_rmse_m
              << " runtime_s=" << m.runtime_s << "\n";
    std::cout << "report written to " << out_dir << "\n";
    return 0;
}

int cmd_report(const std::string& trace_path, const std::string& out_dir) {
    std::ifstream in(trace_path);
    if (!in.good()) {
        std::cerr << "cannot open " << trace_path << "\n";
        return 1;
    }
    isacsim::sim::RunResult result;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) result.trace_lines.push_back(line);
    result.metrics = isacsim::sim::metrics_from_trace(result.trace_lines);
    isacsim::sim::write_report(result, out_dir);
    std::cout << "report written to " << out_dir << "\n";
    return 0;
}

#ifndef _WIN32
// Minimal single-client NDJSON endpoint for manual interaction: each request
// line is simulated to completion before the next line is read.
int cmd_run_listen(const std::string& path, std::optional<std::uint64_t> seed,
                   const std::string& listen, const std::string& consumer) {
    auto config = isacsim::sim::load_scenario(path);
    if (seed) config.seed = *seed;
    config.af_script.clear(); // socket input replaces the script

    auto colon = listen.rfind(':');
    if (colon == std::string::npos) {
        std::cerr << "--api-listen expects HOST:PORT\n";
        return 1;
    }
    std::string host = listen.substr(0, colon);
    int port = std::stoi(listen.substr(colon + 1));

    int server = ::socket(AF_INET, SOCK_STREAM, 0);
    if (server < 0) {
        std::cerr << "socket() failed\n";
        return 1;
    }
    int yes = 1;
    ::setsockopt(server, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<uint16_t>(port));
    addr.sin_addr.s_addr = host == "0.0.0.0" ? INADDR_ANY : ::inet_addr(host.c_str());
    if (::bind(server, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 ||
        ::listen(server, 1) != 0) {
        std::cerr << "cannot listen on " << listen << "\n";
        ::close(server);
        return 1;
    }
    std::cout << "listening on " << listen << " (consumer identity: " << consumer << ")\n";
    int client = ::accept(server, nullptr, nullptr);
    if (client < 0) {
        ::close(server);
        return 1;
    }

    // One fresh engine per connection; responses stream back as produced.
    std::string buffer;
    char chunk[4096];
    isacsim::sim::InteractiveRun session(config, [&](const std::string&, const std::string& line) {
        (void)::send(client, line.data(), line.size(), 0);
    });
    for (;;) {
        ssize_t n = ::recv(client, chunk, sizeof(chunk), 0);
        if (n <= 0) break;
        buffer.append(chunk, static_cast<std::size_t>(n));
        std::size_t pos;
        while ((pos = buffer.find('\n')) != std::string::npos) {
            std::string line = buffer.substr(0, pos);
            buffer.erase(0, pos + 1);
            if (line.empty()) continue;
            session.submit_line(consumer, line);
        }
    }
    ::close(client);
    ::close(server);
    return 0;
}
#endif

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deterministic ISaC architecture simulator"};
    app.require_subcommand(1);

    std::string scenario_path;
    std::string out_dir = "out";
    std::optional<std::uint64_t> seed;
    bool dump_periodograms = false;
    std::string api_listen;
    std::string api_consumer = "af-1";

    auto* run_cmd = app.add_subcommand("run", "Run a scenario and write the report");
    run_cmd->add_option("scenario", scenario_path, "Scenario JSON file")->required();
    run_cmd->add_option("--seed", seed, "Override the scenario seed");
    run_cmd->add_option("--out", out_dir, "Output directory");
    run_cmd->add_flag("--dump-periodograms", dump_periodograms, "Dump per-burst periodograms");
    run_cmd->add_option("--api-listen", api_listen, "Serve the ISaC-API on HOST:PORT instead of the script");
    run_cmd->add_option("--api-consumer", api_consumer, "Consumer identity for --api-listen");

    std::string validate_path;
    auto* validate_cmd = app.add_subcommand("validate", "Validate a scenario file");
    validate_cmd->add_option("scenario", validate_path, "Scenario JSON file")->required();

    std::string trace_path;
    std::string report_out = "out";
    auto* report_cmd = app.add_subcommand("report", "Recompute report files from a trace");
    report_cmd->add_option("trace", trace_path, "trace.jsonl produced by run")->required();
    report_cmd->add_option("--out", report_out, "Output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*validate_cmd) return cmd_validate(validate_path);
        if (*run_cmd) {
#ifndef _WIN32
            if (!api_listen.empty()) return cmd_run_listen(scenario_path, seed, api_listen, api_consumer);
#endif
            return cmd_run(scenario_path, seed, out_dir, dump_periodograms);
        }
        if (*report_cmd) return cmd_report(trace_path, report_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
