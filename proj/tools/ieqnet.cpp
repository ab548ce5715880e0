// ieqnet: validate documents, run scenarios, serve the API, summarize reports.
//
// Exit codes: 0 ok, 1 validation error, 2 I/O error, 3 usage error,
// 4 runtime failure.

#include "ieqnet/ieqnet.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <pthread.h>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kInvalid = 1, kIo = 2, kUsage = 3, kRuntime = 4 };

struct IoFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string slurp(const std::string& path) {
  try {
    return ieqnet::read_text_file(path);
  } catch (const std::ios_base::failure&) {
    throw IoFailure("cannot read '" + path + "'");
  }
}

void write_file(const fs::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw IoFailure("cannot write '" + path.string() + "'");
}

std::string detect_kind(const std::string& text) {
  try {
    auto root = YAML::Load(text);
    if (root.IsMap()) {
      if (root["duration_s"] || root["requests"] || root["profiles"]) return "scenario";
      if (root["nodes"] || root["links"]) return "topology";
      if (root["eps"] || root["detectors"] || root["clock"]) return "profile";
    }
  } catch (const YAML::Exception&) {
  }
  return "topology";
}

int cmd_validate(const std::string& path, std::string kind, const std::vector<std::string>& profile_dirs) {
  const auto text = slurp(path);
  if (kind == "auto") kind = detect_kind(text);
  try {
    if (kind == "topology") {
      const auto t = ieqnet::load_topology(text);
      std::cout << "ok: topology with " << t.nodes().size() << " nodes and " << t.links().size() << " links\n";
    } else if (kind == "profile") {
      const auto p = ieqnet::load_profile(text);
      std::cout << "ok: profile with " << p.detectors.size() << " detector classes\n";
    } else {
      ieqnet::ScenarioContext ctx;
      ctx.base_dir = fs::path(path).parent_path();
      if (ctx.base_dir.empty()) ctx.base_dir = ".";
      for (const auto& d : profile_dirs) ctx.profile_dirs.emplace_back(d);
      const auto s = ieqnet::load_scenario(text, ctx);
      std::cout << "ok: scenario with " << s.requests.size() << " requests over " << s.duration_s << " s\n";
    }
  } catch (const ieqnet::DocumentError& e) {
    std::cerr << path << ": " << e.what() << "\n";
    return kInvalid;
  }
  return kOk;
}

void print_summary(std::ostream& out, const json& doc) {
  for (const auto& r : doc["requests"]) {
    out << r["id"].get<std::string>() << ' ' << r["qnode_a"].get<std::string>() << "<->"
        << r["qnode_b"].get<std::string>() << ' ' << r["state"].get<std::string>();
    if (!r["failure_reason"].get<std::string>().empty()) out << " (" << r["failure_reason"].get<std::string>() << ")";
    out << " ebits=" << r["ebits"] << '\n';
  }
  for (const auto& r : doc["rejected"]) out << "rejected " << r.dump() << '\n';
  const auto& s = doc["summary"];
  out << "requests=" << s["requests"] << " completed=" << s["completed"] << " failed=" << s["failed"]
      << " rejected=" << s["rejected"] << '\n';
  out << "min_car=" << (s["min_car"].is_null() ? std::string("n/a") : s["min_car"].dump())
      << " mean_fidelity=" << s["mean_fidelity"] << " mean_v_eff=" << s["mean_v_eff"] << '\n';
}

int cmd_run(const std::string& path, std::optional<std::uint64_t> seed, const std::string& out_dir,
            const std::string& format, const std::vector<std::string>& profile_dirs) {
  slurp(path);  // distinguish unreadable input from invalid input
  ieqnet::Scenario scenario;
  try {
    std::vector<fs::path> dirs(profile_dirs.begin(), profile_dirs.end());
    scenario = ieqnet::load_scenario_file(path, dirs);
  } catch (const ieqnet::DocumentError& e) {
    std::cerr << path << ": " << e.what() << "\n";
    return kInvalid;
  }
  ieqnet::ScenarioReport report;
  try {
    report = ieqnet::run_scenario(scenario, seed);
  } catch (const ieqnet::DiscoveryError& e) {
    std::cerr << "discovery failed: " << e.what() << "\n";
    return kRuntime;
  } catch (const std::logic_error& e) {
    std::cerr << "engine error: " << e.what() << "\n";
    return kRuntime;
  }
  if (!out_dir.empty()) {
    write_file(fs::path(out_dir) / "report.json", report.to_text());
    if (format == "series") write_file(fs::path(out_dir) / "series.csv", report.series_csv());
    print_summary(std::cout, report.document);
  } else {
    std::cout << (format == "series" ? report.series_csv() : report.to_text());
    print_summary(std::cerr, report.document);
  }
  return kOk;
}

int cmd_report(const std::string& path, const std::string& format) {
  json doc;
  try {
    doc = json::parse(slurp(path));
    if (format == "series") {
      std::cout << ieqnet::series_csv(ieqnet::series_from_json(doc.at("series")));
    } else {
      print_summary(std::cout, doc);
    }
  } catch (const json::exception& e) {
    std::cerr << path << ": not a scenario report: " << e.what() << "\n";
    return kInvalid;
  }
  return kOk;
}

std::pair<std::string, int> split_addr(const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos) throw CLI::ValidationError("--addr", "expected host:port");
  try {
    const int port = std::stoi(addr.substr(colon + 1));
    if (port < 0 || port > 65535) throw std::out_of_range(addr);
    return {addr.substr(0, colon), port};
  } catch (const std::logic_error&) {
    throw CLI::ValidationError("--addr", "bad port in '" + addr + "'");
  }
}

struct ServeArgs {
  std::string topology;
  std::string profile = "qlan2_coexist";
  std::string addr = "127.0.0.1:8080";
  std::string tokens;
  std::string data_dir;
  double time_scale = 1.0;
  std::uint64_t seed = 1;
  std::vector<std::string> profile_dirs;
};

int cmd_serve(const ServeArgs& a) {
  const auto [host, port] = split_addr(a.addr);
  ieqnet::ServiceOptions opt;
  slurp(a.topology);
  try {
    opt.fabric = ieqnet::load_topology_file(a.topology);
  } catch (const ieqnet::DocumentError& e) {
    std::cerr << a.topology << ": " << e.what() << "\n";
    return kInvalid;
  }
  ieqnet::ScenarioContext ctx;
  ctx.base_dir = fs::path(a.topology).parent_path();
  if (ctx.base_dir.empty()) ctx.base_dir = ".";
  ctx.profile_dirs.assign(a.profile_dirs.begin(), a.profile_dirs.end());
  ctx.profile_dirs.emplace_back("profiles");
  const auto profile_path = ieqnet::detail::find_profile(ctx, a.profile);
  if (!profile_path) {
    std::cerr << "profile '" << a.profile << "' not found\n";
    return kIo;
  }
  try {
    opt.profile = ieqnet::load_profile(slurp(profile_path->string()));
  } catch (const ieqnet::DocumentError& e) {
    std::cerr << profile_path->string() << ": " << e.what() << "\n";
    return kInvalid;
  }
  opt.profile_name = a.profile;
  opt.seed = a.seed;
  opt.time_scale = a.time_scale;
  if (!a.data_dir.empty()) opt.data_dir = a.data_dir;

  ieqnet::TokenTable tokens;
  try {
    tokens = ieqnet::TokenTable::load(a.tokens);
  } catch (const ieqnet::TokenFileError& e) {
    std::cerr << "refusing to start: token file " << a.tokens << ": " << e.what() << "\n";
    return kInvalid;
  }

  // Signals are collected by a dedicated thread; block them everywhere else.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  ieqnet::NetworkService service(std::move(opt), std::move(tokens));
  try {
    service.start();
  } catch (const ieqnet::DiscoveryError& e) {
    std::cerr << "discovery failed: " << e.what() << "\n";
    return kRuntime;
  }
  ieqnet::HttpFrontend http(service);
  const int bound = http.bind(host, port);
  if (bound < 0) {
    std::cerr << "cannot listen on " << a.addr << "\n";
    service.stop();
    return kIo;
  }
  std::cout << "listening on http://" << host << ':' << bound << std::endl;

  std::thread([&http, signals] {
    int sig = 0;
    sigwait(&signals, &sig);
    http.stop();
  }).detach();
  http.listen();
  service.stop();
  std::cerr << "shut down\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Entanglement distribution network: control plane simulator and service"};
  app.require_subcommand(1);
  app.footer(
      "Exit codes: 0 ok, 1 validation error, 2 I/O error, 3 usage error, 4 runtime failure.\n"
      "Environment: IEQNET_ADDR overrides serve --addr, IEQNET_DATA_DIR overrides serve --data-dir,\n"
      "IEQNET_PROFILE_DIR adds a profile search directory.");

  std::vector<std::string> profile_dirs;

  auto* validate = app.add_subcommand("validate", "Check a topology, scenario or profile document");
  std::string validate_path, kind = "auto";
  validate->add_option("path", validate_path, "Document to validate")->required();
  validate->add_option("--kind", kind, "Document kind")
      ->check(CLI::IsMember({"auto", "topology", "scenario", "profile"}))
      ->capture_default_str();
  validate->add_option("--profile-dir", profile_dirs, "Extra directory searched for named profiles");

  auto* run = app.add_subcommand("run", "Run a scenario and write its report");
  std::string scenario_path, out_dir, format = "report";
  std::optional<std::uint64_t> seed;
  run->add_option("scenario", scenario_path, "Scenario file")->required();
  run->add_option("--seed", seed, "Override the scenario seed");
  run->add_option("--out", out_dir, "Write report.json (and series.csv) here instead of stdout");
  run->add_option("--format", format, "Primary output")
      ->check(CLI::IsMember({"report", "series"}))
      ->capture_default_str();
  run->add_option("--profile-dir", profile_dirs, "Extra directory searched for named profiles");

  auto* serve = app.add_subcommand("serve", "Serve the HTTP API over a topology");
  ServeArgs sa;
  serve->add_option("topology", sa.topology, "Topology file")->required();
  serve->add_option("--profile", sa.profile, "Physics profile name or path")->capture_default_str();
  serve->add_option("--addr", sa.addr, "Listen address host:port")->envname("IEQNET_ADDR")->capture_default_str();
  serve->add_option("--tokens", sa.tokens, "Token file (JSON)")->required();
  serve->add_option("--data-dir", sa.data_dir, "Persistent store directory")->envname("IEQNET_DATA_DIR");
  serve->add_option("--time-scale", sa.time_scale, "Simulated seconds per wall-clock second")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  serve->add_option("--seed", sa.seed, "Seed of the stochastic processes")->capture_default_str();
  serve->add_option("--profile-dir", sa.profile_dirs, "Extra directory searched for named profiles");

  auto* report = app.add_subcommand("report", "Summarize a saved scenario report");
  std::string report_path, report_format = "summary";
  report->add_option("report", report_path, "report.json written by run")->required();
  report->add_option("--format", report_format, "Output")
      ->check(CLI::IsMember({"summary", "series"}))
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*validate) return cmd_validate(validate_path, kind, profile_dirs);
    if (*run) return cmd_run(scenario_path, seed, out_dir, format, profile_dirs);
    if (*serve) return cmd_serve(sa);
    if (*report) return cmd_report(report_path, report_format);
  } catch (const IoFailure& e) {
    std::cerr << e.what() << "\n";
    return kIo;
  } catch (const CLI::ValidationError& e) {
    std::cerr << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}
