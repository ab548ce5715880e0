#pragma once

// Scenario execution: discovery, scripted request arrivals, fiber drift,
// continuous servos and fault injection on one seeded event loop, ending in
// a deterministic report.

#include "ieqnet/control_plane.hpp"
#include "ieqnet/detail/doc_reader.hpp"
#include "ieqnet/profile.hpp"
#include "ieqnet/topology.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace ieqnet {

enum class DriftQuantity { PolarizationOffset, DelayOffset };

inline const char* to_string(DriftQuantity q) {
  return q == DriftQuantity::PolarizationOffset ? "polarization" : "delay";
}

/// Random walk on one or all fibers; sigma is per square-root second.
struct DriftProcess {
  std::string target = "*";  // link id or "*" for every link
  DriftQuantity quantity = DriftQuantity::PolarizationOffset;
  double sigma = 0.01;       // rad/sqrt(s) or ps/sqrt(s)
  double interval_s = 1.0;
};

inline constexpr double kDefaultPolarizationSigma = 0.01;  // rad/sqrt(s)
inline constexpr double kDefaultDelaySigma = 1.0;          // ps/sqrt(s)

enum class FaultType { LinkLossIncrease, LinkDown, NodeDown, PowerStep };

inline const char* to_string(FaultType f) {
  switch (f) {
    case FaultType::LinkLossIncrease: return "link_loss_increase";
    case FaultType::LinkDown: return "link_down";
    case FaultType::NodeDown: return "node_down";
    case FaultType::PowerStep: return "power_step";
  }
  return "?";
}

inline std::optional<FaultType> parse_fault_type(std::string_view s) {
  for (auto f : {FaultType::LinkLossIncrease, FaultType::LinkDown, FaultType::NodeDown, FaultType::PowerStep})
    if (s == to_string(f)) return f;
  return std::nullopt;
}

struct Fault {
  double at = 0.0;
  FaultType type = FaultType::LinkDown;
  std::string target;
  double value = 0.0;  // dB for loss increase, dBm for power steps
};

struct ScheduledRequest {
  double at = 0.0;
  std::string user = "scenario";
  std::string qnode_a;
  std::string qnode_b;
  Requirements requirements;
};

struct LaunchPower {
  std::string link;
  double dbm = 0.0;
};

struct Scenario {
  Topology topology;
  PhysicsProfile profile;
  std::string topology_source;
  std::vector<ScheduledRequest> requests;
  std::vector<DriftProcess> drifts;
  ServoSet servos;
  std::vector<Fault> faults;
  std::vector<LaunchPower> launch_powers;
  ControlPlaneConfig config;
  double duration_s = 0.0;
  double drain_s = 600.0;          // extra time for in-flight requests after duration_s
  double sample_interval_s = 1.0;  // series sampling period
  std::uint64_t seed = 1;
};

/// Where scenario references are resolved: paths are relative to the
/// scenario file, bare profile names are looked up in `profile_dirs`.
struct ScenarioContext {
  std::filesystem::path base_dir = ".";
  std::vector<std::filesystem::path> profile_dirs;
};

namespace detail {

inline std::filesystem::path resolve_path(const ScenarioContext& ctx, const std::string& ref) {
  std::filesystem::path p(ref);
  return p.is_absolute() ? p : ctx.base_dir / p;
}

inline std::optional<std::filesystem::path> find_profile(const ScenarioContext& ctx, const std::string& ref) {
  std::filesystem::path p(ref);
  if (p.has_extension() || ref.find('/') != std::string::npos) {
    auto full = resolve_path(ctx, ref);
    return std::filesystem::exists(full) ? std::optional(full) : std::nullopt;
  }
  std::vector<std::filesystem::path> dirs = ctx.profile_dirs;
  dirs.push_back(ctx.base_dir / "profiles");
  dirs.push_back(ctx.base_dir / ".." / "profiles");
  if (const char* env = std::getenv("IEQNET_PROFILE_DIR")) dirs.emplace_back(env);
  for (const auto& d : dirs)
    for (const char* ext : {".yaml", ".yml"}) {
      auto candidate = d / (ref + ext);
      if (std::filesystem::exists(candidate)) return candidate;
    }
  return std::nullopt;
}

inline ServoLoop read_servo(MapReader r) {
  ServoLoop s;
  const auto obs = r.string("observable");
  if (obs == "hom_dip")
    s.observable = ServoObservable::HomDip;
  else if (obs == "polarization_visibility")
    s.observable = ServoObservable::PolarizationVisibility;
  else
    r.fail("unknown servo observable '" + obs + "'");
  s.period_s = r.number_or("period_s", s.period_s);
  s.gain = r.number_or("gain", s.gain);
  s.tolerance = r.number_or("tolerance", s.observable == ServoObservable::HomDip ? 2.0 : 0.02);
  s.probe_step = r.number_or("probe_step", s.probe_step);
  s.step_budget = static_cast<int>(r.integer_or("step_budget", s.step_budget));
  r.finish();
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    r.fail(e.what());
  }
  return s;
}

inline ControlPlaneConfig read_config(MapReader r) {
  ControlPlaneConfig c;
  c.verify_tolerance_db = r.number_or("verify_tolerance_db", c.verify_tolerance_db);
  c.recal_period_s = r.number_or("recal_period_s", c.recal_period_s);
  c.ready_timeout_s = r.number_or("ready_timeout_s", c.ready_timeout_s);
  c.end_timeout_s = r.number_or("end_timeout_s", c.end_timeout_s);
  c.calibration_retries = static_cast<int>(r.integer_or("calibration_retries", c.calibration_retries));
  c.calibration_step_s = r.number_or("calibration_step_s", c.calibration_step_s);
  c.batch_interval_s = r.number_or("batch_interval_s", c.batch_interval_s);
  c.queue_when_busy = r.boolean_or("queue_when_busy", c.queue_when_busy);
  c.allocate_clock_paths = r.boolean_or("allocate_clock_paths", c.allocate_clock_paths);
  c.weights.alpha_pdl = r.number_or("alpha_pdl", c.weights.alpha_pdl);
  c.weights.alpha_pmd = r.number_or("alpha_pmd", c.weights.alpha_pmd);
  r.finish();
  if (!(c.recal_period_s > 0) || !(c.ready_timeout_s > 0) || !(c.batch_interval_s > 0) || !(c.end_timeout_s > 0))
    r.fail("periods and timeouts must be > 0");
  if (c.verify_tolerance_db < 0 || c.calibration_step_s < 0 || c.calibration_retries < 0)
    r.fail("tolerances, steps and retries must be >= 0");
  if (c.weights.alpha_pdl < 0 || c.weights.alpha_pmd < 0) r.fail("weight coefficients must be >= 0");
  return c;
}

}  // namespace detail

/// Parses a scenario document and resolves its topology and profile.
inline Scenario load_scenario(const std::string& text, const ScenarioContext& ctx = {}) {
  using detail::MapReader;
  auto root = detail::parse_yaml(text);
  MapReader r(root, "");
  Scenario s;

  const auto topo_node = r.get("topology");
  const auto topo_ref = MapReader::as_string(topo_node, "topology");
  const auto topo_path = detail::resolve_path(ctx, topo_ref);
  std::string topo_text;
  try {
    topo_text = read_text_file(topo_path.string());
  } catch (const std::ios_base::failure&) {
    throw DocumentError("topology", detail::line_of(topo_node), "cannot read topology '" + topo_ref + "'");
  }
  try {
    s.topology = load_topology(topo_text);
  } catch (const DocumentError& e) {
    throw DocumentError("topology", detail::line_of(topo_node), "in '" + topo_ref + "': " + e.what());
  }
  s.topology_source = topo_ref;

  auto profiles = r.get("profiles");
  std::vector<std::pair<YAML::Node, std::string>> refs;
  if (profiles.IsSequence()) {
    for (std::size_t i = 0; i < profiles.size(); ++i) refs.emplace_back(profiles[i], detail::index_path("profiles", i));
  } else {
    refs.emplace_back(profiles, "profiles");
  }
  if (refs.size() != 1) throw DocumentError("profiles", detail::line_of(profiles), "exactly one profile is supported");
  {
    const auto& [node, path] = refs.front();
    const auto ref = MapReader::as_string(node, path);
    const auto file = detail::find_profile(ctx, ref);
    if (!file) throw DocumentError(path, detail::line_of(node), "cannot resolve profile '" + ref + "'");
    try {
      s.profile = load_profile_file(file->string());
    } catch (const DocumentError& e) {
      throw DocumentError(path, detail::line_of(node), "in profile '" + ref + "': " + e.what());
    }
  }

  s.duration_s = r.number("duration_s");
  if (!(s.duration_s >= 0) || !std::isfinite(s.duration_s)) r.fail("duration_s must be a finite number >= 0");
  s.seed = static_cast<std::uint64_t>(r.integer_or("seed", 1));
  s.drain_s = r.number_or("drain_s", s.drain_s);
  s.sample_interval_s = r.number_or("sample_interval_s", s.sample_interval_s);
  if (!(s.sample_interval_s > 0)) r.fail("sample_interval_s must be > 0");
  if (!(s.drain_s >= 0)) r.fail("drain_s must be >= 0");
  if (auto c = r.map_optional("config")) s.config = detail::read_config(*c);

  const auto& topo = s.topology;
  auto need_link = [&](const std::string& id, const std::string& path, int line) {
    if (!topo.find_link(id)) throw DocumentError(path, line, "unknown link '" + id + "'");
  };

  for (auto& [n, path] : r.sequence("requests")) {
    MapReader q(n, path);
    ScheduledRequest req;
    req.at = q.number("at");
    req.user = q.string_or("user", req.user);
    req.qnode_a = q.string("qnode_a");
    req.qnode_b = q.string("qnode_b");
    const auto qt = q.string_or("qubit_type", "polarization");
    auto parsed = parse_qubit_type(qt);
    if (!parsed) q.fail("unknown qubit_type '" + qt + "'");
    req.requirements.qubit_type = *parsed;
    req.requirements.rate = q.number("rate");
    req.requirements.duration = q.number("duration");
    req.requirements.swap = q.boolean_or("swap", false);
    q.finish();
    if (!(req.at >= 0)) q.fail("'at' must be >= 0");
    for (const auto& qn : {req.qnode_a, req.qnode_b})
      if (!topo.find_node(qn)) throw DocumentError(path, q.line(), "unknown node '" + qn + "'");
    s.requests.push_back(std::move(req));
  }

  for (auto& [n, path] : r.sequence("drifts")) {
    MapReader d(n, path);
    DriftProcess p;
    p.target = d.string_or("link", "*");
    const auto quantity = d.string("quantity");
    if (quantity == "polarization")
      p.quantity = DriftQuantity::PolarizationOffset;
    else if (quantity == "delay")
      p.quantity = DriftQuantity::DelayOffset;
    else
      d.fail("unknown drift quantity '" + quantity + "'");
    p.sigma = d.number_or("sigma", p.quantity == DriftQuantity::PolarizationOffset ? kDefaultPolarizationSigma
                                                                                    : kDefaultDelaySigma);
    p.interval_s = d.number_or("interval_s", p.interval_s);
    d.finish();
    if (!(p.sigma >= 0)) d.fail("sigma must be >= 0");
    if (!(p.interval_s > 0)) d.fail("interval_s must be > 0");
    if (p.target != "*") need_link(p.target, path, d.line());
    s.drifts.push_back(p);
  }

  for (auto& [n, path] : r.sequence("servos")) {
    MapReader sr(n, path);
    const int line = sr.line();
    auto loop = detail::read_servo(std::move(sr));
    auto& slot = loop.observable == ServoObservable::HomDip ? s.servos.hom : s.servos.polarization;
    if (slot) throw DocumentError(path, line, std::string("duplicate servo for ") + to_string(loop.observable));
    slot = loop;
  }

  for (auto& [n, path] : r.sequence("faults")) {
    MapReader f(n, path);
    Fault fault;
    fault.at = f.number("at");
    const auto type = f.string("type");
    auto parsed = parse_fault_type(type);
    if (!parsed) f.fail("unknown fault type '" + type + "'");
    fault.type = *parsed;
    fault.target = f.string("target");
    const bool needs_value = fault.type == FaultType::LinkLossIncrease || fault.type == FaultType::PowerStep;
    fault.value = needs_value ? f.number("value") : f.number_or("value", 0.0);
    f.finish();
    if (!(fault.at >= 0)) f.fail("'at' must be >= 0");
    if (fault.type == FaultType::LinkLossIncrease && !(fault.value >= 0)) f.fail("loss increase must be >= 0");
    if (fault.type == FaultType::NodeDown) {
      if (!topo.find_node(fault.target)) throw DocumentError(path, f.line(), "unknown node '" + fault.target + "'");
    } else {
      need_link(fault.target, path, f.line());
    }
    s.faults.push_back(fault);
  }

  for (auto& [n, path] : r.sequence("launch_power")) {
    MapReader lp(n, path);
    LaunchPower p;
    p.link = lp.string("link");
    p.dbm = lp.number("dbm");
    lp.finish();
    need_link(p.link, path, lp.line());
    s.launch_powers.push_back(p);
  }
  r.finish();
  return s;
}

inline Scenario load_scenario_file(const std::string& path, std::vector<std::filesystem::path> profile_dirs = {}) {
  ScenarioContext ctx;
  ctx.base_dir = std::filesystem::path(path).parent_path();
  if (ctx.base_dir.empty()) ctx.base_dir = ".";
  ctx.profile_dirs = std::move(profile_dirs);
  return load_scenario(read_text_file(path), ctx);
}

/// One row of the sampled time series.
struct SeriesRow {
  double t = 0.0;
  std::string request;
  std::string state;
  double launch_power_dbm = 0.0;
  double car = 0.0;
  double singles_a = 0.0;
  double singles_b = 0.0;
  double coincidence_rate = 0.0;
  double v_eff = 0.0;
  double fidelity = 0.0;
  double pol_a = 0.0;
  double pol_b = 0.0;
  double delay_ps = 0.0;
};

/// Flat comma-separated table of a series, one row per sample.
inline std::string series_csv(const std::vector<SeriesRow>& series) {
  std::ostringstream out;
  out << std::setprecision(12);
  out << "t,request,state,launch_power_dbm,car,singles_a,singles_b,coincidence_rate,v_eff,fidelity,pol_a,pol_b,"
         "delay_ps\n";
  for (const auto& r : series) {
    out << r.t << ',' << r.request << ',' << r.state << ',' << r.launch_power_dbm << ',';
    if (std::isfinite(r.car))
      out << r.car;
    else
      out << "inf";
    out << ',' << r.singles_a << ',' << r.singles_b << ',' << r.coincidence_rate << ',' << r.v_eff << ','
        << r.fidelity << ',' << r.pol_a << ',' << r.pol_b << ',' << r.delay_ps << '\n';
  }
  return out.str();
}

/// Inverse of the report's "series" array; nulls stand for infinities.
inline std::vector<SeriesRow> series_from_json(const nlohmann::json& rows) {
  auto num = [](const nlohmann::json& j, const char* key, double null_value) {
    return j.at(key).is_null() ? null_value : j.at(key).get<double>();
  };
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<SeriesRow> out;
  for (const auto& j : rows) {
    SeriesRow r;
    r.t = j.at("t");
    r.request = j.at("request");
    r.state = j.at("state");
    r.launch_power_dbm = num(j, "launch_power_dbm", -inf);
    r.car = num(j, "car", inf);
    r.singles_a = j.at("singles_a");
    r.singles_b = j.at("singles_b");
    r.coincidence_rate = j.at("coincidence_rate");
    r.v_eff = j.at("v_eff");
    r.fidelity = j.at("fidelity");
    r.pol_a = j.at("pol_a");
    r.pol_b = j.at("pol_b");
    r.delay_ps = j.at("delay_ps");
    out.push_back(std::move(r));
  }
  return out;
}

struct ScenarioReport {
  nlohmann::json document;
  std::vector<SeriesRow> series;

  std::string to_text() const { return document.dump(2) + "\n"; }
  std::string series_csv() const { return ieqnet::series_csv(series); }
};

namespace detail {

inline nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

inline nlohmann::json to_json(const SeriesRow& r) {
  return {{"t", r.t},
          {"request", r.request},
          {"state", r.state},
          {"launch_power_dbm", number_or_null(r.launch_power_dbm)},
          {"car", number_or_null(r.car)},
          {"singles_a", r.singles_a},
          {"singles_b", r.singles_b},
          {"coincidence_rate", r.coincidence_rate},
          {"v_eff", r.v_eff},
          {"fidelity", r.fidelity},
          {"pol_a", r.pol_a},
          {"pol_b", r.pol_b},
          {"delay_ps", r.delay_ps}};
}

}  // namespace detail

/// Runs a scenario to completion. Periodic processes stop at duration_s;
/// requests still in flight then get up to drain_s more simulated seconds.
class ScenarioRunner {
public:
  explicit ScenarioRunner(Scenario scenario) : s_(std::move(scenario)), plant_(s_.topology) {}

  ScenarioReport run(std::optional<std::uint64_t> seed_override = std::nullopt) {
    const std::uint64_t seed = seed_override.value_or(s_.seed);
    cp_ = std::make_unique<ControlPlane>(engine_, plant_, s_.profile, s_.config, s_.servos, seed);
    for (const auto& lp : s_.launch_powers) plant_.set_launch_power(lp.link, lp.dbm);

    nlohmann::json discovery;
    try {
      const auto& topo = cp_->run_discovery();
      discovery = {{"version", topo.version()}, {"nodes", topo.nodes().size()}, {"links", topo.links().size()}};
    } catch (const DiscoveryError& e) {
      discovery = {{"error", e.what()}};
    }
    nlohmann::json resources = nlohmann::json::array();
    for (const auto& [id, r] : cp_->server().resources())
      resources.push_back({{"id", id}, {"state", to_string(r.state)}, {"diagnostic", r.diagnostic}});
    discovery["resources"] = resources;
    initial_occupancy_ = cp_->server().topology().total_occupancy();

    const double t0 = engine_.now();
    end_time_ = t0 + s_.duration_s;
    for (std::size_t i = 0; i < s_.requests.size(); ++i) {
      engine_.schedule(t0 + s_.requests[i].at, EventKind::Timer, "scenario", [this, i] { submit(i); });
    }
    for (std::size_t i = 0; i < s_.drifts.size(); ++i) schedule_drift(i);
    for (const auto* loop : {s_.servos.polarization ? &*s_.servos.polarization : nullptr,
                             s_.servos.hom ? &*s_.servos.hom : nullptr})
      if (loop) schedule_servo(*loop);
    for (std::size_t i = 0; i < s_.faults.size(); ++i)
      engine_.schedule(t0 + s_.faults[i].at, EventKind::FaultInject, s_.faults[i].target, [this, i] { inject(i); });
    schedule_sample(t0);

    engine_.run_until(end_time_);
    const double drain_until = end_time_ + s_.drain_s;
    while (!all_terminal() && !engine_.empty() && engine_.next_time() <= drain_until) engine_.step();

    return build_report(seed, discovery);
  }

  ControlPlane& control_plane() { return *cp_; }
  Plant& plant() { return plant_; }
  Engine& engine() { return engine_; }
  std::size_t initial_occupancy() const { return initial_occupancy_; }

  /// Applies a fault to the plant now and lets the agent report it.
  void inject_fault(const Fault& f) {
    auto& fabric = plant_.fabric();
    TopologyDelta delta;
    switch (f.type) {
      case FaultType::LinkLossIncrease: {
        if (!fabric.find_link(f.target)) throw std::invalid_argument("unknown link '" + f.target + "'");
        const double extra = fabric.link(f.target).extra_loss_db + f.value;
        fabric.set_extra_loss(f.target, extra);
        delta.extra_loss[f.target] = extra;
        break;
      }
      case FaultType::LinkDown:
        if (!fabric.find_link(f.target)) throw std::invalid_argument("unknown link '" + f.target + "'");
        fabric.remove_link(f.target);
        delta.remove_links.push_back(f.target);
        break;
      case FaultType::NodeDown:
        if (!fabric.find_node(f.target)) throw std::invalid_argument("unknown node '" + f.target + "'");
        fabric.remove_node(f.target);
        cp_->set_resource_responsive(f.target, false);
        delta.remove_nodes.push_back(f.target);
        break;
      case FaultType::PowerStep:
        if (!fabric.find_link(f.target)) throw std::invalid_argument("unknown link '" + f.target + "'");
        plant_.set_launch_power(f.target, f.value);
        break;
    }
    if (!delta.empty()) cp_->notify_topology_change(delta);
  }

private:
  bool all_terminal() const {
    for (const auto& id : cp_->server().request_order())
      if (!is_terminal(cp_->server().request(id).state)) return false;
    return true;
  }

  void submit(std::size_t i) {
    const auto& q = s_.requests[i];
    try {
      submitted_.push_back(cp_->submit(q.user, q.qnode_a, q.qnode_b, q.requirements));
    } catch (const RequestError& e) {
      rejected_.push_back({{"index", i}, {"at", engine_.now()}, {"code", e.code()}, {"message", e.what()}});
    }
  }

  void schedule_drift(std::size_t i) {
    const auto& d = s_.drifts[i];
    engine_.after(d.interval_s, EventKind::DriftStep, d.target, [this, i] {
      if (engine_.now() > end_time_) return;
      const auto& p = s_.drifts[i];
      const double sigma = p.sigma * std::sqrt(p.interval_s);
      auto step = [&](const std::string& link) {
        auto& drift = plant_.drift(link);
        const double dx = cp_->random().normal(cp_->random().drift, sigma);
        if (p.quantity == DriftQuantity::PolarizationOffset)
          drift.polarization_rad += dx;
        else
          drift.delay_ps += dx;
      };
      if (p.target == "*") {
        for (const auto& [id, l] : plant_.fabric().links()) step(id);
      } else if (plant_.fabric().find_link(p.target)) {
        step(p.target);
      }
      schedule_drift(i);
    });
  }

  void schedule_servo(const ServoLoop& loop) {
    engine_.after(loop.period_s, EventKind::ServoStep, to_string(loop.observable), [this, loop] {
      if (engine_.now() > end_time_) return;
      cp_->servo_tick(loop);
      schedule_servo(loop);
    });
  }

  void inject(std::size_t i) {
    const auto& f = s_.faults[i];
    bool applied = true;
    try {
      inject_fault(f);
    } catch (const std::invalid_argument&) {
      applied = false;  // target already gone
    }
    faults_log_.push_back({{"at", engine_.now()}, {"type", to_string(f.type)}, {"target", f.target},
                           {"value", f.value}, {"applied", applied}});
  }

  void schedule_sample(double at) {
    engine_.schedule(at, EventKind::Timer, "sampler", [this, at] {
      sample();
      const double next = at + s_.sample_interval_s;
      if (next <= end_time_ + 1e-9) schedule_sample(next);
    });
  }

  void sample() {
    for (const auto& id : cp_->server().request_order()) {
      const auto& rec = cp_->server().request(id);
      if (rec.state != RequestState::Distributing && rec.state != RequestState::Recalibrating) continue;
      const auto m = cp_->metrics(id);
      if (!m) continue;
      SeriesRow row;
      row.t = engine_.now();
      row.request = id;
      row.state = to_string(rec.state);
      double power = -std::numeric_limits<double>::infinity();
      for (const auto* leg : request_legs(rec.routes))
        power = std::max(power, plant_.copropagating_power_dbm(*leg));
      row.launch_power_dbm = power;
      row.car = m->stats.car;
      row.singles_a = m->stats.singles_a;
      row.singles_b = m->stats.singles_b;
      row.coincidence_rate = m->stats.true_coinc + m->stats.accidentals;
      row.v_eff = m->visibility;
      row.fidelity = m->fidelity;
      if (m->polarization_offsets.size() >= 2) {
        row.pol_a = m->polarization_offsets[0];
        row.pol_b = m->polarization_offsets[m->polarization_offsets.size() >= 4 ? 2 : 1];
      }
      row.delay_ps = m->delay_offset_ps;
      series_.push_back(row);
    }
  }

  ScenarioReport build_report(std::uint64_t seed, nlohmann::json discovery) {
    ScenarioReport rep;
    auto& server = cp_->server();
    nlohmann::json requests = nlohmann::json::array();
    std::size_t completed = 0, failed = 0;
    double fid_sum = 0, vis_sum = 0;
    std::size_t rows = 0;
    double min_car = std::numeric_limits<double>::infinity();
    for (const auto& id : server.request_order()) {
      const auto& rec = server.request(id);
      auto j = server.status_document(rec);
      nlohmann::json ms = nlohmann::json::array();
      for (const auto& m : rec.measurements) ms.push_back(to_json(m));
      j["measurements"] = ms;
      requests.push_back(std::move(j));
      if (rec.state == RequestState::Completed) ++completed;
      if (rec.state == RequestState::Failed) ++failed;
    }
    for (const auto& r : series_) {
      fid_sum += r.fidelity;
      vis_sum += r.v_eff;
      min_car = std::min(min_car, r.car);
      ++rows;
    }
    nlohmann::json trace = nlohmann::json::array();
    for (const auto& e : cp_->trace().entries())
      trace.push_back(
          {{"t", e.time}, {"actor", e.actor}, {"kind", e.kind}, {"topic", e.topic}, {"correlation_id", e.correlation_id}});
    nlohmann::json series = nlohmann::json::array();
    for (const auto& r : series_) series.push_back(detail::to_json(r));

    auto& doc = rep.document;
    doc["seed"] = seed;
    doc["profile"] = s_.profile.name;
    doc["topology"] = s_.topology_source;
    doc["duration_s"] = s_.duration_s;
    doc["end_time_s"] = engine_.now();
    doc["discovery"] = std::move(discovery);
    doc["requests"] = std::move(requests);
    doc["rejected"] = rejected_;
    doc["faults"] = faults_log_;
    doc["warnings"] = server.warnings();
    doc["initial_occupancy"] = initial_occupancy_;
    doc["final_occupancy"] = server.topology().total_occupancy();
    doc["final_topology_version"] = server.topology().version();
    doc["summary"] = {{"requests", server.request_order().size()},
                      {"completed", completed},
                      {"failed", failed},
                      {"rejected", rejected_.size()},
                      {"samples", rows},
                      {"min_car", detail::number_or_null(rows ? min_car : std::nan(""))},
                      {"mean_fidelity", rows ? fid_sum / static_cast<double>(rows) : 0.0},
                      {"mean_v_eff", rows ? vis_sum / static_cast<double>(rows) : 0.0}};
    doc["series"] = std::move(series);
    doc["trace"] = std::move(trace);
    rep.series = series_;
    return rep;
  }

  Scenario s_;
  Engine engine_;
  Plant plant_;
  std::unique_ptr<ControlPlane> cp_;
  double end_time_ = 0.0;
  std::size_t initial_occupancy_ = 0;
  std::vector<std::string> submitted_;
  nlohmann::json rejected_ = nlohmann::json::array();
  nlohmann::json faults_log_ = nlohmann::json::array();
  std::vector<SeriesRow> series_;
};

/// Runs a scenario with its own seed or an override.
inline ScenarioReport run_scenario(const Scenario& scenario, std::optional<std::uint64_t> seed = std::nullopt) {
  ScenarioRunner runner(scenario);
  return runner.run(seed);
}

}  // namespace ieqnet
