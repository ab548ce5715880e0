#pragma once

// Q-NET server, SDN agent and resource actors. Every interaction between
// them goes over the bus; the plant is the physical world they observe.
//
// Topic grammar:
//   qnet/register                       resource -> server
//   qnet/topology/{request,response}    server <-> agent
//   qnet/topology/change                agent -> server
//   qnet/verify/{req,resp}              server <-> agent
//   qnet/req/<id>/<leaf>                per-request traffic, leaf in
//     submit analyze paths verify calibrate ready start measurement end stop stored

#include "ieqnet/bus.hpp"
#include "ieqnet/engine.hpp"
#include "ieqnet/plant.hpp"
#include "ieqnet/profile.hpp"
#include "ieqnet/protocol.hpp"
#include "ieqnet/rwa.hpp"
#include "ieqnet/servo.hpp"
#include "ieqnet/store.hpp"
#include "ieqnet/topology.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace ieqnet {

class DiscoveryError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Rejected submission. `code` is one of unknown_qnode, invalid_requirements,
/// not_ready.
class RequestError : public std::runtime_error {
public:
  RequestError(std::string code, std::string message, std::vector<std::string> fields = {})
      : std::runtime_error(message), code_(std::move(code)), fields_(std::move(fields)) {}
  const std::string& code() const { return code_; }
  const std::vector<std::string>& fields() const { return fields_; }

private:
  std::string code_;
  std::vector<std::string> fields_;
};

class DeltaError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Servo loops the resources run during calibration and distribution. An
/// absent loop means that quantity is never corrected.
struct ServoSet {
  std::optional<ServoLoop> polarization;
  std::optional<ServoLoop> hom;
  double hom_baseline_counts = 1e5;  // counts per HOM sample
};

struct ControlPlaneConfig {
  double verify_tolerance_db = 1.0;
  double recal_period_s = 30.0;
  double ready_timeout_s = 10.0;
  double end_timeout_s = 30.0;
  int calibration_retries = 3;
  double calibration_step_s = 0.1;  // simulated time per servo step
  double discovery_settle_s = 0.01;
  double discovery_timeout_s = 5.0;
  double batch_interval_s = 1.0;
  bool queue_when_busy = false;
  bool allocate_clock_paths = true;
  WeightCoefficients weights;
};

struct TopologyDelta {
  std::vector<std::string> remove_links;
  std::vector<std::string> remove_nodes;
  std::vector<Node> add_nodes;
  std::map<std::string, double> extra_loss;  // link -> new extra loss, dB

  bool empty() const { return remove_links.empty() && remove_nodes.empty() && add_nodes.empty() && extra_loss.empty(); }
};

inline nlohmann::json to_json(const TopologyDelta& d) {
  nlohmann::json added = nlohmann::json::array();
  for (const auto& n : d.add_nodes) added.push_back(node_to_json(n));
  return {{"remove_links", d.remove_links},
          {"remove_nodes", d.remove_nodes},
          {"add_nodes", added},
          {"extra_loss", d.extra_loss}};
}

inline TopologyDelta delta_from_json(const nlohmann::json& j) {
  TopologyDelta d;
  d.remove_links = j.value("remove_links", std::vector<std::string>{});
  d.remove_nodes = j.value("remove_nodes", std::vector<std::string>{});
  for (const auto& n : j.value("add_nodes", nlohmann::json::array())) d.add_nodes.push_back(node_from_json(n));
  d.extra_loss = j.value("extra_loss", std::map<std::string, double>{});
  return d;
}

namespace topics {
inline const std::string kRegister = "qnet/register";
inline const std::string kTopologyRequest = "qnet/topology/request";
inline const std::string kTopologyResponse = "qnet/topology/response";
inline const std::string kTopologyChange = "qnet/topology/change";
inline const std::string kVerifyReq = "qnet/verify/req";
inline const std::string kVerifyResp = "qnet/verify/resp";
inline std::string req(const std::string& id, const char* leaf) { return "qnet/req/" + id + "/" + leaf; }
inline std::string req_filter(const char* leaf) { return std::string("qnet/req/+/") + leaf; }
}  // namespace topics

inline constexpr const char* kServerId = "qnet-server";
inline constexpr const char* kAgentId = "sdn-agent";

/// Everything the actors share: clock, bus, trace, physical plant, physics
/// presets and random streams.
struct Runtime {
  Engine& engine;
  Bus& bus;
  Trace& trace;
  Plant& plant;
  const PhysicsProfile& profile;
  const ControlPlaneConfig& config;
  const ServoSet& servos;
  RandomStreams& rng;

  void local(const std::string& actor, const std::string& kind, const std::string& correlation = {}) {
    trace.add({engine.now(), actor, kind, "", correlation});
  }
};

namespace detail {

inline nlohmann::json routes_to_json(const std::vector<EntanglementRoute>& routes) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : routes) out.push_back(to_json(r));
  return out;
}

inline std::vector<EntanglementRoute> routes_from_json(const nlohmann::json& j) {
  std::vector<EntanglementRoute> out;
  for (const auto& r : j) out.push_back(route_from_json(r));
  return out;
}

inline std::string claim_of(const std::string& port, const std::string& tag) { return port + "->" + tag; }

inline double finite_or(double v, double fallback) { return std::isfinite(v) ? v : fallback; }

}  // namespace detail

/// The SDN agent: owns the switch fabric, discovers links from switch port
/// configuration and verifies connectivity claims.
class SdnAgent {
public:
  explicit SdnAgent(Runtime& rt) : rt_(rt) {
    rt_.bus.subscribe(topics::kTopologyRequest, kAgentId, [this](const BusMessage& m) { on_topology_request(m); });
    rt_.bus.subscribe(topics::kVerifyReq, kAgentId, [this](const BusMessage& m) { on_verify(m); });
    rt_.bus.subscribe(topics::req_filter("paths"), kAgentId, [this](const BusMessage& m) { on_paths(m); });
  }

  void set_reachable(bool reachable) { reachable_ = reachable; }
  bool reachable() const { return reachable_; }

  /// Reads the fabric: fibers are inventoried, and a fiber ending on a switch
  /// counts only when that switch port is configured for the far end.
  void discover_links() {
    rt_.local(kAgentId, "DiscoverLinks");
    links_.clear();
    switches_.clear();
    const auto& fabric = rt_.plant.fabric();
    for (const auto& [id, n] : fabric.nodes())
      if (n.kind == NodeKind::OpticalSwitch) switches_.push_back(n);
    for (const auto& [id, l] : fabric.links()) {
      bool ok = true;
      for (const auto& [near, far] : {std::pair{l.a, l.b}, std::pair{l.b, l.a}}) {
        const auto& n = fabric.node(near.node);
        if (n.kind != NodeKind::OpticalSwitch) continue;
        const auto* port = n.find_port(near.port);
        if (!port || port->tag != to_string(far)) ok = false;
      }
      if (ok) links_.push_back(l);
    }
  }

  bool confirms(const PortRef& near, const PortRef& far) const {
    for (const auto& l : links_)
      if ((l.a == near && l.b == far) || (l.b == near && l.a == far)) return true;
    return false;
  }

  /// Reports a fabric change to the server.
  void notify(const TopologyDelta& delta) {
    rt_.local(kAgentId, "DetectChange");
    rt_.bus.publish(topics::kTopologyChange, kAgentId, "", MessageKind::TopologyChange, to_json(delta));
  }

private:
  void on_topology_request(const BusMessage& m) {
    if (!reachable_) return;
    nlohmann::json sw = nlohmann::json::array(), links = nlohmann::json::array();
    for (const auto& n : switches_) sw.push_back(node_to_json(n));
    for (const auto& l : links_) links.push_back(link_to_json(l));
    rt_.bus.publish(topics::kTopologyResponse, kAgentId, m.correlation_id, MessageKind::TopologyResponse,
                    {{"switches", sw}, {"links", links}});
  }

  void on_verify(const BusMessage& m) {
    if (!reachable_) return;
    const auto resource = m.payload.at("resource").get<std::string>();
    nlohmann::json unconfirmed = nlohmann::json::array();
    for (const auto& c : m.payload.at("claims")) {
      const auto claim = c.get<std::string>();
      const auto arrow = claim.find("->");
      const auto far = arrow == std::string::npos ? std::nullopt : parse_tag(claim.substr(arrow + 2));
      if (!far || !confirms({resource, claim.substr(0, arrow)}, *far)) unconfirmed.push_back(claim);
    }
    rt_.bus.publish(topics::kVerifyResp, kAgentId, m.correlation_id, MessageKind::VerifyResponse,
                    {{"resource", resource}, {"verified", unconfirmed.empty()}, {"unconfirmed", unconfirmed}});
  }

  void on_paths(const BusMessage& m) {
    if (!reachable_) return;
    if (m.kind == MessageKind::PathSetup) {
      rt_.local(kAgentId, "ConfigureSwitches", m.correlation_id);
      rt_.bus.publish(m.topic, kAgentId, m.correlation_id, MessageKind::PathEstablished, m.payload);
    } else if (m.kind == MessageKind::PathTeardown) {
      rt_.local(kAgentId, "ReleaseSwitches", m.correlation_id);
    }
  }

  Runtime& rt_;
  bool reachable_ = true;
  std::vector<Node> switches_;
  std::vector<FiberLink> links_;
};

/// A Q-node, EPS or BSM: registers itself, answers probes, runs its servos
/// and, as the first Q-node of a request, produces measurement batches.
class ResourceActor {
public:
  ResourceActor(Runtime& rt, Node config) : rt_(rt), config_(std::move(config)) {
    const auto& id = config_.id;
    rt_.bus.subscribe(topics::req_filter("paths"), id, [this](const BusMessage& m) { on_paths(m); });
    rt_.bus.subscribe(topics::req_filter("verify"), id, [this](const BusMessage& m) { on_verify(m); });
    rt_.bus.subscribe(topics::req_filter("calibrate"), id, [this](const BusMessage& m) { on_calibrate(m); });
    rt_.bus.subscribe(topics::req_filter("start"), id, [this](const BusMessage& m) { on_start(m); });
    rt_.bus.subscribe(topics::req_filter("measurement"), id, [this](const BusMessage& m) { on_measurement(m); });
    rt_.bus.subscribe(topics::req_filter("stop"), id, [this](const BusMessage& m) { on_stop(m); });
    rt_.bus.subscribe(topics::req_filter("stored"), id, [this](const BusMessage& m) { contexts_.erase(m.correlation_id); });
  }

  const std::string& id() const { return config_.id; }
  const Node& config() const { return config_; }

  /// A down or unresponsive resource ignores all traffic.
  void set_responsive(bool r) {
    responsive_ = r;
    if (!r)
      for (auto& [id, ctx] : contexts_) stop_batches(ctx);
  }
  bool responsive() const { return responsive_; }

  void load_config() { rt_.local(id(), "LoadConfig"); }

  void register_self() {
    if (!responsive_) return;
    nlohmann::json claims = nlohmann::json::array();
    for (const auto& p : config_.ports)
      if (!p.tag.empty()) claims.push_back(detail::claim_of(p.id, p.tag));
    rt_.bus.publish(topics::kRegister, id(), id(), MessageKind::Register,
                    {{"node", node_to_json(config_)}, {"connectivity", claims}});
  }

  /// One continuous servo iteration on every request being distributed.
  void servo_tick(const ServoLoop& loop) {
    if (!responsive_) return;
    for (auto& [rid, ctx] : contexts_)
      if (ctx.distributing) apply_servo(ctx, loop, 1);
  }

private:
  struct Context {
    std::string request;
    std::vector<EntanglementRoute> routes;
    std::string qnode_a, qnode_b, bsm;
    double rate = 0.0;
    double target_ebits = 0.0;
    double ebits = 0.0;
    bool end_sent = false;
    bool distributing = false;
    std::uint64_t batch_timer = 0;
  };

  std::vector<std::size_t> my_legs(const Context& ctx) const {
    std::vector<std::size_t> out;
    const auto legs = request_legs(ctx.routes);
    for (std::size_t i = 0; i < legs.size(); ++i)
      if (legs[i]->target == id()) out.push_back(i);
    return out;
  }

  Context* context(const BusMessage& m) {
    if (!responsive_) return nullptr;
    auto it = contexts_.find(m.correlation_id);
    return it == contexts_.end() ? nullptr : &it->second;
  }

  void on_paths(const BusMessage& m) {
    if (!responsive_ || m.kind != MessageKind::PathNotify) return;
    const auto& p = m.payload;
    auto entities = p.at("entities").get<std::vector<std::string>>();
    if (std::find(entities.begin(), entities.end(), id()) == entities.end()) return;
    Context ctx;
    ctx.request = m.correlation_id;
    ctx.routes = detail::routes_from_json(p.at("routes"));
    ctx.qnode_a = p.at("qnode_a").get<std::string>();
    ctx.qnode_b = p.at("qnode_b").get<std::string>();
    ctx.bsm = p.value("bsm", "");
    ctx.rate = p.at("rate").get<double>();
    ctx.target_ebits = p.at("target_ebits").get<double>();
    auto& comp = rt_.plant.compensation(ctx.request);
    comp.polarization_rad.resize(request_legs(ctx.routes).size(), 0.0);
    rt_.local(id(), "ConfigurePaths", ctx.request);
    contexts_[ctx.request] = std::move(ctx);
  }

  void on_verify(const BusMessage& m) {
    auto* ctx = context(m);
    if (!ctx || m.kind != MessageKind::ProbeRequest) return;
    const auto mine = my_legs(*ctx);
    if (mine.empty()) return;
    const auto legs = request_legs(ctx->routes);
    nlohmann::json results = nlohmann::json::array();
    for (auto i : mine) {
      const double loss = rt_.plant.measured_loss_db(*legs[i]);
      results.push_back({{"leg", i}, {"measured_loss_db", std::isfinite(loss) ? nlohmann::json(loss) : nlohmann::json()}});
    }
    rt_.bus.publish(topics::req(ctx->request, "verify"), id(), ctx->request, MessageKind::ProbeResult,
                    {{"entity", id()}, {"legs", results}});
  }

  /// Applies up to `budget` steps of one loop to the quantities this entity
  /// compensates. Returns the number of steps taken and whether every
  /// residual ended within tolerance.
  std::pair<int, bool> apply_servo(Context& ctx, const ServoLoop& loop, int budget) {
    auto& comp = rt_.plant.compensation(ctx.request);
    comp.polarization_rad.resize(request_legs(ctx.routes).size(), 0.0);
    RouteEvaluator eval(rt_.profile, rt_.plant);
    int steps = 0;
    bool ok = true;
    if (loop.observable == ServoObservable::PolarizationVisibility) {
      for (auto i : my_legs(ctx)) {
        int n = 0;
        double r = eval.residual_polarization(ctx.routes, i, comp);
        while (std::abs(r) >= loop.tolerance && n < budget) {
          const double next = polarization_servo_step(r, loop);
          comp.polarization_rad[i] += r - next;
          r = eval.residual_polarization(ctx.routes, i, comp);
          ++n;
        }
        steps = std::max(steps, n);
        ok = ok && std::abs(r) < loop.tolerance;
      }
    } else if (id() == ctx.bsm && ctx.routes.size() == 2) {
      auto sample = [this](double expected) {
        return static_cast<double>(std::poisson_distribution<std::uint64_t>(std::max(expected, 1e-9))(rt_.rng.servo));
      };
      double d = eval.residual_delay(ctx.routes, comp);
      while (std::abs(d) >= loop.tolerance && steps < budget) {
        const double next = hom_servo_step(d, loop, rt_.profile.hom, rt_.servos.hom_baseline_counts, sample);
        comp.delay_ps += d - next;
        d = eval.residual_delay(ctx.routes, comp);
        ++steps;
      }
      ok = std::abs(d) < loop.tolerance;
    }
    return {steps, ok};
  }

  void on_calibrate(const BusMessage& m) {
    auto* ctx = context(m);
    if (!ctx || m.kind != MessageKind::CalibrateRequest) return;
    if (ctx->distributing) {
      ctx->distributing = false;
      stop_batches(*ctx);
    }
    rt_.local(id(), "Calibrate", ctx->request);
    int steps = 0;
    bool ok = true;
    const int attempts = 1 + std::max(0, rt_.config.calibration_retries);
    for (const auto* loop : {rt_.servos.polarization ? &*rt_.servos.polarization : nullptr,
                             rt_.servos.hom ? &*rt_.servos.hom : nullptr}) {
      if (!loop) continue;
      bool loop_ok = false;
      for (int a = 0; a < attempts && !loop_ok; ++a) {
        auto [n, done] = apply_servo(*ctx, *loop, loop->step_budget);
        steps += n;
        loop_ok = done;
      }
      ok = ok && loop_ok;
    }
    const std::string rid = ctx->request;
    const auto kind = ok ? MessageKind::Ready : MessageKind::CalibrationFailed;
    const char* leaf = ok ? "ready" : "calibrate";
    rt_.engine.after(steps * rt_.config.calibration_step_s, EventKind::Timer, id(), [this, rid, kind, leaf] {
      if (!responsive_ || !contexts_.count(rid)) return;
      rt_.bus.publish(topics::req(rid, leaf), id(), rid, kind, {{"entity", id()}});
    });
  }

  void on_start(const BusMessage& m) {
    auto* ctx = context(m);
    if (!ctx || m.kind != MessageKind::StartDistribution) return;
    ctx->distributing = true;
    if (id() == ctx->qnode_a && !ctx->end_sent) schedule_batch(*ctx);
  }

  void schedule_batch(Context& ctx) {
    const std::string rid = ctx.request;
    ctx.batch_timer = rt_.engine.after(rt_.config.batch_interval_s, EventKind::MeasurementBatch, id(),
                                       [this, rid] { emit_batch(rid); });
  }

  void stop_batches(Context& ctx) {
    if (ctx.batch_timer) rt_.engine.cancel(ctx.batch_timer);
    ctx.batch_timer = 0;
  }

  void emit_batch(const std::string& rid) {
    auto it = contexts_.find(rid);
    if (it == contexts_.end() || !responsive_) return;
    auto& ctx = it->second;
    ctx.batch_timer = 0;
    if (!ctx.distributing || ctx.end_sent) return;
    const double dt = rt_.config.batch_interval_s;
    RouteEvaluator eval(rt_.profile, rt_.plant);
    const auto m = eval.evaluate(ctx.routes, rt_.plant.compensation(rid), detector_of(ctx.qnode_a),
                                 detector_of(ctx.qnode_b));
    const auto acc = rt_.rng.poisson(m.stats.accidentals * dt);
    const auto coinc = rt_.rng.poisson(m.stats.true_coinc * dt) + acc;
    const auto ebits = rt_.rng.poisson(std::min(m.ebit_rate, ctx.rate) * dt);
    nlohmann::json pol = nlohmann::json::array();
    for (double p : m.polarization_offsets) pol.push_back(p);
    rt_.bus.publish(topics::req(rid, "measurement"), id(), rid, MessageKind::MeasurementBatch,
                    {{"t", rt_.engine.now()},
                     {"interval_s", dt},
                     {"coincidences", coinc},
                     {"accidentals", acc},
                     {"ebits", ebits},
                     {"car", detail::finite_or(m.stats.car, -1.0)},
                     {"visibility", m.visibility},
                     {"fidelity", m.fidelity},
                     {"polarization_offsets", pol},
                     {"delay_offset_ps", m.delay_offset_ps}});
    schedule_batch(ctx);
  }

  std::string detector_of(const std::string& node) const {
    const auto* n = rt_.plant.fabric().find_node(node);
    return n && n->features.qnode ? n->features.qnode->detector : "default";
  }

  void on_measurement(const BusMessage& m) {
    auto* ctx = context(m);
    if (!ctx || (id() != ctx->qnode_a && id() != ctx->qnode_b)) return;
    ctx->ebits += m.payload.value("ebits", 0.0);
    if (!ctx->end_sent && ctx->ebits >= ctx->target_ebits) {
      ctx->end_sent = true;
      if (id() == ctx->qnode_a) stop_batches(*ctx);
      rt_.bus.publish(topics::req(ctx->request, "end"), id(), ctx->request, MessageKind::End,
                      {{"entity", id()}, {"ebits", ctx->ebits}});
    }
  }

  void on_stop(const BusMessage& m) {
    auto* ctx = context(m);
    if (!ctx) return;
    ctx->distributing = false;
    stop_batches(*ctx);
    if (config_.kind == NodeKind::EPS) rt_.local(id(), "PumpOff", ctx->request);
  }

  Runtime& rt_;
  Node config_;
  bool responsive_ = true;
  std::map<std::string, Context> contexts_;
};

/// The logically centralized Q-NET server.
class QNetServer {
public:
  using TransitionObserver = std::function<void(const RequestRecord&, const Transition&)>;
  using MeasurementObserver = std::function<void(const RequestRecord&, const MeasurementRow&)>;
  using TopologyObserver = std::function<void(const Topology&)>;

  QNetServer(Runtime& rt, MeasurementStore& store) : rt_(rt), store_(store) {
    auto& bus = rt_.bus;
    bus.subscribe(topics::kRegister, kServerId, [this](const BusMessage& m) { on_register(m); });
    bus.subscribe(topics::kTopologyResponse, kServerId, [this](const BusMessage& m) { on_topology_response(m); });
    bus.subscribe(topics::kVerifyResp, kServerId, [this](const BusMessage& m) { on_verify_response(m); });
    bus.subscribe(topics::kTopologyChange, kServerId, [this](const BusMessage& m) { on_topology_change(m); });
    bus.subscribe(topics::req_filter("submit"), kServerId, [this](const BusMessage& m) { on_submit(m); });
    bus.subscribe(topics::req_filter("paths"), kServerId, [this](const BusMessage& m) { on_paths(m); });
    bus.subscribe(topics::req_filter("verify"), kServerId, [this](const BusMessage& m) { on_probe_result(m); });
    bus.subscribe(topics::req_filter("calibrate"), kServerId, [this](const BusMessage& m) { on_calibrate(m); });
    bus.subscribe(topics::req_filter("ready"), kServerId, [this](const BusMessage& m) { on_ready(m); });
    bus.subscribe(topics::req_filter("measurement"), kServerId, [this](const BusMessage& m) { on_measurement(m); });
    bus.subscribe(topics::req_filter("end"), kServerId, [this](const BusMessage& m) { on_end(m); });
  }

  // ---- discovery -------------------------------------------------------

  enum class DiscoveryPhase { Idle, Collecting, AwaitingTopology, Verifying, Done, Failed };

  void begin_discovery() {
    phase_ = DiscoveryPhase::Collecting;
    registrations_.clear();
    pending_verify_.clear();
    agent_switches_.clear();
    agent_links_.clear();
    discovery_error_.clear();
    ++discovery_round_;
    const auto round = discovery_round_;
    rt_.engine.after(rt_.config.discovery_settle_s, EventKind::Timer, kServerId, [this, round] {
      if (round != discovery_round_ || phase_ != DiscoveryPhase::Collecting) return;
      phase_ = DiscoveryPhase::AwaitingTopology;
      rt_.bus.publish(topics::kTopologyRequest, kServerId, "discovery", MessageKind::TopologyRequest);
    });
    rt_.engine.after(rt_.config.discovery_timeout_s, EventKind::Timer, kServerId, [this, round] {
      if (round != discovery_round_ || phase_ == DiscoveryPhase::Done) return;
      phase_ = DiscoveryPhase::Failed;
      discovery_error_ = "SDN agent unreachable: discovery timed out";
      rt_.local(kServerId, "DiscoveryFailed");
    });
  }

  DiscoveryPhase discovery_phase() const { return phase_; }
  const std::string& discovery_error() const { return discovery_error_; }

  const Topology& topology() const { return topology_; }
  const std::map<std::string, ResourceRecord>& resources() const { return resources_; }
  const RouteBook& route_book() const { return book_; }

  // ---- requests --------------------------------------------------------

  /// Validates and records a request, then publishes it on behalf of `user`.
  std::string submit(const std::string& user, const std::string& qnode_a, const std::string& qnode_b,
                     const Requirements& req) {
    auto bad = req.invalid_fields();
    if (!bad.empty()) {
      std::string msg = "invalid requirements:";
      for (const auto& f : bad) msg += " " + f;
      throw RequestError("invalid_requirements", msg, bad);
    }
    for (const auto& q : {qnode_a, qnode_b}) {
      const auto* n = topology_.find_node(q);
      auto rit = resources_.find(q);
      if (!n || n->kind != NodeKind::QNode || rit == resources_.end() || rit->second.state != ResourceState::Verified)
        throw RequestError("unknown_qnode", "unknown or unverified Q-node '" + q + "'");
    }
    if (qnode_a == qnode_b) throw RequestError("invalid_requirements", "Q-nodes must differ", {"qnode_b"});
    RequestRecord rec;
    rec.id = "r-" + std::to_string(++request_counter_);
    rec.user = user;
    rec.qnode_a = qnode_a;
    rec.qnode_b = qnode_b;
    rec.requirements = req;
    rec.submitted_at = rt_.engine.now();
    const auto id = rec.id;
    order_.push_back(id);
    requests_[id] = std::move(rec);
    runtime_[id];
    rt_.bus.publish(topics::req(id, "submit"), user, id, MessageKind::Submit,
                    {{"qnode_a", qnode_a}, {"qnode_b", qnode_b}, {"requirements", to_json(req)}});
    return id;
  }

  const RequestRecord& request(const std::string& id) const {
    auto it = requests_.find(id);
    if (it == requests_.end()) throw std::out_of_range("unknown request '" + id + "'");
    return it->second;
  }
  const RequestRecord* find_request(const std::string& id) const {
    auto it = requests_.find(id);
    return it == requests_.end() ? nullptr : &it->second;
  }
  /// Keeps newly issued request ids above `n`, e.g. after restoring
  /// requests persisted by an earlier process.
  void reserve_request_ids(std::uint64_t n) { request_counter_ = std::max(request_counter_, n); }

  /// Request ids in submission order.
  const std::vector<std::string>& request_order() const { return order_; }

  bool route_live(const std::string& id) const {
    auto it = runtime_.find(id);
    return it != runtime_.end() && it->second.allocated;
  }

  const std::vector<std::string>& warnings() const { return warnings_; }

  void on_transition(TransitionObserver f) { transition_obs_.push_back(std::move(f)); }
  void on_measurement_row(MeasurementObserver f) { measurement_obs_.push_back(std::move(f)); }
  void on_topology(TopologyObserver f) { topology_obs_.push_back(std::move(f)); }

  /// Handles an END; both participating Q-nodes must report before the
  /// distribution is stopped. Non-participants are ignored with a warning.
  void collect_end_signal(const std::string& id, const std::string& entity) {
    auto& rec = requests_.at(id);
    auto& rt = runtime_.at(id);
    if (entity != rec.qnode_a && entity != rec.qnode_b) {
      warn("END for " + id + " from non-participant '" + entity + "' ignored");
      return;
    }
    if (rec.state != RequestState::Distributing && rec.state != RequestState::Recalibrating) return;
    rt.ends.insert(entity);
    if (rt.ends.size() == 2) {
      if (rec.state == RequestState::Distributing) complete(id);
      return;  // during recalibration, completion waits for the READY round
    }
    if (!rt.end_timer) {
      rt.end_timer = rt_.engine.after(rt_.config.end_timeout_s, EventKind::Timer, kServerId, [this, id] {
        runtime_.at(id).end_timer = 0;
        if (!is_terminal(requests_.at(id).state)) fail(id, "timeout");
      });
    }
  }

  /// Persists a terminal request's measurements; a failed write flags data
  /// loss instead of failing the request.
  std::optional<std::string> store_measurements(const std::string& id) {
    auto& rec = requests_.at(id);
    if (!is_terminal(rec.state)) throw std::logic_error("request '" + id + "' is not terminal");
    auto rid = store_.put_record(record_document(rec));
    rec.record_id = rid;
    rec.data_loss = !rid.has_value();
    store_.put_request(id, status_document(rec));
    return rid;
  }

  nlohmann::json record_document(const RequestRecord& rec) const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& m : rec.measurements) rows.push_back(to_json(m));
    nlohmann::json trace = nlohmann::json::array();
    for (const auto& e : rt_.trace.entries())
      if (e.correlation_id == rec.id)
        trace.push_back({{"t", e.time}, {"actor", e.actor}, {"kind", e.kind}, {"topic", e.topic}});
    double vis = 0, fid = 0, min_car = std::numeric_limits<double>::infinity();
    for (const auto& m : rec.measurements) {
      vis += m.visibility;
      fid += m.fidelity;
      min_car = std::min(min_car, m.car);
    }
    const double n = static_cast<double>(rec.measurements.size());
    nlohmann::json summary = {{"batches", rec.measurements.size()},
                              {"ebits", rec.ebits()},
                              {"mean_visibility", n > 0 ? vis / n : 0.0},
                              {"mean_fidelity", n > 0 ? fid / n : 0.0},
                              {"min_car", n > 0 && std::isfinite(min_car) ? nlohmann::json(min_car) : nlohmann::json()}};
    return {{"request_id", rec.id},
            {"user", rec.user},
            {"qnode_a", rec.qnode_a},
            {"qnode_b", rec.qnode_b},
            {"requirements", to_json(rec.requirements)},
            {"state", to_string(rec.state)},
            {"failure_reason", rec.failure_reason},
            {"measurements", rows},
            {"trace", trace},
            {"summary", summary}};
  }

  nlohmann::json status_document(const RequestRecord& rec) const {
    nlohmann::json transitions = nlohmann::json::array();
    for (const auto& t : rec.transitions)
      transitions.push_back({{"t", t.time}, {"from", to_string(t.from)}, {"to", to_string(t.to)}});
    nlohmann::json j = {{"id", rec.id},
                        {"user", rec.user},
                        {"qnode_a", rec.qnode_a},
                        {"qnode_b", rec.qnode_b},
                        {"requirements", to_json(rec.requirements)},
                        {"state", to_string(rec.state)},
                        {"failure_reason", rec.failure_reason},
                        {"submitted_at", rec.submitted_at},
                        {"transitions", transitions},
                        {"measurement_count", rec.measurements.size()},
                        {"ebits", rec.ebits()},
                        {"data_loss", rec.data_loss},
                        {"routes", detail::routes_to_json(rec.routes)},
                        {"bsm", rec.bsm}};
    if (rec.record_id) j["record_id"] = *rec.record_id;
    return j;
  }

private:
  struct RequestRuntime {
    ReadyLedger ledger;
    std::set<std::string> probes_pending;
    std::set<std::string> ends;
    std::uint64_t ready_timer = 0;
    std::uint64_t recal_timer = 0;
    std::uint64_t end_timer = 0;
    bool allocated = false;
    bool started = false;  // EPS pumping
  };

  struct Selection {
    std::string eps, eps2, bsm;
    double loss = 0.0;
  };

  void warn(std::string msg) {
    warnings_.push_back(std::move(msg));
    rt_.local(kServerId, "Warning");
  }

  // ---- discovery handlers ----------------------------------------------

  void on_register(const BusMessage& m) {
    if (phase_ != DiscoveryPhase::Collecting && phase_ != DiscoveryPhase::AwaitingTopology) return;
    ResourceRecord r;
    const auto node = node_from_json(m.payload.at("node"));
    r.id = node.id;
    r.kind = node.kind;
    r.features = node.features;
    r.connectivity = m.payload.at("connectivity").get<std::vector<std::string>>();
    r.state = ResourceState::Registered;
    registrations_[r.id] = {r, node};
  }

  void on_topology_response(const BusMessage& m) {
    if (phase_ != DiscoveryPhase::AwaitingTopology) return;
    agent_switches_.clear();
    agent_links_.clear();
    for (const auto& n : m.payload.at("switches")) agent_switches_.push_back(node_from_json(n));
    for (const auto& l : m.payload.at("links")) agent_links_.push_back(link_from_json(l));
    phase_ = DiscoveryPhase::Verifying;
    for (const auto& [id, reg] : registrations_) {
      pending_verify_.insert(id);
      rt_.bus.publish(topics::kVerifyReq, kServerId, "discovery", MessageKind::VerifyRequest,
                      {{"resource", id}, {"claims", reg.first.connectivity}});
    }
    if (pending_verify_.empty()) build_topology();
  }

  void on_verify_response(const BusMessage& m) {
    if (phase_ != DiscoveryPhase::Verifying) return;
    const auto id = m.payload.at("resource").get<std::string>();
    if (!pending_verify_.erase(id)) return;
    auto& r = registrations_.at(id).first;
    if (m.payload.at("verified").get<bool>()) {
      r.state = ResourceState::Verified;
    } else {
      r.state = ResourceState::Lost;
      r.diagnostic = "unconfirmed connectivity: " + m.payload.at("unconfirmed").dump();
    }
    if (pending_verify_.empty()) build_topology();
  }

  /// Builds the graph from switches, verified resources and the links whose
  /// endpoints both survive; replaces the previous view in one step.
  void build_topology() {
    rt_.local(kServerId, "BuildTopology");
    Topology next;
    std::map<std::string, ResourceRecord> resources;
    for (const auto& sw : agent_switches_) next.add_node(sw);
    for (const auto& [id, reg] : registrations_) {
      resources[id] = reg.first;
      if (reg.first.state != ResourceState::Verified) continue;
      try {
        next.add_node(reg.second);
      } catch (const TopologyError& e) {
        resources[id].state = ResourceState::Lost;
        resources[id].diagnostic = e.what();
      }
    }
    for (const auto& l : agent_links_) {
      if (!next.find_node(l.a.node) || !next.find_node(l.b.node)) continue;
      if (!next.node(l.a.node).find_port(l.a.port) || !next.node(l.b.node).find_port(l.b.port)) continue;
      try {
        next.add_link(l);
      } catch (const TopologyError& e) {
        warn(std::string("link dropped: ") + e.what());
      }
    }
    next.set_version(topology_.version() + 1);
    topology_ = std::move(next);
    resources_ = std::move(resources);
    phase_ = DiscoveryPhase::Done;
    for (auto& f : topology_obs_) f(topology_);
  }

  // ---- topology changes ------------------------------------------------

  void on_topology_change(const BusMessage& m) {
    TopologyDelta delta;
    try {
      delta = delta_from_json(m.payload);
      apply_delta(delta);
    } catch (const std::exception& e) {
      warn(std::string("topology change rejected: ") + e.what());
    }
  }

  void apply_delta(const TopologyDelta& delta) {
    if (phase_ != DiscoveryPhase::Done) throw DeltaError("discovery has not completed");
    Topology next = topology_;
    for (const auto& l : delta.remove_links)
      if (!next.find_link(l)) throw DeltaError("unknown link '" + l + "'");
    for (const auto& n : delta.remove_nodes)
      if (!next.find_node(n)) throw DeltaError("unknown node '" + n + "'");
    for (const auto& [l, v] : delta.extra_loss)
      if (!next.find_link(l)) throw DeltaError("unknown link '" + l + "'");
    std::set<std::string> lost_links(delta.remove_links.begin(), delta.remove_links.end());
    try {
      for (const auto& l : delta.remove_links) next.remove_link(l);
      for (const auto& n : delta.remove_nodes)
        for (auto& l : next.remove_node(n)) lost_links.insert(l);
      for (const auto& n : delta.add_nodes) next.add_node(n);
      for (const auto& [l, v] : delta.extra_loss)
        if (next.find_link(l)) next.set_extra_loss(l, v);
    } catch (const TopologyError& e) {
      throw DeltaError(e.what());
    }
    next.set_version(topology_.version() + 1);
    topology_ = std::move(next);
    rt_.local(kServerId, "ApplyTopologyChange");
    for (const auto& n : delta.remove_nodes)
      if (auto it = resources_.find(n); it != resources_.end()) {
        it->second.state = ResourceState::Lost;
        it->second.diagnostic = "removed by topology change";
      }
    for (const auto& n : delta.add_nodes) {
      ResourceRecord r;
      r.id = n.id;
      r.kind = n.kind;
      r.features = n.features;
      for (const auto& p : n.ports)
        if (!p.tag.empty()) r.connectivity.push_back(detail::claim_of(p.id, p.tag));
      resources_[n.id] = r;
    }
    std::set<std::string> lost_nodes(delta.remove_nodes.begin(), delta.remove_nodes.end());
    for (const auto& id : order_) {
      auto& rec = requests_.at(id);
      if (is_terminal(rec.state) || !runtime_.at(id).allocated) continue;
      bool lost = false, degraded = false;
      for (const auto* leg : request_legs(rec.routes)) {
        if (lost_nodes.count(leg->source) || lost_nodes.count(leg->target)) lost = true;
        for (const auto& h : leg->hops) {
          if (lost_links.count(h)) lost = true;
          if (delta.extra_loss.count(h)) degraded = true;
        }
      }
      for (const auto& r : rec.routes)
        for (const auto& c : r.clock_paths)
          for (const auto& h : c.hops)
            if (lost_links.count(h)) lost = true;
      if (lost)
        fail(id, "route_lost");
      else if (degraded && rec.state == RequestState::Distributing)
        recalibrate(id);
    }
    for (auto& f : topology_obs_) f(topology_);
    process_queue();
  }

  // ---- request handling ------------------------------------------------

  void transition(const std::string& id, RequestState to, std::string reason = {}) {
    auto& rec = requests_.at(id);
    if (!transition_allowed(rec.state, to))
      throw std::logic_error(std::string("illegal transition ") + to_string(rec.state) + " -> " + to_string(to) +
                             " for " + id);
    Transition t{rt_.engine.now(), rec.state, to};
    rec.state = to;
    if (to == RequestState::Failed) rec.failure_reason = std::move(reason);
    rec.transitions.push_back(t);
    for (auto& f : transition_obs_) f(rec, t);
  }

  void on_submit(const BusMessage& m) {
    if (!requests_.count(m.correlation_id)) return;
    queue_.push_back(m.correlation_id);
    process_queue();
  }

  double detector_efficiency(const std::string& qnode) const {
    const auto& n = topology_.node(qnode);
    return rt_.profile.detector(n.features.qnode ? n.features.qnode->detector : "default").efficiency;
  }

  /// Candidate source(s) for a request, evaluated on a scratch copy.
  /// `blocked` reports that some otherwise feasible candidate lacked a
  /// continuous channel; `busy` that resources in use prevented admission.
  std::optional<Selection> select(const RequestRecord& rec, bool& blocked, bool& busy) const {
    blocked = busy = false;
    RouteOptions opt;
    opt.weights = rt_.config.weights;
    opt.clock_paths = rt_.config.allocate_clock_paths;
    opt.request_id = rec.id;
    std::optional<Selection> best;
    auto consider = [&](Selection s) {
      if (!best || s.loss < best->loss) best = s;
    };
    std::vector<std::string> eps_ids, bsm_ids;
    for (const auto& [id, n] : topology_.nodes()) {
      if (n.kind == NodeKind::EPS) eps_ids.push_back(id);
      if (n.kind == NodeKind::BSMNode) bsm_ids.push_back(id);
    }
    auto handle = [&](const RwaError& e) {
      if (e.code() == RwaErrorCode::Blocked) blocked = busy = true;
      if (e.code() == RwaErrorCode::NoFreePair) busy = true;
    };
    if (!rec.requirements.swap) {
      for (const auto& e : eps_ids) {
        try {
          Topology work = topology_;
          auto r = detail::route_pair_on(work, e, rec.qnode_a, rec.qnode_b, opt);
          const double t = physics::transmittance(r.leg_a.total_loss_db) * detector_efficiency(rec.qnode_a) *
                           physics::transmittance(r.leg_b.total_loss_db) * detector_efficiency(rec.qnode_b);
          if (topology_.node(e).features.eps->pair_rate_cps * t < rec.requirements.rate) continue;
          consider({e, "", "", r.leg_a.total_loss_db + r.leg_b.total_loss_db});
        } catch (const RwaError& err) {
          handle(err);
        } catch (const TopologyError&) {
          blocked = busy = true;  // clock channel unavailable
        }
      }
      return best;
    }
    for (const auto& b : bsm_ids)
      for (const auto& e1 : eps_ids)
        for (const auto& e2 : eps_ids) {
          if (e1 == e2) continue;
          try {
            Topology work = topology_;
            auto r1 = detail::route_pair_on(work, e1, rec.qnode_a, b, opt);
            auto r2 = detail::route_pair_on(work, e2, rec.qnode_b, b, opt);
            physics::TeleportSetup t;
            t.clock = rt_.profile.clock;
            t.qubit_mean_photon = rt_.profile.teleport.qubit_mean_photon;
            t.pair_probability = rt_.profile.teleport.pair_probability;
            t.indistinguishability = rt_.profile.eps.indistinguishability;
            t.alice_to_bsm = rt_.profile.channel(r1.leg_b.total_loss_db);
            t.bob_to_bsm = rt_.profile.channel(r2.leg_b.total_loss_db);
            t.bob_to_receiver = rt_.profile.channel(r2.leg_a.total_loss_db);
            t.bsm_detector = rt_.profile.detector("bsm");
            t.receiver_detector = rt_.profile.detector("receiver");
            t.bsm_success_prob = rt_.profile.teleport.bsm_success_prob;
            if (physics::teleportation_estimate(t).rate_hz < rec.requirements.rate) continue;
            consider({e1, e2, b,
                      r1.leg_a.total_loss_db + r1.leg_b.total_loss_db + r2.leg_a.total_loss_db +
                          r2.leg_b.total_loss_db});
          } catch (const RwaError& err) {
            handle(err);
          } catch (const TopologyError&) {
            blocked = busy = true;
          }
        }
    return best;
  }

  /// Serial admission in arrival order.
  void process_queue() {
    if (processing_) return;
    processing_ = true;
    while (!queue_.empty()) {
      const auto id = queue_.front();
      auto& rec = requests_.at(id);
      if (rec.state != RequestState::Submitted) {
        queue_.erase(queue_.begin());
        continue;
      }
      bool blocked = false, busy = false;
      auto sel = select(rec, blocked, busy);
      if (!sel && busy && rt_.config.queue_when_busy) break;  // wait for a release
      queue_.erase(queue_.begin());
      analyze(id, sel, blocked);
    }
    processing_ = false;
  }

  void analyze(const std::string& id, const std::optional<Selection>& sel, bool blocked) {
    auto& rec = requests_.at(id);
    transition(id, RequestState::Analyzing);
    nlohmann::json decision = {{"feasible", sel.has_value()}};
    if (sel) {
      decision["eps"] = sel->eps2.empty() ? nlohmann::json(sel->eps) : nlohmann::json({sel->eps, sel->eps2});
      if (!sel->bsm.empty()) decision["bsm"] = sel->bsm;
    }
    rt_.bus.publish(topics::req(id, "analyze"), kServerId, id, MessageKind::Analyze, decision);
    if (!sel) {
      fail(id, blocked ? "blocked" : "no_eps");
      return;
    }
    RouteOptions opt;
    opt.weights = rt_.config.weights;
    opt.clock_paths = rt_.config.allocate_clock_paths;
    opt.request_id = id;
    try {
      if (sel->bsm.empty()) {
        rec.routes = {route_entanglement(topology_, book_, sel->eps, rec.qnode_a, rec.qnode_b, opt)};
      } else {
        auto [r1, r2] = route_bsm(topology_, book_, sel->eps, sel->eps2, sel->bsm, rec.qnode_a, rec.qnode_b, opt);
        rec.routes = {r1, r2};
        rec.bsm = sel->bsm;
      }
    } catch (const std::exception&) {
      fail(id, "blocked");
      return;
    }
    runtime_.at(id).allocated = true;
    rt_.bus.publish(topics::req(id, "paths"), kServerId, id, MessageKind::PathSetup,
                    {{"routes", detail::routes_to_json(rec.routes)}});
  }

  std::vector<std::string> entities_of(const RequestRecord& rec) const {
    std::set<std::string> s{rec.qnode_a, rec.qnode_b};
    for (const auto& r : rec.routes) s.insert(r.eps);
    if (!rec.bsm.empty()) s.insert(rec.bsm);
    return {s.begin(), s.end()};
  }

  RequestRecord* live(const BusMessage& m) {
    auto it = requests_.find(m.correlation_id);
    if (it == requests_.end() || is_terminal(it->second.state)) return nullptr;
    return &it->second;
  }

  void on_paths(const BusMessage& m) {
    auto* rec = live(m);
    if (!rec || m.kind != MessageKind::PathEstablished || rec->state != RequestState::Analyzing) return;
    const auto id = rec->id;
    transition(id, RequestState::PathsEstablished);
    const auto entities = entities_of(*rec);
    rt_.bus.publish(topics::req(id, "paths"), kServerId, id, MessageKind::PathNotify,
                    {{"routes", detail::routes_to_json(rec->routes)},
                     {"entities", entities},
                     {"qnode_a", rec->qnode_a},
                     {"qnode_b", rec->qnode_b},
                     {"bsm", rec->bsm},
                     {"rate", rec->requirements.rate},
                     {"target_ebits", rec->requirements.target_ebits()}});
    transition(id, RequestState::Verifying);
    auto& rt = runtime_.at(id);
    rt.ledger = ReadyLedger({entities.begin(), entities.end()});
    for (const auto* leg : request_legs(rec->routes)) rt.probes_pending.insert(leg->target);
    rt_.bus.publish(topics::req(id, "verify"), kServerId, id, MessageKind::ProbeRequest,
                    {{"tolerance_db", rt_.config.verify_tolerance_db}});
    arm_ready_timer(id);
  }

  void arm_ready_timer(const std::string& id) {
    auto& rt = runtime_.at(id);
    if (rt.ready_timer) rt_.engine.cancel(rt.ready_timer);
    rt.ready_timer = rt_.engine.after(rt_.config.ready_timeout_s, EventKind::Timer, kServerId, [this, id] {
      runtime_.at(id).ready_timer = 0;
      if (!is_terminal(requests_.at(id).state)) fail(id, "timeout");
    });
  }

  void on_probe_result(const BusMessage& m) {
    auto* rec = live(m);
    if (!rec || m.kind != MessageKind::ProbeResult || rec->state != RequestState::Verifying) return;
    const auto id = rec->id;
    auto& rt = runtime_.at(id);
    const auto legs = request_legs(rec->routes);
    for (const auto& r : m.payload.at("legs")) {
      const auto i = r.at("leg").get<std::size_t>();
      const auto& measured = r.at("measured_loss_db");
      if (i >= legs.size() || measured.is_null() ||
          std::abs(measured.get<double>() - legs[i]->total_loss_db) > rt_.config.verify_tolerance_db) {
        fail(id, "verification");
        return;
      }
    }
    rt.probes_pending.erase(m.sender);
    if (!rt.probes_pending.empty()) return;
    transition(id, RequestState::Calibrating);
    rt.ledger.reset();
    rt_.bus.publish(topics::req(id, "calibrate"), kServerId, id, MessageKind::CalibrateRequest,
                    {{"recalibration", false}});
    arm_ready_timer(id);
  }

  void on_calibrate(const BusMessage& m) {
    auto* rec = live(m);
    if (!rec || m.kind != MessageKind::CalibrationFailed) return;
    fail(rec->id, "calibration");
  }

  void on_ready(const BusMessage& m) {
    auto* rec = live(m);
    if (!rec || (rec->state != RequestState::Calibrating && rec->state != RequestState::Recalibrating)) return;
    const auto id = rec->id;
    auto& rt = runtime_.at(id);
    if (!rt.ledger.receive(m.sender)) {
      warn("READY for " + id + " from non-participant '" + m.sender + "' ignored");
      return;
    }
    if (!rt.ledger.complete()) return;
    if (rt.ready_timer) rt_.engine.cancel(rt.ready_timer);
    rt.ready_timer = 0;
    if (rec->state == RequestState::Calibrating) transition(id, RequestState::Ready);
    transition(id, RequestState::Distributing);
    if (rt.ends.size() == 2) {
      complete(id);
      return;
    }
    rt.started = true;
    rt_.bus.publish(topics::req(id, "start"), kServerId, id, MessageKind::StartDistribution,
                    {{"batch_interval_s", rt_.config.batch_interval_s}});
    rt.recal_timer = rt_.engine.after(rt_.config.recal_period_s, EventKind::Timer, kServerId, [this, id] {
      runtime_.at(id).recal_timer = 0;
      if (requests_.at(id).state == RequestState::Distributing) recalibrate(id);
    });
  }

  void recalibrate(const std::string& id) {
    auto& rt = runtime_.at(id);
    if (rt.recal_timer) rt_.engine.cancel(rt.recal_timer);
    rt.recal_timer = 0;
    transition(id, RequestState::Recalibrating);
    rt.ledger.reset();
    rt_.bus.publish(topics::req(id, "calibrate"), kServerId, id, MessageKind::CalibrateRequest,
                    {{"recalibration", true}});
    arm_ready_timer(id);
  }

  void on_measurement(const BusMessage& m) {
    auto* rec = live(m);
    if (!rec || (rec->state != RequestState::Distributing && rec->state != RequestState::Recalibrating)) return;
    if (m.sender != rec->qnode_a) return;
    const auto& p = m.payload;
    MeasurementRow row;
    row.time = p.value("t", m.sent_at);
    row.interval_s = p.value("interval_s", 0.0);
    row.coincidences = p.value("coincidences", std::uint64_t{0});
    row.accidentals = p.value("accidentals", std::uint64_t{0});
    row.ebits = p.value("ebits", std::uint64_t{0});
    const double car = p.value("car", -1.0);
    row.car = car < 0 ? physics::kInfiniteCar : car;
    row.visibility = p.value("visibility", 0.0);
    row.fidelity = p.value("fidelity", 0.0);
    rec->measurements.push_back(row);
    for (auto& f : measurement_obs_) f(*rec, row);
  }

  void on_end(const BusMessage& m) {
    auto* rec = live(m);
    if (!rec) return;
    collect_end_signal(rec->id, m.sender);
  }

  void cancel_timers(RequestRuntime& rt) {
    for (auto* h : {&rt.ready_timer, &rt.recal_timer, &rt.end_timer}) {
      if (*h) rt_.engine.cancel(*h);
      *h = 0;
    }
  }

  void release(const std::string& id) {
    auto& rt = runtime_.at(id);
    if (!rt.allocated) return;
    for (const auto& r : requests_.at(id).routes) release_route(topology_, book_, r);
    rt.allocated = false;
    rt_.plant.forget(id);
  }

  void complete(const std::string& id) {
    auto& rt = runtime_.at(id);
    cancel_timers(rt);
    rt_.bus.publish(topics::req(id, "stop"), kServerId, id, MessageKind::StopEps);
    rt.started = false;
    rt_.bus.publish(topics::req(id, "paths"), kServerId, id, MessageKind::PathTeardown);
    release(id);
    transition(id, RequestState::Completed);
    finalize(id);
  }

  void fail(const std::string& id, const std::string& reason) {
    auto& rec = requests_.at(id);
    if (is_terminal(rec.state)) return;
    auto& rt = runtime_.at(id);
    cancel_timers(rt);
    const bool had_paths = rt.allocated;
    transition(id, RequestState::Failed, reason);
    if (had_paths) rt_.bus.publish(topics::req(id, "stop"), kServerId, id, MessageKind::StopEps);
    rt.started = false;
    if (had_paths) rt_.bus.publish(topics::req(id, "paths"), kServerId, id, MessageKind::PathTeardown);
    release(id);
    finalize(id);
    process_queue();
  }

  void finalize(const std::string& id) {
    const auto rid = store_measurements(id);
    nlohmann::json body = {{"state", to_string(requests_.at(id).state)}};
    body["record_id"] = rid ? nlohmann::json(*rid) : nlohmann::json();
    rt_.bus.publish(topics::req(id, "stored"), kServerId, id, MessageKind::Stored, body);
    process_queue();
  }

  Runtime& rt_;
  MeasurementStore& store_;

  DiscoveryPhase phase_ = DiscoveryPhase::Idle;
  std::uint64_t discovery_round_ = 0;
  std::string discovery_error_;
  std::map<std::string, std::pair<ResourceRecord, Node>> registrations_;
  std::set<std::string> pending_verify_;
  std::vector<Node> agent_switches_;
  std::vector<FiberLink> agent_links_;

  Topology topology_;
  RouteBook book_;
  std::map<std::string, ResourceRecord> resources_;

  std::map<std::string, RequestRecord> requests_;
  std::map<std::string, RequestRuntime> runtime_;
  std::vector<std::string> order_;
  std::vector<std::string> queue_;
  bool processing_ = false;
  std::uint64_t request_counter_ = 0;
  std::vector<std::string> warnings_;

  std::vector<TransitionObserver> transition_obs_;
  std::vector<MeasurementObserver> measurement_obs_;
  std::vector<TopologyObserver> topology_obs_;
};

/// Wires a server, an SDN agent and one actor per resource onto a shared
/// engine and plant.
class ControlPlane {
public:
  ControlPlane(Engine& engine, Plant& plant, PhysicsProfile profile, ControlPlaneConfig config = {},
               ServoSet servos = {}, std::uint64_t seed = 1, MeasurementStore* store = nullptr)
      : engine_(engine),
        plant_(plant),
        profile_(std::move(profile)),
        config_(std::move(config)),
        servos_(std::move(servos)),
        rng_(seed),
        bus_(engine_, trace_),
        own_store_(store ? nullptr : std::make_unique<MeasurementStore>()),
        store_(store ? *store : *own_store_),
        runtime_{engine_, bus_, trace_, plant_, profile_, config_, servos_, rng_},
        agent_(runtime_),
        server_(runtime_, store_) {
    if (servos_.polarization) servos_.polarization->validate();
    if (servos_.hom) servos_.hom->validate();
  }

  ControlPlane(const ControlPlane&) = delete;
  ControlPlane& operator=(const ControlPlane&) = delete;

  /// Schedules the discovery protocol. Resource configurations default to
  /// every non-switch node of the plant.
  void start_discovery(std::optional<std::vector<Node>> resource_configs = std::nullopt) {
    std::vector<Node> configs;
    if (resource_configs) {
      configs = std::move(*resource_configs);
    } else {
      for (const auto& [id, n] : plant_.fabric().nodes())
        if (n.kind != NodeKind::OpticalSwitch) configs.push_back(n);
    }
    for (auto& c : configs) {
      if (!actors_.count(c.id)) actors_.emplace(c.id, std::make_unique<ResourceActor>(runtime_, c));
    }
    const double t = engine_.now();
    for (const auto& c : configs)
      engine_.schedule(t, EventKind::Timer, c.id, [this, id = c.id] { actors_.at(id)->load_config(); });
    engine_.schedule(t, EventKind::Timer, kAgentId, [this] { agent_.discover_links(); });
    for (const auto& c : configs)
      engine_.schedule(t, EventKind::Timer, c.id, [this, id = c.id] { actors_.at(id)->register_self(); });
    server_.begin_discovery();
  }

  /// Runs discovery to completion and returns the verified topology. An
  /// unreachable agent fails the whole round and leaves the previous view.
  const Topology& run_discovery(std::optional<std::vector<Node>> resource_configs = std::nullopt) {
    start_discovery(std::move(resource_configs));
    using P = QNetServer::DiscoveryPhase;
    while (server_.discovery_phase() != P::Done && server_.discovery_phase() != P::Failed && engine_.step()) {
    }
    if (server_.discovery_phase() != P::Done)
      throw DiscoveryError(server_.discovery_error().empty() ? "discovery did not complete" : server_.discovery_error());
    return server_.topology();
  }

  std::string submit(const std::string& user, const std::string& qnode_a, const std::string& qnode_b,
                     const Requirements& req) {
    return server_.submit(user, qnode_a, qnode_b, req);
  }

  void notify_topology_change(const TopologyDelta& delta) { agent_.notify(delta); }

  /// Live metrics of a request on the plant right now.
  std::optional<RouteMetrics> metrics(const std::string& id) const {
    const auto* rec = server_.find_request(id);
    if (!rec || !server_.route_live(id)) return std::nullopt;
    RouteEvaluator eval(profile_, plant_);
    auto det = [&](const std::string& q) {
      const auto* n = plant_.fabric().find_node(q);
      return n && n->features.qnode ? n->features.qnode->detector : std::string("default");
    };
    return eval.evaluate(rec->routes, plant_.compensation(id), det(rec->qnode_a), det(rec->qnode_b));
  }

  /// Continuous servo iteration across all resources.
  void servo_tick(const ServoLoop& loop) {
    for (auto& [id, a] : actors_) a->servo_tick(loop);
  }

  void set_resource_responsive(const std::string& id, bool responsive) {
    if (auto it = actors_.find(id); it != actors_.end()) it->second->set_responsive(responsive);
  }

  Engine& engine() { return engine_; }
  Bus& bus() { return bus_; }
  Trace& trace() { return trace_; }
  const Trace& trace() const { return trace_; }
  Plant& plant() { return plant_; }
  const PhysicsProfile& profile() const { return profile_; }
  const ControlPlaneConfig& config() const { return config_; }
  const ServoSet& servos() const { return servos_; }
  RandomStreams& random() { return rng_; }
  SdnAgent& agent() { return agent_; }
  QNetServer& server() { return server_; }
  const QNetServer& server() const { return server_; }
  MeasurementStore& store() { return store_; }

private:
  Engine& engine_;
  Plant& plant_;
  PhysicsProfile profile_;
  ControlPlaneConfig config_;
  ServoSet servos_;
  RandomStreams rng_;
  Trace trace_;
  Bus bus_;
  std::unique_ptr<MeasurementStore> own_store_;
  MeasurementStore& store_;
  Runtime runtime_;
  SdnAgent agent_;
  std::map<std::string, std::unique_ptr<ResourceActor>> actors_;
  QNetServer server_;
};

}  // namespace ieqnet
