#include "support/oracles.hpp"

#include <gtest/gtest.h>

using namespace ieqnet;

namespace {

std::vector<std::string> golden(const std::string& name) { return oracle::read_lines(oracle::source_path("tests/golden/" + name)); }

nlohmann::json run(const Scenario& s) { return run_scenario(s).document; }

const nlohmann::json& request(const nlohmann::json& doc, std::size_t i = 0) { return doc.at("requests").at(i); }

Scenario star_scenario() { return oracle::load_scenario("scenarios/happy_path.yaml"); }

ScheduledRequest req(double at, const std::string& a, const std::string& b, double rate, double duration) {
  ScheduledRequest r;
  r.at = at;
  r.qnode_a = a;
  r.qnode_b = b;
  r.requirements.rate = rate;
  r.requirements.duration = duration;
  return r;
}

// Direct harness around the control plane for discovery cases.
struct Harness {
  Engine engine;
  Plant plant;
  ControlPlane cp;

  explicit Harness(Topology t, ControlPlaneConfig cfg = {})
      : plant(std::move(t)), cp(engine, plant, oracle::load_profile("qlan2_coexist"), cfg) {}
};

}  // namespace

TEST(GoldenTrace, DiscoveryOnTheFourSiteFabric) {
  auto doc = run(oracle::load_scenario("scenarios/discovery_only.yaml"));
  EXPECT_EQ(oracle::discovery_kinds(doc), golden("discovery.txt"));
  EXPECT_EQ(doc.at("discovery").at("nodes").get<std::size_t>(), 14u);
  EXPECT_EQ(doc.at("discovery").at("links").get<std::size_t>(), 15u);
  for (const auto& r : doc.at("discovery").at("resources")) EXPECT_EQ(r.at("state"), "Verified") << r.dump();
}

TEST(GoldenTrace, SingleRequestOnTheStar) {
  auto doc = run(star_scenario());
  const auto& r = request(doc);
  ASSERT_EQ(r.at("state"), "Completed") << r.dump();
  const auto id = r.at("id").get<std::string>();
  EXPECT_EQ(oracle::request_kinds(doc.at("trace"), id, true), golden("request_messages.txt"));
  EXPECT_EQ(oracle::request_kinds(doc.at("trace"), id, false), golden("request_full.txt"));
  EXPECT_EQ(oracle::discovery_kinds(doc), golden("discovery.txt"));
}

TEST(GoldenTrace, LifecycleVisitsEveryStateOnce) {
  auto doc = run(star_scenario());
  std::vector<std::string> states;
  for (const auto& t : request(doc).at("transitions")) states.push_back(t.at("to"));
  EXPECT_EQ(states, (std::vector<std::string>{"Analyzing", "PathsEstablished", "Verifying", "Calibrating", "Ready",
                                              "Distributing", "Completed"}));
  EXPECT_TRUE(oracle::lifecycle_violations(doc).empty());
}

TEST(Discovery, MinimalSwitchAndQnode) {
  auto t = load_topology(R"(nodes:
  - id: sw
    kind: switch
    ports: [{id: p1, tag: "q:p1"}]
    features: {port_count: 1}
  - id: q
    kind: qnode
    ports: [{id: p1, tag: "sw:p1"}]
links:
  - id: l
    a: {node: sw, port: p1}
    b: {node: q, port: p1}
    length_km: 1
    attenuation_db_per_km: {O: 0.35, C: 0.2}
    total_wavelengths: 2
)");
  Harness h(t);
  const auto& topo = h.cp.run_discovery();
  EXPECT_EQ(topo.links().size(), 1u);
  EXPECT_EQ(h.cp.server().resources().at("q").state, ResourceState::Verified);
}

TEST(Discovery, MismatchedClaimMarksResourceLost) {
  auto t = oracle::load_topology("topologies/star.yaml");
  std::vector<Node> configs;
  for (const auto& [id, n] : t.nodes()) configs.push_back(n);
  for (auto& n : configs)
    if (n.id == "q1") n.ports[0].tag = "eps:p9";
  Harness h(t);
  const auto& topo = h.cp.run_discovery(configs);
  const auto& q1 = h.cp.server().resources().at("q1");
  EXPECT_EQ(q1.state, ResourceState::Lost);
  EXPECT_FALSE(q1.diagnostic.empty());
  EXPECT_FALSE(topo.find_node("q1"));
  EXPECT_FALSE(topo.find_link("l1"));
  EXPECT_TRUE(topo.find_link("l2"));
}

TEST(Discovery, UnreachableAgentFailsAtomically) {
  Harness h(oracle::load_topology("topologies/star.yaml"));
  const auto before = h.cp.run_discovery().version();
  h.cp.bus().unsubscribe_all(kAgentId);
  EXPECT_THROW(h.cp.run_discovery(), DiscoveryError);
  EXPECT_EQ(h.cp.server().topology().version(), before);
  EXPECT_EQ(h.cp.server().topology().nodes().size(), 3u);
}

TEST(TopologyChange, UnusedLinkRemovalBumpsVersion) {
  auto t = oracle::load_topology("topologies/ieqnet_4site.yaml");
  Harness h(t);
  const auto v = h.cp.run_discovery().version();
  TopologyDelta d;
  d.remove_links = {"m-nu-starlight"};
  h.cp.notify_topology_change(d);
  h.engine.run();
  EXPECT_EQ(h.cp.server().topology().version(), v + 1);
  EXPECT_FALSE(h.cp.server().topology().find_link("m-nu-starlight"));
}

TEST(TopologyChange, UnknownElementRejectedAndLogged) {
  Harness h(oracle::load_topology("topologies/star.yaml"));
  const auto v = h.cp.run_discovery().version();
  TopologyDelta d;
  d.remove_links = {"nope"};
  h.cp.notify_topology_change(d);
  h.engine.run();
  EXPECT_EQ(h.cp.server().topology().version(), v);
  ASSERT_FALSE(h.cp.server().warnings().empty());
  EXPECT_NE(h.cp.server().warnings().back().find("nope"), std::string::npos);
}

TEST(TopologyChange, AddedNodeIsRegisteredNotVerified) {
  Harness h(oracle::load_topology("topologies/star.yaml"));
  h.cp.run_discovery();
  Node n;
  n.id = "q3";
  n.kind = NodeKind::QNode;
  n.features.qnode = QNodeFeatures{"default"};
  TopologyDelta d;
  d.add_nodes = {n};
  h.cp.notify_topology_change(d);
  h.engine.run();
  EXPECT_TRUE(h.cp.server().topology().find_node("q3"));
  EXPECT_EQ(h.cp.server().resources().at("q3").state, ResourceState::Registered);
  EXPECT_THROW(h.cp.submit("u", "q1", "q3", {}), RequestError);
}

TEST(TopologyChange, LiveRouteLossFailsTheRequestAndReleases) {
  auto s = star_scenario();
  s.requests[0].requirements.duration = 100;
  s.faults.push_back({3.0, FaultType::LinkDown, "l1", 0.0});
  auto doc = run(s);
  const auto& r = request(doc);
  EXPECT_EQ(r.at("state"), "Failed");
  EXPECT_EQ(r.at("failure_reason"), "route_lost");
  EXPECT_TRUE(oracle::lifecycle_violations(doc).empty());
}

TEST(Requests, RateAboveEveryEpsFailsNoEps) {
  auto s = star_scenario();
  s.requests[0].requirements.rate = 1e12;
  auto doc = run(s);
  EXPECT_EQ(request(doc).at("state"), "Failed");
  EXPECT_EQ(request(doc).at("failure_reason"), "no_eps");
  EXPECT_EQ(doc.at("initial_occupancy"), doc.at("final_occupancy"));
  EXPECT_TRUE(request(doc).at("measurements").empty());
}

TEST(Requests, SecondConcurrentRequestOnSinglePairEps) {
  auto s = star_scenario();
  s.requests.push_back(req(0.6, "q1", "q2", 100, 5));
  auto doc = run(s);
  EXPECT_EQ(request(doc, 0).at("state"), "Completed");
  EXPECT_EQ(request(doc, 1).at("state"), "Failed");
  EXPECT_EQ(request(doc, 1).at("failure_reason"), "no_eps");

  s.config.queue_when_busy = true;
  doc = run(s);
  EXPECT_EQ(request(doc, 0).at("state"), "Completed");
  EXPECT_EQ(request(doc, 1).at("state"), "Completed");
  EXPECT_TRUE(oracle::lifecycle_violations(doc).empty());
}

TEST(Requests, VerificationMismatchFails) {
  Harness h(oracle::load_topology("topologies/star.yaml"));
  h.cp.run_discovery();
  // The plant degrades without the agent reporting it, so the probe disagrees with the view.
  h.plant.fabric().set_extra_loss("l1", 3.0);
  Requirements rq;
  rq.rate = 10;
  rq.duration = 2;
  const auto id = h.cp.submit("u", "q1", "q2", rq);
  h.engine.run_until(100);
  const auto& rec = h.cp.server().request(id);
  EXPECT_EQ(rec.state, RequestState::Failed);
  EXPECT_EQ(rec.failure_reason, "verification");
  EXPECT_EQ(h.cp.server().topology().total_occupancy(), 0u);
}

TEST(Requests, UnresponsiveResourceTimesOutWaitingForReady) {
  Harness h(oracle::load_topology("topologies/star.yaml"));
  h.cp.run_discovery();
  h.cp.set_resource_responsive("q2", false);
  Requirements rq;
  rq.rate = 10;
  rq.duration = 2;
  const auto id = h.cp.submit("u", "q1", "q2", rq);
  h.engine.run_until(200);
  const auto& rec = h.cp.server().request(id);
  EXPECT_EQ(rec.state, RequestState::Failed);
  EXPECT_EQ(rec.failure_reason, "timeout");
  EXPECT_EQ(h.plant.fabric().total_occupancy(), 0u);
  EXPECT_EQ(h.cp.server().topology().total_occupancy(), 0u);
}

TEST(Requests, EndFromNonParticipantIsIgnored) {
  Harness h(oracle::load_topology("topologies/star.yaml"));
  h.cp.run_discovery();
  Requirements rq;
  rq.rate = 100;
  rq.duration = 5;
  const auto id = h.cp.submit("u", "q1", "q2", rq);
  while (h.cp.server().request(id).state != RequestState::Distributing && h.engine.step()) {
  }
  ASSERT_EQ(h.cp.server().request(id).state, RequestState::Distributing);
  h.cp.server().collect_end_signal(id, "eps");
  EXPECT_EQ(h.cp.server().request(id).state, RequestState::Distributing);
  EXPECT_NE(h.cp.server().warnings().back().find("non-participant"), std::string::npos);
  // One END alone keeps the request distributing.
  h.cp.server().collect_end_signal(id, "q1");
  EXPECT_EQ(h.cp.server().request(id).state, RequestState::Distributing);
  h.cp.server().collect_end_signal(id, "q2");
  h.engine.run_until(h.engine.now() + 5);
  EXPECT_EQ(h.cp.server().request(id).state, RequestState::Completed);
}

TEST(Requests, InvalidSubmissionsAreRejected) {
  Harness h(oracle::load_topology("topologies/star.yaml"));
  h.cp.run_discovery();
  Requirements bad;
  bad.rate = -1;
  bad.duration = 0;
  try {
    h.cp.submit("u", "q1", "q2", bad);
    FAIL();
  } catch (const RequestError& e) {
    EXPECT_EQ(e.code(), "invalid_requirements");
    EXPECT_EQ(e.fields(), (std::vector<std::string>{"rate", "duration"}));
  }
  try {
    h.cp.submit("u", "q1", "zz", {});
    FAIL();
  } catch (const RequestError& e) {
    EXPECT_EQ(e.code(), "unknown_qnode");
  }
  EXPECT_THROW(h.cp.submit("u", "q1", "eps", {}), RequestError);
}

TEST(Requests, StoredRecordIsRetrievable) {
  Engine engine;
  Plant plant(oracle::load_topology("topologies/star.yaml"));
  MeasurementStore store;
  ControlPlane cp(engine, plant, oracle::load_profile("qlan2_coexist"), {}, {}, 1, &store);
  cp.run_discovery();
  Requirements rq;
  rq.rate = 100;
  rq.duration = 3;
  const auto id = cp.submit("u", "q1", "q2", rq);
  engine.run_until(100);
  const auto& rec = cp.server().request(id);
  ASSERT_EQ(rec.state, RequestState::Completed);
  ASSERT_TRUE(rec.record_id);
  auto stored = store.record(*rec.record_id);
  ASSERT_TRUE(stored);
  EXPECT_EQ((*stored).at("measurements").size(), rec.measurements.size());
  EXPECT_GE(rec.ebits(), rq.target_ebits());
}

TEST(Requests, StorageFailureDegradesToDataLoss) {
  Engine engine;
  Plant plant(oracle::load_topology("topologies/star.yaml"));
  MeasurementStore store;
  ControlPlane cp(engine, plant, oracle::load_profile("qlan2_coexist"), {}, {}, 1, &store);
  cp.run_discovery();
  store.set_fail_writes(true);
  Requirements rq;
  rq.rate = 100;
  rq.duration = 2;
  const auto id = cp.submit("u", "q1", "q2", rq);
  engine.run_until(100);
  const auto& rec = cp.server().request(id);
  EXPECT_EQ(rec.state, RequestState::Completed);
  EXPECT_TRUE(rec.data_loss);
  EXPECT_FALSE(rec.record_id);
}
