#include "support/oracles.hpp"

#include <gtest/gtest.h>

using namespace ieqnet;

namespace {

Node make(const std::string& id, NodeKind kind, int ports, double il = 0.0, int lambdas = 4) {
  Node n;
  n.id = id;
  n.kind = kind;
  n.insertion_loss_db = il;
  for (int i = 0; i < ports; ++i) n.ports.push_back({"p" + std::to_string(i), ""});
  if (kind == NodeKind::EPS) n.features.eps = EpsFeatures{1e6, lambdas, Band::O};
  if (kind == NodeKind::QNode) n.features.qnode = QNodeFeatures{"default"};
  if (kind == NodeKind::OpticalSwitch) n.features.optical_switch = SwitchFeatures{ports};
  return n;
}

FiberLink link(const std::string& id, PortRef a, PortRef b, double km, int grid = 4) {
  FiberLink l;
  l.id = id;
  l.a = std::move(a);
  l.b = std::move(b);
  l.length_km = km;
  l.attenuation_db_per_km = {0.25, 0.25};
  l.total_wavelengths = grid;
  return l;
}

// eps -- sw -- q1, sw -- q2, plus a direct eps -- q2 fiber that is longer.
Topology small() {
  Topology t;
  t.add_node(make("eps", NodeKind::EPS, 2));
  t.add_node(make("sw", NodeKind::OpticalSwitch, 3, 1.0));
  t.add_node(make("q1", NodeKind::QNode, 1));
  t.add_node(make("q2", NodeKind::QNode, 2));
  t.add_link(link("a", {"eps", "p0"}, {"sw", "p0"}, 4));
  t.add_link(link("b", {"sw", "p1"}, {"q1", "p0"}, 4));
  t.add_link(link("c", {"sw", "p2"}, {"q2", "p0"}, 4));
  t.add_link(link("d", {"eps", "p1"}, {"q2", "p1"}, 40));
  return t;
}

}  // namespace

TEST(ShortestPath, PrefersLowerLossAndTransitsSwitchesOnly) {
  auto t = small();
  EXPECT_EQ(shortest_path(t, "eps", "q2", Band::O), (std::vector<std::string>{"a", "c"}));
  // q1 is not a switch, so eps cannot reach q2 through it even if cheaper.
  EXPECT_THROW(shortest_path(t, "q1", "q1", Band::O), RwaError);
}

TEST(ShortestPath, EdgeWeightIncludesImpairmentTerms) {
  auto t = small();
  const auto& l = t.link("a");
  WeightCoefficients k{2.0, 3.0};
  auto w = edge_weight(t, l, Band::O, k);
  const double expected = 4 * 0.25 + 0.0 + 1.0 + 2.0 * l.pdl_db + 3.0 * l.pmd_ps_per_sqrt_km * std::sqrt(4.0);
  EXPECT_DOUBLE_EQ(w.value, expected);
}

TEST(ShortestPath, NoPathWhenDisconnected) {
  auto t = small();
  t.remove_link("d");
  t.remove_link("c");
  try {
    shortest_path(t, "eps", "q2", Band::O);
    FAIL();
  } catch (const RwaError& e) {
    EXPECT_EQ(e.code(), RwaErrorCode::NoPath);
  }
}

TEST(FirstFit, LowestFreeIndexOnAllHops) {
  auto t = small();
  t.occupy("a", {Band::O, 0});
  t.occupy("c", {Band::O, 1});
  EXPECT_EQ(assign_first_fit(t, {"a", "c"}, Band::O).index, 2);
  EXPECT_EQ(assign_first_fit(t, {"a", "c"}, Band::C).index, 0);
  t.occupy("a", {Band::O, 2});
  t.occupy("a", {Band::O, 3});
  try {
    assign_first_fit(t, {"a", "c"}, Band::O);
    FAIL();
  } catch (const RwaError& e) {
    EXPECT_EQ(e.code(), RwaErrorCode::Blocked);
  }
}

TEST(EntanglementRouting, AllocatesPairAtomicallyAndReleasesExactly) {
  auto t = small();
  RouteBook book;
  const auto before = t.total_occupancy();
  RouteOptions opt;
  opt.clock_paths = true;
  auto r = route_entanglement(t, book, "eps", "q1", "q2", opt);
  EXPECT_EQ(r.pair_index, 0);
  EXPECT_EQ(r.leg_a.channel, (WavelengthChannel{Band::O, 0}));
  EXPECT_EQ(r.leg_b.channel, (WavelengthChannel{Band::O, 3}));
  EXPECT_EQ(r.clock_paths.size(), 2u);
  for (const auto& c : r.clock_paths) EXPECT_EQ(c.channel.band, Band::C);
  EXPECT_TRUE(book.is_live(r.allocation));
  EXPECT_GT(t.total_occupancy(), before);

  auto r2 = route_entanglement(t, book, "eps", "q1", "q2", opt);
  EXPECT_EQ(r2.pair_index, 1);
  // Only two pairs exist; the third request fails and leaves nothing behind.
  const auto snapshot = t;
  try {
    route_entanglement(t, book, "eps", "q1", "q2", opt);
    FAIL();
  } catch (const RwaError& e) {
    EXPECT_EQ(e.code(), RwaErrorCode::NoFreePair);
  }
  EXPECT_EQ(t.links(), snapshot.links());

  release_route(t, book, r);
  release_route(t, book, r2);
  EXPECT_EQ(t.total_occupancy(), before);
  EXPECT_TRUE(t.eps_pairs_in_use("eps").empty());
  EXPECT_THROW(release_route(t, book, r), RwaError);
}

TEST(EntanglementRouting, BsmRouteOnTeleportLan) {
  auto t = oracle::load_topology("topologies/qlan1.yaml");
  RouteBook book;
  auto [first, second] = route_bsm(t, book, "eps1", "eps2", "bsm", "alice", "bob", {});
  EXPECT_EQ(first.leg_a.target, "alice");
  EXPECT_EQ(first.leg_b.target, "bsm");
  EXPECT_EQ(second.leg_a.target, "bob");
  EXPECT_EQ(second.leg_b.target, "bsm");
  EXPECT_NEAR(first.leg_b.total_loss_db, 10.4, 1e-9);
  // The reverse assignment needs transit through a non-switch node.
  auto t2 = oracle::load_topology("topologies/qlan1.yaml");
  RouteBook book2;
  EXPECT_THROW(route_bsm(t2, book2, "eps2", "eps1", "bsm", "alice", "bob", {}), RwaError);
  EXPECT_EQ(t2.total_occupancy(), 0u);
}

TEST(EntanglementRouting, JsonRoundTrip) {
  auto t = small();
  RouteBook book;
  RouteOptions opt;
  opt.clock_paths = true;
  opt.request_id = "r-9";
  auto r = route_entanglement(t, book, "eps", "q1", "q2", opt);
  EXPECT_EQ(route_from_json(to_json(r)), r);
  EXPECT_EQ(to_json(r)["leg_a"]["channel"], "O:0");
}

// Exhaustive-enumeration oracle over random multigraphs.
TEST(RwaOracle, ShortestPathAndFirstFitMatchBruteForce) {
  std::mt19937_64 rng(20240611);
  int reachable = 0;
  for (int trial = 0; trial < 200; ++trial) {
    auto g = oracle::random_multigraph(rng);
    auto expect = oracle::brute_force_shortest(g.topo, g.src, g.dst, Band::O);
    if (!expect) {
      EXPECT_THROW(shortest_path(g.topo, g.src, g.dst, Band::O), RwaError) << "trial " << trial;
      continue;
    }
    ++reachable;
    auto hops = shortest_path(g.topo, g.src, g.dst, Band::O);
    EXPECT_EQ(path_weight(g.topo, hops, Band::O).value, expect->weight) << "trial " << trial;
    EXPECT_EQ(hops, expect->hops) << "trial " << trial;
    const int ff = oracle::brute_force_first_fit(g.topo, hops, Band::O);
    if (ff < 0) {
      EXPECT_THROW(assign_first_fit(g.topo, hops, Band::O), RwaError) << "trial " << trial;
    } else {
      EXPECT_EQ(assign_first_fit(g.topo, hops, Band::O).index, ff) << "trial " << trial;
    }
  }
  EXPECT_GT(reachable, 50);
}
