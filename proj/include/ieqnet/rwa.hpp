#pragma once

// Shortest-path routing and first-fit wavelength assignment (SP-RWA) over a
// topology snapshot, plus two-leg entanglement routes rooted at an EPS.

#include "ieqnet/topology.hpp"

#include <cmath>
#include <map>
#include <optional>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

namespace ieqnet {

enum class RwaErrorCode { NoPath, Blocked, NoFreePair, UnknownRoute, InvalidArgument };

inline std::string_view to_string(RwaErrorCode c) {
  switch (c) {
    case RwaErrorCode::NoPath: return "no_path";
    case RwaErrorCode::Blocked: return "blocked";
    case RwaErrorCode::NoFreePair: return "no_free_pair";
    case RwaErrorCode::UnknownRoute: return "unknown_route";
    case RwaErrorCode::InvalidArgument: return "invalid_argument";
  }
  return "?";
}

class RwaError : public std::runtime_error {
public:
  RwaError(RwaErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  RwaErrorCode code() const noexcept { return code_; }

private:
  RwaErrorCode code_;
};

/// Non-negative weights applied to PDL and PMD when computing edge costs.
struct WeightCoefficients {
  double alpha_pdl = 0.0;
  double alpha_pmd = 0.0;
};

struct EdgeWeight {
  double value = 0.0;

  auto operator<=>(const EdgeWeight&) const = default;
};

inline EdgeWeight edge_weight(const FiberLink& link, Band band, const Node& end_a, const Node& end_b,
                              const WeightCoefficients& k = {}) {
  double w = link.fiber_loss_db(band) + end_a.insertion_loss_db + end_b.insertion_loss_db;
  w += k.alpha_pdl * link.pdl_db;
  w += k.alpha_pmd * link.pmd_ps_per_sqrt_km * std::sqrt(link.length_km);
  return {w};
}

inline EdgeWeight edge_weight(const Topology& topo, const FiberLink& link, Band band, const WeightCoefficients& k = {}) {
  return edge_weight(link, band, topo.node(link.a.node), topo.node(link.b.node), k);
}

struct LightPath {
  std::string request_id;
  std::string source;
  std::string target;
  std::vector<std::string> hops;
  WavelengthChannel channel;
  EdgeWeight total_weight;
  double total_loss_db = 0.0;

  bool operator==(const LightPath&) const = default;
};

struct EntanglementRoute {
  std::uint64_t allocation = 0;  // handle returned by the topology's allocation book
  std::string eps;
  int pair_index = 0;
  LightPath leg_a;  // signal channel
  LightPath leg_b;  // idler channel
  std::vector<LightPath> clock_paths;

  std::vector<const LightPath*> all_paths() const {
    std::vector<const LightPath*> out{&leg_a, &leg_b};
    for (const auto& p : clock_paths) out.push_back(&p);
    return out;
  }

  bool operator==(const EntanglementRoute&) const = default;
};

struct RouteOptions {
  WeightCoefficients weights;
  bool clock_paths = false;  // one clock light path per leg, in the other band
  std::string request_id;
};

/// Nodes visited by a hop sequence starting at `src`.
inline std::vector<std::string> path_nodes(const Topology& topo, const std::string& src,
                                           const std::vector<std::string>& hops) {
  std::vector<std::string> nodes{src};
  for (const auto& h : hops) {
    const auto& l = topo.link(h);
    if (!l.touches(nodes.back())) throw RwaError(RwaErrorCode::InvalidArgument, "hops do not form a path at '" + h + "'");
    nodes.push_back(l.peer_of(nodes.back()));
  }
  return nodes;
}

/// Attenuation x length over all hops plus the insertion loss of every node
/// on the path, endpoints included.
inline double path_loss_db(const Topology& topo, const std::string& src, const std::vector<std::string>& hops,
                           Band band) {
  const auto nodes = path_nodes(topo, src, hops);
  double loss = 0.0;
  for (const auto& h : hops) loss += topo.link(h).fiber_loss_db(band);
  for (const auto& n : nodes) loss += topo.node(n).insertion_loss_db;
  return loss;
}

inline EdgeWeight path_weight(const Topology& topo, const std::vector<std::string>& hops, Band band,
                              const WeightCoefficients& k = {}) {
  double w = 0.0;
  for (const auto& h : hops) w += edge_weight(topo, topo.link(h), band, k).value;
  return {w};
}

/// Light can only transit passive optical switches; every other node kind
/// terminates a path.
inline bool can_transit(const Node& node) { return node.kind == NodeKind::OpticalSwitch; }

/// Minimum-weight path from `src` to `dst`. Among equal-weight paths the
/// lexicographically smallest link-id sequence wins.
inline std::vector<std::string> shortest_path(const Topology& topo, const std::string& src, const std::string& dst,
                                              Band band, const WeightCoefficients& k = {}) {
  topo.node(src);
  topo.node(dst);
  if (src == dst) throw RwaError(RwaErrorCode::InvalidArgument, "source equals destination '" + src + "'");

  struct Label {
    double weight;
    std::vector<std::string> hops;
    std::string node;

    bool better_than(const Label& o) const { return weight != o.weight ? weight < o.weight : hops < o.hops; }
  };
  struct Worse {
    bool operator()(const Label& x, const Label& y) const { return y.better_than(x); }
  };

  std::map<std::string, Label> best;
  std::map<std::string, bool> settled;
  std::priority_queue<Label, std::vector<Label>, Worse> queue;
  best[src] = {0.0, {}, src};
  queue.push(best[src]);
  while (!queue.empty()) {
    Label cur = queue.top();
    queue.pop();
    if (settled[cur.node]) continue;
    const auto& b = best.at(cur.node);
    if (b.weight != cur.weight || b.hops != cur.hops) continue;
    settled[cur.node] = true;
    if (cur.node == dst) return cur.hops;
    if (cur.node != src && !can_transit(topo.node(cur.node))) continue;
    for (const auto& nb : neighbors(topo, cur.node)) {
      if (settled[nb.peer]) continue;
      const auto& l = topo.link(nb.link);
      Label next{cur.weight + edge_weight(topo, l, band, k).value, cur.hops, nb.peer};
      next.hops.push_back(nb.link);
      auto it = best.find(nb.peer);
      if (it == best.end() || next.better_than(it->second)) {
        best[nb.peer] = next;
        queue.push(std::move(next));
      }
    }
  }
  throw RwaError(RwaErrorCode::NoPath, "no path from '" + src + "' to '" + dst + "'");
}

/// Smallest channel of `band` free on every hop.
inline WavelengthChannel assign_first_fit(const Topology& topo, const std::vector<std::string>& hops, Band band) {
  if (hops.empty()) throw RwaError(RwaErrorCode::InvalidArgument, "empty hop list");
  int grid = std::numeric_limits<int>::max();
  for (const auto& h : hops) grid = std::min(grid, topo.link(h).total_wavelengths);
  for (int i = 0; i < grid; ++i) {
    WavelengthChannel ch{band, i};
    bool free = true;
    for (const auto& h : hops) free = free && topo.is_free(h, ch);
    if (free) return ch;
  }
  throw RwaError(RwaErrorCode::Blocked, "no " + std::string(to_string(band)) + "-band channel free on all hops");
}

namespace detail {

inline bool channel_free_on(const Topology& topo, const std::vector<std::string>& hops, const WavelengthChannel& ch) {
  for (const auto& h : hops)
    if (!topo.is_free(h, ch)) return false;
  return true;
}

inline LightPath make_path(const Topology& topo, const std::string& src, const std::string& dst,
                           std::vector<std::string> hops, WavelengthChannel ch, const RouteOptions& opt) {
  LightPath p;
  p.request_id = opt.request_id;
  p.source = src;
  p.target = dst;
  p.total_weight = path_weight(topo, hops, ch.band, opt.weights);
  p.total_loss_db = path_loss_db(topo, src, hops, ch.band);
  p.hops = std::move(hops);
  p.channel = ch;
  return p;
}

inline void occupy_path(Topology& work, const LightPath& p) {
  for (const auto& h : p.hops) work.occupy(h, p.channel);
}

/// Routes an EPS pair to two destinations on `work`, occupying channels there.
inline EntanglementRoute route_pair_on(Topology& work, const std::string& eps, const std::string& dst_signal,
                                       const std::string& dst_idler, const RouteOptions& opt) {
  const auto& eps_node = work.node(eps);
  if (eps_node.kind != NodeKind::EPS) throw RwaError(RwaErrorCode::InvalidArgument, "'" + eps + "' is not an EPS");
  work.node(dst_signal);
  work.node(dst_idler);
  const auto features = *eps_node.features.eps;
  const Band band = features.band;
  auto hops_a = shortest_path(work, eps, dst_signal, band, opt.weights);
  auto hops_b = shortest_path(work, eps, dst_idler, band, opt.weights);

  const auto& in_use = work.eps_pairs_in_use(eps);
  bool any_free_pair = false;
  for (const auto& pair : eps_channel_pairs(features)) {
    const int k = pair.signal.index;
    if (in_use.count(k)) continue;
    any_free_pair = true;
    if (!channel_free_on(work, hops_a, pair.signal) || !channel_free_on(work, hops_b, pair.idler)) continue;
    EntanglementRoute route;
    route.eps = eps;
    route.pair_index = k;
    route.leg_a = make_path(work, eps, dst_signal, hops_a, pair.signal, opt);
    route.leg_b = make_path(work, eps, dst_idler, hops_b, pair.idler, opt);
    occupy_path(work, route.leg_a);
    occupy_path(work, route.leg_b);
    work.claim_eps_pair(eps, k);
    if (opt.clock_paths) {
      for (const auto* leg : {&route.leg_a, &route.leg_b}) {
        const auto ch = assign_first_fit(work, leg->hops, other_band(band));
        auto clock = make_path(work, eps, leg->target, leg->hops, ch, opt);
        occupy_path(work, clock);
        route.clock_paths.push_back(std::move(clock));
      }
    }
    return route;
  }
  if (!any_free_pair) throw RwaError(RwaErrorCode::NoFreePair, "EPS '" + eps + "' has no free channel pair");
  throw RwaError(RwaErrorCode::Blocked, "no EPS channel pair of '" + eps + "' is free along both legs");
}

inline std::vector<std::pair<std::string, WavelengthChannel>> route_slots(const EntanglementRoute& r) {
  std::vector<std::pair<std::string, WavelengthChannel>> out;
  for (const auto* p : r.all_paths())
    for (const auto& h : p->hops) out.emplace_back(h, p->channel);
  return out;
}

}  // namespace detail

/// Book of committed routes. Lives beside the topology it allocates from;
/// release of an unknown or already released route is an error.
class RouteBook {
public:
  std::uint64_t record(const EntanglementRoute& route) {
    const auto id = next_++;
    live_.emplace(id, route);
    live_.at(id).allocation = id;
    return id;
  }

  bool is_live(std::uint64_t id) const { return live_.count(id) != 0; }
  const std::map<std::uint64_t, EntanglementRoute>& live() const { return live_; }

  EntanglementRoute take(std::uint64_t id) {
    auto it = live_.find(id);
    if (it == live_.end()) throw RwaError(RwaErrorCode::UnknownRoute, "route " + std::to_string(id) + " is not live");
    auto r = std::move(it->second);
    live_.erase(it);
    return r;
  }

  /// Sum of hop counts over every live light path.
  std::size_t live_hop_slots() const {
    std::size_t n = 0;
    for (const auto& [id, r] : live_)
      for (const auto* p : r.all_paths()) n += p->hops.size();
    return n;
  }

private:
  std::map<std::uint64_t, EntanglementRoute> live_;
  std::uint64_t next_ = 1;
};

/// Allocates signal and idler legs from `eps` to two Q-nodes. Either every
/// channel is committed or the topology is left untouched.
inline EntanglementRoute route_entanglement(Topology& topo, RouteBook& book, const std::string& eps,
                                            const std::string& qnode1, const std::string& qnode2,
                                            const RouteOptions& opt = {}) {
  Topology work = topo;
  auto route = detail::route_pair_on(work, eps, qnode1, qnode2, opt);
  topo = std::move(work);
  route.allocation = book.record(route);
  return route;
}

/// Two EPS routes meeting at a BSM: eps1 serves qnode1 and the BSM, eps2
/// serves qnode2 and the BSM. All four legs commit together or not at all.
inline std::pair<EntanglementRoute, EntanglementRoute> route_bsm(Topology& topo, RouteBook& book,
                                                                 const std::string& eps1, const std::string& eps2,
                                                                 const std::string& bsm, const std::string& qnode1,
                                                                 const std::string& qnode2,
                                                                 const RouteOptions& opt = {}) {
  if (topo.node(bsm).kind != NodeKind::BSMNode)
    throw RwaError(RwaErrorCode::InvalidArgument, "'" + bsm + "' is not a BSM node");
  Topology work = topo;
  auto first = detail::route_pair_on(work, eps1, qnode1, bsm, opt);
  auto second = detail::route_pair_on(work, eps2, qnode2, bsm, opt);
  topo = std::move(work);
  first.allocation = book.record(first);
  second.allocation = book.record(second);
  return {std::move(first), std::move(second)};
}

/// Frees every channel and the EPS pair held by a live route. Links removed
/// since allocation are skipped.
inline void release_route(Topology& topo, RouteBook& book, const EntanglementRoute& route) {
  auto live = book.take(route.allocation);
  for (const auto& [link, ch] : detail::route_slots(live))
    if (topo.find_link(link) && topo.link(link).occupied.count(ch)) topo.release(link, ch);
  if (topo.find_node(live.eps) && topo.eps_pairs_in_use(live.eps).count(live.pair_index))
    topo.release_eps_pair(live.eps, live.pair_index);
}

inline nlohmann::json to_json(const LightPath& p) {
  return {{"request_id", p.request_id}, {"source", p.source},          {"target", p.target},
          {"hops", p.hops},             {"channel", to_string(p.channel)}, {"total_weight", p.total_weight.value},
          {"total_loss_db", p.total_loss_db}};
}

inline LightPath light_path_from_json(const nlohmann::json& j) {
  LightPath p;
  p.request_id = j.value("request_id", "");
  p.source = j.at("source").get<std::string>();
  p.target = j.at("target").get<std::string>();
  p.hops = j.at("hops").get<std::vector<std::string>>();
  const auto ch = parse_channel(j.at("channel").get<std::string>());
  if (!ch) throw RwaError(RwaErrorCode::InvalidArgument, "bad channel in light path");
  p.channel = *ch;
  p.total_weight.value = j.value("total_weight", 0.0);
  p.total_loss_db = j.value("total_loss_db", 0.0);
  return p;
}

inline nlohmann::json to_json(const EntanglementRoute& r) {
  nlohmann::json clocks = nlohmann::json::array();
  for (const auto& c : r.clock_paths) clocks.push_back(to_json(c));
  return {{"allocation", r.allocation}, {"eps", r.eps},           {"pair_index", r.pair_index},
          {"leg_a", to_json(r.leg_a)},  {"leg_b", to_json(r.leg_b)}, {"clock_paths", clocks}};
}

inline EntanglementRoute route_from_json(const nlohmann::json& j) {
  EntanglementRoute r;
  r.allocation = j.value("allocation", std::uint64_t{0});
  r.eps = j.at("eps").get<std::string>();
  r.pair_index = j.value("pair_index", 0);
  r.leg_a = light_path_from_json(j.at("leg_a"));
  r.leg_b = light_path_from_json(j.at("leg_b"));
  for (const auto& c : j.value("clock_paths", nlohmann::json::array())) r.clock_paths.push_back(light_path_from_json(c));
  return r;
}

}  // namespace ieqnet
