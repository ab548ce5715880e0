#pragma once

// Typed graph model of the optical fabric: nodes, fiber links with optical
// attributes, and per-band wavelength occupancy.

#include "ieqnet/detail/doc_reader.hpp"

#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <compare>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ieqnet {

class TopologyError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

enum class NodeKind { QNode, EPS, BSMNode, OpticalSwitch };

inline std::string_view to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::QNode: return "qnode";
    case NodeKind::EPS: return "eps";
    case NodeKind::BSMNode: return "bsm";
    case NodeKind::OpticalSwitch: return "switch";
  }
  return "?";
}

inline std::optional<NodeKind> parse_node_kind(std::string_view s) {
  if (s == "qnode") return NodeKind::QNode;
  if (s == "eps") return NodeKind::EPS;
  if (s == "bsm") return NodeKind::BSMNode;
  if (s == "switch") return NodeKind::OpticalSwitch;
  return std::nullopt;
}

enum class Band { O, C };

inline std::string_view to_string(Band band) { return band == Band::O ? "O" : "C"; }

inline std::optional<Band> parse_band(std::string_view s) {
  if (s == "O") return Band::O;
  if (s == "C") return Band::C;
  return std::nullopt;
}

inline Band other_band(Band band) { return band == Band::O ? Band::C : Band::O; }

/// One slot of a link's wavelength grid. Ordering is first-fit order:
/// all O-band slots before C-band, then by index.
struct WavelengthChannel {
  Band band = Band::O;
  int index = 0;

  auto operator<=>(const WavelengthChannel&) const = default;
};

inline std::string to_string(const WavelengthChannel& ch) {
  return std::string(to_string(ch.band)) + ":" + std::to_string(ch.index);
}

inline std::optional<WavelengthChannel> parse_channel(std::string_view s) {
  const auto colon = s.find(':');
  if (colon == std::string_view::npos) return std::nullopt;
  auto band = parse_band(s.substr(0, colon));
  if (!band) return std::nullopt;
  const auto digits = s.substr(colon + 1);
  if (digits.empty() || !std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; }))
    return std::nullopt;
  return WavelengthChannel{*band, std::stoi(std::string(digits))};
}

struct EpsFeatures {
  double pair_rate_cps = 0.0;
  int wavelengths = 2;
  Band band = Band::O;

  bool operator==(const EpsFeatures&) const = default;
};

struct QNodeFeatures {
  std::string detector;  // key into the physics profile's detector table

  bool operator==(const QNodeFeatures&) const = default;
};

struct SwitchFeatures {
  int port_count = 0;

  bool operator==(const SwitchFeatures&) const = default;
};

struct FeatureSet {
  std::optional<EpsFeatures> eps;
  std::optional<QNodeFeatures> qnode;
  std::optional<SwitchFeatures> optical_switch;

  bool operator==(const FeatureSet&) const = default;
};

struct PortRef {
  std::string node;
  std::string port;

  auto operator<=>(const PortRef&) const = default;
};

inline std::string to_string(const PortRef& ref) { return ref.node + ":" + ref.port; }

/// Parses a discovery tag of the form `node:port`.
inline std::optional<PortRef> parse_tag(std::string_view tag) {
  const auto colon = tag.find(':');
  if (colon == std::string_view::npos || colon == 0 || colon + 1 == tag.size()) return std::nullopt;
  return PortRef{std::string(tag.substr(0, colon)), std::string(tag.substr(colon + 1))};
}

struct Port {
  std::string id;
  std::string tag;

  bool operator==(const Port&) const = default;
};

struct Node {
  std::string id;
  NodeKind kind = NodeKind::QNode;
  std::string site;
  std::vector<Port> ports;
  FeatureSet features;
  double insertion_loss_db = 0.0;

  const Port* find_port(std::string_view port_id) const {
    for (const auto& p : ports)
      if (p.id == port_id) return &p;
    return nullptr;
  }

  bool operator==(const Node&) const = default;
};

struct Attenuation {
  double o_band = 0.0;
  double c_band = 0.0;

  double operator[](Band band) const { return band == Band::O ? o_band : c_band; }
  bool operator==(const Attenuation&) const = default;
};

struct FiberLink {
  std::string id;
  PortRef a;
  PortRef b;
  double length_km = 1.0;
  Attenuation attenuation_db_per_km;
  int total_wavelengths = 0;  // grid slots per band
  std::set<WavelengthChannel> occupied;
  double pdl_db = 0.0;
  double pmd_ps_per_sqrt_km = 0.0;
  double extra_loss_db = 0.0;  // degradation on top of attenuation x length

  bool touches(std::string_view node) const { return a.node == node || b.node == node; }

  const std::string& peer_of(std::string_view node) const { return a.node == node ? b.node : a.node; }

  double fiber_loss_db(Band band) const { return length_km * attenuation_db_per_km[band] + extra_loss_db; }

  std::size_t occupied_in(Band band) const {
    return static_cast<std::size_t>(
        std::count_if(occupied.begin(), occupied.end(), [&](const auto& ch) { return ch.band == band; }));
  }

  bool operator==(const FiberLink&) const = default;
};

/// Undirected multigraph of typed nodes and fiber links. Every mutation bumps
/// `version()`.
class Topology {
public:
  Topology() = default;

  std::uint64_t version() const { return version_; }
  const std::map<std::string, Node>& nodes() const { return nodes_; }
  const std::map<std::string, FiberLink>& links() const { return links_; }

  const Node* find_node(std::string_view id) const {
    auto it = nodes_.find(std::string(id));
    return it == nodes_.end() ? nullptr : &it->second;
  }

  const FiberLink* find_link(std::string_view id) const {
    auto it = links_.find(std::string(id));
    return it == links_.end() ? nullptr : &it->second;
  }

  const Node& node(std::string_view id) const {
    if (auto* n = find_node(id)) return *n;
    throw TopologyError("unknown node '" + std::string(id) + "'");
  }

  const FiberLink& link(std::string_view id) const {
    if (auto* l = find_link(id)) return *l;
    throw TopologyError("unknown link '" + std::string(id) + "'");
  }

  void add_node(Node node) {
    if (nodes_.count(node.id)) throw TopologyError("duplicate node id '" + node.id + "'");
    std::set<std::string> port_ids;
    for (const auto& p : node.ports)
      if (!port_ids.insert(p.id).second)
        throw TopologyError("duplicate port id '" + p.id + "' on node '" + node.id + "'");
    if (node.kind == NodeKind::EPS) {
      if (!node.features.eps) throw TopologyError("EPS node '" + node.id + "' lacks EPS features");
      const int n = node.features.eps->wavelengths;
      if (n < 2 || n % 2 != 0)
        throw TopologyError("EPS node '" + node.id + "' needs an even wavelength count >= 2, got " + std::to_string(n));
    }
    auto id = node.id;
    nodes_.emplace(std::move(id), std::move(node));
    bump();
  }

  /// Removes a node and every incident link. Returns the removed link ids.
  std::vector<std::string> remove_node(std::string_view id) {
    node(id);
    std::vector<std::string> removed;
    for (auto it = links_.begin(); it != links_.end();) {
      if (it->second.touches(id)) {
        removed.push_back(it->first);
        it = links_.erase(it);
      } else {
        ++it;
      }
    }
    nodes_.erase(std::string(id));
    eps_pairs_in_use_.erase(std::string(id));
    bump();
    return removed;
  }

  void add_link(FiberLink link) {
    if (links_.count(link.id)) throw TopologyError("duplicate link id '" + link.id + "'");
    if (link.a.node == link.b.node) throw TopologyError("link '" + link.id + "' is a self-loop");
    if (!(link.length_km > 0.0)) throw TopologyError("link '" + link.id + "' needs length_km > 0");
    if (link.attenuation_db_per_km.o_band < 0 || link.attenuation_db_per_km.c_band < 0)
      throw TopologyError("link '" + link.id + "' has negative attenuation");
    if (link.total_wavelengths < 0) throw TopologyError("link '" + link.id + "' has negative total_wavelengths");
    for (const auto* end : {&link.a, &link.b}) {
      const auto* n = find_node(end->node);
      if (!n) throw TopologyError("link '" + link.id + "' references unknown node '" + end->node + "'");
      if (!n->find_port(end->port))
        throw TopologyError("link '" + link.id + "' references unknown port '" + to_string(*end) + "'");
      if (auto used = link_at(*end))
        throw TopologyError("port '" + to_string(*end) + "' already used by link '" + *used + "'");
    }
    for (const auto& ch : link.occupied) check_channel(link, ch);
    for (Band band : {Band::O, Band::C})
      if (link.occupied_in(band) > static_cast<std::size_t>(link.total_wavelengths))
        throw TopologyError("link '" + link.id + "' over-occupied");
    auto id = link.id;
    links_.emplace(std::move(id), std::move(link));
    bump();
  }

  void remove_link(std::string_view id) {
    link(id);
    links_.erase(std::string(id));
    bump();
  }

  std::optional<std::string> link_at(const PortRef& end) const {
    for (const auto& [id, l] : links_)
      if (l.a == end || l.b == end) return id;
    return std::nullopt;
  }

  bool is_free(std::string_view link_id, const WavelengthChannel& ch) const {
    const auto& l = link(link_id);
    return ch.index >= 0 && ch.index < l.total_wavelengths && !l.occupied.count(ch);
  }

  void occupy(std::string_view link_id, const WavelengthChannel& ch) {
    auto& l = mutable_link(link_id);
    check_channel(l, ch);
    if (l.occupied.count(ch)) throw TopologyError("channel " + to_string(ch) + " already occupied on '" + l.id + "'");
    l.occupied.insert(ch);
    bump();
  }

  void release(std::string_view link_id, const WavelengthChannel& ch) {
    auto& l = mutable_link(link_id);
    if (!l.occupied.erase(ch)) throw TopologyError("channel " + to_string(ch) + " not occupied on '" + l.id + "'");
    bump();
  }

  void set_extra_loss(std::string_view link_id, double extra_db) {
    if (extra_db < 0) throw TopologyError("extra loss must be >= 0");
    mutable_link(link_id).extra_loss_db = extra_db;
    bump();
  }

  /// EPS signal/idler pairs are identified by their signal channel index k
  /// (the idler is N-1-k).
  const std::set<int>& eps_pairs_in_use(std::string_view eps) const {
    static const std::set<int> empty;
    auto it = eps_pairs_in_use_.find(std::string(eps));
    return it == eps_pairs_in_use_.end() ? empty : it->second;
  }

  void claim_eps_pair(std::string_view eps, int signal_index) {
    const auto& n = node(eps);
    if (n.kind != NodeKind::EPS) throw TopologyError("'" + n.id + "' is not an EPS");
    if (signal_index < 0 || signal_index >= n.features.eps->wavelengths / 2)
      throw TopologyError("EPS pair index out of range");
    if (!eps_pairs_in_use_[n.id].insert(signal_index).second)
      throw TopologyError("EPS pair already in use on '" + n.id + "'");
    bump();
  }

  void release_eps_pair(std::string_view eps, int signal_index) {
    auto it = eps_pairs_in_use_.find(std::string(eps));
    if (it == eps_pairs_in_use_.end() || !it->second.erase(signal_index))
      throw TopologyError("EPS pair not in use on '" + std::string(eps) + "'");
    if (it->second.empty()) eps_pairs_in_use_.erase(it);
    bump();
  }

  /// Total occupied slots over all links.
  std::size_t total_occupancy() const {
    std::size_t n = 0;
    for (const auto& [id, l] : links_) n += l.occupied.size();
    return n;
  }

  /// Equality of content; the revision counter is part of it.
  bool operator==(const Topology&) const = default;

  void set_version(std::uint64_t v) { version_ = v; }

private:
  FiberLink& mutable_link(std::string_view id) {
    auto it = links_.find(std::string(id));
    if (it == links_.end()) throw TopologyError("unknown link '" + std::string(id) + "'");
    return it->second;
  }

  static void check_channel(const FiberLink& l, const WavelengthChannel& ch) {
    if (ch.index < 0 || ch.index >= l.total_wavelengths)
      throw TopologyError("channel " + to_string(ch) + " outside grid of link '" + l.id + "'");
  }

  void bump() { ++version_; }

  std::map<std::string, Node> nodes_;
  std::map<std::string, FiberLink> links_;
  std::map<std::string, std::set<int>> eps_pairs_in_use_;
  std::uint64_t version_ = 0;
};

struct Neighbor {
  std::string link;
  std::string peer;

  bool operator==(const Neighbor&) const = default;
};

/// Links incident to `node_id`, ordered by link id.
inline std::vector<Neighbor> neighbors(const Topology& topo, std::string_view node_id) {
  topo.node(node_id);
  std::vector<Neighbor> out;
  for (const auto& [id, l] : topo.links())
    if (l.touches(node_id)) out.push_back({id, l.peer_of(node_id)});
  return out;
}

/// Free grid slots of one band on a link, in first-fit order.
inline std::vector<WavelengthChannel> available_channels(const Topology& topo, std::string_view link_id,
                                                         Band band = Band::O) {
  const auto& l = topo.link(link_id);
  std::vector<WavelengthChannel> out;
  for (int i = 0; i < l.total_wavelengths; ++i) {
    WavelengthChannel ch{band, i};
    if (!l.occupied.count(ch)) out.push_back(ch);
  }
  return out;
}

struct ChannelPair {
  WavelengthChannel signal;
  WavelengthChannel idler;

  bool operator==(const ChannelPair&) const = default;
};

/// Signal/idler pairs of an EPS grid: channel k pairs with N-1-k.
inline std::vector<ChannelPair> eps_channel_pairs(const EpsFeatures& eps) {
  const int n = eps.wavelengths;
  if (n < 2 || n % 2 != 0)
    throw TopologyError("EPS wavelength count must be even and >= 2, got " + std::to_string(n));
  std::vector<ChannelPair> out;
  for (int k = 0; k < n / 2; ++k) out.push_back({{eps.band, k}, {eps.band, n - 1 - k}});
  return out;
}

// ---------------------------------------------------------------------------
// Topology document

namespace detail {

inline Node read_node(const YAML::Node& yn, const std::string& path) {
  MapReader r(yn, path);
  Node n;
  n.id = r.string("id");
  if (n.id.empty()) throw DocumentError(path + ".id", r.line(), "empty id");
  const auto kind_s = r.string("kind");
  auto kind = parse_node_kind(kind_s);
  if (!kind) throw DocumentError(path + ".kind", r.line(), "unknown node kind '" + kind_s + "'");
  n.kind = *kind;
  n.site = r.string_or("site", "");
  n.insertion_loss_db = r.number_or("insertion_loss_db", 0.0);
  if (n.insertion_loss_db < 0) throw DocumentError(path + ".insertion_loss_db", r.line(), "must be >= 0");
  std::set<std::string> port_ids;
  for (auto& [pn, pp] : r.sequence("ports")) {
    MapReader pr(pn, pp);
    Port port{pr.string("id"), pr.string_or("tag", "")};
    pr.finish();
    if (!port_ids.insert(port.id).second)
      throw DocumentError(pp + ".id", pr.line(), "duplicate port id '" + port.id + "'");
    if (!port.tag.empty() && !parse_tag(port.tag))
      throw DocumentError(pp + ".tag", pr.line(), "malformed tag '" + port.tag + "', expected node:port");
    n.ports.push_back(std::move(port));
  }
  auto features = r.map_optional("features");
  switch (n.kind) {
    case NodeKind::EPS: {
      if (!features) r.fail("EPS node needs 'features' with pair_rate_cps and wavelengths");
      EpsFeatures eps;
      eps.pair_rate_cps = features->number("pair_rate_cps");
      eps.wavelengths = static_cast<int>(features->integer("wavelengths"));
      const auto band_s = features->string_or("band", "O");
      auto band = parse_band(band_s);
      if (!band) throw DocumentError(features->path() + ".band", features->line(), "unknown band '" + band_s + "'");
      eps.band = *band;
      if (eps.wavelengths < 2 || eps.wavelengths % 2 != 0)
        throw DocumentError(features->path() + ".wavelengths", features->line(),
                            "EPS wavelength count must be even and >= 2");
      if (eps.pair_rate_cps < 0)
        throw DocumentError(features->path() + ".pair_rate_cps", features->line(), "must be >= 0");
      n.features.eps = eps;
      break;
    }
    case NodeKind::QNode:
      n.features.qnode = QNodeFeatures{features ? features->string_or("detector", "default") : "default"};
      break;
    case NodeKind::OpticalSwitch: {
      const auto count = features ? features->integer_or("port_count", static_cast<long long>(n.ports.size()))
                                  : static_cast<long long>(n.ports.size());
      if (count < static_cast<long long>(n.ports.size()))
        throw DocumentError(path + ".features.port_count", r.line(), "port_count smaller than declared ports");
      n.features.optical_switch = SwitchFeatures{static_cast<int>(count)};
      break;
    }
    case NodeKind::BSMNode:
      break;
  }
  if (features) features->finish();
  r.finish();
  return n;
}

inline PortRef read_port_ref(MapReader r) {
  PortRef ref{r.string("node"), r.string("port")};
  r.finish();
  return ref;
}

inline FiberLink read_link(const YAML::Node& yn, const std::string& path) {
  MapReader r(yn, path);
  FiberLink l;
  l.id = r.string("id");
  if (l.id.empty()) throw DocumentError(path + ".id", r.line(), "empty id");
  l.a = read_port_ref(r.map("a"));
  l.b = read_port_ref(r.map("b"));
  l.length_km = r.number("length_km");
  if (!(l.length_km > 0)) throw DocumentError(path + ".length_km", r.line(), "must be > 0");
  auto att = r.map("attenuation_db_per_km");
  l.attenuation_db_per_km.o_band = att.number_or("O", 0.0);
  l.attenuation_db_per_km.c_band = att.number_or("C", 0.0);
  att.finish();
  if (l.attenuation_db_per_km.o_band < 0 || l.attenuation_db_per_km.c_band < 0)
    throw DocumentError(path + ".attenuation_db_per_km", r.line(), "attenuation must be >= 0");
  l.total_wavelengths = static_cast<int>(r.integer("total_wavelengths"));
  if (l.total_wavelengths < 0) throw DocumentError(path + ".total_wavelengths", r.line(), "must be >= 0");
  l.pdl_db = r.number_or("pdl_db", 0.0);
  l.pmd_ps_per_sqrt_km = r.number_or("pmd_ps_per_sqrt_km", 0.0);
  l.extra_loss_db = r.number_or("extra_loss_db", 0.0);
  if (l.pdl_db < 0 || l.pmd_ps_per_sqrt_km < 0 || l.extra_loss_db < 0)
    throw DocumentError(path, r.line(), "pdl_db, pmd_ps_per_sqrt_km and extra_loss_db must be >= 0");
  for (auto& [cn, cp] : r.sequence("occupied")) {
    const auto s = MapReader::as_string(cn, cp);
    auto ch = parse_channel(s);
    if (!ch) throw DocumentError(cp, line_of(cn), "malformed channel '" + s + "', expected O:<n> or C:<n>");
    l.occupied.insert(*ch);
  }
  r.finish();
  return l;
}

}  // namespace detail

/// Parses and validates a topology document. The result has version 1.
inline Topology load_topology(const std::string& text) {
  auto root = detail::parse_yaml(text);
  Topology topo;
  if (!root || root.IsNull()) {
    topo.set_version(1);
    return topo;
  }
  detail::MapReader r(root, "");
  std::vector<std::pair<Node, std::string>> nodes;
  for (auto& [yn, path] : r.sequence("nodes")) {
    auto node = detail::read_node(yn, path);
    if (topo.find_node(node.id)) throw DocumentError(path + ".id", detail::line_of(yn), "duplicate node id '" + node.id + "'");
    topo.add_node(node);
    nodes.emplace_back(std::move(node), path);
  }
  for (const auto& [node, path] : nodes) {
    for (std::size_t i = 0; i < node.ports.size(); ++i) {
      const auto& port = node.ports[i];
      if (port.tag.empty()) continue;
      auto ref = *parse_tag(port.tag);
      const auto* peer = topo.find_node(ref.node);
      if (!peer || !peer->find_port(ref.port))
        throw DocumentError(detail::index_path(path + ".ports", i) + ".tag", 0,
                            "dangling port tag reference '" + port.tag + "'");
    }
  }
  for (auto& [yn, path] : r.sequence("links")) {
    auto link = detail::read_link(yn, path);
    if (topo.find_link(link.id))
      throw DocumentError(path + ".id", detail::line_of(yn), "duplicate link id '" + link.id + "'");
    for (const auto* end : {&link.a, &link.b}) {
      const char* side = end == &link.a ? ".a" : ".b";
      const auto* n = topo.find_node(end->node);
      if (!n) throw DocumentError(path + side + ".node", detail::line_of(yn), "unknown node '" + end->node + "'");
      const auto* p = n->find_port(end->port);
      if (!p) throw DocumentError(path + side + ".port", detail::line_of(yn), "unknown port '" + to_string(*end) + "'");
      const auto& peer = end == &link.a ? link.b : link.a;
      if (!p->tag.empty() && p->tag != to_string(peer))
        throw DocumentError(path + side, detail::line_of(yn),
                            "port tag '" + p->tag + "' disagrees with link peer '" + to_string(peer) + "'");
    }
    try {
      topo.add_link(std::move(link));
    } catch (const TopologyError& e) {
      throw DocumentError(path, detail::line_of(yn), e.what());
    }
  }
  r.finish();
  topo.set_version(1);
  return topo;
}

inline Topology load_topology_file(const std::string& path) { return load_topology(read_text_file(path)); }

namespace detail {

inline void emit_node(YAML::Emitter& out, const Node& n) {
  out << YAML::BeginMap;
  out << YAML::Key << "id" << YAML::Value << n.id;
  out << YAML::Key << "kind" << YAML::Value << std::string(to_string(n.kind));
  out << YAML::Key << "site" << YAML::Value << n.site;
  out << YAML::Key << "insertion_loss_db" << YAML::Value << n.insertion_loss_db;
  out << YAML::Key << "ports" << YAML::Value << YAML::BeginSeq;
  for (const auto& p : n.ports) {
    out << YAML::Flow << YAML::BeginMap << YAML::Key << "id" << YAML::Value << p.id;
    if (!p.tag.empty()) out << YAML::Key << "tag" << YAML::Value << p.tag;
    out << YAML::EndMap;
  }
  out << YAML::EndSeq;
  if (n.features.eps) {
    out << YAML::Key << "features" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "pair_rate_cps" << YAML::Value << n.features.eps->pair_rate_cps;
    out << YAML::Key << "wavelengths" << YAML::Value << n.features.eps->wavelengths;
    out << YAML::Key << "band" << YAML::Value << std::string(to_string(n.features.eps->band));
    out << YAML::EndMap;
  } else if (n.features.qnode) {
    out << YAML::Key << "features" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "detector" << YAML::Value << n.features.qnode->detector;
    out << YAML::EndMap;
  } else if (n.features.optical_switch) {
    out << YAML::Key << "features" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "port_count" << YAML::Value << n.features.optical_switch->port_count;
    out << YAML::EndMap;
  }
  out << YAML::EndMap;
}

inline void emit_link(YAML::Emitter& out, const FiberLink& l) {
  out << YAML::BeginMap;
  out << YAML::Key << "id" << YAML::Value << l.id;
  out << YAML::Key << "a" << YAML::Value << YAML::Flow << YAML::BeginMap << YAML::Key << "node" << YAML::Value
      << l.a.node << YAML::Key << "port" << YAML::Value << l.a.port << YAML::EndMap;
  out << YAML::Key << "b" << YAML::Value << YAML::Flow << YAML::BeginMap << YAML::Key << "node" << YAML::Value
      << l.b.node << YAML::Key << "port" << YAML::Value << l.b.port << YAML::EndMap;
  out << YAML::Key << "length_km" << YAML::Value << l.length_km;
  out << YAML::Key << "attenuation_db_per_km" << YAML::Value << YAML::Flow << YAML::BeginMap << YAML::Key << "O"
      << YAML::Value << l.attenuation_db_per_km.o_band << YAML::Key << "C" << YAML::Value
      << l.attenuation_db_per_km.c_band << YAML::EndMap;
  out << YAML::Key << "total_wavelengths" << YAML::Value << l.total_wavelengths;
  out << YAML::Key << "pdl_db" << YAML::Value << l.pdl_db;
  out << YAML::Key << "pmd_ps_per_sqrt_km" << YAML::Value << l.pmd_ps_per_sqrt_km;
  if (l.extra_loss_db != 0.0) out << YAML::Key << "extra_loss_db" << YAML::Value << l.extra_loss_db;
  if (!l.occupied.empty()) {
    out << YAML::Key << "occupied" << YAML::Value << YAML::Flow << YAML::BeginSeq;
    for (const auto& ch : l.occupied) out << to_string(ch);
    out << YAML::EndSeq;
  }
  out << YAML::EndMap;
}

}  // namespace detail

/// Writes a topology document that load_topology accepts.
inline std::string serialize_topology(const Topology& topo) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << YAML::BeginMap;
  out << YAML::Key << "nodes" << YAML::Value << YAML::BeginSeq;
  for (const auto& [id, n] : topo.nodes()) detail::emit_node(out, n);
  out << YAML::EndSeq;
  out << YAML::Key << "links" << YAML::Value << YAML::BeginSeq;
  for (const auto& [id, l] : topo.links()) detail::emit_link(out, l);
  out << YAML::EndSeq;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

inline nlohmann::json node_to_json(const Node& n) {
  using nlohmann::json;
  json ports = json::array();
  for (const auto& p : n.ports) ports.push_back({{"id", p.id}, {"tag", p.tag}});
  json j = {{"id", n.id},
            {"kind", std::string(to_string(n.kind))},
            {"site", n.site},
            {"insertion_loss_db", n.insertion_loss_db},
            {"ports", ports}};
  if (n.features.eps)
    j["features"] = {{"pair_rate_cps", n.features.eps->pair_rate_cps},
                     {"wavelengths", n.features.eps->wavelengths},
                     {"band", std::string(to_string(n.features.eps->band))}};
  else if (n.features.qnode)
    j["features"] = {{"detector", n.features.qnode->detector}};
  else if (n.features.optical_switch)
    j["features"] = {{"port_count", n.features.optical_switch->port_count}};
  return j;
}

inline Node node_from_json(const nlohmann::json& j) {
  Node n;
  n.id = j.at("id").get<std::string>();
  const auto kind = parse_node_kind(j.at("kind").get<std::string>());
  if (!kind) throw TopologyError("unknown node kind in '" + n.id + "'");
  n.kind = *kind;
  n.site = j.value("site", "");
  n.insertion_loss_db = j.value("insertion_loss_db", 0.0);
  for (const auto& p : j.value("ports", nlohmann::json::array()))
    n.ports.push_back({p.at("id").get<std::string>(), p.value("tag", "")});
  if (j.contains("features")) {
    const auto& f = j["features"];
    switch (n.kind) {
      case NodeKind::EPS:
        n.features.eps = EpsFeatures{f.at("pair_rate_cps").get<double>(), f.at("wavelengths").get<int>(),
                                     parse_band(f.value("band", "O")).value_or(Band::O)};
        break;
      case NodeKind::QNode: n.features.qnode = QNodeFeatures{f.value("detector", "default")}; break;
      case NodeKind::OpticalSwitch: n.features.optical_switch = SwitchFeatures{f.value("port_count", 0)}; break;
      case NodeKind::BSMNode: break;
    }
  }
  return n;
}

inline nlohmann::json link_to_json(const FiberLink& l) {
  nlohmann::json occ = nlohmann::json::array();
  for (const auto& ch : l.occupied) occ.push_back(to_string(ch));
  return {{"id", l.id},
          {"a", {{"node", l.a.node}, {"port", l.a.port}}},
          {"b", {{"node", l.b.node}, {"port", l.b.port}}},
          {"length_km", l.length_km},
          {"attenuation_db_per_km", {{"O", l.attenuation_db_per_km.o_band}, {"C", l.attenuation_db_per_km.c_band}}},
          {"total_wavelengths", l.total_wavelengths},
          {"pdl_db", l.pdl_db},
          {"pmd_ps_per_sqrt_km", l.pmd_ps_per_sqrt_km},
          {"extra_loss_db", l.extra_loss_db},
          {"occupied", occ}};
}

inline FiberLink link_from_json(const nlohmann::json& j) {
  FiberLink l;
  l.id = j.at("id").get<std::string>();
  l.a = {j.at("a").at("node").get<std::string>(), j.at("a").at("port").get<std::string>()};
  l.b = {j.at("b").at("node").get<std::string>(), j.at("b").at("port").get<std::string>()};
  l.length_km = j.at("length_km").get<double>();
  l.attenuation_db_per_km = {j.at("attenuation_db_per_km").value("O", 0.0),
                             j.at("attenuation_db_per_km").value("C", 0.0)};
  l.total_wavelengths = j.at("total_wavelengths").get<int>();
  l.pdl_db = j.value("pdl_db", 0.0);
  l.pmd_ps_per_sqrt_km = j.value("pmd_ps_per_sqrt_km", 0.0);
  l.extra_loss_db = j.value("extra_loss_db", 0.0);
  for (const auto& c : j.value("occupied", nlohmann::json::array()))
    if (auto ch = parse_channel(c.get<std::string>())) l.occupied.insert(*ch);
  return l;
}

/// JSON view used by the service API and reports.
inline nlohmann::json topology_to_json(const Topology& topo) {
  using nlohmann::json;
  json nodes = json::array();
  for (const auto& [id, n] : topo.nodes()) {
    json j = node_to_json(n);
    if (n.features.eps) j["features"]["pairs_in_use"] = json(topo.eps_pairs_in_use(id));
    nodes.push_back(std::move(j));
  }
  json links = json::array();
  for (const auto& [id, l] : topo.links()) links.push_back(link_to_json(l));
  return {{"version", topo.version()}, {"nodes", nodes}, {"links", links}};
}

}  // namespace ieqnet
