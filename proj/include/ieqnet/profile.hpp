#pragma once

// Named physics presets loaded from YAML profile documents.

#include "ieqnet/detail/doc_reader.hpp"
#include "ieqnet/physics.hpp"

#include <map>
#include <string>
#include <vector>

namespace ieqnet {

struct HomParams {
  double visibility = 0.9;
  double coherence_time_ps = 40.0;
};

struct TeleportParams {
  double qubit_mean_photon = 0.02;
  double pair_probability = 0.01;
  double bsm_success_prob = 0.5;
};

/// A fiber span of a reference setup.
struct SpanSpec {
  double length_km = 0.0;
  double attenuation_db_per_km = 0.0;
  double insertion_loss_db = 0.0;

  double loss_db() const { return length_km * attenuation_db_per_km + insertion_loss_db; }
};

struct CoexistenceReference {
  SpanSpec signal;
  SpanSpec idler;
  double signal_nm = 1310.0;
  double idler_nm = 1330.0;
  std::vector<double> sweep_dbm;
};

struct TeleportReference {
  SpanSpec alice_to_bsm;
  SpanSpec bob_to_bsm;
  SpanSpec bob_to_receiver;
};

struct PhysicsProfile {
  std::string name;
  physics::ClockParams clock;
  physics::EPSParams eps;
  std::map<std::string, physics::DetectorParams> detectors;
  double raman_coeff = 0.0;
  double filter_bandwidth_ghz = 100.0;
  double coincidence_window_ns = 0.5;
  double launch_power_dbm = 0.0;  // operating point for the reference setup
  double intrinsic_visibility = 0.8;
  HomParams hom;
  TeleportParams teleport;
  std::optional<CoexistenceReference> coexistence;
  std::optional<TeleportReference> teleportation;

  const physics::DetectorParams& detector(const std::string& name) const {
    if (auto it = detectors.find(name); it != detectors.end()) return it->second;
    if (auto it = detectors.find("default"); it != detectors.end()) return it->second;
    static const physics::DetectorParams fallback;
    return fallback;
  }

  physics::ChannelPhysics channel(double loss_db) const {
    physics::ChannelPhysics ch;
    ch.loss_db = loss_db;
    ch.raman_coeff = raman_coeff;
    ch.filter_bandwidth_ghz = filter_bandwidth_ghz;
    ch.coincidence_window_ns = coincidence_window_ns;
    return ch;
  }

  /// Coexistence reference as a detection setup (no Raman on the idler).
  physics::CoexistenceSetup coexistence_setup() const {
    if (!coexistence) throw std::invalid_argument("profile '" + name + "' has no coexistence reference");
    physics::CoexistenceSetup s;
    s.eps = eps;
    s.signal = channel(coexistence->signal.loss_db());
    s.idler = channel(coexistence->idler.loss_db());
    s.idler.raman_coeff = 0.0;
    s.det_signal = detector("signal");
    s.det_idler = detector("idler");
    s.intrinsic_visibility = intrinsic_visibility;
    return s;
  }

  physics::TeleportSetup teleport_setup() const {
    if (!teleportation) throw std::invalid_argument("profile '" + name + "' has no teleportation reference");
    physics::TeleportSetup t;
    t.clock = clock;
    t.qubit_mean_photon = teleport.qubit_mean_photon;
    t.pair_probability = teleport.pair_probability;
    t.indistinguishability = eps.indistinguishability;
    t.alice_to_bsm = channel(teleportation->alice_to_bsm.loss_db());
    t.bob_to_bsm = channel(teleportation->bob_to_bsm.loss_db());
    t.bob_to_receiver = channel(teleportation->bob_to_receiver.loss_db());
    t.bsm_detector = detector("bsm");
    t.receiver_detector = detector("receiver");
    t.bsm_success_prob = teleport.bsm_success_prob;
    return t;
  }
};

namespace detail {

inline SpanSpec read_span(MapReader r) {
  SpanSpec s;
  s.length_km = r.number_or("length_km", 0.0);
  s.attenuation_db_per_km = r.number_or("attenuation_db_per_km", 0.0);
  s.insertion_loss_db = r.number_or("insertion_loss_db", 0.0);
  r.finish();
  if (s.length_km < 0 || s.attenuation_db_per_km < 0 || s.insertion_loss_db < 0)
    r.fail("span values must be >= 0");
  return s;
}

}  // namespace detail

inline PhysicsProfile load_profile(const std::string& text) {
  using detail::MapReader;
  MapReader r(detail::parse_yaml(text), "");
  PhysicsProfile p;
  p.name = r.string("name");
  if (auto c = r.map_optional("clock")) {
    p.clock.clock_rate_hz = c->number_or("clock_rate_hz", p.clock.clock_rate_hz);
    p.clock.sync_jitter_ps = c->number_or("sync_jitter_ps", p.clock.sync_jitter_ps);
    c->finish();
  }
  if (auto e = r.map_optional("eps")) {
    p.eps.pair_rate_cps = e->number_or("pair_rate_cps", p.eps.pair_rate_cps);
    p.eps.indistinguishability = e->number_or("indistinguishability", p.eps.indistinguishability);
    e->finish();
  }
  if (r.has("detectors")) {
    auto node = r.get("detectors");
    if (!node.IsMap()) throw DocumentError("detectors", detail::line_of(node), "expected a map");
    for (const auto& kv : node) {
      const auto name = kv.first.as<std::string>();
      MapReader dr(kv.second, "detectors." + name);
      physics::DetectorParams det;
      det.efficiency = dr.number_or("efficiency", det.efficiency);
      det.dark_rate_cps = dr.number_or("dark_rate_cps", det.dark_rate_cps);
      det.jitter_ps = dr.number_or("jitter_ps", det.jitter_ps);
      dr.finish();
      try {
        det.validate();
      } catch (const std::exception& ex) {
        dr.fail(ex.what());
      }
      p.detectors[name] = det;
    }
  }
  if (auto c = r.map_optional("channel")) {
    p.raman_coeff = c->number_or("raman_coeff", p.raman_coeff);
    p.filter_bandwidth_ghz = c->number_or("filter_bandwidth_ghz", p.filter_bandwidth_ghz);
    p.coincidence_window_ns = c->number_or("coincidence_window_ns", p.coincidence_window_ns);
    c->finish();
  }
  p.launch_power_dbm = r.number_or("launch_power_dbm", p.launch_power_dbm);
  p.intrinsic_visibility = r.number_or("intrinsic_visibility", p.intrinsic_visibility);
  if (auto h = r.map_optional("hom")) {
    p.hom.visibility = h->number_or("visibility", p.hom.visibility);
    p.hom.coherence_time_ps = h->number_or("coherence_time_ps", p.hom.coherence_time_ps);
    h->finish();
  }
  if (auto t = r.map_optional("teleport")) {
    p.teleport.qubit_mean_photon = t->number_or("qubit_mean_photon", p.teleport.qubit_mean_photon);
    p.teleport.pair_probability = t->number_or("pair_probability", p.teleport.pair_probability);
    p.teleport.bsm_success_prob = t->number_or("bsm_success_prob", p.teleport.bsm_success_prob);
    t->finish();
  }
  if (auto c = r.map_optional("coexistence_reference")) {
    CoexistenceReference ref;
    ref.signal = detail::read_span(c->map("signal"));
    ref.idler = detail::read_span(c->map("idler"));
    ref.signal_nm = c->number_or("signal_nm", ref.signal_nm);
    ref.idler_nm = c->number_or("idler_nm", ref.idler_nm);
    for (auto& [n, path] : c->sequence("sweep_dbm")) ref.sweep_dbm.push_back(MapReader::as_number(n, path));
    c->finish();
    p.coexistence = ref;
  }
  if (auto t = r.map_optional("teleport_reference")) {
    TeleportReference ref;
    ref.alice_to_bsm = detail::read_span(t->map("alice_to_bsm"));
    ref.bob_to_bsm = detail::read_span(t->map("bob_to_bsm"));
    ref.bob_to_receiver = detail::read_span(t->map("bob_to_receiver"));
    t->finish();
    p.teleportation = ref;
  }
  r.finish();
  try {
    p.clock.validate();
    p.eps.validate();
  } catch (const std::exception& ex) {
    throw DocumentError("", 0, ex.what());
  }
  if (!(p.intrinsic_visibility >= 0 && p.intrinsic_visibility <= 1))
    throw DocumentError("intrinsic_visibility", 0, "must lie in [0,1]");
  if (!(p.teleport.bsm_success_prob > 0 && p.teleport.bsm_success_prob <= 0.5))
    throw DocumentError("teleport.bsm_success_prob", 0, "must lie in (0, 0.5]");
  return p;
}

inline PhysicsProfile load_profile_file(const std::string& path) { return load_profile(read_text_file(path)); }

}  // namespace ieqnet
