#pragma once

// The physical side of the network: the installed fabric, per-fiber drift,
// classical launch powers, compensator settings, and the metrics a live
// entanglement route produces on it.

#include "ieqnet/physics.hpp"
#include "ieqnet/profile.hpp"
#include "ieqnet/rwa.hpp"
#include "ieqnet/servo.hpp"
#include "ieqnet/topology.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace ieqnet {

/// Independent, seed-derived PRNG streams, one per stochastic process.
struct RandomStreams {
  explicit RandomStreams(std::uint64_t seed = 1)
      : drift(derive(seed, 1)), sampling(derive(seed, 2)), servo(derive(seed, 3)) {}

  std::mt19937_64 drift;
  std::mt19937_64 sampling;
  std::mt19937_64 servo;

  double normal(std::mt19937_64& g, double sigma) {
    if (sigma <= 0) return 0.0;
    return std::normal_distribution<double>(0.0, sigma)(g);
  }

  std::uint64_t poisson(double mean) {
    if (!(mean > 0) || !std::isfinite(mean)) return 0;
    return std::poisson_distribution<std::uint64_t>(mean)(sampling);
  }

private:
  static std::mt19937_64 derive(std::uint64_t seed, std::uint32_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream};
    return std::mt19937_64(seq);
  }
};

struct FiberDrift {
  double polarization_rad = 0.0;
  double delay_ps = 0.0;
};

/// Compensator settings of one request: a polarization rotation at the end
/// of each leg and, for BSM routes, a delay line in front of the BSM.
struct Compensation {
  std::vector<double> polarization_rad;  // indexed like RoutePhysics::legs
  double delay_ps = 0.0;
};

class Plant {
public:
  Plant() = default;
  explicit Plant(Topology fabric) : fabric_(std::move(fabric)) {}

  Topology& fabric() { return fabric_; }
  const Topology& fabric() const { return fabric_; }

  FiberDrift& drift(const std::string& link) { return drift_[link]; }
  const std::map<std::string, FiberDrift>& drifts() const { return drift_; }

  void set_launch_power(const std::string& link, double dbm) { launch_dbm_[link] = dbm; }
  double launch_power(const std::string& link) const {
    auto it = launch_dbm_.find(link);
    return it == launch_dbm_.end() ? -std::numeric_limits<double>::infinity() : it->second;
  }

  Compensation& compensation(const std::string& request) { return comp_[request]; }
  void forget(const std::string& request) { comp_.erase(request); }

  bool path_intact(const LightPath& p) const {
    for (const auto& h : p.hops)
      if (!fabric_.find_link(h)) return false;
    return fabric_.find_node(p.source) && fabric_.find_node(p.target);
  }

  /// Loss a probe would measure along a light path today.
  double measured_loss_db(const LightPath& p) const {
    if (!path_intact(p)) return std::numeric_limits<double>::infinity();
    return path_loss_db(fabric_, p.source, p.hops, p.channel.band);
  }

  double accumulated_polarization(const LightPath& p) const {
    double sum = 0.0;
    for (const auto& h : p.hops)
      if (auto it = drift_.find(h); it != drift_.end()) sum += it->second.polarization_rad;
    return sum;
  }

  double accumulated_delay(const LightPath& p) const {
    double sum = 0.0;
    for (const auto& h : p.hops)
      if (auto it = drift_.find(h); it != drift_.end()) sum += it->second.delay_ps;
    return sum;
  }

  /// Total classical power sharing the path's fibers, in dBm.
  double copropagating_power_dbm(const LightPath& p) const {
    double mw = 0.0;
    for (const auto& h : p.hops) mw += physics::dbm_to_mw(launch_power(h));
    return mw > 0 ? 10.0 * std::log10(mw) : -std::numeric_limits<double>::infinity();
  }

private:
  Topology fabric_;
  std::map<std::string, FiberDrift> drift_;
  std::map<std::string, double> launch_dbm_;
  std::map<std::string, Compensation> comp_;
};

/// Light paths of a request in compensator order. A direct route has
/// legs {to qnode_a, to qnode_b}; a BSM route has
/// {eps1 -> qnode_a, eps1 -> bsm, eps2 -> qnode_b, eps2 -> bsm}.
inline std::vector<const LightPath*> request_legs(const std::vector<EntanglementRoute>& routes) {
  std::vector<const LightPath*> legs;
  for (const auto& r : routes) {
    legs.push_back(&r.leg_a);
    legs.push_back(&r.leg_b);
  }
  return legs;
}

struct RouteMetrics {
  physics::DetectionStats stats;
  double visibility = 0.0;
  double fidelity = 0.5;
  double ebit_rate = 0.0;  // expected ebits per second
  std::vector<double> polarization_offsets;
  double delay_offset_ps = 0.0;
};

/// Evaluates the expected-value physics of a request's routes on the plant.
class RouteEvaluator {
public:
  RouteEvaluator(const PhysicsProfile& profile, const Plant& plant) : profile_(profile), plant_(plant) {}

  double residual_polarization(const std::vector<EntanglementRoute>& routes, std::size_t leg,
                               const Compensation& comp) const {
    const auto legs = request_legs(routes);
    const double c = leg < comp.polarization_rad.size() ? comp.polarization_rad[leg] : 0.0;
    return wrap_polarization(plant_.accumulated_polarization(*legs.at(leg)) - c);
  }

  /// Relative arrival delay of the two photons at the BSM after compensation.
  double residual_delay(const std::vector<EntanglementRoute>& routes, const Compensation& comp) const {
    if (routes.size() < 2) return 0.0;
    return plant_.accumulated_delay(routes[0].leg_b) - plant_.accumulated_delay(routes[1].leg_b) - comp.delay_ps;
  }

  physics::ChannelPhysics channel(const LightPath& p) const {
    auto ch = profile_.channel(plant_.measured_loss_db(p));
    return ch;
  }

  physics::DetectionStats pair_stats(const EntanglementRoute& r, const std::string& det_a,
                                     const std::string& det_b) const {
    physics::EPSParams eps = profile_.eps;
    eps.pair_rate_cps = plant_.fabric().node(r.eps).features.eps->pair_rate_cps;
    return physics::detection_statistics(eps, channel(r.leg_a), channel(r.leg_b), profile_.detector(det_a),
                                         profile_.detector(det_b), plant_.copropagating_power_dbm(r.leg_a),
                                         plant_.copropagating_power_dbm(r.leg_b));
  }

  RouteMetrics evaluate(const std::vector<EntanglementRoute>& routes, const Compensation& comp,
                        const std::string& det_a, const std::string& det_b) const {
    RouteMetrics m;
    for (std::size_t i = 0; i < request_legs(routes).size(); ++i)
      m.polarization_offsets.push_back(residual_polarization(routes, i, comp));
    for (const auto* leg : request_legs(routes))
      if (!plant_.path_intact(*leg)) return m;

    if (routes.size() == 1) {
      m.stats = pair_stats(routes[0], det_a, det_b);
      m.visibility = physics::visibility_from_noise(m.stats, profile_.intrinsic_visibility) *
                     physics::polarization_error(m.polarization_offsets[0]) *
                     physics::polarization_error(m.polarization_offsets[1]);
      m.fidelity = (1.0 + 3.0 * m.visibility) / 4.0;  // Werner-state fidelity
      m.ebit_rate = m.stats.true_coinc;
      return m;
    }

    // BSM route: the first source's BSM photon plays the qubit, the second
    // source's pair carries the teleported state to qnode_b.
    m.delay_offset_ps = residual_delay(routes, comp);
    m.stats = pair_stats(routes[1], "bsm", det_b);
    m.visibility = physics::visibility_from_noise(m.stats, profile_.intrinsic_visibility) *
                   physics::polarization_error(m.polarization_offsets[2]) *
                   physics::polarization_error(m.polarization_offsets[3]);
    auto t = teleport_setup(routes);
    t.indistinguishability = physics::delayed_indistinguishability(
                                 profile_.eps.indistinguishability, m.delay_offset_ps, profile_.hom.coherence_time_ps) *
                             physics::polarization_error(m.polarization_offsets[1] - m.polarization_offsets[3]);
    const auto est = physics::teleportation_estimate(t);
    m.fidelity = est.fidelity_avg;
    m.ebit_rate = est.rate_hz;
    return m;
  }

  physics::TeleportSetup teleport_setup(const std::vector<EntanglementRoute>& routes) const {
    physics::TeleportSetup t;
    t.clock = profile_.clock;
    t.qubit_mean_photon = profile_.teleport.qubit_mean_photon;
    t.pair_probability = profile_.teleport.pair_probability;
    t.indistinguishability = profile_.eps.indistinguishability;
    t.alice_to_bsm = channel(routes[0].leg_b);
    t.bob_to_bsm = channel(routes[1].leg_b);
    t.bob_to_receiver = channel(routes[1].leg_a);
    t.bsm_detector = profile_.detector("bsm");
    t.receiver_detector = profile_.detector("receiver");
    t.launch_power_dbm = std::max(plant_.copropagating_power_dbm(routes[0].leg_b),
                                  plant_.copropagating_power_dbm(routes[1].leg_b));
    t.bsm_success_prob = profile_.teleport.bsm_success_prob;
    return t;
  }

private:
  const PhysicsProfile& profile_;
  const Plant& plant_;
};

}  // namespace ieqnet
