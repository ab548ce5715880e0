#pragma once

// Phenomenological optical physics: loss, Raman noise from co-propagating
// classical light, pair-detection statistics, interference visibilities,
// clock-jitter misidentification and teleportation estimates.
//
// Everything here returns expected values. Sampling happens in the simulator.

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace ieqnet::physics {

struct ChannelPhysics {
  double loss_db = 0.0;
  double raman_coeff = 0.0;  // counts/s per mW of launch power per GHz of filter bandwidth
  double polarization_offset_rad = 0.0;
  double delay_offset_ps = 0.0;
  double filter_bandwidth_ghz = 100.0;
  double coincidence_window_ns = 0.5;

  void validate() const {
    if (!(loss_db >= 0) || !(filter_bandwidth_ghz > 0) || !(coincidence_window_ns > 0) || raman_coeff < 0)
      throw std::invalid_argument("invalid channel physics");
  }
};

struct DetectorParams {
  double efficiency = 0.8;
  double dark_rate_cps = 100.0;
  double jitter_ps = 0.0;  // Gaussian sigma

  void validate() const {
    if (!(efficiency >= 0 && efficiency <= 1) || dark_rate_cps < 0 || jitter_ps < 0)
      throw std::invalid_argument("invalid detector params");
  }
};

struct EPSParams {
  double pair_rate_cps = 1e6;
  double indistinguishability = 1.0;

  void validate() const {
    if (pair_rate_cps < 0 || !(indistinguishability >= 0 && indistinguishability <= 1))
      throw std::invalid_argument("invalid EPS params");
  }
};

struct ClockParams {
  double clock_rate_hz = 9.0e7;
  double sync_jitter_ps = 5.0;

  void validate() const {
    if (!(clock_rate_hz > 0) || sync_jitter_ps < 0) throw std::invalid_argument("invalid clock params");
  }
};

inline constexpr double kInfiniteCar = std::numeric_limits<double>::infinity();

inline double transmittance(double loss_db) {
  if (loss_db < 0) throw std::invalid_argument("loss_db must be >= 0");
  return std::pow(10.0, -loss_db / 10.0);
}

/// dBm to mW; -inf dBm maps to exactly zero.
inline double dbm_to_mw(double dbm) {
  if (std::isinf(dbm) && dbm < 0) return 0.0;
  return std::pow(10.0, dbm / 10.0);
}

/// Raman photons reaching the quantum receiver, linear in launch power (mW)
/// and in filter bandwidth.
inline double raman_noise_rate(double launch_power_dbm, const ChannelPhysics& ch) {
  ch.validate();
  return ch.raman_coeff * dbm_to_mw(launch_power_dbm) * ch.filter_bandwidth_ghz;
}

struct DetectionStats {
  double singles_a = 0.0;
  double singles_b = 0.0;
  double true_coinc = 0.0;
  double accidentals = 0.0;
  double car = kInfiniteCar;  // +inf when accidentals vanish
};

/// Expected count rates for a pair source feeding two detectors. The
/// accidental rate uses the window of leg A.
inline DetectionStats detection_statistics(const EPSParams& eps, const ChannelPhysics& leg_a,
                                           const ChannelPhysics& leg_b, const DetectorParams& det_a,
                                           const DetectorParams& det_b, double launch_power_a_dbm,
                                           double launch_power_b_dbm) {
  eps.validate();
  det_a.validate();
  det_b.validate();
  const double ta = transmittance(leg_a.loss_db) * det_a.efficiency;
  const double tb = transmittance(leg_b.loss_db) * det_b.efficiency;
  DetectionStats s;
  s.singles_a = eps.pair_rate_cps * ta + raman_noise_rate(launch_power_a_dbm, leg_a) + det_a.dark_rate_cps;
  s.singles_b = eps.pair_rate_cps * tb + raman_noise_rate(launch_power_b_dbm, leg_b) + det_b.dark_rate_cps;
  s.true_coinc = eps.pair_rate_cps * ta * tb;
  s.accidentals = s.singles_a * s.singles_b * leg_a.coincidence_window_ns * 1e-9;
  s.car = s.accidentals > 0 ? (s.true_coinc + s.accidentals) / s.accidentals : kInfiniteCar;
  return s;
}

/// Two-photon polarization fringe: C(0) = max_coinc, C(pi/4) = max_coinc (1-V)/(1+V).
inline double fringe_coincidences(double relative_hwp_angle_rad, double max_coinc, double visibility) {
  if (!(visibility >= 0 && visibility <= 1)) throw std::invalid_argument("visibility outside [0,1]");
  const double c = std::cos(2.0 * relative_hwp_angle_rad);
  return max_coinc * (1.0 - visibility + 2.0 * visibility * c * c) / (1.0 + visibility);
}

/// Fraction of coincidences that are true pairs.
inline double signal_fraction(const DetectionStats& s) {
  const double total = s.true_coinc + s.accidentals;
  return total > 0 ? s.true_coinc / total : 1.0;
}

inline double visibility_from_noise(const DetectionStats& s, double intrinsic_visibility) {
  return intrinsic_visibility * signal_fraction(s);
}

/// Hong-Ou-Mandel dip with a Gaussian envelope.
inline double hom_coincidences(double relative_delay_ps, double baseline_coinc, double hom_visibility,
                               double coherence_time_ps) {
  if (!(hom_visibility >= 0 && hom_visibility <= 1)) throw std::invalid_argument("HOM visibility outside [0,1]");
  if (!(coherence_time_ps > 0)) throw std::invalid_argument("coherence time must be > 0");
  const double x = relative_delay_ps / coherence_time_ps;
  return baseline_coinc * (1.0 - hom_visibility * std::exp(-x * x));
}

/// Effective photon indistinguishability after a residual delay mismatch.
inline double delayed_indistinguishability(double indistinguishability, double delay_ps, double coherence_time_ps) {
  const double x = delay_ps / coherence_time_ps;
  return indistinguishability * std::exp(-x * x);
}

/// Probability that the combined timing error pushes a detection out of its
/// clock bin (two-sided Gaussian tail beyond half the bin width).
inline double clock_misidentification_probability(const ClockParams& clock, double detector_jitter_ps = 0.0) {
  clock.validate();
  const double sigma = std::hypot(clock.sync_jitter_ps, detector_jitter_ps);
  if (sigma == 0.0) return 0.0;
  const double half_bin_ps = 0.5e12 / clock.clock_rate_hz;
  return std::erfc(half_bin_ps / (sigma * std::numbers::sqrt2));
}

inline double polarization_error(double offset_rad) {
  const double c = std::cos(offset_rad);
  return c * c;
}

/// Teleportation link: Alice's qubit and one photon of Bob's pair meet at the
/// BSM; the partner photon travels to the receiving node.
struct TeleportSetup {
  ClockParams clock;
  double qubit_mean_photon = 0.02;   // Alice, per clock cycle
  double pair_probability = 0.01;    // Bob's source, per clock cycle
  double indistinguishability = 0.8; // at the BSM
  ChannelPhysics alice_to_bsm;
  ChannelPhysics bob_to_bsm;
  ChannelPhysics bob_to_receiver;
  DetectorParams bsm_detector;
  DetectorParams receiver_detector;
  double launch_power_dbm = -std::numeric_limits<double>::infinity();  // classical light sharing the BSM fibers
  double bsm_success_prob = 0.5;
};

struct TeleportEstimate {
  double rate_hz = 0.0;
  double fidelity_avg = 0.5;
  double signal_fraction = 1.0;
};

inline TeleportEstimate teleportation_estimate(const TeleportSetup& t) {
  t.clock.validate();
  if (!(t.bsm_success_prob > 0 && t.bsm_success_prob <= 0.5))
    throw std::invalid_argument("bsm_success_prob must lie in (0, 0.5]");
  if (!(t.indistinguishability >= 0 && t.indistinguishability <= 1))
    throw std::invalid_argument("indistinguishability outside [0,1]");
  const double f = t.clock.clock_rate_hz;
  const double p_qubit = t.qubit_mean_photon * transmittance(t.alice_to_bsm.loss_db) * t.bsm_detector.efficiency;
  const double p_pair = t.pair_probability * transmittance(t.bob_to_bsm.loss_db) * t.bsm_detector.efficiency;
  const double p_recv = transmittance(t.bob_to_receiver.loss_db) * t.receiver_detector.efficiency;

  TeleportEstimate est;
  est.rate_hz = f * p_qubit * p_pair * p_recv * t.bsm_success_prob;

  // BSM two-fold statistics: signal needs both photons in the same clock bin,
  // accidentals pair a noise click with anything on the other input.
  const double arrivals_a = f * p_qubit;
  const double arrivals_b = f * p_pair;
  const double noise_a = t.bsm_detector.dark_rate_cps + raman_noise_rate(t.launch_power_dbm, t.alice_to_bsm);
  const double noise_b = t.bsm_detector.dark_rate_cps + raman_noise_rate(t.launch_power_dbm, t.bob_to_bsm);
  const double true_coinc = f * p_qubit * p_pair;
  const double window_s = t.alice_to_bsm.coincidence_window_ns * 1e-9;
  const double accidentals = (noise_a * (arrivals_b + noise_b) + arrivals_a * noise_b) * window_s;
  est.signal_fraction = (true_coinc + accidentals) > 0 ? true_coinc / (true_coinc + accidentals) : 1.0;

  const double f_max = (2.0 + t.indistinguishability) / 3.0;
  est.fidelity_avg = f_max * est.signal_fraction + (1.0 - est.signal_fraction) / 2.0;
  return est;
}

/// Two-leg coexistence measurement: the signal photon shares fiber with the
/// classical channel, the idler stays local.
struct CoexistenceSetup {
  EPSParams eps;
  ChannelPhysics signal;
  ChannelPhysics idler;
  DetectorParams det_signal;
  DetectorParams det_idler;
  double intrinsic_visibility = 0.8;

  DetectionStats stats_at(double launch_power_dbm) const {
    return detection_statistics(eps, signal, idler, det_signal, det_idler, launch_power_dbm,
                                -std::numeric_limits<double>::infinity());
  }

  double visibility_at(double launch_power_dbm) const {
    return visibility_from_noise(stats_at(launch_power_dbm), intrinsic_visibility);
  }
};

/// Finds the Raman coefficient that puts the effective visibility at
/// `target_visibility` for the given launch power. Bisection on a quantity
/// that is strictly decreasing in the coefficient.
inline double fit_raman_coeff(CoexistenceSetup setup, double launch_power_dbm, double target_visibility) {
  setup.signal.raman_coeff = 0.0;
  if (setup.visibility_at(launch_power_dbm) < target_visibility)
    throw std::invalid_argument("target visibility unreachable even without Raman noise");
  double lo = 0.0;
  double hi = 1.0;
  for (;;) {
    setup.signal.raman_coeff = hi;
    if (setup.visibility_at(launch_power_dbm) < target_visibility) break;
    hi *= 2.0;
    if (hi > 1e15) throw std::invalid_argument("target visibility unreachable");
  }
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    setup.signal.raman_coeff = mid;
    (setup.visibility_at(launch_power_dbm) > target_visibility ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace ieqnet::physics
