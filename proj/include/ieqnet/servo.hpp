#pragma once

// Calibration servos: HOM-dip delay tracking and polarization compensation
// from a co-propagating classical reference.

#include "ieqnet/physics.hpp"
#include "ieqnet/profile.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string_view>

namespace ieqnet {

enum class ServoObservable { HomDip, PolarizationVisibility };

inline const char* to_string(ServoObservable o) {
  return o == ServoObservable::HomDip ? "hom_dip" : "polarization_visibility";
}

struct ServoLoop {
  ServoObservable observable = ServoObservable::HomDip;
  double period_s = 1.0;
  double gain = 1.0;        // (0, 1]
  double tolerance = 2.0;   // ps for HomDip, rad for PolarizationVisibility
  double probe_step = 10.0; // ps, HOM dither amplitude
  int step_budget = 20;     // steps per calibration attempt

  void validate() const {
    if (!(gain > 0 && gain <= 1)) throw std::invalid_argument("servo gain must lie in (0, 1]");
    if (!(tolerance > 0)) throw std::invalid_argument("servo tolerance must be > 0");
    if (!(period_s > 0)) throw std::invalid_argument("servo period must be > 0");
    if (observable == ServoObservable::HomDip && !(probe_step > 0))
      throw std::invalid_argument("HOM probe step must be > 0");
    if (step_budget < 1) throw std::invalid_argument("servo step budget must be >= 1");
  }
};

/// Turns an expected count into an observed one; identity by default.
using CountSampler = std::function<double(double expected)>;

/// One HOM servo iteration. Samples the dip at the current delay and at
/// +/- probe_step; if the three samples bracket the minimum the parabola
/// vertex gives the correction, otherwise the servo walks one probe step
/// downhill. Returns the new relative delay.
inline double hom_servo_step(double delay_offset_ps, const ServoLoop& servo, const HomParams& hom,
                             double baseline_counts = 1e6, const CountSampler& sample = {}) {
  servo.validate();
  auto measure = [&](double tau) {
    const double expected = physics::hom_coincidences(tau, baseline_counts, hom.visibility, hom.coherence_time_ps);
    return sample ? sample(expected) : expected;
  };
  const double d = servo.probe_step;
  const double c0 = measure(delay_offset_ps);
  const double cm = measure(delay_offset_ps - d);
  const double cp = measure(delay_offset_ps + d);
  double move = 0.0;
  const double curvature = cm - 2.0 * c0 + cp;
  if (curvature > 0 && c0 <= cm && c0 <= cp) {
    move = 0.5 * d * (cm - cp) / curvature;
    move = std::clamp(move, -d, d);
  } else if (cp < cm) {
    move = d;
  } else if (cm < cp) {
    move = -d;
  }
  return delay_offset_ps + servo.gain * move;
}

/// Wraps a polarization rotation into (-pi/2, pi/2]; cos^2 has period pi.
inline double wrap_polarization(double rad) {
  constexpr double pi = std::numbers::pi;
  double w = std::fmod(rad, pi);
  if (w <= -pi / 2) w += pi;
  if (w > pi / 2) w -= pi;
  return w;
}

/// Estimates the rotation of a classical reference from two projections:
/// H/V gives |offset|, the diagonal projection gives the sign.
inline double estimate_polarization_offset(double offset_rad, const CountSampler& sample = {}) {
  const double x = wrap_polarization(offset_rad);
  double hv = physics::polarization_error(x);
  double diag = physics::polarization_error(x - std::numbers::pi / 4);
  if (sample) {
    hv = sample(hv);
    diag = sample(diag);
  }
  const double magnitude = std::acos(std::sqrt(std::clamp(hv, 0.0, 1.0)));
  return diag >= 0.5 ? magnitude : -magnitude;
}

/// One polarization servo iteration; returns the residual offset after the
/// corrective rotation gain x estimate.
inline double polarization_servo_step(double offset_rad, const ServoLoop& servo, const CountSampler& sample = {}) {
  servo.validate();
  return wrap_polarization(offset_rad - servo.gain * estimate_polarization_offset(offset_rad, sample));
}

}  // namespace ieqnet
