// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include "support/oracles.hpp"

#include <chrono>
#include <iostream>
#include <sstream>

using namespace ieqnet;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      if (!pass) detail << "; ";
      else detail.str("");
      pass = false;
      detail << what;
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Outcome rwa_oracle() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(20240611);
  int graphs = 0, mismatches = 0;
  for (int trial = 0; trial < 200; ++trial, ++graphs) {
    auto g = oracle::random_multigraph(rng);
    auto expect = oracle::brute_force_shortest(g.topo, g.src, g.dst, Band::O);
    std::vector<std::string> hops;
    try {
      hops = shortest_path(g.topo, g.src, g.dst, Band::O);
    } catch (const RwaError&) {
      if (expect) ++mismatches;
      continue;
    }
    if (!expect || path_weight(g.topo, hops, Band::O).value != expect->weight) {
      ++mismatches;
      continue;
    }
    const int ff = oracle::brute_force_first_fit(g.topo, hops, Band::O);
    int got = -1;
    try {
      got = assign_first_fit(g.topo, hops, Band::O).index;
    } catch (const RwaError&) {
    }
    if (got != ff) ++mismatches;
  }
  const double dt = seconds_since(t0);
  o.require(mismatches == 0, std::to_string(mismatches) + " mismatches");
  o.require(dt < 10.0, "runtime " + std::to_string(dt) + " s");
  if (o.pass) o.detail << graphs << " graphs, 0 mismatches, " << dt << " s";
  return o;
}

Outcome golden_traces() {
  Outcome o;
  const auto discovery = oracle::read_lines(oracle::source_path("tests/golden/discovery.txt"));
  const auto messages = oracle::read_lines(oracle::source_path("tests/golden/request_messages.txt"));
  auto d = run_scenario(oracle::load_scenario("scenarios/discovery_only.yaml")).document;
  o.require(oracle::discovery_kinds(d) == discovery, "4-site discovery differs from golden");
  auto h = run_scenario(oracle::load_scenario("scenarios/happy_path.yaml")).document;
  const auto& r = h.at("requests").at(0);
  o.require(r.at("state") == "Completed", "happy path ended " + r.at("state").get<std::string>());
  o.require(oracle::request_kinds(h.at("trace"), r.at("id"), true) == messages, "request trace differs from golden");
  if (o.pass) o.detail << discovery.size() << " discovery kinds, " << messages.size() << " request kinds";
  return o;
}

Outcome lifecycle_safety() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  auto fabric = oracle::load_topology("topologies/ieqnet_4site.yaml");
  auto profile = oracle::load_profile("qlan2_coexist");
  std::size_t violations = 0, requests = 0;
  std::string first;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    auto doc = run_scenario(oracle::random_scenario(seed, fabric, profile)).document;
    requests += doc.at("requests").size();
    auto v = oracle::lifecycle_violations(doc);
    if (!v.empty() && first.empty()) first = "seed " + std::to_string(seed) + ": " + v.front();
    violations += v.size();
  }
  const double dt = seconds_since(t0);
  o.require(violations == 0, std::to_string(violations) + " violations, first " + first);
  o.require(dt < 60.0, "runtime " + std::to_string(dt) + " s");
  if (o.pass) o.detail << "100 scenarios, " << requests << " requests, 0 violations, " << dt << " s";
  return o;
}

Outcome coexistence() {
  Outcome o;
  auto p = oracle::load_profile("qlan2_coexist");
  auto setup = p.coexistence_setup();
  o.require(std::abs(setup.signal.loss_db - 19.6) <= 0.1, "path loss " + std::to_string(setup.signal.loss_db));
  double prev = INFINITY;
  bool strict = true;
  for (double dbm : p.coexistence->sweep_dbm) {
    const double car = setup.stats_at(dbm).car;
    strict = strict && car < prev;
    prev = car;
  }
  o.require(strict, "CAR not strictly decreasing");
  const double v = setup.visibility_at(6.8);
  o.require(v >= 0.71, "V_eff at 6.8 dBm is " + std::to_string(v));
  auto ch = p.channel(setup.signal.loss_db);
  const double wide = physics::raman_noise_rate(6.8, ch);
  ch.filter_bandwidth_ghz = 5.0;
  const double ratio = wide / physics::raman_noise_rate(6.8, ch);
  o.require(std::abs(ratio - 20.0) <= 1e-9, "filter ratio " + std::to_string(ratio));
  // The simulated sweep must agree with the model.
  auto rep = run_scenario(oracle::load_scenario("scenarios/coexistence_sweep.yaml"));
  std::map<double, double> car_at;
  for (const auto& row : rep.series)
    if (row.state == "Distributing") car_at[row.launch_power_dbm] = row.car;
  prev = INFINITY;
  for (const auto& [dbm, car] : car_at) {
    o.require(car < prev, "simulated CAR not decreasing at " + std::to_string(dbm));
    prev = car;
  }
  if (o.pass) o.detail << "loss " << setup.signal.loss_db << " dB, V(6.8 dBm) " << v << ", ratio " << ratio;
  return o;
}

Outcome teleportation() {
  Outcome o;
  auto p = oracle::load_profile("qlan1_teleport");
  const auto est = physics::teleportation_estimate(p.teleport_setup());
  o.require(est.fidelity_avg > 0.90, "fidelity " + std::to_string(est.fidelity_avg));
  o.require(est.rate_hz >= 1.0 && est.rate_hz <= 10.0, "rate " + std::to_string(est.rate_hz));
  const auto& ref = *p.teleportation;
  const double km = ref.alice_to_bsm.length_km + ref.bob_to_bsm.length_km + ref.bob_to_receiver.length_km;
  o.require(std::abs(km - 44.0) < 1e-9, "span length " + std::to_string(km));

  physics::TeleportSetup clean;
  clean.indistinguishability = 0.0;
  clean.bsm_detector = {0.7, 0.0, 0.0};
  clean.receiver_detector = {0.7, 0.0, 0.0};
  const double f0 = physics::teleportation_estimate(clean).fidelity_avg;
  o.require(std::abs(f0 - 2.0 / 3.0) <= 1e-12, "F at zero indistinguishability " + std::to_string(f0));

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  double floor = 1.0;
  for (int i = 0; i < 20000; ++i) {
    physics::TeleportSetup t;
    t.indistinguishability = u(rng);
    t.alice_to_bsm.loss_db = 60 * u(rng);
    t.bob_to_bsm.loss_db = 60 * u(rng);
    t.bob_to_receiver.loss_db = 60 * u(rng);
    t.alice_to_bsm.raman_coeff = 1e5 * u(rng);
    t.bob_to_bsm.raman_coeff = 1e5 * u(rng);
    t.launch_power_dbm = 30 * u(rng) - 15;
    t.bsm_detector = {u(rng), 1e5 * u(rng), 0};
    t.receiver_detector = {u(rng), 1e5 * u(rng), 0};
    t.qubit_mean_photon = u(rng);
    t.pair_probability = u(rng);
    t.bsm_success_prob = 0.01 + 0.49 * u(rng);
    floor = std::min(floor, physics::teleportation_estimate(t).fidelity_avg);
  }
  o.require(floor >= 0.5, "fidelity floor " + std::to_string(floor));
  if (o.pass) o.detail << "F " << est.fidelity_avg << ", rate " << est.rate_hz << " Hz, min sweep F " << floor;
  return o;
}

Outcome clock_sync() {
  Outcome o;
  const double half_bin = 0.5e12 / 9e7;
  const double p = physics::clock_misidentification_probability({9e7, 5.0});
  const double ref = oracle::gaussian_two_sided_tail(half_bin, 5.0);
  o.require(p < 1e-12, "P = " + std::to_string(p));
  o.require(ref < 1e-12, "oracle P = " + std::to_string(ref));
  double prev = -1;
  bool monotone = true;
  for (int i = 0; i < 50; ++i) {
    const double jitter = 5.0 + i * 100.0;
    const double q = physics::clock_misidentification_probability({9e7, jitter});
    const double r = oracle::gaussian_two_sided_tail(half_bin, jitter);
    monotone = monotone && q >= prev && (prev <= 0 || q > prev);
    o.require(std::abs(q - r) <= 1e-9 * std::max(1.0, r), "disagrees with oracle at " + std::to_string(jitter) + " ps");
    prev = q;
  }
  o.require(monotone, "not monotone in jitter");
  if (o.pass) o.detail << "P(5 ps, 90 MHz) = " << p << ", 50-point sweep monotone";
  return o;
}

Outcome servo_recovery() {
  Outcome o;
  ServoLoop loop;
  HomParams hom;
  int worst = 0;
  for (double start : {50.0, -50.0}) {
    double d = start;
    int used = -1;
    for (int i = 1; i <= loop.step_budget; ++i) {
      d = hom_servo_step(d, loop, hom);
      if (std::abs(d) < 2.0) {
        used = i;
        break;
      }
    }
    o.require(used > 0, "offset " + std::to_string(start) + " ps not recovered within budget");
    worst = std::max(worst, used);
  }
  auto on = run_scenario(oracle::load_scenario("scenarios/servo_on_1h.yaml")).document;
  auto off = run_scenario(oracle::load_scenario("scenarios/servo_off_1h.yaml")).document;
  const double v_on = oracle::time_averaged_v_eff(on), v_off = oracle::time_averaged_v_eff(off);
  o.require(v_on >= 0.71, "servos on: mean V_eff " + std::to_string(v_on));
  o.require(v_off < 0.71, "servos off: mean V_eff " + std::to_string(v_off));
  if (o.pass)
    o.detail << "+/-50 ps recovered in " << worst << "/" << loop.step_budget << " steps, 1 h V_eff on " << v_on
             << " off " << v_off;
  return o;
}

Outcome determinism() {
  Outcome o;
  int runs = 0;
  for (const auto* f : {"scenarios/happy_path.yaml", "scenarios/teleport.yaml", "scenarios/coexistence_sweep.yaml",
                        "scenarios/servo_on_1h.yaml", "scenarios/discovery_only.yaml"}) {
    auto s = oracle::load_scenario(f);
    for (std::uint64_t seed : {1ull, 7ull, 12345ull}) {
      o.require(run_scenario(s, seed).to_text() == run_scenario(s, seed).to_text(),
                std::string(f) + " seed " + std::to_string(seed) + " differs");
      ++runs;
    }
  }
  auto fabric = oracle::load_topology("topologies/ieqnet_4site.yaml");
  auto profile = oracle::load_profile("qlan2_coexist");
  for (std::uint64_t seed = 1; seed <= 10; ++seed, ++runs) {
    auto s = oracle::random_scenario(seed, fabric, profile);
    o.require(run_scenario(s).to_text() == run_scenario(s).to_text(), "random seed " + std::to_string(seed) + " differs");
  }
  if (o.pass) o.detail << runs << " (scenario, seed) pairs byte-identical";
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, Outcome (*)()>> criteria = {
      {"rwa_oracle_equivalence", rwa_oracle},  {"protocol_golden_traces", golden_traces},
      {"lifecycle_safety", lifecycle_safety},  {"coexistence_reproduction", coexistence},
      {"teleportation_envelope", teleportation}, {"clock_sync", clock_sync},
      {"servo_recovery", servo_recovery},      {"determinism", determinism},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail.str(std::string("exception: ") + e.what());
    }
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail.str() << std::endl;
    if (!o.pass) ++failures;
  }
  std::cout << (criteria.size() - failures) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failures == 0 ? 0 : 1;
}
