#pragma once

// Request lifecycle, resource records and the READY ledger.

#include "ieqnet/rwa.hpp"
#include "ieqnet/topology.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace ieqnet {

enum class RequestState {
  Submitted,
  Analyzing,
  PathsEstablished,
  Verifying,
  Calibrating,
  Ready,
  Distributing,
  Recalibrating,
  Completed,
  Failed,
};

inline const char* to_string(RequestState s) {
  switch (s) {
    case RequestState::Submitted: return "Submitted";
    case RequestState::Analyzing: return "Analyzing";
    case RequestState::PathsEstablished: return "PathsEstablished";
    case RequestState::Verifying: return "Verifying";
    case RequestState::Calibrating: return "Calibrating";
    case RequestState::Ready: return "Ready";
    case RequestState::Distributing: return "Distributing";
    case RequestState::Recalibrating: return "Recalibrating";
    case RequestState::Completed: return "Completed";
    case RequestState::Failed: return "Failed";
  }
  return "?";
}

inline std::optional<RequestState> parse_request_state(std::string_view s) {
  for (int i = 0; i <= static_cast<int>(RequestState::Failed); ++i) {
    auto st = static_cast<RequestState>(i);
    if (s == to_string(st)) return st;
  }
  return std::nullopt;
}

inline bool is_terminal(RequestState s) { return s == RequestState::Completed || s == RequestState::Failed; }

/// The allowed transition relation of the request lifecycle.
inline bool transition_allowed(RequestState from, RequestState to) {
  using S = RequestState;
  if (is_terminal(from)) return false;
  if (to == S::Failed) return true;
  switch (from) {
    case S::Submitted: return to == S::Analyzing;
    case S::Analyzing: return to == S::PathsEstablished;
    case S::PathsEstablished: return to == S::Verifying;
    case S::Verifying: return to == S::Calibrating;
    case S::Calibrating: return to == S::Ready;
    case S::Ready: return to == S::Distributing;
    case S::Distributing: return to == S::Recalibrating || to == S::Completed;
    case S::Recalibrating: return to == S::Distributing;
    default: return false;
  }
}

enum class QubitType { TimeBin, Polarization };

inline const char* to_string(QubitType q) { return q == QubitType::TimeBin ? "time_bin" : "polarization"; }

inline std::optional<QubitType> parse_qubit_type(std::string_view s) {
  if (s == "time_bin") return QubitType::TimeBin;
  if (s == "polarization") return QubitType::Polarization;
  return std::nullopt;
}

struct Requirements {
  QubitType qubit_type = QubitType::Polarization;
  double rate = 1.0;      // pairs/s
  double duration = 1.0;  // s
  bool swap = false;      // route through a BSM node with two sources

  /// Names of invalid fields; empty when valid.
  std::vector<std::string> invalid_fields() const {
    std::vector<std::string> bad;
    if (!(rate > 0) || !std::isfinite(rate)) bad.push_back("rate");
    if (!(duration > 0) || !std::isfinite(duration)) bad.push_back("duration");
    return bad;
  }

  /// Ebits the Q-nodes must collect before sending END.
  double target_ebits() const { return rate * duration; }
};

inline nlohmann::json to_json(const Requirements& r) {
  return {{"qubit_type", to_string(r.qubit_type)}, {"rate", r.rate}, {"duration", r.duration}, {"swap", r.swap}};
}

struct Transition {
  double time = 0.0;
  RequestState from = RequestState::Submitted;
  RequestState to = RequestState::Submitted;
};

struct MeasurementRow {
  double time = 0.0;
  double interval_s = 0.0;
  std::uint64_t coincidences = 0;
  std::uint64_t accidentals = 0;
  std::uint64_t ebits = 0;
  double car = 0.0;
  double visibility = 0.0;
  double fidelity = 0.0;
};

inline nlohmann::json to_json(const MeasurementRow& m) {
  auto finite = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json("inf"); };
  return {{"t", m.time},           {"interval_s", m.interval_s}, {"coincidences", m.coincidences},
          {"accidentals", m.accidentals}, {"ebits", m.ebits},   {"car", finite(m.car)},
          {"visibility", m.visibility},   {"fidelity", m.fidelity}};
}

struct RequestRecord {
  std::string id;
  std::string user;
  std::string qnode_a;
  std::string qnode_b;
  Requirements requirements;
  RequestState state = RequestState::Submitted;
  std::string failure_reason;
  std::vector<EntanglementRoute> routes;  // one route, or two for BSM-mediated requests
  std::string bsm;
  std::vector<MeasurementRow> measurements;
  std::vector<Transition> transitions;
  double submitted_at = 0.0;
  std::optional<std::string> record_id;
  bool data_loss = false;

  double ebits() const {
    double n = 0;
    for (const auto& m : measurements) n += static_cast<double>(m.ebits);
    return n;
  }
};

/// READY collection for one request: distribution may start only when every
/// expected entity has reported.
class ReadyLedger {
public:
  ReadyLedger() = default;
  explicit ReadyLedger(std::set<std::string> expected) : expected_(std::move(expected)) {}

  /// Records a READY; returns false for entities outside the ledger.
  bool receive(const std::string& entity) {
    if (!expected_.count(entity)) return false;
    received_.insert(entity);
    return true;
  }

  bool complete() const { return !expected_.empty() && received_ == expected_; }
  void reset() { received_.clear(); }
  const std::set<std::string>& expected() const { return expected_; }
  const std::set<std::string>& received() const { return received_; }

private:
  std::set<std::string> expected_;
  std::set<std::string> received_;
};

enum class ResourceState { Registered, Verified, Lost };

inline const char* to_string(ResourceState s) {
  switch (s) {
    case ResourceState::Registered: return "Registered";
    case ResourceState::Verified: return "Verified";
    case ResourceState::Lost: return "Lost";
  }
  return "?";
}

struct ResourceRecord {
  std::string id;
  NodeKind kind = NodeKind::QNode;
  FeatureSet features;
  std::vector<std::string> connectivity;  // claimed port tags, "port->node:port"
  ResourceState state = ResourceState::Registered;
  std::string diagnostic;
};

}  // namespace ieqnet
