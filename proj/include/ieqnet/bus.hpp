#pragma once

// Topic-addressed in-process message bus with MQTT-style wildcards. Delivery
// goes through the event engine after a fixed latency, so per-sender order
// is preserved.

#include "ieqnet/engine.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace ieqnet {

enum class MessageKind {
  // discovery
  Register,
  TopologyRequest,
  TopologyResponse,
  TopologyChange,
  VerifyRequest,
  VerifyResponse,
  // entanglement requests
  Submit,
  Analyze,
  PathSetup,
  PathEstablished,
  PathNotify,
  PathTeardown,
  ProbeRequest,
  ProbeResult,
  CalibrateRequest,
  CalibrationFailed,
  Ready,
  StartDistribution,
  MeasurementBatch,
  End,
  StopEps,
  Stored,
};

inline const char* to_string(MessageKind k) {
  switch (k) {
    case MessageKind::Register: return "Register";
    case MessageKind::TopologyRequest: return "TopologyRequest";
    case MessageKind::TopologyResponse: return "TopologyResponse";
    case MessageKind::TopologyChange: return "TopologyChange";
    case MessageKind::VerifyRequest: return "VerifyRequest";
    case MessageKind::VerifyResponse: return "VerifyResponse";
    case MessageKind::Submit: return "Submit";
    case MessageKind::Analyze: return "Analyze";
    case MessageKind::PathSetup: return "PathSetup";
    case MessageKind::PathEstablished: return "PathEstablished";
    case MessageKind::PathNotify: return "PathNotify";
    case MessageKind::PathTeardown: return "PathTeardown";
    case MessageKind::ProbeRequest: return "ProbeRequest";
    case MessageKind::ProbeResult: return "ProbeResult";
    case MessageKind::CalibrateRequest: return "CalibrateRequest";
    case MessageKind::CalibrationFailed: return "CalibrationFailed";
    case MessageKind::Ready: return "Ready";
    case MessageKind::StartDistribution: return "StartDistribution";
    case MessageKind::MeasurementBatch: return "MeasurementBatch";
    case MessageKind::End: return "End";
    case MessageKind::StopEps: return "StopEps";
    case MessageKind::Stored: return "Stored";
  }
  return "?";
}

struct BusMessage {
  std::string topic;
  std::string sender;
  std::string correlation_id;
  MessageKind kind = MessageKind::Register;
  nlohmann::json payload;
  std::uint64_t seq = 0;  // per sender
  double sent_at = 0.0;
};

/// MQTT topic filter matching: `+` matches one level, a trailing `#` any
/// number of levels.
inline std::vector<std::string_view> topic_levels(std::string_view s) {
  std::vector<std::string_view> out;
  for (;;) {
    const auto slash = s.find('/');
    out.push_back(s.substr(0, slash));
    if (slash == std::string_view::npos) return out;
    s = s.substr(slash + 1);
  }
}

inline bool topic_matches(std::string_view filter, std::string_view topic) {
  const auto f = topic_levels(filter);
  const auto t = topic_levels(topic);
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (f[i] == "#") return true;
    if (i >= t.size()) return false;
    if (f[i] != "+" && f[i] != t[i]) return false;
  }
  return f.size() == t.size();
}

/// One line of the protocol trace: a published message or a local step.
struct TraceEntry {
  double time = 0.0;
  std::string actor;
  std::string kind;
  std::string topic;  // empty for local steps
  std::string correlation_id;

  bool operator==(const TraceEntry&) const = default;
};

class Trace {
public:
  void add(TraceEntry e) { entries_.push_back(std::move(e)); }
  const std::vector<TraceEntry>& entries() const { return entries_; }

  /// Kind sequence of entries accepted by `keep`, with consecutive duplicates
  /// collapsed.
  template <typename Pred>
  std::vector<std::string> projected_kinds(Pred keep) const {
    std::vector<std::string> out;
    for (const auto& e : entries_) {
      if (!keep(e)) continue;
      if (out.empty() || out.back() != e.kind) out.push_back(e.kind);
    }
    return out;
  }

private:
  std::vector<TraceEntry> entries_;
};

class Bus {
public:
  using Handler = std::function<void(const BusMessage&)>;

  Bus(Engine& engine, Trace& trace, double latency_s = 1e-3) : engine_(engine), trace_(trace), latency_(latency_s) {}

  void subscribe(std::string filter, std::string subscriber, Handler handler) {
    subs_.push_back({std::move(filter), std::move(subscriber), std::move(handler)});
  }

  void unsubscribe_all(std::string_view subscriber) {
    std::erase_if(subs_, [&](const Sub& s) { return s.subscriber == subscriber; });
  }

  /// Publishes a message; subscribers see it after the bus latency.
  const BusMessage& publish(std::string topic, std::string sender, std::string correlation, MessageKind kind,
                            nlohmann::json payload = nlohmann::json::object()) {
    BusMessage m;
    m.topic = std::move(topic);
    m.sender = std::move(sender);
    m.correlation_id = std::move(correlation);
    m.kind = kind;
    m.payload = std::move(payload);
    m.seq = ++sender_seq_[m.sender];
    m.sent_at = engine_.now();
    trace_.add({m.sent_at, m.sender, to_string(kind), m.topic, m.correlation_id});
    log_.push_back(m);
    const auto index = log_.size() - 1;
    engine_.after(latency_, EventKind::BusDeliver, m.topic, [this, index] { deliver(index); });
    return log_.back();
  }

  const std::vector<BusMessage>& log() const { return log_; }

  /// Messages in the order subscribers received them.
  const std::vector<std::size_t>& delivery_order() const { return delivered_; }

  double latency() const { return latency_; }

private:
  struct Sub {
    std::string filter;
    std::string subscriber;
    Handler handler;
  };

  void deliver(std::size_t index) {
    delivered_.push_back(index);
    const BusMessage msg = log_[index];
    // Handlers may subscribe or publish; iterate over a snapshot.
    const auto subs = subs_;
    for (const auto& s : subs)
      if (topic_matches(s.filter, msg.topic)) s.handler(msg);
  }

  Engine& engine_;
  Trace& trace_;
  double latency_;
  std::vector<Sub> subs_;
  std::vector<BusMessage> log_;
  std::vector<std::size_t> delivered_;
  std::map<std::string, std::uint64_t> sender_seq_;
};

}  // namespace ieqnet
