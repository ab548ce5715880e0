#pragma once

// Single-threaded discrete-event core. Events run in (time, insertion
// sequence) order; simulated time is decoupled from wall time.

#include <cstdint>
#include <functional>
#include <queue>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace ieqnet {

enum class EventKind { BusDeliver, DriftStep, ServoStep, FaultInject, MeasurementBatch, Timer };

inline const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::BusDeliver: return "BusDeliver";
    case EventKind::DriftStep: return "DriftStep";
    case EventKind::ServoStep: return "ServoStep";
    case EventKind::FaultInject: return "FaultInject";
    case EventKind::MeasurementBatch: return "MeasurementBatch";
    case EventKind::Timer: return "Timer";
  }
  return "?";
}

struct Event {
  double time = 0.0;
  std::uint64_t seq = 0;
  EventKind kind = EventKind::Timer;
  std::string target;
  std::function<void()> action;
  std::uint64_t parent = 0;  // seq of the event that scheduled this one, 0 for external
  double parent_time = 0.0;
};

class Engine {
public:
  double now() const { return now_; }

  /// Schedules `action` at absolute time `at` (>= now). Returns a handle
  /// usable with cancel().
  std::uint64_t schedule(double at, EventKind kind, std::string target, std::function<void()> action) {
    if (at < now_) throw std::logic_error("event scheduled in the past");
    Event e;
    e.time = at;
    e.seq = ++next_seq_;
    e.kind = kind;
    e.target = std::move(target);
    e.action = std::move(action);
    e.parent = current_;
    e.parent_time = now_;
    queue_.push(std::move(e));
    live_.insert(next_seq_);
    return next_seq_;
  }

  std::uint64_t after(double delay, EventKind kind, std::string target, std::function<void()> action) {
    return schedule(now_ + delay, kind, std::move(target), std::move(action));
  }

  /// Cancels a pending event; unknown or already executed handles are ignored.
  void cancel(std::uint64_t handle) {
    if (live_.erase(handle)) cancelled_.insert(handle);
  }

  /// Runs one event; false when the queue is empty.
  bool step() {
    purge();
    if (!queue_.empty()) {
      Event e = queue_.top();
      queue_.pop();
      live_.erase(e.seq);
      if (e.time < e.parent_time) throw std::logic_error("causality violation");
      now_ = e.time;
      current_ = e.seq;
      ++executed_;
      e.action();
      current_ = 0;
      return true;
    }
    return false;
  }

  /// Runs every event with time <= `until`, then advances the clock to it.
  void run_until(double until) {
    while (!empty() && next_time() <= until) step();
    if (until > now_) now_ = until;
  }

  void run() {
    while (step()) {
    }
  }

  bool empty() const { return live_.empty(); }
  std::size_t pending() const { return live_.size(); }
  std::uint64_t executed() const { return executed_; }

  double next_time() {
    purge();
    return queue_.empty() ? now_ : queue_.top().time;
  }

private:
  void purge() {
    while (!queue_.empty() && cancelled_.count(queue_.top().seq)) {
      cancelled_.erase(queue_.top().seq);
      queue_.pop();
    }
  }

  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return a.time != b.time ? a.time > b.time : a.seq > b.seq;
    }
  };

  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  std::set<std::uint64_t> cancelled_;
  std::set<std::uint64_t> live_;
  double now_ = 0.0;
  std::uint64_t next_seq_ = 0;
  std::uint64_t current_ = 0;
  std::uint64_t executed_ = 0;
};

}  // namespace ieqnet
