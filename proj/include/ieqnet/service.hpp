#pragma once

// Network-facing service: token auth with an audit trail, request submission
// and status, topology snapshots, stored measurements and a resumable event
// stream. The control plane runs on its own clock thread; every call into it
// is serialized by one mutex.

#include "ieqnet/control_plane.hpp"
#include "ieqnet/store.hpp"
#include "ieqnet/topology.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

namespace ieqnet {

enum class Scope { Submit, Read, Admin };

inline const char* to_string(Scope s) {
  switch (s) {
    case Scope::Submit: return "submit";
    case Scope::Read: return "read";
    case Scope::Admin: return "admin";
  }
  return "?";
}

inline std::optional<Scope> parse_scope(std::string_view s) {
  if (s == "submit") return Scope::Submit;
  if (s == "read") return Scope::Read;
  if (s == "admin") return Scope::Admin;
  return std::nullopt;
}

struct Session {
  std::string token;
  std::string subject;
  std::set<Scope> scopes;

  bool has(Scope s) const { return scopes.count(s) > 0; }
};

class TokenFileError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Static token table. The file is a JSON array (or {"tokens": [...]}) of
/// {token, subject, scopes}.
class TokenTable {
public:
  TokenTable() = default;

  void add(Session s) {
    if (s.token.empty()) throw TokenFileError("empty token");
    if (!sessions_.emplace(s.token, s).second) throw TokenFileError("duplicate token for '" + s.subject + "'");
  }

  const Session* find(const std::string& token) const {
    auto it = sessions_.find(token);
    return it == sessions_.end() ? nullptr : &it->second;
  }

  std::size_t size() const { return sessions_.size(); }

  static TokenTable parse(const std::string& text) {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw TokenFileError(std::string("not valid JSON: ") + e.what());
    }
    if (doc.is_object() && doc.contains("tokens")) doc = doc["tokens"];
    if (!doc.is_array()) throw TokenFileError("expected an array of token entries");
    TokenTable table;
    for (std::size_t i = 0; i < doc.size(); ++i) {
      const auto& e = doc[i];
      const auto where = "tokens[" + std::to_string(i) + "]";
      if (!e.is_object()) throw TokenFileError(where + ": expected an object");
      for (const auto& [k, v] : e.items())
        if (k != "token" && k != "subject" && k != "scopes") throw TokenFileError(where + ": unknown key '" + k + "'");
      if (!e.contains("token") || !e["token"].is_string() || e["token"].get<std::string>().empty())
        throw TokenFileError(where + ".token: required non-empty string");
      if (!e.contains("subject") || !e["subject"].is_string() || e["subject"].get<std::string>().empty())
        throw TokenFileError(where + ".subject: required non-empty string");
      if (!e.contains("scopes") || !e["scopes"].is_array()) throw TokenFileError(where + ".scopes: required array");
      Session s{e["token"], e["subject"], {}};
      for (std::size_t j = 0; j < e["scopes"].size(); ++j) {
        const auto& sc = e["scopes"][j];
        auto parsed = sc.is_string() ? parse_scope(sc.get<std::string>()) : std::nullopt;
        if (!parsed)
          throw TokenFileError(where + ".scopes[" + std::to_string(j) + "]: unknown scope " + sc.dump());
        s.scopes.insert(*parsed);
      }
      try {
        table.add(std::move(s));
      } catch (const TokenFileError& err) {
        throw TokenFileError(where + ": " + err.what());
      }
    }
    return table;
  }

  static TokenTable load(const std::string& path) {
    std::string text;
    try {
      text = read_text_file(path);
    } catch (const std::ios_base::failure&) {
      throw TokenFileError("cannot read token file '" + path + "'");
    }
    return parse(text);
  }

private:
  std::map<std::string, Session> sessions_;
};

struct AuditRecord {
  double time = 0.0;  // simulated seconds
  std::string subject;
  std::string action;
  std::string target;
  std::string outcome;
};

inline nlohmann::json to_json(const AuditRecord& a) {
  return {{"time", a.time}, {"subject", a.subject}, {"action", a.action}, {"target", a.target}, {"outcome", a.outcome}};
}

/// API failure with an HTTP status and a machine-readable code.
class ServiceError : public std::runtime_error {
public:
  ServiceError(int status, std::string code, const std::string& message, std::vector<std::string> fields = {})
      : std::runtime_error(message), status_(status), code_(std::move(code)), fields_(std::move(fields)) {}

  int status() const { return status_; }
  const std::string& code() const { return code_; }
  const std::vector<std::string>& fields() const { return fields_; }

  nlohmann::json body() const {
    nlohmann::json j = {{"code", code_}, {"message", what()}};
    if (!fields_.empty()) j["fields"] = fields_;
    return j;
  }

private:
  int status_;
  std::string code_;
  std::vector<std::string> fields_;
};

struct ServiceEvent {
  std::uint64_t seq = 0;
  std::string type;  // transition | measurement | topology
  std::string request;
  std::uint64_t request_seq = 0;  // 1-based position within the request's own stream
  double time = 0.0;
  nlohmann::json data;
};

inline nlohmann::json to_json(const ServiceEvent& e) {
  nlohmann::json j = {{"seq", e.seq}, {"type", e.type}, {"t", e.time}, {"data", e.data}};
  if (!e.request.empty()) {
    j["request"] = e.request;
    j["request_seq"] = e.request_seq;
  }
  return j;
}

struct ServiceOptions {
  Topology fabric;
  PhysicsProfile profile;
  std::string profile_name;
  ControlPlaneConfig config;
  ServoSet servos;
  std::uint64_t seed = 1;
  std::optional<std::filesystem::path> data_dir;  // volatile store when empty
  double time_scale = 1.0;                        // simulated seconds per wall second; 0 = manual clock
  std::chrono::milliseconds tick{5};
};

class NetworkService {
public:
  NetworkService(ServiceOptions options, TokenTable tokens)
      : options_(std::move(options)),
        tokens_(std::move(tokens)),
        plant_(options_.fabric),
        store_(options_.data_dir ? std::make_unique<MeasurementStore>(*options_.data_dir / "ieqnet-store.jsonl")
                                 : std::make_unique<MeasurementStore>()),
        cp_(std::make_unique<ControlPlane>(engine_, plant_, options_.profile, options_.config, options_.servos,
                                           options_.seed, store_.get())) {
    restore();
    auto& server = cp_->server();
    server.on_transition([this](const RequestRecord& rec, const Transition& t) {
      store_->put_request(rec.id, cp_->server().status_document(rec));
      nlohmann::json data = {{"from", to_string(t.from)}, {"to", to_string(t.to)}};
      if (t.to == RequestState::Failed) data["reason"] = rec.failure_reason;
      publish("transition", rec.id, t.time, std::move(data));
    });
    server.on_measurement_row([this](const RequestRecord& rec, const MeasurementRow& row) {
      publish("measurement", rec.id, row.time, to_json(row));
    });
    server.on_topology([this](const Topology& topo) {
      publish("topology", "", engine_.now(), {{"version", topo.version()}});
    });
  }

  NetworkService(const NetworkService&) = delete;
  NetworkService& operator=(const NetworkService&) = delete;

  ~NetworkService() { stop(); }

  /// Runs discovery, then starts the clock thread unless the clock is manual.
  void start() {
    {
      std::lock_guard lock(mu_);
      cp_->run_discovery();
      started_ = true;
    }
    if (options_.time_scale > 0) clock_ = std::thread([this] { clock_loop(); });
  }

  void stop() {
    {
      std::lock_guard lock(stop_mu_);
      if (stopping_) return;
      stopping_ = true;
    }
    stop_cv_.notify_all();
    events_cv_.notify_all();
    if (clock_.joinable()) clock_.join();
  }

  bool stopping() const {
    std::lock_guard lock(stop_mu_);
    return stopping_;
  }

  /// Manual clock: advances simulated time by `dt`.
  void advance(double dt) {
    std::lock_guard lock(mu_);
    cp_->engine().run_until(cp_->engine().now() + dt);
  }

  /// Manual clock: runs until nothing is pending or `max_dt` has elapsed.
  void settle(double max_dt) {
    std::lock_guard lock(mu_);
    auto& e = cp_->engine();
    const double until = e.now() + max_dt;
    while (!e.empty() && e.next_time() <= until) e.step();
  }

  // ---- API ---------------------------------------------------------------

  nlohmann::json health() const {
    std::lock_guard lock(mu_);
    std::string status = !started_ ? "starting" : fault_.empty() ? "ready" : "degraded";
    nlohmann::json j = {{"status", status},
                        {"topology_version", cp_->server().topology().version()},
                        {"sim_time", cp_->engine().now()},
                        {"requests", cp_->server().request_order().size() + restored_.size()}};
    if (!fault_.empty()) j["fault"] = fault_;
    return j;
  }

  nlohmann::json auth(const std::string& token) {
    return call(token, std::nullopt, "auth", "", [&](const Session& s) {
      nlohmann::json scopes = nlohmann::json::array();
      for (auto sc : s.scopes) scopes.push_back(to_string(sc));
      return nlohmann::json{{"subject", s.subject}, {"scopes", scopes}};
    });
  }

  nlohmann::json topology(const std::string& token) {
    return call(token, Scope::Read, "get_topology", "", [&](const Session&) {
      const auto& server = cp_->server();
      nlohmann::json resources = nlohmann::json::array();
      for (const auto& [id, r] : server.resources())
        resources.push_back({{"id", id}, {"kind", to_string(r.kind)}, {"state", to_string(r.state)}});
      return nlohmann::json{{"version", server.topology().version()},
                            {"topology", topology_to_json(server.topology())},
                            {"resources", resources}};
    });
  }

  /// Body: {qnode_a, qnode_b, requirements: {qubit_type, rate, duration, swap}}.
  nlohmann::json submit(const std::string& token, const nlohmann::json& body) {
    return call(token, Scope::Submit, "submit_request", "", [&](const Session& s) {
      auto [a, b, req] = parse_submission(body);
      try {
        const auto id = cp_->submit(s.subject, a, b, req);
        return nlohmann::json{{"id", id}, {"state", "Submitted"}};
      } catch (const RequestError& e) {
        if (e.code() == "unknown_qnode") throw ServiceError(404, e.code(), e.what());
        throw ServiceError(422, e.code(), e.what(), e.fields());
      }
    });
  }

  nlohmann::json list_requests(const std::string& token) {
    return call(token, Scope::Read, "list_requests", "", [&](const Session&) {
      nlohmann::json out = nlohmann::json::array();
      for (const auto& [id, snap] : restored_) out.push_back(snap);
      const auto& server = cp_->server();
      for (const auto& id : server.request_order()) out.push_back(server.status_document(server.request(id)));
      return out;
    });
  }

  nlohmann::json request_status(const std::string& token, const std::string& id) {
    return call(token, Scope::Read, "get_request_status", id, [&](const Session&) { return status_of(id); });
  }

  nlohmann::json measurements(const std::string& token, const std::string& id) {
    return call(token, Scope::Read, "get_measurements", id, [&](const Session&) {
      const auto status = status_of(id);
      const auto state = parse_request_state(status.at("state").get<std::string>());
      if (!state || !is_terminal(*state))
        throw ServiceError(409, "not_terminal", "request '" + id + "' is still " + status.at("state").get<std::string>());
      if (!status.contains("record_id"))
        throw ServiceError(500, "data_loss", "measurements of '" + id + "' were not persisted");
      auto rec = store_->record(status["record_id"].get<std::string>());
      if (!rec) throw ServiceError(500, "data_loss", "measurement record of '" + id + "' is missing");
      return *rec;
    });
  }

  /// Admin: hands a topology change to the SDN agent.
  nlohmann::json apply_topology_change(const std::string& token, const nlohmann::json& body) {
    return call(token, Scope::Admin, "topology_change", "", [&](const Session&) {
      TopologyDelta delta;
      try {
        delta = delta_from_json(body);
      } catch (const std::exception& e) {
        throw ServiceError(422, "invalid_delta", e.what());
      }
      cp_->notify_topology_change(delta);
      return nlohmann::json{{"accepted", true}, {"version", cp_->server().topology().version()}};
    });
  }

  /// Validates a stream subscription and audits it once.
  std::uint64_t open_stream(const std::string& token, const std::string& cursor, const std::string& request_filter) {
    return call(token, Scope::Read, "stream_events", request_filter, [&](const Session&) {
      std::uint64_t c = 0;
      if (!cursor.empty()) {
        std::size_t used = 0;
        try {
          if (cursor.find_first_not_of("0123456789") != std::string::npos) throw std::invalid_argument(cursor);
          c = std::stoull(cursor, &used);
        } catch (const std::exception&) {
          throw ServiceError(400, "invalid_cursor", "cursor must be a non-negative integer");
        }
      }
      if (c > last_seq()) throw ServiceError(400, "invalid_cursor", "cursor is beyond the latest event");
      if (!request_filter.empty() && !cp_->server().find_request(request_filter) && !restored_.count(request_filter))
        throw ServiceError(404, "unknown_request", "unknown request '" + request_filter + "'");
      return nlohmann::json(c);
    }).get<std::uint64_t>();
  }

  struct EventBatch {
    std::vector<ServiceEvent> events;
    std::uint64_t cursor = 0;  // last sequence number examined
  };

  /// Events with seq > cursor, waiting up to `wait` for the first one.
  EventBatch events_after(std::uint64_t cursor, const std::string& request_filter,
                          std::chrono::milliseconds wait = std::chrono::milliseconds(0)) const {
    std::unique_lock lock(events_mu_);
    if (wait.count() > 0)
      events_cv_.wait_for(lock, wait, [&] { return events_.size() > cursor || stopping(); });
    EventBatch batch;
    batch.cursor = cursor;
    for (std::size_t i = cursor; i < events_.size(); ++i) {
      if (request_filter.empty() || events_[i].request == request_filter) batch.events.push_back(events_[i]);
      batch.cursor = events_[i].seq;
    }
    return batch;
  }

  std::uint64_t last_seq() const {
    std::lock_guard lock(events_mu_);
    return events_.size();
  }

  std::vector<AuditRecord> audit() const {
    std::vector<AuditRecord> out;
    for (const auto& j : store_->audit())
      out.push_back({j.value("time", 0.0), j.value("subject", ""), j.value("action", ""), j.value("target", ""),
                     j.value("outcome", "")});
    return out;
  }

  /// Runs `f` on the control plane under the service lock.
  template <class F>
  auto with_control_plane(F&& f) {
    std::lock_guard lock(mu_);
    return f(*cp_);
  }

private:
  template <class F>
  nlohmann::json call(const std::string& token, std::optional<Scope> scope, const std::string& action,
                      const std::string& target, F&& f) {
    std::lock_guard lock(mu_);
    const Session* s = tokens_.find(token);
    const std::string subject = s ? s->subject : std::string();
    try {
      if (!s) throw ServiceError(401, "unauthenticated", token.empty() ? "missing token" : "invalid token");
      if (scope && !s->has(*scope))
        throw ServiceError(403, "forbidden", std::string("scope '") + to_string(*scope) + "' required");
      auto result = f(*s);
      record_audit(subject, action, target, "ok");
      return result;
    } catch (const ServiceError& e) {
      record_audit(subject, action, target, e.code());
      throw;
    }
  }

  void record_audit(const std::string& subject, const std::string& action, const std::string& target,
                    const std::string& outcome) {
    store_->append_audit(to_json(AuditRecord{cp_->engine().now(), subject, action, target, outcome}));
  }

  static std::tuple<std::string, std::string, Requirements> parse_submission(const nlohmann::json& body) {
    if (!body.is_object()) throw ServiceError(400, "bad_request", "body must be a JSON object");
    std::vector<std::string> bad;
    auto text = [&](const char* key) -> std::string {
      if (body.contains(key) && body[key].is_string() && !body[key].get<std::string>().empty()) return body[key];
      bad.push_back(key);
      return {};
    };
    const auto a = text("qnode_a");
    const auto b = text("qnode_b");
    Requirements req;
    const auto r = body.contains("requirements") ? body["requirements"] : nlohmann::json::object();
    if (!r.is_object()) {
      bad.push_back("requirements");
    } else {
      for (const auto& [k, v] : r.items())
        if (k != "qubit_type" && k != "rate" && k != "duration" && k != "swap") bad.push_back("requirements." + k);
      auto number = [&](const char* key, double& out) {
        if (r.contains(key) && r[key].is_number()) out = r[key].get<double>();
        else bad.push_back(std::string("requirements.") + key);
      };
      number("rate", req.rate);
      number("duration", req.duration);
      if (r.contains("qubit_type")) {
        auto q = r["qubit_type"].is_string() ? parse_qubit_type(r["qubit_type"].get<std::string>()) : std::nullopt;
        if (q) req.qubit_type = *q;
        else bad.push_back("requirements.qubit_type");
      }
      if (r.contains("swap")) {
        if (r["swap"].is_boolean()) req.swap = r["swap"];
        else bad.push_back("requirements.swap");
      }
      for (const auto& f : req.invalid_fields()) {
        const auto name = "requirements." + f;
        if (std::find(bad.begin(), bad.end(), name) == bad.end()) bad.push_back(name);
      }
    }
    if (!bad.empty()) {
      std::string msg = "invalid fields:";
      for (const auto& f : bad) msg += " " + f;
      throw ServiceError(422, "invalid_requirements", msg, bad);
    }
    return {a, b, req};
  }

  nlohmann::json status_of(const std::string& id) const {
    const auto& server = cp_->server();
    if (const auto* rec = server.find_request(id)) return server.status_document(*rec);
    if (auto it = restored_.find(id); it != restored_.end()) return it->second;
    throw ServiceError(404, "unknown_request", "unknown request '" + id + "'");
  }

  void publish(std::string type, const std::string& request, double t, nlohmann::json data) {
    {
      std::lock_guard lock(events_mu_);
      ServiceEvent e;
      e.seq = events_.size() + 1;
      e.type = std::move(type);
      e.request = request;
      if (!request.empty()) e.request_seq = ++per_request_[request];
      e.time = t;
      e.data = std::move(data);
      events_.push_back(std::move(e));
    }
    events_cv_.notify_all();
  }

  /// Loads request snapshots left by an earlier process. Anything that was
  /// still in flight is closed as Failed(interrupted).
  void restore() {
    std::uint64_t max_id = 0;
    for (auto [id, snap] : store_->requests()) {
      if (id.rfind("r-", 0) == 0) {
        try {
          max_id = std::max<std::uint64_t>(max_id, std::stoull(id.substr(2)));
        } catch (const std::exception&) {
        }
      }
      const auto state = parse_request_state(snap.value("state", ""));
      if (!state || !is_terminal(*state)) {
        double t = snap.value("submitted_at", 0.0);
        if (snap.contains("transitions") && !snap["transitions"].empty()) t = snap["transitions"].back().value("t", t);
        snap["transitions"].push_back({{"t", t}, {"from", snap.value("state", "Submitted")}, {"to", "Failed"}});
        snap["state"] = "Failed";
        snap["failure_reason"] = "interrupted";
        store_->put_request(id, snap);
      }
      restored_[id] = std::move(snap);
    }
    cp_->server().reserve_request_ids(max_id);
  }

  void clock_loop() {
    const auto wall0 = std::chrono::steady_clock::now();
    double sim0;
    {
      std::lock_guard lock(mu_);
      sim0 = cp_->engine().now();
    }
    for (;;) {
      {
        std::unique_lock lock(stop_mu_);
        if (stop_cv_.wait_for(lock, options_.tick, [&] { return stopping_; })) return;
      }
      const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
      std::lock_guard lock(mu_);
      if (!fault_.empty()) continue;
      try {
        cp_->engine().run_until(sim0 + elapsed * options_.time_scale);
      } catch (const std::exception& e) {
        fault_ = e.what();  // stop advancing; health reports degraded
      }
    }
  }

  ServiceOptions options_;
  TokenTable tokens_;
  Engine engine_;
  Plant plant_;
  std::unique_ptr<MeasurementStore> store_;
  std::unique_ptr<ControlPlane> cp_;
  std::map<std::string, nlohmann::json> restored_;

  mutable std::mutex mu_;
  bool started_ = false;
  std::string fault_;

  mutable std::mutex events_mu_;
  mutable std::condition_variable events_cv_;
  std::vector<ServiceEvent> events_;
  std::map<std::string, std::uint64_t> per_request_;

  mutable std::mutex stop_mu_;
  std::condition_variable stop_cv_;
  bool stopping_ = false;
  std::thread clock_;
};

/// HTTP binding of NetworkService under /v1.
class HttpFrontend {
public:
  explicit HttpFrontend(NetworkService& service) : svc_(service) { routes(); }

  ~HttpFrontend() { stop(); }

  /// Binds to host:port (port 0 picks a free one). Returns the bound port or -1.
  int bind(const std::string& host, int port) {
    port_ = port == 0 ? http_.bind_to_any_port(host) : (http_.bind_to_port(host, port) ? port : -1);
    return port_;
  }

  int port() const { return port_; }

  /// Serves until stop(); blocks.
  bool listen() { return http_.listen_after_bind(); }

  void start_background() {
    thread_ = std::thread([this] { listen(); });
    http_.wait_until_ready();
  }

  void stop() {
    closing_ = true;
    http_.stop();
    if (thread_.joinable()) thread_.join();
  }

private:
  static std::string token_of(const httplib::Request& req) {
    const auto h = req.get_header_value("Authorization");
    if (h.rfind("Bearer ", 0) == 0) return h.substr(7);
    if (req.has_param("token")) return req.get_param_value("token");
    return {};
  }

  static void send(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  template <class F>
  static void guarded(httplib::Response& res, int ok_status, F&& f) {
    try {
      send(res, ok_status, f());
    } catch (const ServiceError& e) {
      send(res, e.status(), e.body());
    } catch (const std::exception& e) {
      send(res, 500, {{"code", "internal"}, {"message", e.what()}});
    }
  }

  static nlohmann::json parse_body(const httplib::Request& req) {
    try {
      return nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::parse_error&) {
      throw ServiceError(400, "bad_request", "body is not valid JSON");
    }
  }

  void routes() {
    http_.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, 200, [&] { return svc_.health(); });
    });
    http_.Get("/v1/auth", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, 200, [&] { return svc_.auth(token_of(req)); });
    });
    http_.Post("/v1/auth", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, 200, [&] {
        auto body = parse_body(req);
        return svc_.auth(body.is_object() ? body.value("token", "") : "");
      });
    });
    http_.Get("/v1/topology", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, 200, [&] { return svc_.topology(token_of(req)); });
    });
    http_.Post("/v1/topology/changes", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, 202, [&] { return svc_.apply_topology_change(token_of(req), parse_body(req)); });
    });
    http_.Post("/v1/requests", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, 202, [&] {
        // A malformed body still counts as an authenticated call.
        nlohmann::json body;
        try {
          body = nlohmann::json::parse(req.body);
        } catch (const nlohmann::json::parse_error&) {
          body = nullptr;
        }
        return svc_.submit(token_of(req), body);
      });
    });
    http_.Get("/v1/requests", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, 200, [&] { return svc_.list_requests(token_of(req)); });
    });
    http_.Get(R"(/v1/requests/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, 200, [&] { return svc_.request_status(token_of(req), req.matches[1]); });
    });
    http_.Get(R"(/v1/requests/([^/]+)/measurements)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, 200, [&] { return svc_.measurements(token_of(req), req.matches[1]); });
    });
    http_.Get("/v1/events", [this](const httplib::Request& req, httplib::Response& res) { events(req, res); });
  }

  /// Server-sent events. `cursor` (or Last-Event-ID) resumes after that
  /// sequence number; `follow=0` returns the backlog and closes.
  void events(const httplib::Request& req, httplib::Response& res) {
    struct StreamState {
      std::uint64_t cursor = 0;
      std::string filter;
      bool follow = true;
    };
    auto state = std::make_shared<StreamState>();
    state->filter = req.has_param("request") ? req.get_param_value("request") : "";
    state->follow = !(req.has_param("follow") && req.get_param_value("follow") == "0");
    std::string cursor = req.has_param("cursor") ? req.get_param_value("cursor") : req.get_header_value("Last-Event-ID");
    try {
      state->cursor = svc_.open_stream(token_of(req), cursor, state->filter);
    } catch (const ServiceError& e) {
      send(res, e.status(), e.body());
      return;
    }
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider("text/event-stream", [this, state](std::size_t, httplib::DataSink& sink) {
      const auto wait = state->follow ? std::chrono::milliseconds(200) : std::chrono::milliseconds(0);
      auto batch = svc_.events_after(state->cursor, state->filter, wait);
      for (const auto& e : batch.events) {
        const auto frame =
            "id: " + std::to_string(e.seq) + "\nevent: " + e.type + "\ndata: " + to_json(e).dump() + "\n\n";
        if (!sink.write(frame.data(), frame.size())) return false;
      }
      state->cursor = batch.cursor;
      if (!sink.is_writable()) return false;
      if (!state->follow || closing_ || svc_.stopping()) sink.done();
      return true;
    });
  }

  NetworkService& svc_;
  httplib::Server http_;
  std::thread thread_;
  std::atomic<bool> closing_{false};
  int port_ = -1;
};

}  // namespace ieqnet
