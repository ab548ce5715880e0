#pragma once

// Single-file embedded store: an append-only JSON-lines log holding
// measurement records, request snapshots and audit entries. The in-memory
// index is rebuilt by replaying the file on open.

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace ieqnet {

class MeasurementStore {
public:
  /// Volatile store; nothing touches the disk.
  MeasurementStore() = default;

  /// Opens (or creates) a log file and replays it.
  explicit MeasurementStore(std::filesystem::path file) : file_(std::move(file)) {
    if (file_->has_parent_path()) std::filesystem::create_directories(file_->parent_path());
    std::ifstream in(*file_);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::parse_error&) {
        continue;  // torn tail after a crash
      }
      apply(j);
    }
  }

  /// Persists a measurement record; nullopt when the write fails.
  std::optional<std::string> put_record(nlohmann::json record) {
    std::lock_guard lock(mu_);
    if (fail_writes_) return std::nullopt;
    const std::string id = "m-" + std::to_string(records_.size() + 1);
    record["record_id"] = id;
    nlohmann::json line = {{"type", "record"}, {"id", id}, {"body", record}};
    if (!append(line)) return std::nullopt;
    records_[id] = std::move(record);
    return id;
  }

  std::optional<nlohmann::json> record(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = records_.find(id);
    if (it == records_.end()) return std::nullopt;
    return std::optional<nlohmann::json>(std::in_place, it->second);
  }

  /// Latest snapshot of a request's status.
  void put_request(const std::string& id, nlohmann::json snapshot) {
    std::lock_guard lock(mu_);
    append({{"type", "request"}, {"id", id}, {"body", snapshot}});
    requests_[id] = std::move(snapshot);
  }

  std::map<std::string, nlohmann::json> requests() const {
    std::lock_guard lock(mu_);
    return requests_;
  }

  void append_audit(nlohmann::json entry) {
    std::lock_guard lock(mu_);
    append({{"type", "audit"}, {"body", entry}});
    audit_.push_back(std::move(entry));
  }

  std::vector<nlohmann::json> audit() const {
    std::lock_guard lock(mu_);
    return audit_;
  }

  std::size_t record_count() const {
    std::lock_guard lock(mu_);
    return records_.size();
  }

  /// Test hook: make every subsequent record write fail.
  void set_fail_writes(bool fail) {
    std::lock_guard lock(mu_);
    fail_writes_ = fail;
  }

private:
  void apply(const nlohmann::json& j) {
    const auto type = j.value("type", "");
    if (type == "record")
      records_[j.at("id").get<std::string>()] = j.at("body");
    else if (type == "request")
      requests_[j.at("id").get<std::string>()] = j.at("body");
    else if (type == "audit")
      audit_.push_back(j.at("body"));
  }

  bool append(const nlohmann::json& line) {
    if (!file_) return true;
    std::ofstream out(*file_, std::ios::app);
    if (!out) return false;
    out << line.dump() << '\n';
    out.flush();
    return static_cast<bool>(out);
  }

  std::optional<std::filesystem::path> file_;
  mutable std::mutex mu_;
  std::map<std::string, nlohmann::json> records_;
  std::map<std::string, nlohmann::json> requests_;
  std::vector<nlohmann::json> audit_;
  bool fail_writes_ = false;
};

}  // namespace ieqnet
