#pragma once

// Session HTTP API over the agent. Each session gets its own provider and a
// worker thread that advances it until it is terminal or waiting for answers.
// Readers see copies of the session taken under its lock.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "tmagent/agent.hpp"

namespace httplib {
class Server;
}

namespace tmagent {

using ProviderFactory = std::function<std::unique_ptr<Provider>()>;

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::string token;
  std::chrono::milliseconds long_poll = std::chrono::seconds(25);
  std::optional<std::filesystem::path> snapshot_dir;
  AgentConfig agent;
};

/// `{"session_id", "state", "pending_questions", "revision", ...}`.
nlohmann::ordered_json session_resource(const Session& s);

class SessionService {
 public:
  /// Throws ConfigInvalid when no token is configured.
  SessionService(std::shared_ptr<const Agent> agent, ProviderFactory providers, ServiceConfig config);
  ~SessionService();

  SessionService(const SessionService&) = delete;
  SessionService& operator=(const SessionService&) = delete;

  /// Binds, reloads any snapshot and serves on a background thread. Returns
  /// the bound port.
  int start();
  /// Stops serving, waits for in-flight agent operations, writes the snapshot.
  void stop();

  std::optional<Session> snapshot(const std::string& session_id) const;
  std::size_t session_count() const;

 private:
  struct Entry {
    mutable std::mutex mu;
    std::condition_variable cv;
    Session session;
    std::unique_ptr<Provider> provider;
    bool busy = false;
    std::thread worker;
  };

  std::shared_ptr<Entry> find(const std::string& id) const;
  void launch(const std::shared_ptr<Entry>& entry);  // entry->mu held
  void run(std::shared_ptr<Entry> entry);
  void routes();
  void load_snapshot();
  void save_snapshot() const;

  std::shared_ptr<const Agent> agent_;
  ProviderFactory providers_;
  ServiceConfig config_;
  std::unique_ptr<httplib::Server> server_;
  std::thread listener_;
  std::atomic<bool> stopping_{false};
  bool started_ = false;

  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
};

}  // namespace tmagent
