#pragma once

// Live online-learning sessions behind a JSON API. SessionManager holds the
// logic and is usable without a network; install_routes binds it to HTTP.

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "shrdlurn/adapter.hpp"

namespace httplib {
class Server;
}

namespace shrdlurn {

/// Carries the HTTP status the error maps to.
class ApiError : public std::runtime_error {
 public:
  ApiError(int status, const std::string& what) : std::runtime_error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

class SessionManager {
 public:
  using Clock = std::chrono::steady_clock;

  SessionManager(std::shared_ptr<const nn::Model<Real>> base, AdaptConfig defaults = {},
                 std::chrono::seconds idle_timeout = std::chrono::hours(1),
                 std::function<Clock::time_point()> now = Clock::now);

  // Request bodies and responses follow the HTTP API; states are 23-token
  // arrays. Errors are thrown as ApiError.
  nlohmann::json create(const nlohmann::json& overrides);
  nlohmann::json predict(const std::string& id, const nlohmann::json& body);
  nlohmann::json feedback(const std::string& id, const nlohmann::json& body);
  nlohmann::json state(const std::string& id);
  void remove(const std::string& id);

  /// Drops sessions idle for longer than the timeout; returns how many.
  std::size_t expire_idle();
  std::size_t size() const;
  const AdaptConfig& defaults() const { return defaults_; }

 private:
  struct Live {
    std::mutex mutex;
    AdaptSession session;
    AdaptConfig config;
    Clock::time_point created;
    Clock::time_point last_active;
    std::vector<double> trace;  // online accuracy after each interaction
    Live(const nn::Model<Real>& base, const AdaptConfig& c, Clock::time_point t)
        : session(base, c), config(c), created(t), last_active(t) {}
  };

  std::shared_ptr<Live> find(const std::string& id);

  std::shared_ptr<const nn::Model<Real>> base_;
  AdaptConfig defaults_;
  std::chrono::seconds idle_timeout_;
  std::function<Clock::time_point()> now_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Live>> sessions_;
  std::uint64_t next_id_ = 1;
};

/// POST /sessions, POST /sessions/{id}/predict, POST /sessions/{id}/feedback,
/// GET /sessions/{id}, DELETE /sessions/{id}, plus CORS preflight.
void install_routes(httplib::Server& server, SessionManager& manager,
                    const std::string& cors_origin = "*");

}  // namespace shrdlurn
