#include "shrdlurn/service.hpp"

#include <random>
#include <sstream>

#include "httplib.h"
#include "shrdlurn/log.hpp"

namespace shrdlurn {

namespace {

using nlohmann::json;

json token_texts(const std::array<int, kStateLength>& ids) {
  json out = json::array();
  for (int id : ids) out.push_back(state_token_text(static_cast<StateToken>(id)));
  return out;
}

std::vector<std::string> string_list(const json& body, const char* field, bool allow_string) {
  if (!body.is_object() || !body.contains(field)) {
    throw ApiError(400, std::string("missing field '") + field + "'");
  }
  const json& v = body.at(field);
  if (allow_string && v.is_string()) return split_tokens(v.get<std::string>());
  if (!v.is_array()) throw ApiError(400, std::string("field '") + field + "' must be a list");
  std::vector<std::string> out;
  for (const auto& t : v) {
    if (!t.is_string()) throw ApiError(400, std::string("field '") + field + "' must hold strings");
    out.push_back(t.get<std::string>());
  }
  return out;
}

WorldState state_field(const json& body, const char* field) {
  const auto tokens = string_list(body, field, false);
  try {
    return deserialize_state(tokens);
  } catch (const FormatError& e) {
    throw ApiError(422, std::string("malformed '") + field + "': " + e.what());
  }
}

std::string fresh_id(std::uint64_t counter) {
  static std::mt19937_64 gen{std::random_device{}()};
  std::ostringstream os;
  os << 's' << counter << '-' << std::hex << (gen() & 0xffffffffULL);
  return os.str();
}

}  // namespace

SessionManager::SessionManager(std::shared_ptr<const nn::Model<Real>> base, AdaptConfig defaults,
                               std::chrono::seconds idle_timeout,
                               std::function<Clock::time_point()> now)
    : base_(std::move(base)), defaults_(defaults), idle_timeout_(idle_timeout), now_(std::move(now)) {
  if (!base_) throw std::invalid_argument("session manager needs a model");
  defaults_.validate();
}

std::size_t SessionManager::expire_idle() {
  const auto t = now_();
  std::lock_guard lock(mutex_);
  std::size_t dropped = 0;
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    if (t - it->second->last_active > idle_timeout_) {
      log_info("expired session ", it->first);
      it = sessions_.erase(it);
      ++dropped;
    } else {
      ++it;
    }
  }
  return dropped;
}

std::size_t SessionManager::size() const {
  std::lock_guard lock(mutex_);
  return sessions_.size();
}

std::shared_ptr<SessionManager::Live> SessionManager::find(const std::string& id) {
  expire_idle();
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw ApiError(404, "unknown session '" + id + "'");
  return it->second;
}

json SessionManager::create(const json& overrides) {
  expire_idle();
  AdaptConfig config;
  try {
    config = adapt_config_from_json(overrides.is_null() ? json::object() : overrides, defaults_);
    config.validate();
  } catch (const std::invalid_argument& e) {
    throw ApiError(400, e.what());
  } catch (const json::exception& e) {
    throw ApiError(400, e.what());
  }
  auto live = std::make_shared<Live>(*base_, config, now_());
  std::string id;
  {
    std::lock_guard lock(mutex_);
    id = fresh_id(next_id_++);
    sessions_.emplace(id, live);
  }
  log_info("created session ", id, " ", adapt_config_to_json(config).dump());
  return {{"id", id}, {"config", adapt_config_to_json(config)}};
}

json SessionManager::predict(const std::string& id, const json& body) {
  auto live = find(id);
  const auto utterance = string_list(body, "utt", true);
  if (utterance.empty()) throw ApiError(422, "empty utterance");
  const WorldState start = state_field(body, "start");

  std::lock_guard lock(live->mutex);
  if (live->session.pending()) throw ApiError(409, "a prediction is awaiting feedback");
  const PredictOutcome out = live->session.predict(utterance, start);
  live->last_active = now_();
  return {{"predicted", token_texts(out.tokens)},
          {"selected", out.selected},
          {"losses", out.losses},
          {"t", live->session.t()}};
}

json SessionManager::feedback(const std::string& id, const json& body) {
  auto live = find(id);
  const WorldState target = state_field(body, "target");

  std::lock_guard lock(live->mutex);
  if (!live->session.pending()) throw ApiError(409, "no prediction awaits feedback");
  const InteractionRecord rec = live->session.feedback(target);
  live->trace.push_back(live->session.online_accuracy());
  live->last_active = now_();
  return {{"correct", rec.correct},
          {"online_accuracy", live->session.online_accuracy()},
          {"t", live->session.t()}};
}

json SessionManager::state(const std::string& id) {
  auto live = find(id);
  std::lock_guard lock(live->mutex);
  const auto& s = live->session;
  json correct = json::array();
  for (const auto& r : s.log()) correct.push_back(r.correct);
  std::vector<double> losses = s.latest_losses();
  losses.resize(static_cast<std::size_t>(s.k()), 0.0);
  const auto age = [&](Clock::time_point t) {
    return std::chrono::duration<double>(now_() - t).count();
  };
  return {{"id", id},
          {"t", s.t()},
          {"online_accuracy", s.online_accuracy()},
          {"trace", live->trace},
          {"correct", correct},
          {"buffer", s.buffer().size()},
          {"pending", s.pending()},
          {"losses", losses},
          {"config", adapt_config_to_json(live->config)},
          {"age_s", age(live->created)},
          {"idle_s", age(live->last_active)}};
}

void SessionManager::remove(const std::string& id) {
  std::lock_guard lock(mutex_);
  if (sessions_.erase(id) == 0) throw ApiError(404, "unknown session '" + id + "'");
  log_info("deleted session ", id);
}

void install_routes(httplib::Server& server, SessionManager& manager,
                    const std::string& cors_origin) {
  auto reply = [](httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  };
  // Runs `fn` and maps errors to status codes.
  auto guarded = [reply](auto fn) {
    return [reply, fn](const httplib::Request& req, httplib::Response& res) {
      try {
        json body;
        if (!req.body.empty()) {
          try {
            body = json::parse(req.body);
          } catch (const json::parse_error& e) {
            throw ApiError(400, std::string("invalid JSON: ") + e.what());
          }
        }
        reply(res, 200, fn(req, body));
      } catch (const ApiError& e) {
        reply(res, e.status(), {{"error", e.what()}});
      } catch (const std::exception& e) {
        log_info("internal error: ", e.what());
        reply(res, 500, {{"error", e.what()}});
      }
    };
  };

  server.set_post_routing_handler([cors_origin](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", cors_origin);
    res.set_header("Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
  });
  server.Options(R"(/sessions.*)", [](const httplib::Request&, httplib::Response& res) {
    res.status = 204;
  });

  server.Post("/sessions", guarded([&manager](const httplib::Request&, const json& body) {
                return manager.create(body);
              }));
  server.Post(R"(/sessions/([^/]+)/predict)",
              guarded([&manager](const httplib::Request& req, const json& body) {
                return manager.predict(req.matches[1], body);
              }));
  server.Post(R"(/sessions/([^/]+)/feedback)",
              guarded([&manager](const httplib::Request& req, const json& body) {
                return manager.feedback(req.matches[1], body);
              }));
  server.Get(R"(/sessions/([^/]+))", guarded([&manager](const httplib::Request& req, const json&) {
               return manager.state(req.matches[1]);
             }));
  server.Delete(R"(/sessions/([^/]+))",
                guarded([&manager](const httplib::Request& req, const json&) {
                  manager.remove(req.matches[1]);
                  return json{{"deleted", std::string(req.matches[1])}};
                }));
}

}  // namespace shrdlurn
