#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <utility>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "codefb/llm/provider.hpp"
#include "codefb/refine/engine.hpp"
#include "codefb/sandbox/executor.hpp"
#include "codefb/service/sessions.hpp"

namespace codefb::service {

struct ServiceError : std::runtime_error {
  ServiceError(int status, const std::string& what, json state = nullptr)
      : std::runtime_error(what), status(status), state(std::move(state)) {}
  int status;
  json state;  // session state to return alongside the error, if any
};

inline std::string random_id() {
  static thread_local std::mt19937_64 rng{std::random_device{}()};
  return util::hex64(rng()) + util::hex64(rng());
}

/// Live sessions over a data directory. Mutations hold the session's lock
/// only while checking and persisting; the generate/execute cycle runs
/// outside it with the status set to Generating so rival posts get 409.
class SessionService {
 public:
  SessionService(std::filesystem::path data_dir, llm::Provider& provider, const Executor& executor,
                 SessionConfig defaults = {})
      : dir_(std::move(data_dir)), provider_(provider), executor_(executor), defaults_(defaults) {
    std::filesystem::create_directories(dir_);
    for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
      if (entry.path().extension() != ".jsonl") continue;
      auto events = EventLog::read(entry.path());
      if (events.empty()) continue;
      auto sess = std::make_shared<Session>();
      for (const auto& e : events) apply_event(sess->state, e);
      sess->log = std::make_unique<EventLog>(entry.path());
      // A turn that was cut short by a crash is closed out so the session is usable again.
      if (sess->state.status == SessionStatus::Generating || sess->state.status == SessionStatus::Executing) {
        json e{{"type", "turn_failed"}, {"error", "interrupted by service restart"}, {"at", utc_now()}};
        sess->log->append(e);
        apply_event(sess->state, e);
      }
      sessions_[sess->state.session_id] = sess;
    }
  }

  /// Overrides: {"max_iterations": n, "wall_timeout_ms": t}.
  json create(const json& overrides = json::object()) {
    SessionConfig cfg = defaults_;
    if (overrides.contains("max_iterations")) {
      if (!overrides["max_iterations"].is_number_integer() || overrides["max_iterations"].get<int>() < 1)
        throw ServiceError(400, "max_iterations must be a positive integer");
      cfg.max_iterations = overrides["max_iterations"].get<int>();
    }
    if (overrides.contains("wall_timeout_ms")) {
      if (!overrides["wall_timeout_ms"].is_number_integer() || overrides["wall_timeout_ms"].get<long long>() < 1)
        throw ServiceError(400, "wall_timeout_ms must be a positive integer");
      cfg.wall_timeout = Millis(overrides["wall_timeout_ms"].get<long long>());
    }
    auto sess = std::make_shared<Session>();
    std::string id;
    {
      std::lock_guard lock(mu_);
      do id = random_id();
      while (sessions_.count(id));
      sessions_[id] = sess;
    }
    std::lock_guard lock(sess->mu);
    try {
      sess->log = std::make_unique<EventLog>(dir_ / (id + ".jsonl"));
      record(*sess, {{"type", "created"}, {"session_id", id}, {"max_iterations", cfg.max_iterations},
                     {"wall_timeout_ms", cfg.wall_timeout.count()}, {"at", utc_now()}});
    } catch (const std::exception& e) {
      std::lock_guard g(mu_);
      sessions_.erase(id);
      throw ServiceError(500, std::string("storage failure: ") + e.what());
    }
    return state_to_json(sess->state);
  }

  json get(const std::string& id) {
    auto sess = find(id);
    std::lock_guard lock(sess->mu);
    return state_to_json(sess->state);
  }

  /// Appends the user turn and runs one refine cycle. Returns the new state;
  /// throws ServiceError 404/409/400, or 502 after persisting what was produced.
  json post(const std::string& id, const std::string& content, std::optional<FeedbackCategory> category) {
    if (util::trim(content).empty()) throw ServiceError(400, "content is empty");
    auto sess = find(id);
    Dialogue seed;
    refine::LoopConfig cfg;
    {
      std::lock_guard lock(sess->mu);
      if (sess->state.status != SessionStatus::AwaitingUser)
        throw ServiceError(409, "session is " + std::string(to_string(sess->state.status)));
      record(*sess, {{"type", "turn_started"}, {"at", utc_now()}});
      json m{{"type", "message"}, {"role", "user"}, {"content", content}, {"at", utc_now()}};
      if (category) m["feedback_category"] = to_string(*category);
      record(*sess, m);
      seed = sess->state.dialogue();
      cfg.max_iterations = sess->state.config.max_iterations;
      cfg.limits.wall_timeout = sess->state.config.wall_timeout;
    }
    cfg.judge = refine::Judge::ExecutionDriven;

    StatusTrace trace(*sess);
    refine::LoopContext ctx{provider_, executor_};
    ctx.trace = &trace;
    ctx.trace_id = id;
    std::size_t base = seed.messages.size();
    try {
      auto r = refine::run_execution_loop(seed, cfg, ctx);
      std::lock_guard lock(sess->mu);
      append_new(*sess, r.dialogue, base, &r.outcomes);
      LastOutcome lo;
      const auto& o = r.outcomes.back();
      lo.status = o.status;
      lo.stdout_text = o.stdout_text;
      lo.stderr_text = o.stderr_text;
      lo.mismatch = o.mismatch;
      record(*sess, {{"type", "turn_finished"}, {"rounds", r.rounds_used}, {"last_outcome", outcome_to_json(lo)},
                     {"at", utc_now()}});
      return state_to_json(sess->state);
    } catch (const refine::LoopError& e) {
      std::lock_guard lock(sess->mu);
      append_new(*sess, e.partial(), base, nullptr);
      record(*sess, {{"type", "turn_failed"}, {"error", e.what()}, {"at", utc_now()}});
      throw ServiceError(502, std::string("provider failure: ") + e.what(), state_to_json(sess->state));
    } catch (const std::exception& e) {
      std::lock_guard lock(sess->mu);
      record(*sess, {{"type", "turn_failed"}, {"error", e.what()}, {"at", utc_now()}});
      throw ServiceError(500, e.what());
    }
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return sessions_.size();
  }

 private:
  struct Session {
    std::mutex mu;
    SessionState state;
    std::unique_ptr<EventLog> log;
  };

  /// Mirrors generate/execute progress into the in-memory status only.
  class StatusTrace : public refine::TraceSink {
   public:
    explicit StatusTrace(Session& s) : s_(s) {}
    void event(const json& e) override {
      auto kind = e.value("event", "");
      std::lock_guard lock(s_.mu);
      if (kind == "prompt") s_.state.status = SessionStatus::Generating;
      else if (kind == "completion") s_.state.status = SessionStatus::Executing;
    }

   private:
    Session& s_;
  };

  std::shared_ptr<Session> find(const std::string& id) {
    std::lock_guard lock(mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw ServiceError(404, "no session '" + id + "'");
    return it->second;
  }

  /// Durable first, then visible.
  static void record(Session& s, const json& e) {
    s.log->append(e);
    apply_event(s.state, e);
  }

  static void append_new(Session& s, const Dialogue& d, std::size_t base,
                         const std::vector<ExecutionOutcome>* outcomes) {
    std::size_t exec_seen = 0;
    for (std::size_t i = base; i < d.messages.size(); ++i) {
      const auto& m = d.messages[i];
      json e{{"type", "message"}, {"role", to_string(m.role())}, {"content", m.content()}, {"at", utc_now()}};
      if (m.role() == Role::ExecutionFeedback && outcomes && exec_seen < outcomes->size())
        e["outcome"] = to_string((*outcomes)[exec_seen++].status);
      record(s, e);
    }
  }

  std::filesystem::path dir_;
  llm::Provider& provider_;
  const Executor& executor_;
  SessionConfig defaults_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
};

inline void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

/// Routes the session API onto `server`.
inline void mount(httplib::Server& server, SessionService& svc, const std::string& cors_origin = "*") {
  server.set_default_headers({{"Access-Control-Allow-Origin", cors_origin},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                              {"Access-Control-Allow-Headers", "Content-Type"}});
  server.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  auto guarded = [](auto fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const ServiceError& e) {
        json body{{"error", e.what()}};
        if (!e.state.is_null()) body["state"] = e.state;
        send_json(res, e.status, body);
      } catch (const json::exception& e) {
        send_json(res, 400, {{"error", std::string("bad request body: ") + e.what()}});
      } catch (const std::exception& e) {
        send_json(res, 500, {{"error", e.what()}});
      }
    };
  };

  server.Get("/v1/healthz", [](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, {{"status", "ok"}});
  });
  server.Post("/v1/sessions", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                json overrides = req.body.empty() ? json::object() : json::parse(req.body);
                if (!overrides.is_object()) throw ServiceError(400, "body must be a JSON object");
                send_json(res, 201, svc.create(overrides));
              }));
  server.Get("/v1/sessions/:id", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
               send_json(res, 200, svc.get(req.path_params.at("id")));
             }));
  server.Post("/v1/sessions/:id/messages", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                auto body = json::parse(req.body);
                if (!body.is_object() || !body.contains("content") || !body["content"].is_string())
                  throw ServiceError(400, "body needs a string 'content'");
                std::optional<FeedbackCategory> cat;
                if (body.contains("feedback_category") && !body["feedback_category"].is_null()) {
                  cat = parse_feedback_category(body["feedback_category"].get<std::string>());
                  if (!cat) throw ServiceError(400, "unknown feedback_category");
                }
                send_json(res, 200, svc.post(req.path_params.at("id"), body["content"].get<std::string>(), cat));
              }));
}

}  // namespace codefb::service
