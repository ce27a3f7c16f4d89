// Session-oriented inference for the live-human protocol: Q-BOT asks, a
// person answers, and after ten rounds the final description comes back.
#ifndef QACOOP_SERVICE_H_
#define QACOOP_SERVICE_H_

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "qacoop/candidate_bank.h"
#include "qacoop/corpus.h"
#include "qacoop/dialog_engine.h"
#include "qacoop/model.h"

namespace httplib {
class Server;
}

namespace qacoop {

// Carries the HTTP status and a stable error code.
class ServiceError : public std::runtime_error {
 public:
  ServiceError(int status, std::string code, const std::string& message, bool retriable = false,
               nlohmann::json extra = nlohmann::json::object());
  int status;
  std::string code;
  bool retriable;
  nlohmann::json extra;
  nlohmann::json body() const;
};

enum class SessionStatus { kAwaitingAnswer, kAsking, kComplete };
std::string_view to_string(SessionStatus s);

struct ServiceConfig {
  std::chrono::seconds idle_timeout{30 * 60};
  // Append-only JSON lines of finished or expired sessions; empty disables.
  std::filesystem::path transcript_log;
  int beam_width = 3;
  int clusters = 10;
  std::uint64_t seed = 1;
  int toy_vocab_size = 64;
  std::function<std::chrono::steady_clock::time_point()> clock;
  // Test hook, called before an answer is applied. An exception thrown
  // here ends that session only.
  std::function<void(const std::string& session_id, int round)> before_answer;
};

class SessionManager {
 public:
  // Model, vocabulary and features are shared read-only by all sessions.
  SessionManager(const Model& model, const Vocabulary& vocab, std::vector<DialogCase> cases, FeatureStore features,
                 ServiceConfig config = {});
  ~SessionManager();

  // {video_id} or {toy_seed}, optional mode. Returns {session_id, round,
  // question, status}.
  nlohmann::json create(const nlohmann::json& request);
  // Next {round, question} or, after round 10, {description, transcript}.
  nlohmann::json answer(const std::string& session_id, const std::string& text);
  nlohmann::json view(const std::string& session_id) const;

  // Drops sessions idle for longer than the timeout, flushing their
  // transcripts; returns how many were dropped.
  std::size_t collect_idle();
  std::size_t session_count() const;

 private:
  struct Session;
  std::shared_ptr<Session> find(const std::string& session_id) const;
  void drop(const std::string& session_id);
  void persist(const Session& s, std::string_view status);
  std::chrono::steady_clock::time_point now() const;

  const Model& model_;
  const Vocabulary& vocab_;
  std::vector<DialogCase> cases_;
  std::map<std::string, const DialogCase*> case_by_video_;
  FeatureStore features_;
  ServiceConfig cfg_;
  CandidateSet candidates_;
  EncodedCandidates encoded_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t next_id_ = 1;
  std::mutex log_mu_;
};

// HTTP+JSON front end: POST /sessions, POST /sessions/{id}/answer,
// GET /sessions/{id}, GET /healthz. Errors are {error, message}.
class HttpService {
 public:
  explicit HttpService(SessionManager& sessions);
  ~HttpService();

  // Returns the bound port (a free one when port is 0), or -1.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void serve();
  void start_background();
  void stop();

 private:
  SessionManager& sessions_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  std::thread reaper_;
  std::mutex reaper_mu_;
  std::condition_variable reaper_cv_;
  bool stopping_ = false;
};

}  // namespace qacoop

#endif  // QACOOP_SERVICE_H_
