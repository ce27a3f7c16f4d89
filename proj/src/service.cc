#include "qacoop/service.h"

#include <ctime>
#include <fstream>

#include "httplib.h"
#include "qacoop/pipeline.h"

namespace qacoop {

ServiceError::ServiceError(int status, std::string code, const std::string& message, bool retriable,
                           nlohmann::json extra)
    : std::runtime_error(message), status(status), code(std::move(code)), retriable(retriable), extra(std::move(extra)) {}

nlohmann::json ServiceError::body() const {
  nlohmann::json j = extra;
  j["error"] = code;
  j["message"] = what();
  if (retriable) j["retriable"] = true;
  return j;
}

std::string_view to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::kAwaitingAnswer:
      return "awaiting_answer";
    case SessionStatus::kAsking:
      return "asking";
    case SessionStatus::kComplete:
      return "complete";
  }
  return "?";
}

namespace {

std::string utc_timestamp(std::chrono::system_clock::time_point t) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

struct SessionManager::Session {
  std::string id;
  std::string video_id;
  std::string created_at;
  std::chrono::steady_clock::time_point last_active;
  SessionStatus status = SessionStatus::kAsking;
  std::unique_ptr<DialogCase> toy_case;
  std::unique_ptr<CandidateSet> own_candidates;
  std::unique_ptr<EncodedCandidates> own_encoded;
  std::unique_ptr<Episode> episode;
  std::mutex mu;

  int round() const {
    if (status == SessionStatus::kComplete) return kRoundsPerDialog;
    return episode->completed_rounds() + 1;
  }
};

SessionManager::SessionManager(const Model& model, const Vocabulary& vocab, std::vector<DialogCase> cases,
                               FeatureStore features, ServiceConfig config)
    : model_(model), vocab_(vocab), cases_(std::move(cases)), features_(std::move(features)), cfg_(std::move(config)) {
  for (const DialogCase& c : cases_) case_by_video_.emplace(c.video_id, &c);
  if (model_.config().mode == DialogMode::kDiscriminative && !cases_.empty()) {
    candidates_ = inference_candidate_set(vocab_, cases_, cfg_.clusters, cfg_.seed);
    encoded_ = encode_candidates(model_, vocab_, candidates_);
  }
}

SessionManager::~SessionManager() = default;

std::chrono::steady_clock::time_point SessionManager::now() const {
  return cfg_.clock ? cfg_.clock() : std::chrono::steady_clock::now();
}

nlohmann::json SessionManager::create(const nlohmann::json& request) {
  if (!request.is_object()) throw ServiceError(400, "bad_request", "request body must be a JSON object");
  const DialogMode mode = model_.config().mode;
  if (request.contains("mode")) {
    if (!request["mode"].is_string()) throw ServiceError(400, "bad_request", "mode must be a string");
    DialogMode asked;
    try {
      asked = parse_mode(request["mode"].get<std::string>());
    } catch (const std::exception& e) {
      throw ServiceError(400, "bad_request", e.what());
    }
    if (asked != mode) {
      throw ServiceError(400, "mode_unavailable",
                         "the loaded model runs in " + std::string(to_string(mode)) + " mode");
    }
  }

  auto s = std::make_shared<Session>();
  VideoFeatures features;
  if (request.contains("video_id")) {
    if (!request["video_id"].is_string()) throw ServiceError(400, "bad_request", "video_id must be a string");
    s->video_id = request["video_id"].get<std::string>();
    if (!features_.contains(s->video_id)) {
      throw ServiceError(404, "unknown_video", "no features for video " + s->video_id, false,
                         {{"video_id", s->video_id}});
    }
    features = features_.get(s->video_id);
  } else if (request.contains("toy_seed")) {
    if (!request["toy_seed"].is_number_integer() || request["toy_seed"].get<std::int64_t>() < 0) {
      throw ServiceError(400, "bad_request", "toy_seed must be a non-negative integer");
    }
    const auto seed = request["toy_seed"].get<std::uint64_t>();
    ToyCorpus toy = synthesize_toy_corpus(seed, 1, cfg_.toy_vocab_size);
    s->toy_case = std::make_unique<DialogCase>(toy.cases[0]);
    s->video_id = s->toy_case->video_id;
    features = toy.features.get(s->video_id);
  } else {
    throw ServiceError(400, "bad_request", "request needs video_id or toy_seed");
  }

  EpisodeInputs in;
  in.video_id = s->video_id;
  in.qbot = QBotInputs::from_features(features, model_.config().ablations.qbot_frames);
  if (mode == DialogMode::kDiscriminative) {
    if (candidates_.questions.empty()) {
      if (!s->toy_case) throw ServiceError(503, "no_candidates", "no candidate pool is loaded");
      s->own_candidates = std::make_unique<CandidateSet>(
          inference_candidate_set(vocab_, std::span<const DialogCase>(s->toy_case.get(), 1), cfg_.clusters, cfg_.seed));
      s->own_encoded = std::make_unique<EncodedCandidates>(encode_candidates(model_, vocab_, *s->own_candidates));
      in.candidates = s->own_candidates.get();
      in.encoded = s->own_encoded.get();
    } else {
      in.candidates = &candidates_;
      in.encoded = &encoded_;
    }
  }
  EpisodeOptions eo;
  eo.answer_source = AnswerSource::kLiveHuman;
  eo.beam_width = cfg_.beam_width;
  s->episode = std::make_unique<Episode>(model_, vocab_, std::move(in), eo);
  const Tokens question = s->episode->ask();
  s->status = SessionStatus::kAwaitingAnswer;
  s->created_at = utc_timestamp(std::chrono::system_clock::now());
  s->last_active = now();
  {
    std::lock_guard lock(mu_);
    s->id = "s" + std::to_string(next_id_++) + "-" + std::to_string(std::hash<std::string>{}(s->video_id) % 100000);
    sessions_.emplace(s->id, s);
  }
  return {{"session_id", s->id},
          {"video_id", s->video_id},
          {"round", 1},
          {"question", join_tokens(question)},
          {"status", to_string(s->status)}};
}

std::shared_ptr<SessionManager::Session> SessionManager::find(const std::string& session_id) const {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) {
    throw ServiceError(404, "unknown_session", "no session " + session_id, false, {{"session_id", session_id}});
  }
  return it->second;
}

void SessionManager::drop(const std::string& session_id) {
  std::lock_guard lock(mu_);
  sessions_.erase(session_id);
}

nlohmann::json SessionManager::answer(const std::string& session_id, const std::string& text) {
  const std::shared_ptr<Session> s = find(session_id);
  std::unique_lock lock(s->mu, std::try_to_lock);
  if (!lock.owns_lock()) {
    throw ServiceError(409, "session_busy", "another request for this session is in progress", true);
  }
  if (s->status == SessionStatus::kComplete) throw ServiceError(409, "session_complete", "session complete");
  s->last_active = now();
  try {
    if (cfg_.before_answer) cfg_.before_answer(session_id, s->round());
    s->status = SessionStatus::kAsking;
    s->episode->answer(tokenize(text));
    nlohmann::json out{{"session_id", s->id}};
    if (s->episode->completed_rounds() < kRoundsPerDialog) {
      const Tokens& q = s->episode->ask();
      s->status = SessionStatus::kAwaitingAnswer;
      out["round"] = s->round();
      out["question"] = join_tokens(q);
    } else {
      const Transcript& t = s->episode->describe();
      s->status = SessionStatus::kComplete;
      persist(*s, "complete");
      out["round"] = kRoundsPerDialog;
      out["description"] = join_tokens(t.final_description);
      out["transcript"] = to_json(t);
    }
    out["status"] = to_string(s->status);
    s->last_active = now();
    return out;
  } catch (const std::exception& e) {
    lock.unlock();
    drop(session_id);
    throw ServiceError(500, "session_failed", std::string("session ended by an internal error: ") + e.what());
  }
}

nlohmann::json SessionManager::view(const std::string& session_id) const {
  const std::shared_ptr<Session> s = find(session_id);
  std::lock_guard lock(s->mu);
  nlohmann::json j{{"session_id", s->id},
                   {"video_id", s->video_id},
                   {"mode", to_string(model_.config().mode)},
                   {"status", to_string(s->status)},
                   {"round", s->round()},
                   {"created_at", s->created_at},
                   {"transcript", to_json(s->episode->transcript())}};
  if (s->status == SessionStatus::kAwaitingAnswer) j["question"] = join_tokens(s->episode->pending_question());
  if (s->status == SessionStatus::kComplete) j["description"] = join_tokens(s->episode->transcript().final_description);
  return j;
}

void SessionManager::persist(const Session& s, std::string_view status) {
  if (cfg_.transcript_log.empty()) return;
  nlohmann::json j = to_json(s.episode->transcript());
  j["session_id"] = s.id;
  j["status"] = status;
  std::lock_guard lock(log_mu_);
  std::ofstream out(cfg_.transcript_log, std::ios::app);
  out << j.dump() << '\n';
}

std::size_t SessionManager::collect_idle() {
  const auto t = now();
  std::vector<std::shared_ptr<Session>> expired;
  {
    std::lock_guard lock(mu_);
    for (auto it = sessions_.begin(); it != sessions_.end();) {
      std::unique_lock slock(it->second->mu, std::try_to_lock);
      if (slock.owns_lock() && t - it->second->last_active > cfg_.idle_timeout) {
        expired.push_back(it->second);
        it = sessions_.erase(it);
      } else {
        ++it;
      }
    }
  }
  for (const auto& s : expired) {
    if (s->status != SessionStatus::kComplete) persist(*s, "expired");
  }
  return expired.size();
}

std::size_t SessionManager::session_count() const {
  std::lock_guard lock(mu_);
  return sessions_.size();
}

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json; charset=utf-8");
}

template <typename F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const ServiceError& e) {
    if (e.retriable) res.set_header("Retry-After", "1");
    send_json(res, e.status, e.body());
  } catch (const nlohmann::json::exception& e) {
    send_json(res, 400, {{"error", "bad_json"}, {"message", e.what()}});
  } catch (const std::exception& e) {
    send_json(res, 500, {{"error", "internal"}, {"message", e.what()}});
  }
}

}  // namespace

HttpService::HttpService(SessionManager& sessions) : sessions_(sessions), server_(std::make_unique<httplib::Server>()) {
  auto& srv = *server_;
  srv.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, {{"status", "ok"}, {"sessions", sessions_.session_count()}});
  });
  srv.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 201, sessions_.create(nlohmann::json::parse(req.body))); });
  });
  srv.Post(R"(/sessions/([^/]+)/answer)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const nlohmann::json body = nlohmann::json::parse(req.body);
      if (!body.is_object() || !body.contains("text") || !body["text"].is_string()) {
        throw ServiceError(400, "bad_request", "body must be {\"text\": string}");
      }
      send_json(res, 200, sessions_.answer(req.matches[1], body["text"].get<std::string>()));
    });
  });
  srv.Get(R"(/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, sessions_.view(req.matches[1])); });
  });
  srv.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (res.body.empty()) {
      send_json(res, res.status, {{"error", res.status == 404 ? "not_found" : "http_error"}, {"message", req.path}});
    }
  });
}

HttpService::~HttpService() { stop(); }

int HttpService::bind(const std::string& host, int port) {
  if (port == 0) return server_->bind_to_any_port(host);
  return server_->bind_to_port(host, port) ? port : -1;
}

void HttpService::serve() {
  reaper_ = std::thread([this] {
    std::unique_lock lock(reaper_mu_);
    while (!reaper_cv_.wait_for(lock, std::chrono::seconds(60), [this] { return stopping_; })) {
      sessions_.collect_idle();
    }
  });
  server_->listen_after_bind();
}

void HttpService::start_background() {
  thread_ = std::thread([this] { serve(); });
  server_->wait_until_ready();
}

void HttpService::stop() {
  {
    std::lock_guard lock(reaper_mu_);
    stopping_ = true;
  }
  reaper_cv_.notify_all();
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
  if (reaper_.joinable()) reaper_.join();
}

}  // namespace qacoop
