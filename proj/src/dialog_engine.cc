#include "qacoop/dialog_engine.h"

#include <sstream>
#include <stdexcept>

#include "qacoop/rng.h"

namespace qacoop {

std::vector<int> encodable(std::vector<int> ids) {
  if (ids.empty()) ids.push_back(Vocabulary::kEos);
  return ids;
}

HistoryView HistoryState::view() const {
  return {pair_embeddings, round, summary, last_question};
}

HistoryState initial_history(Graph& g, const SharedModules& shared) {
  HistoryState s;
  s.summary = g.param(*shared.summary_init);
  return s;
}

void update_history(Graph& g, const SharedModules& shared, const Vocabulary& vocab, HistoryState& state,
                    const QaPair& pair, Var question_encoding) {
  if (state.round >= kRoundsPerDialog) throw std::logic_error("update_history: all 10 rounds are already recorded");
  const auto q = encodable(vocab.encode(pair.question));
  const auto a = vocab.encode(pair.answer);
  Var p = shared.encode_pairs(g, {q}, {a});
  if (!question_encoding.valid()) question_encoding = shared.encode(g, EncoderRole::kQuestionCandidate, {q});
  if (state.pair_embeddings.valid()) {
    const Var cols[] = {state.pair_embeddings, p};
    state.pair_embeddings = ops::concat_cols(cols);
  } else {
    state.pair_embeddings = p;
  }
  state.summary = shared.update_summary(g, state.summary, p);
  state.last_question = question_encoding;
  state.pairs.push_back(pair);
  ++state.round;
}

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::kGenerated:
      return "generated";
    case Provenance::kSelected:
      return "selected";
    case Provenance::kGroundTruth:
      return "ground_truth";
    case Provenance::kHuman:
      return "human";
  }
  return "?";
}

Provenance parse_provenance(std::string_view s) {
  if (s == "generated") return Provenance::kGenerated;
  if (s == "selected") return Provenance::kSelected;
  if (s == "ground_truth") return Provenance::kGroundTruth;
  if (s == "human") return Provenance::kHuman;
  throw std::invalid_argument("unknown provenance: " + std::string(s));
}

namespace {

nlohmann::json selection_json(const SelectionTrace& s) {
  return {{"index", s.index}, {"gt_index", s.gt_index}, {"cluster", s.cluster}, {"logits", s.logits},
          {"scored", s.scored}};
}

SelectionTrace selection_from_json(const nlohmann::json& j) {
  SelectionTrace s;
  s.index = j.at("index").get<int>();
  s.gt_index = j.at("gt_index").get<int>();
  s.cluster = j.at("cluster").get<int>();
  s.logits = j.at("logits").get<std::vector<double>>();
  s.scored = j.at("scored").get<std::vector<int>>();
  return s;
}

}  // namespace

nlohmann::json to_json(const Transcript& t) {
  nlohmann::json rounds = nlohmann::json::array();
  for (const RoundRecord& r : t.rounds) {
    nlohmann::json j = {{"round", r.round},
                        {"question", join_tokens(r.question)},
                        {"answer", join_tokens(r.answer)},
                        {"question_provenance", to_string(r.question_provenance)},
                        {"answer_provenance", to_string(r.answer_provenance)},
                        {"question_truncated", r.question_truncated},
                        {"answer_truncated", r.answer_truncated}};
    if (r.question_selection) j["question_selection"] = selection_json(*r.question_selection);
    if (r.answer_selection) j["answer_selection"] = selection_json(*r.answer_selection);
    rounds.push_back(std::move(j));
  }
  return {{"video_id", t.video_id},
          {"mode", to_string(t.mode)},
          {"start_round", t.start_round},
          {"strong_baseline", t.strong_baseline},
          {"rounds", rounds},
          {"final_description", join_tokens(t.final_description)},
          {"description_truncated", t.description_truncated}};
}

Transcript transcript_from_json(const nlohmann::json& j) {
  Transcript t;
  t.video_id = j.at("video_id").get<std::string>();
  t.mode = parse_mode(j.at("mode").get<std::string>());
  t.start_round = j.at("start_round").get<int>();
  t.strong_baseline = j.at("strong_baseline").get<bool>();
  for (const auto& jr : j.at("rounds")) {
    RoundRecord r;
    r.round = jr.at("round").get<int>();
    r.question = tokenize(jr.at("question").get<std::string>());
    r.answer = tokenize(jr.at("answer").get<std::string>());
    r.question_provenance = parse_provenance(jr.at("question_provenance").get<std::string>());
    r.answer_provenance = parse_provenance(jr.at("answer_provenance").get<std::string>());
    r.question_truncated = jr.at("question_truncated").get<bool>();
    r.answer_truncated = jr.at("answer_truncated").get<bool>();
    if (jr.contains("question_selection")) r.question_selection = selection_from_json(jr["question_selection"]);
    if (jr.contains("answer_selection")) r.answer_selection = selection_from_json(jr["answer_selection"]);
    t.rounds.push_back(std::move(r));
  }
  t.final_description = tokenize(j.at("final_description").get<std::string>());
  t.description_truncated = j.at("description_truncated").get<bool>();
  return t;
}

std::string to_jsonl(const std::vector<Transcript>& transcripts) {
  std::string out;
  for (const Transcript& t : transcripts) {
    out += to_json(t).dump();
    out += '\n';
  }
  return out;
}

std::vector<Transcript> transcripts_from_jsonl(std::string_view text) {
  std::vector<Transcript> out;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(transcript_from_json(nlohmann::json::parse(line)));
  }
  return out;
}

namespace {

Matrix encode_keys(const Model& model, const Vocabulary& vocab, const std::vector<Tokens>& sentences, bool questions) {
  const int dim = model.config().dims.select;
  Matrix keys(dim, static_cast<Eigen::Index>(sentences.size()));
  constexpr std::size_t kChunk = 256;
  for (std::size_t start = 0; start < sentences.size(); start += kChunk) {
    const std::size_t end = std::min(sentences.size(), start + kChunk);
    std::vector<std::vector<int>> ids;
    for (std::size_t i = start; i < end; ++i) ids.push_back(encodable(vocab.encode(sentences[i])));
    Graph g;
    if (questions) {
      Var enc = model.shared().encode(g, EncoderRole::kQuestionCandidate, ids);
      keys.middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(end - start)) =
          model.qbot().candidate_keys(g, enc).value();
    } else {
      Var enc = model.shared().encode(g, EncoderRole::kAnswerCandidate, ids);
      keys.middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(end - start)) =
          model.abot().candidate_keys(g, enc).value();
    }
  }
  return keys;
}

SelectionTrace trace_of(const Selection& s, int gt_index) {
  SelectionTrace t;
  t.index = s.index;
  t.gt_index = gt_index;
  t.cluster = s.cluster;
  t.scored = s.scored;
  t.logits.assign(s.candidate_logits.data(), s.candidate_logits.data() + s.candidate_logits.size());
  return t;
}

}  // namespace

EncodedCandidates encode_candidates(const Model& model, const Vocabulary& vocab, const CandidateSet& candidates) {
  if (model.config().mode != DialogMode::kDiscriminative) {
    throw std::logic_error("candidate encodings exist only in discriminative mode");
  }
  return {encode_keys(model, vocab, candidates.questions, true), encode_keys(model, vocab, candidates.answers, false)};
}

EpisodeInputs episode_inputs(const Model& model, const Vocabulary& vocab, const DialogCase& c,
                             const VideoFeatures& features, const CandidateSet* candidates,
                             const EncodedCandidates* encoded) {
  EpisodeInputs in;
  in.video_id = c.video_id;
  in.dialog_case = &c;
  in.qbot = QBotInputs::from_features(features, model.config().ablations.qbot_frames);
  in.abot = ABotInputs::from_case(features, c, vocab);
  in.candidates = candidates;
  in.encoded = encoded;
  return in;
}

Episode::Episode(const Model& model, const Vocabulary& vocab, EpisodeInputs inputs, EpisodeOptions options)
    : model_(model), vocab_(vocab), inputs_(std::move(inputs)), options_(options), graph_(std::make_unique<Graph>()) {
  const DialogMode mode = model_.config().mode;
  if (options_.start_round < 1 || options_.start_round > kRoundsPerDialog) {
    throw std::invalid_argument("start round must be in [1, 10], got " + std::to_string(options_.start_round));
  }
  const bool asks = !options_.no_dialog && !options_.strong_baseline;
  if (asks && mode == DialogMode::kDiscriminative && (inputs_.candidates == nullptr || inputs_.encoded == nullptr)) {
    throw std::invalid_argument("discriminative episodes need an encoded candidate set");
  }
  if (asks && options_.answer_source == AnswerSource::kABot && !inputs_.abot) {
    throw std::invalid_argument("A-BOT answers need A-BOT inputs");
  }
  if (asks && options_.answer_source == AnswerSource::kSimulatedHuman && inputs_.dialog_case == nullptr &&
      inputs_.candidates == nullptr) {
    throw std::invalid_argument("the simulated human needs the ground-truth dialog");
  }
  Graph& g = *graph_;
  visual_ = model_.qbot().prepare_visual(g, inputs_.qbot);
  if (asks && options_.answer_source == AnswerSource::kABot) abot_episode_ = model_.abot().episode(g, *inputs_.abot);
  history_ = initial_history(g, model_.shared());

  transcript_.video_id = inputs_.video_id;
  transcript_.mode = mode;
  transcript_.strong_baseline = options_.strong_baseline;
  transcript_.start_round = options_.strong_baseline ? kRoundsPerDialog + 1 : options_.start_round;
  const int seeded = options_.no_dialog ? 0 : transcript_.start_round - 1;
  if (seeded > 0 && inputs_.dialog_case == nullptr) throw std::invalid_argument("seeded rounds need the ground-truth dialog");
  for (int r = 0; r < seeded; ++r) {
    const QaPair& p = inputs_.dialog_case->qa_pairs[static_cast<std::size_t>(r)];
    update_history(g, model_.shared(), vocab_, history_, p);
    RoundRecord rec;
    rec.round = r + 1;
    rec.question = p.question;
    rec.answer = p.answer;
    transcript_.rounds.push_back(std::move(rec));
  }
}

QBotContext Episode::qbot_context() {
  return model_.qbot().context(*graph_, visual_, history_.view(), history_.round + 1);
}

const Tokens& Episode::pending_question() const {
  if (!pending_) throw std::logic_error("no question is pending");
  return pending_->question;
}

int Episode::ground_truth_answer_for(int question_index) const {
  const CandidateSet& c = *inputs_.candidates;
  if (!c.gt_question.empty()) {
    for (std::size_t r = 0; r < c.gt_question.size(); ++r) {
      if (c.gt_question[r] == question_index) return c.gt_answer[r];
    }
    return -1;
  }
  if (inputs_.dialog_case == nullptr) return -1;
  const Tokens& q = c.questions[static_cast<std::size_t>(question_index)];
  for (const QaPair& p : inputs_.dialog_case->qa_pairs) {
    if (p.question == q) return c.find_answer(p.answer);
  }
  return -1;
}

const Tokens& Episode::ask() {
  if (complete_ || options_.no_dialog || options_.strong_baseline) throw std::logic_error("this episode asks no questions");
  if (pending_) throw std::logic_error("a question is already pending");
  if (history_.round >= kRoundsPerDialog) throw std::logic_error("all 10 rounds are done");
  Graph& g = *graph_;
  const QBotContext ctx = qbot_context();
  Pending p;
  p.record.round = history_.round + 1;
  if (model_.config().mode == DialogMode::kGenerative) {
    DecodeResult r = model_.qbot().generate_question(ctx, options_.question_max_len);
    p.question = vocab_.decode(r.tokens);
    p.record.question_provenance = Provenance::kGenerated;
    p.record.question_truncated = r.truncated;
    p.encoding = model_.shared().encode(g, EncoderRole::kQuestionCandidate, {encodable(r.tokens)});
  } else {
    const CandidateSet& c = *inputs_.candidates;
    const ClusterAssignment* clusters = c.clustered() ? &c.question_clusters : nullptr;
    const Selection s = model_.qbot().select_question(g, ctx, inputs_.encoded->question_keys, clusters);
    const auto r = static_cast<std::size_t>(history_.round);
    int gt = -1;
    if (!c.gt_question.empty()) {
      gt = c.gt_question[r];
    } else if (inputs_.dialog_case != nullptr) {
      gt = c.find_question(inputs_.dialog_case->qa_pairs[r].question);
    }
    p.question_index = s.index;
    p.question = c.questions[static_cast<std::size_t>(s.index)];
    p.record.question_provenance = Provenance::kSelected;
    p.record.question_selection = trace_of(s, gt);
    p.encoding = model_.shared().encode(g, EncoderRole::kQuestionCandidate, {encodable(vocab_.encode(p.question))});
  }
  p.record.question = p.question;
  pending_ = std::move(p);
  return pending_->question;
}

void Episode::commit(Tokens answer, Provenance provenance, bool truncated, std::optional<SelectionTrace> selection) {
  Pending p = std::move(*pending_);
  pending_.reset();
  p.record.answer = std::move(answer);
  p.record.answer_provenance = provenance;
  p.record.answer_truncated = truncated;
  p.record.answer_selection = std::move(selection);
  update_history(*graph_, model_.shared(), vocab_, history_, {p.record.question, p.record.answer}, p.encoding);
  transcript_.rounds.push_back(std::move(p.record));
}

void Episode::answer(const Tokens& text) {
  if (!pending_) throw std::logic_error("no question is pending");
  commit(text.empty() ? dont_know_tokens() : text, Provenance::kHuman, false, std::nullopt);
}

void Episode::answer_automatically() {
  if (!pending_) throw std::logic_error("no question is pending");
  Graph& g = *graph_;
  switch (options_.answer_source) {
    case AnswerSource::kLiveHuman:
      throw std::logic_error("a live human answer must be submitted explicitly");
    case AnswerSource::kSimulatedHuman: {
      Tokens a;
      if (pending_->question_index >= 0) {
        a = simulated_human_answer(pending_->question_index, *inputs_.candidates, inputs_.dialog_case);
      } else {
        a = dont_know_tokens();
        for (const QaPair& p : inputs_.dialog_case->qa_pairs) {
          if (p.question == pending_->question) {
            a = p.answer;
            break;
          }
        }
      }
      commit(std::move(a), Provenance::kGroundTruth, false, std::nullopt);
      return;
    }
    case AnswerSource::kABot:
      break;
  }
  const ABotContext ctx = model_.abot().context(g, *abot_episode_, history_.view(), pending_->encoding,
                                                history_.round + 1);
  if (model_.config().mode == DialogMode::kGenerative) {
    DecodeResult r = model_.abot().generate_answer(ctx, options_.answer_max_len);
    commit(vocab_.decode(r.tokens), Provenance::kGenerated, r.truncated, std::nullopt);
    return;
  }
  const CandidateSet& c = *inputs_.candidates;
  const ClusterAssignment* clusters = c.clustered() ? &c.answer_clusters : nullptr;
  const int must = ground_truth_answer_for(pending_->question_index);
  const Selection s = model_.abot().select_answer(g, ctx, inputs_.encoded->answer_keys, clusters, must);
  const auto r = static_cast<std::size_t>(history_.round);
  int gt = -1;
  if (!c.gt_answer.empty()) {
    gt = c.gt_answer[r];
  } else if (inputs_.dialog_case != nullptr) {
    gt = c.find_answer(inputs_.dialog_case->qa_pairs[r].answer);
  }
  commit(c.answers[static_cast<std::size_t>(s.index)], Provenance::kSelected, false, trace_of(s, gt));
}

const Transcript& Episode::describe() {
  if (complete_) return transcript_;
  if (pending_) throw std::logic_error("a question is still pending");
  if (!options_.no_dialog && history_.round < kRoundsPerDialog) {
    throw std::logic_error("the description needs 10 rounds, have " + std::to_string(history_.round));
  }
  const QBotContext ctx = qbot_context();
  DecodeResult r = model_.qbot().generate_description(ctx, options_.beam_width, options_.description_max_len);
  transcript_.final_description = vocab_.decode(r.tokens);
  transcript_.description_truncated = r.truncated;
  complete_ = true;
  return transcript_;
}

Transcript run_episode(const Model& model, const Vocabulary& vocab, const EpisodeInputs& inputs,
                       const EpisodeOptions& options) {
  if (options.answer_source == AnswerSource::kLiveHuman) {
    throw std::invalid_argument("run_episode cannot wait for a live human; drive an Episode instead");
  }
  Episode e(model, vocab, inputs, options);
  if (!options.no_dialog) {
    while (e.completed_rounds() < kRoundsPerDialog) {
      e.ask();
      e.answer_automatically();
    }
  }
  return e.describe();
}

std::vector<TestCase> enumerate_test_cases(std::span<const DialogCase> cases, bool strong_baseline) {
  std::vector<TestCase> out;
  for (const DialogCase& c : cases) {
    if (strong_baseline) {
      out.push_back({&c, kRoundsPerDialog + 1, true});
    } else {
      for (int r = 1; r <= kRoundsPerDialog; ++r) out.push_back({&c, r, false});
    }
  }
  return out;
}

DialogCase shuffle_history(const DialogCase& c, std::uint64_t seed) {
  DialogCase out = c;
  Rng rng(seed);
  shuffle_in_place(out.qa_pairs, rng);
  return out;
}

}  // namespace qacoop
