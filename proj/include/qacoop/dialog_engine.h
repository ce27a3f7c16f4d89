// The 10-round cooperative loop, the dialog history it maintains and the
// enumeration of evaluation cases.
#ifndef QACOOP_DIALOG_ENGINE_H_
#define QACOOP_DIALOG_ENGINE_H_

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "qacoop/candidate_bank.h"
#include "qacoop/corpus.h"
#include "qacoop/model.h"

namespace qacoop {

// Replaces an empty id sequence by a lone EOS so it can still be encoded.
std::vector<int> encodable(std::vector<int> ids);

struct HistoryState {
  std::vector<QaPair> pairs;
  Var pair_embeddings;  // d_H x n, invalid while empty
  Var summary;          // d_H x 1
  Var last_question;    // d_q x 1, invalid before round 1
  int round = 0;

  HistoryView view() const;
};

HistoryState initial_history(Graph& g, const SharedModules& shared);
// question_encoding may be invalid, in which case the question is encoded
// here. Throws std::logic_error once 10 rounds are recorded.
void update_history(Graph& g, const SharedModules& shared, const Vocabulary& vocab, HistoryState& state,
                    const QaPair& pair, Var question_encoding = {});

enum class Provenance { kGenerated, kSelected, kGroundTruth, kHuman };
enum class AnswerSource { kABot, kSimulatedHuman, kLiveHuman };
std::string_view to_string(Provenance p);
Provenance parse_provenance(std::string_view s);

struct SelectionTrace {
  int index = -1;
  int gt_index = -1;  // -1 when the round has no ground-truth candidate
  int cluster = -1;
  std::vector<double> logits;  // phase 2, aligned with `scored`
  std::vector<int> scored;
};

struct RoundRecord {
  int round = 0;  // 1-based
  Tokens question;
  Tokens answer;
  Provenance question_provenance = Provenance::kGroundTruth;
  Provenance answer_provenance = Provenance::kGroundTruth;
  bool question_truncated = false;
  bool answer_truncated = false;
  std::optional<SelectionTrace> question_selection;
  std::optional<SelectionTrace> answer_selection;
};

struct Transcript {
  std::string video_id;
  DialogMode mode = DialogMode::kDiscriminative;
  int start_round = 1;
  bool strong_baseline = false;
  std::vector<RoundRecord> rounds;
  Tokens final_description;
  bool description_truncated = false;
};

nlohmann::json to_json(const Transcript& t);
Transcript transcript_from_json(const nlohmann::json& j);
std::string to_jsonl(const std::vector<Transcript>& transcripts);
std::vector<Transcript> transcripts_from_jsonl(std::string_view text);

// Candidate pools run through the candidate encoders and the selection key
// projections once, so every episode can reuse them.
struct EncodedCandidates {
  Matrix question_keys;  // select x N_q
  Matrix answer_keys;    // select x N_a
};
EncodedCandidates encode_candidates(const Model& model, const Vocabulary& vocab, const CandidateSet& candidates);

struct EpisodeOptions {
  AnswerSource answer_source = AnswerSource::kABot;
  int start_round = 1;
  bool strong_baseline = false;
  // Describe from an empty history without asking anything.
  bool no_dialog = false;
  int beam_width = 3;
  int question_max_len = 20;
  int answer_max_len = 20;
  int description_max_len = 30;
};

struct EpisodeInputs {
  std::string video_id;
  // Ground truth for seeded rounds and the simulated human. May be null
  // for a live session started at round 1.
  const DialogCase* dialog_case = nullptr;
  QBotInputs qbot;
  std::optional<ABotInputs> abot;  // required when A-BOT answers
  const CandidateSet* candidates = nullptr;
  const EncodedCandidates* encoded = nullptr;
};

// Inputs for an episode over a corpus case, with the Q-BOT view chosen by
// the model's configuration.
EpisodeInputs episode_inputs(const Model& model, const Vocabulary& vocab, const DialogCase& c,
                             const VideoFeatures& features, const CandidateSet* candidates = nullptr,
                             const EncodedCandidates* encoded = nullptr);

// One dialog, advanced a round at a time. Owns its computation graph, so
// episodes never share mutable state.
class Episode {
 public:
  Episode(const Model& model, const Vocabulary& vocab, EpisodeInputs inputs, EpisodeOptions options);
  Episode(const Episode&) = delete;
  Episode& operator=(const Episode&) = delete;

  int completed_rounds() const { return history_.round; }
  bool awaiting_answer() const { return pending_.has_value(); }
  bool complete() const { return complete_; }
  // Q-BOT's question for the next round. Throws std::logic_error when a
  // question is already pending or all 10 rounds are done.
  const Tokens& ask();
  const Tokens& pending_question() const;
  // Answers the pending question from the configured automatic source.
  void answer_automatically();
  // Answers the pending question with external text; an empty answer is
  // recorded as "i don't know".
  void answer(const Tokens& text);
  // Final description; valid once 10 rounds exist (or for no-dialog runs).
  const Transcript& describe();
  const Transcript& transcript() const { return transcript_; }

 private:
  struct Pending {
    Tokens question;
    Var encoding;
    RoundRecord record;
    int question_index = -1;
  };
  QBotContext qbot_context();
  int ground_truth_answer_for(int question_index) const;
  void commit(Tokens answer, Provenance provenance, bool truncated, std::optional<SelectionTrace> selection);

  const Model& model_;
  const Vocabulary& vocab_;
  EpisodeInputs inputs_;
  EpisodeOptions options_;
  std::unique_ptr<Graph> graph_;
  QBot::Visual visual_;
  std::optional<ABotEpisode> abot_episode_;
  HistoryState history_;
  std::optional<Pending> pending_;
  Transcript transcript_;
  bool complete_ = false;
};

// Seeds rounds before the start round, plays the rest and describes.
Transcript run_episode(const Model& model, const Vocabulary& vocab, const EpisodeInputs& inputs,
                       const EpisodeOptions& options);

struct TestCase {
  const DialogCase* dialog_case = nullptr;
  int start_round = 1;
  bool strong_baseline = false;
};
// Standard: every case at start rounds 1..10. Strong baseline: one entry
// per case with all 10 ground-truth rounds given.
std::vector<TestCase> enumerate_test_cases(std::span<const DialogCase> cases, bool strong_baseline);

// Copy of the case with its QA pairs in a seeded random order.
DialogCase shuffle_history(const DialogCase& c, std::uint64_t seed);

}  // namespace qacoop

#endif  // QACOOP_DIALOG_ENGINE_H_
