// The answerer. Sees all four frames, the audio track and the caption.
#ifndef QACOOP_ABOT_H_
#define QACOOP_ABOT_H_

#include <vector>

#include "qacoop/candidate_bank.h"
#include "qacoop/corpus.h"
#include "qacoop/decoding.h"
#include "qacoop/encoders_attention.h"
#include "qacoop/model_config.h"
#include "qacoop/selection.h"
#include "qacoop/shared_modules.h"

namespace qacoop {

struct ABotInputs {
  std::vector<Matrix> frames;  // 4 x (channels x locations)
  Vector audio;
  std::vector<int> caption;  // token ids

  static ABotInputs from_case(const VideoFeatures& f, const DialogCase& c, const Vocabulary& vocab);
};

// Everything A-BOT computes once per episode: attended audio, frames and
// caption, and the audio-visual recurrent state.
struct ABotEpisode {
  Var attended_audio;                // invalid when audio is ablated
  std::vector<Var> attended_frames;  // a_{V,1..4}
  Var h_av, c_av;
  Var caption_encoding;  // r_C, or the learned null caption
  Var attended_caption;  // a_c
};

struct ABotContext {
  Var attended_history;  // a_{A,H,i-1}
  Var history_weights;
  Var question;  // r_{q,i}
  Var context;   // [history context; a_c; r_q]
  Var h_av, c_av;
  int round = 0;
};

class ABot {
 public:
  ABot() = default;
  ABot(ParameterStore& store, const ModelConfig& cfg, const SharedModules& shared, Rng& rng);

  ABotEpisode episode(Graph& g, const ABotInputs& inputs) const;
  // Audio first, then the frames in temporal order, from a zero state.
  std::pair<Var, Var> av_state(Graph& g, Var attended_audio, std::span<const Var> attended_frames) const;
  ABotContext context(Graph& g, const ABotEpisode& ep, const HistoryView& history, Var question_encoding,
                      int round) const;

  Var answer_logits(Graph& g, const ABotContext& ctx, const std::vector<int>& target) const;
  DecodeResult generate_answer(const ABotContext& ctx, int max_len) const;

  Var candidate_keys(Graph& g, Var answer_encodings) const;
  Var selection_query(Graph& g, const ABotContext& ctx) const;
  Selection select_answer(Graph& g, const ABotContext& ctx, const Matrix& keys,
                          const ClusterAssignment* clusters, int must_include = -1) const;

  int context_dim() const;

 private:
  ModelConfig cfg_;
  const SharedModules* shared_ = nullptr;
  // Episode-level attention over audio, frames and the caption.
  MMAttention av_mm_;
  int audio_modality_ = -1;
  int first_frame_modality_ = 0;
  int caption_modality_ = -1;
  // Per-round attention over the history, conditioned on the question and
  // the caption.
  MMAttention dialog_mm_;
  int dialog_caption_modality_ = -1;
  IMAttention im_;
  Lstm av_lstm_;
  Linear av_direct_;
  Parameter* null_caption_ = nullptr;
  Linear fuse_;
  Lstm answer_lstm_;
  Linear answer_out_;
  StateBridge answer_bridge_;
  Linear select_key_, select_query_;
};

// Stand-in for a human who knows the ground-truth dialog: the case's own
// answer when the picked question is one of its questions, else the answer
// paired with the candidate, else "i don't know".
Tokens simulated_human_answer(int question_index, const CandidateSet& candidates, const DialogCase* dialog_case);

}  // namespace qacoop

#endif  // QACOOP_ABOT_H_
