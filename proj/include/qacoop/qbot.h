// The questioner. Sees two segmented frames and the dialog history only.
#ifndef QACOOP_QBOT_H_
#define QACOOP_QBOT_H_

#include <span>
#include <utility>
#include <vector>

#include "qacoop/corpus.h"
#include "qacoop/decoding.h"
#include "qacoop/encoders_attention.h"
#include "qacoop/model_config.h"
#include "qacoop/selection.h"
#include "qacoop/shared_modules.h"

namespace qacoop {

// Q-BOT's visual input. There is deliberately no audio, caption or
// full-video field; see QBotInputs::from_features for the one ablation that
// hands it the A-BOT frames.
struct QBotInputs {
  std::vector<Matrix> frames;  // channels x locations

  static QBotInputs from_features(const VideoFeatures& f, QbotFrames mode);
};

struct QBotContext {
  std::vector<Var> attended_frames;  // a_{V,s}, a_{V,e}
  Var h_v, c_v;                      // visual LSTM state
  Var attended_history;              // a_{Q,H,i-1}
  Var history_weights;
  Var context;  // decoder/selector input: attended history fused with the summary
  int round = 0;
};

class QBot {
 public:
  QBot() = default;
  QBot(ParameterStore& store, const ModelConfig& cfg, const SharedModules& shared, Rng& rng);

  struct Visual {
    std::vector<MMAttention::Prepared> frames;
  };
  // Throws std::invalid_argument when the frames do not match the
  // configured Q-BOT view (2 x 28 locations for the segmented view).
  Visual prepare_visual(Graph& g, const QBotInputs& inputs) const;
  QBotContext context(Graph& g, const Visual& visual, const HistoryView& history, int round) const;

  // Runs the visual LSTM over the attended frames in order from a zero
  // state.
  std::pair<Var, Var> visual_state(Graph& g, std::span<const Var> attended_frames) const;

  // Teacher forcing: logits (vocab x (T+1)) predicting target then EOS.
  Var question_logits(Graph& g, const QBotContext& ctx, const std::vector<int>& target) const;
  DecodeResult generate_question(const QBotContext& ctx, int max_len) const;

  // Selection: keys for encoded question candidates (select x N) and the
  // query for this round (select x 1).
  Var candidate_keys(Graph& g, Var question_encodings) const;
  Var selection_query(Graph& g, const QBotContext& ctx) const;
  Selection select_question(Graph& g, const QBotContext& ctx, const Matrix& keys,
                            const ClusterAssignment* clusters) const;

  Var description_logits(Graph& g, const QBotContext& ctx, const std::vector<int>& target) const;
  LstmStepModel description_model(const QBotContext& ctx) const;
  DecodeResult generate_description(const QBotContext& ctx, int beam_width, int max_len) const;

  int visual_hidden() const { return visual_lstm_.hidden; }

 private:
  ModelConfig cfg_;
  const SharedModules* shared_ = nullptr;
  int frame_count_ = 0;
  int frame_locations_ = 0;
  int history_modality_ = 0;
  MMAttention mm_;
  IMAttention im_;
  Parameter* im_query0_ = nullptr;
  Lstm visual_lstm_;
  Linear fuse_;
  // generative
  Lstm question_lstm_;
  Linear question_out_;
  StateBridge question_bridge_;
  // discriminative
  Linear select_key_, select_query_;
  // description
  Lstm description_lstm_;
  Linear description_out_;
  StateBridge description_bridge_;
};

}  // namespace qacoop

#endif  // QACOOP_QBOT_H_
