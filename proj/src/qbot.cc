#include "qacoop/qbot.h"

#include <stdexcept>
#include <string>

namespace qacoop {

QBotInputs QBotInputs::from_features(const VideoFeatures& f, QbotFrames mode) {
  QBotInputs in;
  switch (mode) {
    case QbotFrames::kSegmented2:
      for (const auto& fr : f.qbot_frames) in.frames.push_back(fr.cast<double>());
      break;
    case QbotFrames::kFull:
      for (const auto& fr : f.abot_frames) in.frames.push_back(fr.cast<double>());
      break;
    case QbotFrames::kNone:
      break;
  }
  return in;
}

QBot::QBot(ParameterStore& store, const ModelConfig& cfg, const SharedModules& shared, Rng& rng)
    : cfg_(cfg), shared_(&shared) {
  const ModelDims& d = cfg.dims;
  switch (cfg.ablations.qbot_frames) {
    case QbotFrames::kSegmented2:
      frame_count_ = FeatureLayout::kQbotFrames;
      frame_locations_ = FeatureLayout::kQbotLocations;
      break;
    case QbotFrames::kFull:
      frame_count_ = FeatureLayout::kAbotFrames;
      frame_locations_ = FeatureLayout::kAbotLocations;
      break;
    case QbotFrames::kNone:
      break;
  }
  std::vector<ModalitySpec> specs;
  for (int i = 0; i < frame_count_; ++i) {
    specs.push_back({"frame" + std::to_string(i), FeatureLayout::kChannels, d.visual});
  }
  history_modality_ = static_cast<int>(specs.size());
  specs.push_back({"history", d.history, d.history});
  mm_ = MMAttention(store, "qbot.mm", specs, d.key, rng);
  if (cfg.ablations.attention == AttentionKind::kIM) {
    im_ = IMAttention(store, "qbot.im", d.history, d.question, d.key, d.history, rng);
    im_query0_ = &store.add_uniform("qbot.im.query0", d.question, 1, d.question, rng);
  }
  visual_lstm_ = Lstm::create(store, "qbot.visual", d.visual, d.visual, rng);
  if (cfg.ablations.dynamic_update) fuse_ = Linear::create(store, "qbot.fuse", 2 * d.history, d.history, rng);
  if (cfg.mode == DialogMode::kGenerative) {
    question_lstm_ = Lstm::create(store, "qbot.qdec", d.word + d.history, d.question, rng);
    question_out_ = Linear::create(store, "qbot.qdec.out", d.question, cfg.vocab_size, rng);
    question_bridge_ = StateBridge::create(store, "qbot.qdec.init", d.visual, d.question, rng);
  } else {
    select_key_ = Linear::create(store, "qbot.select.key", d.question, d.select, rng);
    select_query_ = Linear::create(store, "qbot.select.query", d.history, d.select, rng);
  }
  description_lstm_ = Lstm::create(store, "qbot.desc", d.word + d.history, d.history, rng);
  description_out_ = Linear::create(store, "qbot.desc.out", d.history, cfg.vocab_size, rng);
  description_bridge_ = StateBridge::create(store, "qbot.desc.init", d.visual, d.history, rng);
}

QBot::Visual QBot::prepare_visual(Graph& g, const QBotInputs& inputs) const {
  if (static_cast<int>(inputs.frames.size()) != frame_count_) {
    throw std::invalid_argument("Q-BOT expects " + std::to_string(frame_count_) + " frames, got " +
                                std::to_string(inputs.frames.size()));
  }
  Visual v;
  for (int i = 0; i < frame_count_; ++i) {
    const Matrix& f = inputs.frames[static_cast<std::size_t>(i)];
    if (f.rows() != FeatureLayout::kChannels || f.cols() != frame_locations_) {
      throw std::invalid_argument("Q-BOT frame " + std::to_string(i) + " has shape " + std::to_string(f.cols()) + "x" +
                                  std::to_string(f.rows()) + ", expected " + std::to_string(frame_locations_) + "x" +
                                  std::to_string(FeatureLayout::kChannels));
    }
    v.frames.push_back(mm_.prepare(g, i, g.constant(f)));
  }
  return v;
}

std::pair<Var, Var> QBot::visual_state(Graph& g, std::span<const Var> attended_frames) const {
  Var zero = g.constant(Matrix::Zero(visual_lstm_.hidden, 1));
  return visual_lstm_.run(g, attended_frames, zero, zero);
}

QBotContext QBot::context(Graph& g, const Visual& visual, const HistoryView& history, int round) const {
  QBotContext ctx;
  ctx.round = round;
  Var elements = history.count > 0 ? history.pairs : g.param(*shared_->null_history);
  const AttentionKind kind = cfg_.ablations.attention;
  if (kind == AttentionKind::kMM) {
    std::vector<MMAttention::Prepared> present = visual.frames;
    present.push_back(mm_.prepare(g, history_modality_, elements));
    auto out = mm_.attend(g, present);
    for (int i = 0; i < frame_count_; ++i) ctx.attended_frames.push_back(out[static_cast<std::size_t>(i)].attended);
    ctx.attended_history = out.back().attended;
    ctx.history_weights = out.back().weights;
  } else {
    for (const auto& p : visual.frames) ctx.attended_frames.push_back(mm_.uniform(g, p).attended);
    if (kind == AttentionKind::kIM) {
      Var query = history.last_question.valid() ? history.last_question : g.param(*im_query0_);
      auto out = im_(g, history.count > 0 ? history.pairs : Var{}, g.param(*shared_->null_history), query);
      ctx.attended_history = out.fused;
      ctx.history_weights = out.weights;
    } else {
      auto out = mm_.uniform(g, mm_.prepare(g, history_modality_, elements));
      ctx.attended_history = out.attended;
      ctx.history_weights = out.weights;
    }
  }
  std::tie(ctx.h_v, ctx.c_v) = visual_state(g, ctx.attended_frames);
  if (cfg_.ablations.dynamic_update) {
    const Var parts[] = {ctx.attended_history, history.summary};
    ctx.context = fuse_(g, ops::concat_rows(parts));
  } else {
    ctx.context = ctx.attended_history;
  }
  return ctx;
}

Var QBot::question_logits(Graph& g, const QBotContext& ctx, const std::vector<int>& target) const {
  if (cfg_.mode != DialogMode::kGenerative) throw std::logic_error("question decoder exists only in generative mode");
  auto [h0, c0] = question_bridge_(g, ctx.h_v, ctx.c_v);
  return teacher_forced_logits(g, question_lstm_, question_out_, *shared_->embedding, ctx.context, h0, c0, target,
                               Vocabulary::kSos);
}

DecodeResult QBot::generate_question(const QBotContext& ctx, int max_len) const {
  if (cfg_.mode != DialogMode::kGenerative) throw std::logic_error("question decoder exists only in generative mode");
  auto [h0, c0] = question_bridge_.apply(ctx.h_v.value(), ctx.c_v.value());
  LstmStepModel model(question_lstm_, question_out_, *shared_->embedding, ctx.context.value().col(0), h0, c0);
  return greedy_decode(model, Vocabulary::kSos, Vocabulary::kEos, max_len);
}

Var QBot::candidate_keys(Graph& g, Var question_encodings) const {
  if (cfg_.mode != DialogMode::kDiscriminative) throw std::logic_error("question selection exists only in discriminative mode");
  return select_key_(g, question_encodings);
}

Var QBot::selection_query(Graph& g, const QBotContext& ctx) const {
  if (cfg_.mode != DialogMode::kDiscriminative) throw std::logic_error("question selection exists only in discriminative mode");
  return select_query_(g, ctx.context);
}

Selection QBot::select_question(Graph& g, const QBotContext& ctx, const Matrix& keys,
                                const ClusterAssignment* clusters) const {
  return two_phase_select(keys, selection_query(g, ctx).value().col(0), clusters);
}

Var QBot::description_logits(Graph& g, const QBotContext& ctx, const std::vector<int>& target) const {
  auto [h0, c0] = description_bridge_(g, ctx.h_v, ctx.c_v);
  return teacher_forced_logits(g, description_lstm_, description_out_, *shared_->embedding, ctx.context, h0, c0,
                               target, Vocabulary::kSos);
}

LstmStepModel QBot::description_model(const QBotContext& ctx) const {
  auto [h0, c0] = description_bridge_.apply(ctx.h_v.value(), ctx.c_v.value());
  return LstmStepModel(description_lstm_, description_out_, *shared_->embedding, ctx.context.value().col(0), h0, c0);
}

DecodeResult QBot::generate_description(const QBotContext& ctx, int beam_width, int max_len) const {
  return beam_search(description_model(ctx), Vocabulary::kSos, Vocabulary::kEos, beam_width, max_len);
}

}  // namespace qacoop
