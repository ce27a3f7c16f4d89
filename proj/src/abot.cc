#include "qacoop/abot.h"

#include <stdexcept>
#include <string>

namespace qacoop {

ABotInputs ABotInputs::from_case(const VideoFeatures& f, const DialogCase& c, const Vocabulary& vocab) {
  ABotInputs in;
  for (const auto& fr : f.abot_frames) in.frames.push_back(fr.cast<double>());
  in.audio = f.audio.cast<double>();
  in.caption = vocab.encode(c.input_description);
  return in;
}

ABot::ABot(ParameterStore& store, const ModelConfig& cfg, const SharedModules& shared, Rng& rng)
    : cfg_(cfg), shared_(&shared) {
  const ModelDims& d = cfg.dims;
  const Ablations& ab = cfg.ablations;
  if (d.audio != d.visual) throw std::invalid_argument("attended audio and visual sizes must agree");
  std::vector<ModalitySpec> av;
  if (ab.audio) {
    audio_modality_ = static_cast<int>(av.size());
    av.push_back({"audio", FeatureLayout::kAudio, d.audio});
  }
  first_frame_modality_ = static_cast<int>(av.size());
  for (int i = 0; i < FeatureLayout::kAbotFrames; ++i) {
    av.push_back({"frame" + std::to_string(i), FeatureLayout::kChannels, d.visual});
  }
  if (ab.caption) {
    caption_modality_ = static_cast<int>(av.size());
    av.push_back({"caption", d.caption, d.caption});
  }
  av_mm_ = MMAttention(store, "abot.mm.av", av, d.key, rng);

  std::vector<ModalitySpec> dialog{{"history", d.history, d.history}, {"question", d.question, d.question}};
  if (ab.caption) {
    dialog_caption_modality_ = static_cast<int>(dialog.size());
    dialog.push_back({"caption", d.caption, d.caption});
  }
  dialog_mm_ = MMAttention(store, "abot.mm.dialog", dialog, d.key, rng);
  if (ab.attention == AttentionKind::kIM) {
    im_ = IMAttention(store, "abot.im", d.history, d.question, d.key, d.history, rng);
  }
  if (ab.av_lstm) {
    av_lstm_ = Lstm::create(store, "abot.av", d.visual, d.av, rng);
  } else {
    av_direct_ = Linear::create(store, "abot.av.direct", d.visual, d.av, rng);
  }
  if (!ab.caption) null_caption_ = &store.add_uniform("abot.null_caption", d.caption, 1, d.caption, rng);
  if (ab.dynamic_update) fuse_ = Linear::create(store, "abot.fuse", 2 * d.history, d.history, rng);
  if (cfg.mode == DialogMode::kGenerative) {
    answer_lstm_ = Lstm::create(store, "abot.adec", d.word + d.answer_context(), d.answer, rng);
    answer_out_ = Linear::create(store, "abot.adec.out", d.answer, cfg.vocab_size, rng);
    answer_bridge_ = StateBridge::create(store, "abot.adec.init", d.av, d.answer, rng);
  } else {
    select_key_ = Linear::create(store, "abot.select.key", d.answer, d.select, rng);
    select_query_ = Linear::create(store, "abot.select.query", d.answer_context(), d.select, rng);
  }
}

int ABot::context_dim() const { return cfg_.dims.answer_context(); }

std::pair<Var, Var> ABot::av_state(Graph& g, Var attended_audio, std::span<const Var> attended_frames) const {
  std::vector<Var> steps;
  if (attended_audio.valid()) steps.push_back(attended_audio);
  steps.insert(steps.end(), attended_frames.begin(), attended_frames.end());
  if (cfg_.ablations.av_lstm) {
    Var zero = g.constant(Matrix::Zero(av_lstm_.hidden, 1));
    return av_lstm_.run(g, steps, zero, zero);
  }
  Var mean = ops::mean_cols(ops::concat_cols(steps));
  return {ops::tanh(av_direct_(g, mean)), g.constant(Matrix::Zero(av_direct_.out, 1))};
}

ABotEpisode ABot::episode(Graph& g, const ABotInputs& inputs) const {
  if (inputs.frames.size() != static_cast<std::size_t>(FeatureLayout::kAbotFrames)) {
    throw std::invalid_argument("A-BOT expects " + std::to_string(FeatureLayout::kAbotFrames) + " frames, got " +
                                std::to_string(inputs.frames.size()));
  }
  for (const Matrix& f : inputs.frames) {
    if (f.rows() != FeatureLayout::kChannels || f.cols() != FeatureLayout::kAbotLocations) {
      throw std::invalid_argument("A-BOT frame has the wrong shape");
    }
  }
  if (inputs.audio.size() != FeatureLayout::kAudio) throw std::invalid_argument("A-BOT audio has the wrong length");

  ABotEpisode ep;
  if (cfg_.ablations.caption) {
    if (inputs.caption.empty()) throw std::invalid_argument("A-BOT input description is empty");
    ep.caption_encoding = shared_->encode(g, EncoderRole::kInputDescription, {inputs.caption});
  } else {
    ep.caption_encoding = g.param(*null_caption_);
  }
  std::vector<MMAttention::Prepared> present;
  if (audio_modality_ >= 0) present.push_back(av_mm_.prepare(g, audio_modality_, g.constant(inputs.audio)));
  for (int i = 0; i < FeatureLayout::kAbotFrames; ++i) {
    present.push_back(av_mm_.prepare(g, first_frame_modality_ + i, g.constant(inputs.frames[static_cast<std::size_t>(i)])));
  }
  if (caption_modality_ >= 0) present.push_back(av_mm_.prepare(g, caption_modality_, ep.caption_encoding));

  std::vector<Var> attended;
  if (cfg_.ablations.attention == AttentionKind::kMM) {
    for (auto& o : av_mm_.attend(g, present)) attended.push_back(o.attended);
  } else {
    for (const auto& p : present) attended.push_back(av_mm_.uniform(g, p).attended);
  }
  std::size_t k = 0;
  if (audio_modality_ >= 0) ep.attended_audio = attended[k++];
  for (int i = 0; i < FeatureLayout::kAbotFrames; ++i) ep.attended_frames.push_back(attended[k++]);
  ep.attended_caption = caption_modality_ >= 0 ? attended[k++] : ep.caption_encoding;
  std::tie(ep.h_av, ep.c_av) = av_state(g, ep.attended_audio, ep.attended_frames);
  return ep;
}

ABotContext ABot::context(Graph& g, const ABotEpisode& ep, const HistoryView& history, Var question_encoding,
                          int round) const {
  if (question_encoding.rows() != cfg_.dims.question) throw std::invalid_argument("A-BOT question encoding size");
  ABotContext ctx;
  ctx.round = round;
  ctx.question = question_encoding;
  ctx.h_av = ep.h_av;
  ctx.c_av = ep.c_av;
  const bool sees_history = cfg_.ablations.history_abot && history.count > 0;
  Var null_history = g.param(*shared_->null_history);
  Var elements = sees_history ? history.pairs : null_history;
  Var summary = cfg_.ablations.history_abot ? history.summary : g.param(*shared_->summary_init);
  switch (cfg_.ablations.attention) {
    case AttentionKind::kMM: {
      std::vector<MMAttention::Prepared> present{dialog_mm_.prepare(g, 0, elements),
                                                 dialog_mm_.prepare(g, 1, question_encoding)};
      if (dialog_caption_modality_ >= 0) {
        present.push_back(dialog_mm_.prepare(g, dialog_caption_modality_, ep.caption_encoding));
      }
      auto out = dialog_mm_.attend(g, present);
      ctx.attended_history = out[0].attended;
      ctx.history_weights = out[0].weights;
      break;
    }
    case AttentionKind::kIM: {
      auto out = im_(g, sees_history ? history.pairs : Var{}, null_history, question_encoding);
      ctx.attended_history = out.fused;
      ctx.history_weights = out.weights;
      break;
    }
    case AttentionKind::kNone: {
      auto out = dialog_mm_.uniform(g, dialog_mm_.prepare(g, 0, elements));
      ctx.attended_history = out.attended;
      ctx.history_weights = out.weights;
      break;
    }
  }
  Var history_context = ctx.attended_history;
  if (cfg_.ablations.dynamic_update) {
    const Var parts[] = {ctx.attended_history, summary};
    history_context = fuse_(g, ops::concat_rows(parts));
  }
  const Var parts[] = {history_context, ep.attended_caption, question_encoding};
  ctx.context = ops::concat_rows(parts);
  return ctx;
}

Var ABot::answer_logits(Graph& g, const ABotContext& ctx, const std::vector<int>& target) const {
  if (cfg_.mode != DialogMode::kGenerative) throw std::logic_error("answer decoder exists only in generative mode");
  auto [h0, c0] = answer_bridge_(g, ctx.h_av, ctx.c_av);
  return teacher_forced_logits(g, answer_lstm_, answer_out_, *shared_->embedding, ctx.context, h0, c0, target,
                               Vocabulary::kSos);
}

DecodeResult ABot::generate_answer(const ABotContext& ctx, int max_len) const {
  if (cfg_.mode != DialogMode::kGenerative) throw std::logic_error("answer decoder exists only in generative mode");
  auto [h0, c0] = answer_bridge_.apply(ctx.h_av.value(), ctx.c_av.value());
  LstmStepModel model(answer_lstm_, answer_out_, *shared_->embedding, ctx.context.value().col(0), h0, c0);
  return greedy_decode(model, Vocabulary::kSos, Vocabulary::kEos, max_len);
}

Var ABot::candidate_keys(Graph& g, Var answer_encodings) const {
  if (cfg_.mode != DialogMode::kDiscriminative) throw std::logic_error("answer selection exists only in discriminative mode");
  return select_key_(g, answer_encodings);
}

Var ABot::selection_query(Graph& g, const ABotContext& ctx) const {
  if (cfg_.mode != DialogMode::kDiscriminative) throw std::logic_error("answer selection exists only in discriminative mode");
  return select_query_(g, ctx.context);
}

Selection ABot::select_answer(Graph& g, const ABotContext& ctx, const Matrix& keys,
                                  const ClusterAssignment* clusters, int must_include) const {
  return two_phase_select(keys, selection_query(g, ctx).value().col(0), clusters, must_include);
}

Tokens simulated_human_answer(int question_index, const CandidateSet& candidates, const DialogCase* dialog_case) {
  if (question_index < 0 || question_index >= static_cast<int>(candidates.questions.size())) {
    throw std::out_of_range("simulated_human_answer: question index out of range");
  }
  const Tokens& q = candidates.questions[static_cast<std::size_t>(question_index)];
  if (dialog_case != nullptr) {
    for (const QaPair& p : dialog_case->qa_pairs) {
      if (p.question == q) return p.answer;
    }
  }
  const int paired = candidates.pairing.empty() ? -1 : candidates.pairing[static_cast<std::size_t>(question_index)];
  if (paired >= 0) return candidates.answers[static_cast<std::size_t>(paired)];
  return dont_know_tokens();
}

}  // namespace qacoop
