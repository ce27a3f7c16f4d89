#include "qacoop/shared_modules.h"

#include <stdexcept>

namespace qacoop {

SharedModules::SharedModules(ParameterStore& store, const ModelConfig& cfg, Rng& rng) {
  const ModelDims& d = cfg.dims;
  if (cfg.vocab_size <= Vocabulary::kReserved) throw std::invalid_argument("model vocabulary is empty");
  if (d.history % 2 != 0) throw std::invalid_argument("history dimension must be even");
  embedding = &store.add_uniform("embedding", d.word, cfg.vocab_size, d.word, rng);
  history = SequenceEncoder(store, "enc.history", embedding, d.history, rng);
  caption = SequenceEncoder(store, "enc.caption", embedding, d.caption, rng);
  question = SequenceEncoder(store, "enc.question", embedding, d.question, rng);
  if (cfg.mode == DialogMode::kDiscriminative) answer = SequenceEncoder(store, "enc.answer", embedding, d.answer, rng);
  null_history = &store.add_uniform("null_history", d.history, 1, d.history, rng);
  summary_init = &store.add_uniform("summary_init", d.history, 1, d.history, rng);
  summary_reduce = Linear::create(store, "update.summary", d.history, d.pair(), rng);
  pair_reduce = Linear::create(store, "update.pair", d.history, d.pair(), rng);
}

Var SharedModules::encode(Graph& g, EncoderRole role, const std::vector<std::vector<int>>& sequences) const {
  switch (role) {
    case EncoderRole::kHistoryPair:
      return history.encode(g, sequences);
    case EncoderRole::kInputDescription:
      return caption.encode(g, sequences);
    case EncoderRole::kQuestionCandidate:
      return question.encode(g, sequences);
    case EncoderRole::kAnswerCandidate:
      if (answer.hidden() == 0) throw std::logic_error("answer encoder exists only in discriminative mode");
      return answer.encode(g, sequences);
  }
  throw std::logic_error("unknown encoder role");
}

Var SharedModules::encode_pairs(Graph& g, const std::vector<std::vector<int>>& questions,
                                const std::vector<std::vector<int>>& answers) const {
  if (questions.size() != answers.size()) throw std::invalid_argument("encode_pairs: question/answer count mismatch");
  std::vector<std::vector<int>> joined;
  joined.reserve(questions.size());
  for (std::size_t i = 0; i < questions.size(); ++i) {
    std::vector<int> s = questions[i];
    s.insert(s.end(), answers[i].begin(), answers[i].end());
    joined.push_back(std::move(s));
  }
  return history.encode(g, joined);
}

Var SharedModules::update_summary(Graph& g, Var summary, Var pair_embedding) const {
  const Var parts[] = {summary_reduce(g, summary), pair_reduce(g, pair_embedding)};
  return ops::concat_rows(parts);
}

}  // namespace qacoop
