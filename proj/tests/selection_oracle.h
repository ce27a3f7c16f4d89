#ifndef QACOOP_TESTS_SELECTION_ORACLE_H_
#define QACOOP_TESTS_SELECTION_ORACLE_H_

#include <cmath>

#include "qacoop/dialog_engine.h"
#include "qacoop/model.h"
#include "qacoop/rng.h"

namespace qacoop::testing {

struct SelectionOracleResult {
  int trials = 0;
  int agree = 0;  // both agents picked the brute-force argmax
  int bad_distributions = 0;
};

// Random contexts (0-9 ground-truth rounds) with 1-8 candidates drawn from a
// toy corpus; Q-BOT and A-BOT select without clusters and each pick is
// compared to an explicit argmax of key . query over the raw parameters.
inline SelectionOracleResult selection_oracle(int trials, std::uint64_t seed) {
  const ToyCorpus toy = synthesize_toy_corpus(3, 2, 64);
  const Vocabulary vocab = Vocabulary::build(toy.cases, 1);
  const DialogCase& c = toy.cases[0];
  const VideoFeatures features = toy.features.get(c.video_id);
  ModelConfig cfg;
  cfg.mode = DialogMode::kDiscriminative;
  cfg.dims = ModelDims::reduced(4);
  cfg.vocab_size = vocab.size();
  const Model m(cfg);
  const ParameterStore& p = m.parameters();

  auto brute = [](const Matrix& enc, const Matrix& ctx, const Parameter& kw, const Parameter& kb, const Parameter& qw,
                  const Parameter& qb) {
    const Matrix query = qw.value * ctx + qb.value;
    int best = 0;
    double best_score = -1e300;
    for (int i = 0; i < enc.cols(); ++i) {
      const Matrix key = kw.value * enc.col(i) + kb.value;
      const double s = (key.transpose() * query)(0, 0);
      if (s > best_score) {
        best_score = s;
        best = i;
      }
    }
    return best;
  };

  SelectionOracleResult out;
  Rng rng(seed);
  for (int trial = 0; trial < trials; ++trial) {
    Graph g;
    const int rounds = static_cast<int>(uniform_index(rng, 10));
    const int n = 1 + static_cast<int>(uniform_index(rng, 8));
    std::vector<std::vector<int>> qs, as;
    for (int i = 0; i < n; ++i) {
      const DialogCase& src = toy.cases[uniform_index(rng, toy.cases.size())];
      const QaPair& pair = src.qa_pairs[uniform_index(rng, 10)];
      qs.push_back(encodable(vocab.encode(pair.question)));
      as.push_back(encodable(vocab.encode(pair.answer)));
    }
    const Matrix q_enc = m.shared().encode(g, EncoderRole::kQuestionCandidate, qs).value();
    const Matrix a_enc = m.shared().encode(g, EncoderRole::kAnswerCandidate, as).value();
    const Matrix q_keys = m.qbot().candidate_keys(g, g.constant(q_enc)).value();
    const Matrix a_keys = m.abot().candidate_keys(g, g.constant(a_enc)).value();

    const QBot::Visual v = m.qbot().prepare_visual(g, QBotInputs::from_features(features, QbotFrames::kSegmented2));
    HistoryState h = initial_history(g, m.shared());
    for (int r = 0; r < rounds; ++r) update_history(g, m.shared(), vocab, h, c.qa_pairs[r]);
    const QBotContext qc = m.qbot().context(g, v, h.view(), rounds + 1);
    const Selection q_sel = m.qbot().select_question(g, qc, q_keys, nullptr);

    const Var question =
        m.shared().encode(g, EncoderRole::kQuestionCandidate, {encodable(vocab.encode(c.qa_pairs[rounds].question))});
    const ABotEpisode ep = m.abot().episode(g, ABotInputs::from_case(features, c, vocab));
    const ABotContext ac = m.abot().context(g, ep, h.view(), question, rounds + 1);
    const Selection a_sel = m.abot().select_answer(g, ac, a_keys, nullptr);

    const int q_best = brute(q_enc, qc.context.value(), p.get("qbot.select.key.w"), p.get("qbot.select.key.b"),
                             p.get("qbot.select.query.w"), p.get("qbot.select.query.b"));
    const int a_best = brute(a_enc, ac.context.value(), p.get("abot.select.key.w"), p.get("abot.select.key.b"),
                             p.get("abot.select.query.w"), p.get("abot.select.query.b"));
    if (std::abs(q_sel.candidate_probabilities.sum() - 1.0) > 1e-6 ||
        std::abs(a_sel.candidate_probabilities.sum() - 1.0) > 1e-6) {
      ++out.bad_distributions;
    }
    ++out.trials;
    if (q_sel.index == q_best && a_sel.index == a_best) ++out.agree;
  }
  return out;
}

}  // namespace qacoop::testing

#endif  // QACOOP_TESTS_SELECTION_ORACLE_H_
