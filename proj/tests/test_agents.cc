#include <cmath>
#include <type_traits>

#include "doctest.h"
#include "qacoop/dialog_engine.h"
#include "qacoop/model.h"
#include "selection_oracle.h"

using namespace qacoop;

static_assert(!std::is_constructible_v<QBotInputs, ABotInputs>);
static_assert(!std::is_convertible_v<ABotInputs, QBotInputs>);
static_assert(!std::is_constructible_v<QBotInputs, VideoFeatures>);

namespace {

struct Fixture {
  ToyCorpus toy = synthesize_toy_corpus(3, 2, 64);
  Vocabulary vocab = Vocabulary::build(toy.cases, 1);
  const DialogCase& c = toy.cases[0];
  VideoFeatures features = toy.features.get(c.video_id);

  ModelConfig config(DialogMode mode, bool full_dims = false, std::uint64_t seed = 1) const {
    ModelConfig cfg;
    cfg.mode = mode;
    cfg.dims = full_dims ? ModelDims::full() : ModelDims::reduced(4);
    cfg.vocab_size = vocab.size();
    cfg.seed = seed;
    return cfg;
  }

  // History after `rounds` ground-truth rounds.
  HistoryState history(Graph& g, const Model& m, int rounds) const {
    HistoryState h = initial_history(g, m.shared());
    for (int r = 0; r < rounds; ++r) update_history(g, m.shared(), vocab, h, c.qa_pairs[r]);
    return h;
  }

  Var question(Graph& g, const Model& m, int round) const {
    return m.shared().encode(g, EncoderRole::kQuestionCandidate, {encodable(vocab.encode(c.qa_pairs[round].question))});
  }
};

void zero(Model& m, const std::string& prefix) {
  for (Parameter* p : m.parameters().all()) {
    if (p->name.rfind(prefix, 0) == 0) p->value.setZero();
  }
}

void set_eos_only(Model& m, const std::string& out) {
  m.parameters().get(out + ".w").value.setZero();
  Matrix& b = m.parameters().get(out + ".b").value;
  b.setConstant(-5.0);
  b(Vocabulary::kEos, 0) = 5.0;
}

bool finite(Var v) { return v.valid() && v.value().allFinite(); }

}  // namespace

TEST_CASE("Q-BOT refuses A-BOT frames") {
  Fixture f;
  const Model m(f.config(DialogMode::kGenerative));
  Graph g;
  QBotInputs wrong;
  for (const auto& fr : f.features.abot_frames) wrong.frames.push_back(fr.cast<double>());
  CHECK_THROWS_AS(m.qbot().prepare_visual(g, wrong), std::invalid_argument);
  const QBotInputs right = QBotInputs::from_features(f.features, QbotFrames::kSegmented2);
  CHECK(right.frames.size() == 2);
  CHECK(right.frames[0].cols() == 28);
  CHECK_NOTHROW(m.qbot().prepare_visual(g, right));
}

TEST_CASE("visual state with zero parameters is zero") {
  Fixture f;
  Model m(f.config(DialogMode::kGenerative, true));
  zero(m, "qbot.visual");
  Graph g;
  const std::vector<Var> frames{g.constant(Matrix::Zero(128, 1)), g.constant(Matrix::Ones(128, 1))};
  const auto [h, c] = m.qbot().visual_state(g, frames);
  CHECK(h.rows() == 128);
  CHECK(h.value().isZero());
  CHECK(c.value().isZero());
}

TEST_CASE("visual state has the visual width and depends on frame order") {
  Fixture f;
  for (int seed = 0; seed < 20; ++seed) {
    const Model m(f.config(DialogMode::kGenerative, seed == 0, static_cast<std::uint64_t>(seed)));
    Graph g;
    const QBot::Visual v = m.qbot().prepare_visual(g, QBotInputs::from_features(f.features, QbotFrames::kSegmented2));
    const HistoryState h = f.history(g, m, 0);
    const QBotContext ctx = m.qbot().context(g, v, h.view(), 1);
    REQUIRE(ctx.attended_frames.size() == 2);
    const int width = m.config().dims.visual;
    CHECK(ctx.h_v.rows() == width);
    const std::vector<Var> swapped{ctx.attended_frames[1], ctx.attended_frames[0]};
    const auto [h2, c2] = m.qbot().visual_state(g, swapped);
    CAPTURE(seed);
    CHECK((h2.value() - ctx.h_v.value()).norm() > 1e-9);
  }
}

TEST_CASE("AV state with zero parameters is zero") {
  Fixture f;
  Model m(f.config(DialogMode::kGenerative, true));
  zero(m, "abot.av");
  Graph g;
  const std::vector<Var> frames(4, g.constant(Matrix::Ones(128, 1)));
  const auto [h, c] = m.abot().av_state(g, g.constant(Matrix::Zero(128, 1)), frames);
  CHECK(h.rows() == 256);
  CHECK(h.value().isZero());
  CHECK(c.value().isZero());
}

TEST_CASE("AV state depends on frame order") {
  Fixture f;
  const ABotInputs in = ABotInputs::from_case(f.features, f.c, f.vocab);
  for (int seed = 0; seed < 20; ++seed) {
    const Model m(f.config(DialogMode::kGenerative, false, static_cast<std::uint64_t>(100 + seed)));
    Graph g;
    const ABotEpisode ep = m.abot().episode(g, in);
    REQUIRE(ep.attended_frames.size() == 4);
    CHECK(ep.h_av.rows() == m.config().dims.av);
    std::vector<Var> reversed(ep.attended_frames.rbegin(), ep.attended_frames.rend());
    const auto [h2, c2] = m.abot().av_state(g, ep.attended_audio, reversed);
    CAPTURE(seed);
    CHECK((h2.value() - ep.h_av.value()).norm() > 1e-9);
  }
}

TEST_CASE("answer decoder input is 640 wide") {
  Fixture f;
  const Model m(f.config(DialogMode::kGenerative, true));
  CHECK(m.abot().context_dim() == 640);
  Graph g;
  const ABotEpisode ep = m.abot().episode(g, ABotInputs::from_case(f.features, f.c, f.vocab));
  const HistoryState h = f.history(g, m, 2);
  const ABotContext ctx = m.abot().context(g, ep, h.view(), f.question(g, m, 2), 3);
  CHECK(ctx.context.rows() == 640);
  CHECK(ctx.history_weights.rows() == 2);
}

TEST_CASE("frozen-EOS decoders produce empty output") {
  Fixture f;
  Model m(f.config(DialogMode::kGenerative));
  set_eos_only(m, "qbot.qdec.out");
  set_eos_only(m, "abot.adec.out");
  set_eos_only(m, "qbot.desc.out");
  Graph g;
  const QBot::Visual v = m.qbot().prepare_visual(g, QBotInputs::from_features(f.features, QbotFrames::kSegmented2));
  const HistoryState h = f.history(g, m, 3);
  const QBotContext qc = m.qbot().context(g, v, h.view(), 4);
  CHECK(m.qbot().generate_question(qc, 20).tokens.empty());
  CHECK(m.qbot().generate_description(qc, 3, 30).tokens.empty());
  const ABotEpisode ep = m.abot().episode(g, ABotInputs::from_case(f.features, f.c, f.vocab));
  const ABotContext ac = m.abot().context(g, ep, h.view(), f.question(g, m, 3), 4);
  CHECK(m.abot().generate_answer(ac, 20).tokens.empty());
}

TEST_CASE("generated lengths respect max_len") {
  Fixture f;
  for (int seed = 0; seed < 5; ++seed) {
    const Model m(f.config(DialogMode::kGenerative, false, static_cast<std::uint64_t>(seed)));
    Graph g;
    const QBot::Visual v = m.qbot().prepare_visual(g, QBotInputs::from_features(f.features, QbotFrames::kSegmented2));
    const HistoryState h = f.history(g, m, 1);
    const QBotContext qc = m.qbot().context(g, v, h.view(), 2);
    for (int len : {1, 3, 7}) {
      CHECK(m.qbot().generate_question(qc, len).tokens.size() < static_cast<std::size_t>(len));
      CHECK(m.qbot().generate_description(qc, 3, len).tokens.size() < static_cast<std::size_t>(len));
    }
  }
}

TEST_CASE("teacher-forced logits have one column per target token plus EOS") {
  Fixture f;
  const Model m(f.config(DialogMode::kGenerative));
  Graph g;
  const QBot::Visual v = m.qbot().prepare_visual(g, QBotInputs::from_features(f.features, QbotFrames::kSegmented2));
  const HistoryState h = f.history(g, m, 0);
  const QBotContext qc = m.qbot().context(g, v, h.view(), 1);
  const std::vector<int> target = f.vocab.encode(f.c.qa_pairs[0].question);
  const Var logits = m.qbot().question_logits(g, qc, target);
  CHECK(logits.rows() == f.vocab.size());
  CHECK(logits.cols() == static_cast<int>(target.size()) + 1);
}

TEST_CASE("selection through both agents matches a brute-force inner product") {
  const auto r = qacoop::testing::selection_oracle(100, 5);
  CHECK(r.trials == 100);
  CHECK(r.agree == 100);
  CHECK(r.bad_distributions == 0);
}

TEST_CASE("single and duplicated candidates") {
  Fixture f;
  const Model m(f.config(DialogMode::kDiscriminative));
  Graph g;
  const QBot::Visual v = m.qbot().prepare_visual(g, QBotInputs::from_features(f.features, QbotFrames::kSegmented2));
  const HistoryState h = f.history(g, m, 2);
  const QBotContext qc = m.qbot().context(g, v, h.view(), 3);
  const std::vector<int> ids = f.vocab.encode(f.c.qa_pairs[0].question);
  const Var enc = m.shared().encode(g, EncoderRole::kQuestionCandidate, {ids});
  const Selection one = m.qbot().select_question(g, qc, m.qbot().candidate_keys(g, enc).value(), nullptr);
  CHECK(one.index == 0);
  CHECK(one.candidate_probabilities(0) == doctest::Approx(1.0));
  const Var two = m.shared().encode(g, EncoderRole::kQuestionCandidate, {ids, ids});
  const Selection tie = m.qbot().select_question(g, qc, m.qbot().candidate_keys(g, two).value(), nullptr);
  CHECK(tie.index == 0);
  CHECK(tie.candidate_probabilities(0) == doctest::Approx(0.5));
  CHECK(tie.candidate_probabilities(1) == doctest::Approx(0.5));
}

TEST_CASE("every ablation path stays finite") {
  Fixture f;
  struct Variant {
    const char* name;
    void (*apply)(Ablations&);
  };
  const Variant variants[] = {
      {"baseline", [](Ablations&) {}},
      {"im", [](Ablations& a) { a.attention = AttentionKind::kIM; }},
      {"none", [](Ablations& a) { a.attention = AttentionKind::kNone; }},
      {"no-av-lstm", [](Ablations& a) { a.av_lstm = false; }},
      {"no-audio", [](Ablations& a) { a.audio = false; }},
      {"no-caption", [](Ablations& a) { a.caption = false; }},
      {"no-history-abot", [](Ablations& a) { a.history_abot = false; }},
      {"qbot-none", [](Ablations& a) { a.qbot_frames = QbotFrames::kNone; }},
      {"qbot-full", [](Ablations& a) { a.qbot_frames = QbotFrames::kFull; }},
      {"no-dynamic-update", [](Ablations& a) { a.dynamic_update = false; }},
  };
  for (DialogMode mode : {DialogMode::kGenerative, DialogMode::kDiscriminative}) {
    for (const Variant& v : variants) {
      CAPTURE(v.name);
      ModelConfig cfg = f.config(mode);
      v.apply(cfg.ablations);
      const Model m(cfg);
      for (int rounds : {0, 4}) {
        Graph g;
        const QBot::Visual vis =
            m.qbot().prepare_visual(g, QBotInputs::from_features(f.features, cfg.ablations.qbot_frames));
        const HistoryState h = f.history(g, m, rounds);
        const QBotContext qc = m.qbot().context(g, vis, h.view(), rounds + 1);
        CHECK(finite(qc.context));
        CHECK(finite(qc.h_v));
        const ABotEpisode ep = m.abot().episode(g, ABotInputs::from_case(f.features, f.c, f.vocab));
        CHECK(finite(ep.h_av));
        CHECK(finite(ep.attended_caption));
        CHECK(ep.attended_audio.valid() == cfg.ablations.audio);
        const ABotContext ac = m.abot().context(g, ep, h.view(), f.question(g, m, rounds), rounds + 1);
        CHECK(finite(ac.context));
        if (cfg.ablations.history_abot && rounds > 0 && cfg.ablations.attention != AttentionKind::kNone) {
          CHECK(ac.history_weights.valid());
        }
        const std::vector<int> target = f.vocab.encode(f.c.final_description);
        CHECK(finite(m.qbot().description_logits(g, qc, target)));
        if (mode == DialogMode::kGenerative) {
          CHECK(finite(m.qbot().question_logits(g, qc, target)));
          CHECK(finite(m.abot().answer_logits(g, ac, target)));
          CHECK(m.abot().generate_answer(ac, 10).tokens.size() < 10);
        } else {
          const Var enc = m.shared().encode(g, EncoderRole::kQuestionCandidate, {target});
          CHECK(m.qbot().select_question(g, qc, m.qbot().candidate_keys(g, enc).value(), nullptr).index == 0);
        }
      }
    }
  }
}

TEST_CASE("simulated human answers from the ground truth") {
  Fixture f;
  CandidateSet set = build_inference_candidates(f.toy.cases);
  const int q3 = set.find_question(f.c.qa_pairs[2].question);
  REQUIRE(q3 >= 0);
  CHECK(simulated_human_answer(q3, set, &f.c) == f.c.qa_pairs[2].answer);
  set.questions.push_back(tokenize("what is the meaning of life"));
  set.pairing.push_back(-1);
  const int last = static_cast<int>(set.questions.size()) - 1;
  CHECK(simulated_human_answer(last, set, &f.c) == dont_know_tokens());
  CHECK(simulated_human_answer(last, set, nullptr) == dont_know_tokens());
}
