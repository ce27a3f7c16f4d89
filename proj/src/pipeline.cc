#include "qacoop/pipeline.h"

#include <stdexcept>

namespace qacoop {

CandidateSet inference_candidate_set(const Vocabulary& vocab, std::span<const DialogCase> cases, int clusters,
                                     std::uint64_t seed, const WordVectorTable* word_vectors, int word_vector_dim) {
  CandidateSet set = build_inference_candidates(cases);
  if (clusters <= 1 || set.questions.empty()) return set;
  if (word_vectors) {
    cluster_candidate_set(set, *word_vectors, clusters, seed);
  } else {
    const auto tokens = vocab.content_tokens();
    cluster_candidate_set(set, WordVectorTable::random(tokens, word_vector_dim, seed), clusters, seed);
  }
  return set;
}

EvalOutput evaluate_dialogs(const Model& model, const Vocabulary& vocab, std::span<const DialogCase> cases,
                            const FeatureStore& features, const EvalOptions& options) {
  if (cases.empty()) throw std::invalid_argument("nothing to evaluate");
  if (options.start_round && (*options.start_round < 1 || *options.start_round > kRoundsPerDialog)) {
    throw std::invalid_argument("start round must be in [1, 10]");
  }
  std::vector<DialogCase> owned(cases.begin(), cases.end());
  if (options.shuffle_history) {
    for (std::size_t i = 0; i < owned.size(); ++i) owned[i] = shuffle_history(owned[i], options.seed + i);
  }

  const bool disc = model.config().mode == DialogMode::kDiscriminative;
  CandidateSet pool;
  EncodedCandidates encoded;
  const CandidateSet* candidates = nullptr;
  if (disc) {
    if (options.candidates) {
      candidates = options.candidates;
    } else {
      pool = inference_candidate_set(vocab, owned, options.clusters, options.seed, options.word_vectors,
                                     options.word_vector_dim);
      candidates = &pool;
    }
    encoded = encode_candidates(model, vocab, *candidates);
  }

  std::vector<TestCase> tests;
  if (options.no_dialog || options.strong_baseline) {
    tests = enumerate_test_cases(owned, true);
  } else {
    for (const TestCase& t : enumerate_test_cases(owned, false)) {
      if (!options.start_round || t.start_round == *options.start_round) tests.push_back(t);
    }
  }

  EvalOutput out;
  std::vector<Tokens> hypotheses;
  std::vector<std::vector<Tokens>> references;
  for (const TestCase& t : tests) {
    const VideoFeatures f = features.get(t.dialog_case->video_id);
    EpisodeOptions eo;
    eo.start_round = t.strong_baseline ? 1 : t.start_round;
    eo.strong_baseline = t.strong_baseline && !options.no_dialog;
    eo.no_dialog = options.no_dialog;
    eo.beam_width = options.beam_width;
    eo.answer_source = options.simulated_human ? AnswerSource::kSimulatedHuman : AnswerSource::kABot;
    const EpisodeInputs in =
        episode_inputs(model, vocab, *t.dialog_case, f, candidates, candidates ? &encoded : nullptr);
    out.transcripts.push_back(run_episode(model, vocab, in, eo));
    hypotheses.push_back(out.transcripts.back().final_description);
    references.push_back({t.dialog_case->final_description});
  }
  out.report = score_corpus(hypotheses, references);
  out.ratios = selection_ratio(out.transcripts);
  return out;
}

}  // namespace qacoop
