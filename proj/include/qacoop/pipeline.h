// Corpus-level evaluation shared by the command line, the service and the
// bindings: candidate pools, enumerated episodes and their scores.
#ifndef QACOOP_PIPELINE_H_
#define QACOOP_PIPELINE_H_

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "qacoop/candidate_bank.h"
#include "qacoop/corpus.h"
#include "qacoop/dialog_engine.h"
#include "qacoop/metrics.h"
#include "qacoop/model.h"

namespace qacoop {

// Deduplicated questions and answers of the cases, clustered over the given
// word vectors or, when none are given, seeded random vectors of the
// vocabulary.
CandidateSet inference_candidate_set(const Vocabulary& vocab, std::span<const DialogCase> cases, int clusters,
                                     std::uint64_t seed, const WordVectorTable* word_vectors = nullptr,
                                     int word_vector_dim = 50);

struct EvalOptions {
  bool strong_baseline = false;
  bool simulated_human = false;
  bool no_dialog = false;
  // Only this start round instead of all ten.
  std::optional<int> start_round;
  bool shuffle_history = false;
  int beam_width = 3;
  int clusters = 10;
  std::uint64_t seed = 1;
  const WordVectorTable* word_vectors = nullptr;
  int word_vector_dim = 50;
  // Replaces the pool built from the evaluated cases.
  const CandidateSet* candidates = nullptr;
};

struct EvalOutput {
  std::vector<Transcript> transcripts;
  MetricReport report;
  SelectionRatio ratios;
};

// Runs one episode per enumerated test case and scores every final
// description against its case's summary.
EvalOutput evaluate_dialogs(const Model& model, const Vocabulary& vocab, std::span<const DialogCase> cases,
                            const FeatureStore& features, const EvalOptions& options);

}  // namespace qacoop

#endif  // QACOOP_PIPELINE_H_
