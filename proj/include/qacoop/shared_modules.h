// Parameters both agents read: the word embedding, the four sequence
// encoders, the learned null-history vector and the dynamic history update.
#ifndef QACOOP_SHARED_MODULES_H_
#define QACOOP_SHARED_MODULES_H_

#include <vector>

#include "qacoop/corpus.h"
#include "qacoop/encoders_attention.h"
#include "qacoop/model_config.h"

namespace qacoop {

// The dialog history as seen by the agents at one round.
struct HistoryView {
  Var pairs;          // d_H x n pair-level embeddings; invalid when n == 0
  int count = 0;      // n
  Var summary;        // fused d_H summary from the dynamic update
  Var last_question;  // d_q embedding of the newest question; invalid if none
};

struct SharedModules {
  Parameter* embedding = nullptr;  // word x vocab
  SequenceEncoder history;
  SequenceEncoder caption;
  SequenceEncoder question;
  SequenceEncoder answer;  // discriminative only
  Parameter* null_history = nullptr;
  Parameter* summary_init = nullptr;
  Linear summary_reduce;  // d_H -> d_H / 2
  Linear pair_reduce;     // d_H -> d_H / 2

  SharedModules() = default;
  SharedModules(ParameterStore& store, const ModelConfig& cfg, Rng& rng);

  Var encode(Graph& g, EncoderRole role, const std::vector<std::vector<int>>& sequences) const;
  // One column per pair: the question tokens followed by the answer tokens.
  Var encode_pairs(Graph& g, const std::vector<std::vector<int>>& questions,
                   const std::vector<std::vector<int>>& answers) const;
  // summary' = [reduce(summary); reduce(pair)], keeping d_H fixed.
  Var update_summary(Graph& g, Var summary, Var pair_embedding) const;
};

}  // namespace qacoop

#endif  // QACOOP_SHARED_MODULES_H_
