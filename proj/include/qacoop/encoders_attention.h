// Layers shared by both agents: word embedding, linear maps, LSTM
// sequence encoders, cross-modal (MM) and intra-textual (IM) attention.
#ifndef QACOOP_ENCODERS_ATTENTION_H_
#define QACOOP_ENCODERS_ATTENTION_H_

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qacoop/autodiff.h"
#include "qacoop/rng.h"

namespace qacoop {

struct Linear {
  Parameter* weight = nullptr;  // out x in
  Parameter* bias = nullptr;    // out x 1, may be null
  int in = 0;
  int out = 0;

  static Linear create(ParameterStore& store, const std::string& name, int in, int out, Rng& rng, bool with_bias = true);
  Var operator()(Graph& g, Var x) const;
  Matrix apply(const Matrix& x) const;
};

struct Lstm {
  Parameter* w_in = nullptr;
  Parameter* w_rec = nullptr;
  Parameter* bias = nullptr;
  int in = 0;
  int hidden = 0;

  // Forget-gate bias starts at 1.
  static Lstm create(ParameterStore& store, const std::string& name, int in, int hidden, Rng& rng);
  // Returns (h', c').
  std::pair<Var, Var> step(Graph& g, Var x, Var h, Var c) const;
  LstmStep step(const Matrix& x, const Matrix& h, const Matrix& c) const;
  // Runs the inputs (columns of `inputs`, one step each) from (h0, c0).
  std::pair<Var, Var> run(Graph& g, std::span<const Var> inputs, Var h0, Var c0) const;
};

// Roles of encode_sequence; each role has its own recurrent weights.
enum class EncoderRole { kHistoryPair, kInputDescription, kQuestionCandidate, kAnswerCandidate };

// Embedding lookup (the linear layer over one-hot tokens) followed by a
// single-layer LSTM; the encoding is the hidden state after the last real
// token. Batches are padded, and padded steps leave the state untouched.
class SequenceEncoder {
 public:
  SequenceEncoder() = default;
  SequenceEncoder(ParameterStore& store, const std::string& name, Parameter* embedding, int hidden, Rng& rng);

  int hidden() const { return lstm_.hidden; }
  // hidden x B. Throws std::invalid_argument on an empty sequence.
  Var encode(Graph& g, const std::vector<std::vector<int>>& sequences) const;

 private:
  Parameter* embedding_ = nullptr;
  Lstm lstm_;
};

struct ModalitySpec {
  std::string name;
  int raw_dim = 0;
  int target_dim = 0;
};

// Factor-style cross-modal attention. For modality m with elements x_j:
//   key_j   = Wk_m x_j + bk_m
//   score_j = w_m . tanh(key_j) + sum_{m' != m} key_j . (u_{m,m'} * mean_i key'_i)
//   alpha   = softmax(score)
//   a_m     = sum_j alpha_j (Wv_m x_j + bv_m)
// i.e. a unary utility plus pairwise utilities against a mean-pooled
// summary of every other present modality.
class MMAttention {
 public:
  MMAttention() = default;
  MMAttention(ParameterStore& store, const std::string& name, std::vector<ModalitySpec> modalities, int key_dim,
              Rng& rng);

  struct Prepared {
    int modality = -1;
    Var keys;         // key_dim x n
    Var values;       // target x n
    Var self_scores;  // n x 1
    Var summary;      // key_dim x 1
  };
  struct Output {
    Var attended;  // target x 1
    Var weights;   // n x 1
    Var scores;    // n x 1
  };

  // Per-element work that does not depend on the other modalities.
  Prepared prepare(Graph& g, int modality, Var elements) const;
  std::vector<Output> attend(Graph& g, std::span<const Prepared> present) const;
  // prepare + attend. Inputs are (modality index, raw x n) pairs.
  std::vector<Output> operator()(Graph& g, std::span<const std::pair<int, Var>> inputs) const;
  // Attention-free variant: uniform weights over each modality's elements.
  Output uniform(Graph& g, const Prepared& p) const;

  int modality_count() const { return static_cast<int>(specs_.size()); }
  const ModalitySpec& spec(int m) const { return specs_[static_cast<std::size_t>(m)]; }

 private:
  struct Params {
    Linear key, value;
    Parameter* self = nullptr;  // key_dim x 1
  };
  std::vector<ModalitySpec> specs_;
  std::vector<Params> params_;
  std::vector<Parameter*> pair_;  // specs^2, row-major (m, m'); diagonal unused
  int key_dim_ = 0;
};

// Softmax attention of a query over history pair embeddings:
//   score_j = (Pq q) . (Ph h_j), alpha = softmax(score)
//   out     = Wo [sum_j alpha_j h_j ; q] + bo
// An empty history substitutes the null-history vector for the weighted sum.
class IMAttention {
 public:
  IMAttention() = default;
  IMAttention(ParameterStore& store, const std::string& name, int history_dim, int query_dim, int key_dim, int out_dim,
              Rng& rng);

  struct Output {
    Var fused;    // out_dim x 1
    Var weights;  // n x 1, invalid for an empty history
  };
  // history: history_dim x n with n >= 0 (pass an invalid Var for n = 0).
  Output operator()(Graph& g, Var history, Var null_history, Var query) const;

 private:
  Linear query_proj_, history_proj_, out_;
};

}  // namespace qacoop

#endif  // QACOOP_ENCODERS_ATTENTION_H_
