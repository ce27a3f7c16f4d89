// Token-by-token decoding: greedy search for internal questions/answers,
// beam search for final descriptions.
#ifndef QACOOP_DECODING_H_
#define QACOOP_DECODING_H_

#include <string>
#include <utility>
#include <vector>

#include "qacoop/autodiff.h"
#include "qacoop/encoders_attention.h"

namespace qacoop {

struct DecoderState {
  Matrix h;
  Matrix c;
};

class StepModel {
 public:
  virtual ~StepModel() = default;
  virtual int vocab_size() const = 0;
  virtual DecoderState start() const = 0;
  // Log-probabilities of the next token given the previous one; advances
  // the state.
  virtual Vector step(DecoderState& state, int previous_token) const = 0;
};

// LSTM generator whose input at each step is [embedding(prev); context].
class LstmStepModel final : public StepModel {
 public:
  LstmStepModel(const Lstm& lstm, const Linear& output, const Parameter& embedding, Vector context, Matrix h0, Matrix c0);

  int vocab_size() const override { return output_.out; }
  DecoderState start() const override { return {h0_, c0_}; }
  Vector step(DecoderState& state, int previous_token) const override;

 private:
  const Lstm& lstm_;
  const Linear& output_;
  const Parameter& embedding_;
  Vector context_;
  Matrix h0_, c0_;
};

// Teacher forcing for an LstmStepModel-shaped generator: inputs SOS, t_1..t_T,
// returns vocab x (T+1) logits predicting t_1..t_T, EOS.
Var teacher_forced_logits(Graph& g, const Lstm& lstm, const Linear& output, Parameter& embedding, Var context,
                          Var h0, Var c0, const std::vector<int>& target, int sos);
// Targets matching teacher_forced_logits: t_1..t_T, EOS.
std::vector<int> with_eos(const std::vector<int>& target, int eos);

// Maps a recurrent state into a decoder of a different width; identity when
// the widths agree.
struct StateBridge {
  Linear h, c;
  bool identity = true;

  static StateBridge create(ParameterStore& store, const std::string& name, int from, int to, Rng& rng);
  std::pair<Var, Var> operator()(Graph& g, Var h0, Var c0) const;
  std::pair<Matrix, Matrix> apply(const Matrix& h0, const Matrix& c0) const;
};

struct DecodeResult {
  std::vector<int> tokens;  // excludes SOS/EOS
  double log_prob = 0.0;
  // log_prob divided by the emitted token count, EOS included.
  double normalized = 0.0;
  // EOS was forced at the last allowed position.
  bool truncated = false;
};

// Argmax at every step (ties to the lowest token id). At most max_len
// tokens are emitted, EOS included; a sequence still open at the last
// position is closed with EOS there.
DecodeResult greedy_decode(const StepModel& model, int sos, int eos, int max_len);

// Keeps the beam_width best extensions (by summed log-probability) of the
// live hypotheses each step; extensions ending in EOS leave the beam as
// finished hypotheses, and at the last position every live hypothesis is
// closed with EOS. Returns the finished hypothesis with the best
// length-normalized score. beam_width = 1 reproduces greedy_decode.
DecodeResult beam_search(const StepModel& model, int sos, int eos, int beam_width, int max_len);

}  // namespace qacoop

#endif  // QACOOP_DECODING_H_
