#include "qacoop/decoding.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <tuple>

#include "qacoop/selection.h"

namespace qacoop {

LstmStepModel::LstmStepModel(const Lstm& lstm, const Linear& output, const Parameter& embedding, Vector context,
                             Matrix h0, Matrix c0)
    : lstm_(lstm), output_(output), embedding_(embedding), context_(std::move(context)), h0_(std::move(h0)),
      c0_(std::move(c0)) {}

Vector LstmStepModel::step(DecoderState& state, int previous_token) const {
  const auto emb = embedding_.value.rows();
  Matrix x(emb + context_.size(), 1);
  x.topRows(emb) = embedding_.value.col(previous_token);
  x.bottomRows(context_.size()) = context_;
  LstmStep s = lstm_.step(x, state.h, state.c);
  state.h = std::move(s.h);
  state.c = std::move(s.c);
  Vector logits = output_.apply(state.h).col(0);
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return logits.array() - lse;
}

Var teacher_forced_logits(Graph& g, const Lstm& lstm, const Linear& output, Parameter& embedding, Var context,
                          Var h0, Var c0, const std::vector<int>& target, int sos) {
  std::vector<int> inputs{sos};
  inputs.insert(inputs.end(), target.begin(), target.end());
  Var emb = ops::gather_cols(g.param(embedding), inputs);
  Var h = h0, c = c0;
  std::vector<Var> hs;
  hs.reserve(inputs.size());
  for (int t = 0; t < static_cast<int>(inputs.size()); ++t) {
    const Var parts[] = {ops::slice_cols(emb, t, 1), context};
    std::tie(h, c) = lstm.step(g, ops::concat_rows(parts), h, c);
    hs.push_back(h);
  }
  return output(g, ops::concat_cols(hs));
}

std::vector<int> with_eos(const std::vector<int>& target, int eos) {
  std::vector<int> t = target;
  t.push_back(eos);
  return t;
}

StateBridge StateBridge::create(ParameterStore& store, const std::string& name, int from, int to, Rng& rng) {
  StateBridge b;
  if (from == to) return b;
  b.identity = false;
  b.h = Linear::create(store, name + ".h", from, to, rng);
  b.c = Linear::create(store, name + ".c", from, to, rng);
  return b;
}

std::pair<Var, Var> StateBridge::operator()(Graph& g, Var h0, Var c0) const {
  if (identity) return {h0, c0};
  return {h(g, h0), c(g, c0)};
}

std::pair<Matrix, Matrix> StateBridge::apply(const Matrix& h0, const Matrix& c0) const {
  if (identity) return {h0, c0};
  return {h.apply(h0), c.apply(c0)};
}

DecodeResult greedy_decode(const StepModel& model, int sos, int eos, int max_len) {
  if (max_len < 1) throw std::invalid_argument("greedy_decode: max_len must be >= 1");
  DecodeResult r;
  DecoderState state = model.start();
  int prev = sos;
  for (int t = 0; t < max_len; ++t) {
    const Vector lp = model.step(state, prev);
    const int best = argmax_lowest(lp);
    if (t == max_len - 1 && best != eos) {
      r.log_prob += lp(eos);
      r.truncated = true;
      break;
    }
    r.log_prob += lp(best);
    if (best == eos) break;
    r.tokens.push_back(best);
    prev = best;
  }
  r.normalized = r.log_prob / static_cast<double>(r.tokens.size() + 1);
  return r;
}

DecodeResult beam_search(const StepModel& model, int sos, int eos, int beam_width, int max_len) {
  if (beam_width < 1) throw std::invalid_argument("beam_search: beam_width must be >= 1");
  if (max_len < 1) throw std::invalid_argument("beam_search: max_len must be >= 1");
  struct Hyp {
    std::vector<int> tokens;
    double log_prob = 0.0;
    DecoderState state;
  };
  struct Ext {
    int hyp;
    int token;
    double log_prob;
  };
  auto finish = [](std::vector<int> tokens, double log_prob, bool truncated) {
    DecodeResult r;
    r.tokens = std::move(tokens);
    r.log_prob = log_prob;
    r.normalized = log_prob / static_cast<double>(r.tokens.size() + 1);
    r.truncated = truncated;
    return r;
  };
  std::vector<Hyp> live{Hyp{{}, 0.0, model.start()}};
  std::vector<DecodeResult> finished;
  for (int t = 0; t < max_len && !live.empty(); ++t) {
    std::vector<Vector> dist(live.size());
    std::vector<DecoderState> next_state(live.size());
    for (std::size_t h = 0; h < live.size(); ++h) {
      next_state[h] = live[h].state;
      dist[h] = model.step(next_state[h], live[h].tokens.empty() ? sos : live[h].tokens.back());
    }
    if (t == max_len - 1) {
      // Out of room: every open hypothesis is closed with EOS.
      for (std::size_t h = 0; h < live.size(); ++h) {
        finished.push_back(finish(live[h].tokens, live[h].log_prob + dist[h](eos), argmax_lowest(dist[h]) != eos));
      }
      break;
    }
    std::vector<Ext> ext;
    for (std::size_t h = 0; h < live.size(); ++h) {
      for (Eigen::Index v = 0; v < dist[h].size(); ++v) {
        ext.push_back({static_cast<int>(h), static_cast<int>(v), live[h].log_prob + dist[h](v)});
      }
    }
    // Stable ordering: score, then hypothesis rank, then token id.
    const auto keep = std::min<std::size_t>(static_cast<std::size_t>(beam_width), ext.size());
    std::partial_sort(ext.begin(), ext.begin() + static_cast<std::ptrdiff_t>(keep), ext.end(),
                      [](const Ext& a, const Ext& b) {
                        if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
                        if (a.hyp != b.hyp) return a.hyp < b.hyp;
                        return a.token < b.token;
                      });
    std::vector<Hyp> next;
    for (std::size_t i = 0; i < keep; ++i) {
      const Ext& e = ext[i];
      const Hyp& parent = live[static_cast<std::size_t>(e.hyp)];
      if (e.token == eos) {
        finished.push_back(finish(parent.tokens, e.log_prob, false));
      } else {
        Hyp h{parent.tokens, e.log_prob, next_state[static_cast<std::size_t>(e.hyp)]};
        h.tokens.push_back(e.token);
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);
  }
  // First best wins ties: earlier-finished (shorter) hypotheses come first.
  return *std::min_element(finished.begin(), finished.end(),
                           [](const DecodeResult& a, const DecodeResult& b) { return a.normalized > b.normalized; });
}

}  // namespace qacoop
