#include "qacoop/encoders_attention.h"

#include <algorithm>
#include <stdexcept>

namespace qacoop {

Linear Linear::create(ParameterStore& store, const std::string& name, int in, int out, Rng& rng, bool with_bias) {
  Linear l;
  l.in = in;
  l.out = out;
  l.weight = &store.add_uniform(name + ".w", out, in, in, rng);
  if (with_bias) l.bias = &store.add_uniform(name + ".b", out, 1, in, rng);
  return l;
}

Var Linear::operator()(Graph& g, Var x) const {
  Var y = ops::matmul(g.param(*weight), x);
  return bias ? ops::add_bias(y, g.param(*bias)) : y;
}

Matrix Linear::apply(const Matrix& x) const {
  Matrix y = weight->value * x;
  if (bias) y.colwise() += bias->value.col(0);
  return y;
}

Lstm Lstm::create(ParameterStore& store, const std::string& name, int in, int hidden, Rng& rng) {
  Lstm l;
  l.in = in;
  l.hidden = hidden;
  l.w_in = &store.add_uniform(name + ".w_in", 4 * hidden, in, hidden, rng);
  l.w_rec = &store.add_uniform(name + ".w_rec", 4 * hidden, hidden, hidden, rng);
  l.bias = &store.add_uniform(name + ".bias", 4 * hidden, 1, hidden, rng);
  l.bias->value.middleRows(hidden, hidden).array() += 1.0;
  return l;
}

std::pair<Var, Var> Lstm::step(Graph& g, Var x, Var h, Var c) const {
  Var hc = ops::lstm_cell(x, h, c, g.param(*w_in), g.param(*w_rec), g.param(*bias));
  return {ops::slice_rows(hc, 0, hidden), ops::slice_rows(hc, hidden, hidden)};
}

LstmStep Lstm::step(const Matrix& x, const Matrix& h, const Matrix& c) const {
  return lstm_forward(w_in->value, w_rec->value, bias->value, x, h, c);
}

std::pair<Var, Var> Lstm::run(Graph& g, std::span<const Var> inputs, Var h0, Var c0) const {
  Var h = h0, c = c0;
  for (const Var& x : inputs) std::tie(h, c) = step(g, x, h, c);
  return {h, c};
}

SequenceEncoder::SequenceEncoder(ParameterStore& store, const std::string& name, Parameter* embedding, int hidden,
                                 Rng& rng)
    : embedding_(embedding), lstm_(Lstm::create(store, name, static_cast<int>(embedding->value.rows()), hidden, rng)) {}

Var SequenceEncoder::encode(Graph& g, const std::vector<std::vector<int>>& sequences) const {
  if (sequences.empty()) throw std::invalid_argument("encode: no sequences");
  std::size_t longest = 0;
  for (const auto& s : sequences) {
    if (s.empty()) throw std::invalid_argument("encode: empty token sequence");
    longest = std::max(longest, s.size());
  }
  const int batch = static_cast<int>(sequences.size());
  Var table = g.param(*embedding_);
  Var h = g.constant(Matrix::Zero(lstm_.hidden, batch));
  Var c = g.constant(Matrix::Zero(lstm_.hidden, batch));
  std::vector<int> ids(static_cast<std::size_t>(batch));
  std::vector<unsigned char> live(static_cast<std::size_t>(batch));
  for (std::size_t t = 0; t < longest; ++t) {
    bool all_live = true;
    for (std::size_t b = 0; b < sequences.size(); ++b) {
      live[b] = t < sequences[b].size();
      all_live = all_live && live[b];
      ids[b] = live[b] ? sequences[b][t] : 0;
    }
    Var x = ops::gather_cols(table, ids);
    auto [h2, c2] = lstm_.step(g, x, h, c);
    if (all_live) {
      h = h2;
      c = c2;
    } else {
      h = ops::blend_cols(h2, h, live);
      c = ops::blend_cols(c2, c, live);
    }
  }
  return h;
}

MMAttention::MMAttention(ParameterStore& store, const std::string& name, std::vector<ModalitySpec> modalities,
                         int key_dim, Rng& rng)
    : specs_(std::move(modalities)), key_dim_(key_dim) {
  for (const auto& s : specs_) {
    Params p;
    p.key = Linear::create(store, name + "." + s.name + ".key", s.raw_dim, key_dim, rng);
    p.value = Linear::create(store, name + "." + s.name + ".value", s.raw_dim, s.target_dim, rng);
    p.self = &store.add_uniform(name + "." + s.name + ".self", key_dim, 1, key_dim, rng);
    params_.push_back(p);
  }
  pair_.assign(specs_.size() * specs_.size(), nullptr);
  for (std::size_t a = 0; a < specs_.size(); ++a) {
    for (std::size_t b = 0; b < specs_.size(); ++b) {
      if (a == b) continue;
      pair_[a * specs_.size() + b] =
          &store.add_uniform(name + ".pair." + specs_[a].name + "." + specs_[b].name, key_dim, 1, key_dim, rng);
    }
  }
}

MMAttention::Prepared MMAttention::prepare(Graph& g, int modality, Var elements) const {
  if (modality < 0 || modality >= modality_count()) throw std::out_of_range("MMAttention: modality index");
  const Params& p = params_[static_cast<std::size_t>(modality)];
  if (elements.rows() != p.key.in) {
    throw std::invalid_argument("MMAttention: " + specs_[static_cast<std::size_t>(modality)].name + " expects dim " +
                                std::to_string(p.key.in) + ", got " + std::to_string(elements.rows()));
  }
  if (elements.cols() == 0) throw std::invalid_argument("MMAttention: empty element sequence");
  if (!elements.value().allFinite()) throw std::invalid_argument("MMAttention: non-finite input");
  Prepared out;
  out.modality = modality;
  out.keys = p.key(g, elements);
  out.values = p.value(g, elements);
  out.self_scores = ops::matmul_tn(ops::tanh(out.keys), g.param(*p.self));
  out.summary = ops::mean_cols(out.keys);
  return out;
}

std::vector<MMAttention::Output> MMAttention::attend(Graph& g, std::span<const Prepared> present) const {
  if (present.empty()) throw std::invalid_argument("MMAttention: no modalities");
  std::vector<Output> out;
  const std::size_t m_count = specs_.size();
  for (const Prepared& p : present) {
    Var scores = p.self_scores;
    std::vector<Var> cross;
    for (const Prepared& q : present) {
      if (q.modality == p.modality) continue;
      Parameter* u = pair_[static_cast<std::size_t>(p.modality) * m_count + static_cast<std::size_t>(q.modality)];
      cross.push_back(ops::cwise_mul(g.param(*u), q.summary));
    }
    if (!cross.empty()) {
      Var query = cross[0];
      for (std::size_t i = 1; i < cross.size(); ++i) query = ops::add(query, cross[i]);
      scores = ops::add(scores, ops::matmul_tn(p.keys, query));
    }
    Var weights = ops::softmax(scores);
    out.push_back({ops::matmul(p.values, weights), weights, scores});
  }
  return out;
}

std::vector<MMAttention::Output> MMAttention::operator()(Graph& g, std::span<const std::pair<int, Var>> inputs) const {
  std::vector<Prepared> prepared;
  for (const auto& [m, x] : inputs) prepared.push_back(prepare(g, m, x));
  return attend(g, prepared);
}

MMAttention::Output MMAttention::uniform(Graph& g, const Prepared& p) const {
  const int n = p.values.cols();
  Var weights = g.constant(Matrix::Constant(n, 1, 1.0 / n));
  return {ops::matmul(p.values, weights), weights, g.constant(Matrix::Zero(n, 1))};
}

IMAttention::IMAttention(ParameterStore& store, const std::string& name, int history_dim, int query_dim, int key_dim,
                         int out_dim, Rng& rng)
    : query_proj_(Linear::create(store, name + ".query", query_dim, key_dim, rng, false)),
      history_proj_(Linear::create(store, name + ".history", history_dim, key_dim, rng, false)),
      out_(Linear::create(store, name + ".out", history_dim + query_dim, out_dim, rng)) {}

IMAttention::Output IMAttention::operator()(Graph& g, Var history, Var null_history, Var query) const {
  if (query.rows() != query_proj_.in) throw std::invalid_argument("IMAttention: query dimension");
  Output out;
  Var summary;
  if (!history.valid() || history.cols() == 0) {
    summary = null_history;
  } else {
    if (history.rows() != history_proj_.in) throw std::invalid_argument("IMAttention: history dimension");
    Var scores = ops::matmul_tn(history_proj_(g, history), query_proj_(g, query));
    out.weights = ops::softmax(scores);
    summary = ops::matmul(history, out.weights);
  }
  const Var parts[] = {summary, query};
  out.fused = out_(g, ops::concat_rows(parts));
  return out;
}

}  // namespace qacoop
