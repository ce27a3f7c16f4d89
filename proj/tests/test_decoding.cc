#include <cmath>

#include "doctest.h"
#include "qacoop/decoding.h"
#include "qacoop/selection.h"
#include "grad_check.h"
#include "tiny_models.h"

using namespace qacoop;
using qacoop::testing::exhaustive_decode;
using qacoop::testing::TinyGenerator;

namespace {

constexpr int kSos = 1;
constexpr int kEos = 2;

// Fixed next-token table indexed by the previous token.
class TableModel final : public StepModel {
 public:
  explicit TableModel(Matrix logp) : logp_(std::move(logp)) {}
  int vocab_size() const override { return static_cast<int>(logp_.rows()); }
  DecoderState start() const override { return {Matrix::Zero(1, 1), Matrix::Zero(1, 1)}; }
  Vector step(DecoderState&, int previous) const override { return logp_.col(previous); }

 private:
  Matrix logp_;
};

Matrix normalized_columns(Matrix logits) {
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const double lse = std::log(logits.col(j).array().exp().sum());
    logits.col(j).array() -= lse;
  }
  return logits;
}

}  // namespace

TEST_CASE("width one reproduces greedy decoding") {
  for (int s = 0; s < 50; ++s) {
    const int vocab = 4 + s % 3, max_len = 2 + s % 3;
    TinyGenerator t(vocab, 1000 + static_cast<std::uint64_t>(s));
    const DecodeResult g = greedy_decode(*t.model, kSos, kEos, max_len);
    const DecodeResult b = beam_search(*t.model, kSos, kEos, 1, max_len);
    CAPTURE(s);
    CHECK(g.tokens == b.tokens);
    CHECK(g.log_prob == doctest::Approx(b.log_prob));
    CHECK(g.truncated == b.truncated);
  }
}

TEST_CASE("a covering beam equals exhaustive enumeration") {
  for (int s = 0; s < 20; ++s) {
    const int vocab = 5, max_len = 4;
    TinyGenerator t(vocab, 2000 + static_cast<std::uint64_t>(s));
    const DecodeResult ex = exhaustive_decode(*t.model, kSos, kEos, max_len);
    const DecodeResult b = beam_search(*t.model, kSos, kEos, 125, max_len);
    CAPTURE(s);
    CHECK(ex.tokens == b.tokens);
    CHECK(ex.normalized == doctest::Approx(b.normalized));
  }
}

TEST_CASE("width five agrees with exhaustive enumeration on random tiny models") {
  int agree = 0;
  for (int s = 0; s < 50; ++s) {
    const int vocab = 4 + s % 3, max_len = 2 + s % 3;
    TinyGenerator t(vocab, 1000 + static_cast<std::uint64_t>(s));
    const DecodeResult ex = exhaustive_decode(*t.model, kSos, kEos, max_len);
    const DecodeResult b = beam_search(*t.model, kSos, kEos, 5, max_len);
    CHECK(b.normalized <= ex.normalized + 1e-12);
    if (b.tokens == ex.tokens || std::abs(b.normalized - ex.normalized) < 1e-12) ++agree;
  }
  CHECK(agree >= 48);
}

TEST_CASE("wider beams never score worse") {
  for (int s = 0; s < 50; ++s) {
    TinyGenerator t(6, 3000 + static_cast<std::uint64_t>(s));
    double previous = -1e300;
    for (int w = 1; w <= 8; ++w) {
      const DecodeResult b = beam_search(*t.model, kSos, kEos, w, 4);
      CAPTURE(s);
      CAPTURE(w);
      CHECK(b.normalized >= previous - 1e-12);
      previous = std::max(previous, b.normalized);
    }
  }
}

TEST_CASE("a model that always prefers EOS yields an empty sequence") {
  Matrix logits = Matrix::Zero(5, 5);
  logits.row(kEos).setConstant(4.0);
  const TableModel m(normalized_columns(logits));
  for (int w : {1, 3, 5}) {
    const DecodeResult r = beam_search(m, kSos, kEos, w, 10);
    CHECK(r.tokens.empty());
    CHECK_FALSE(r.truncated);
  }
  CHECK(greedy_decode(m, kSos, kEos, 10).tokens.empty());
}

TEST_CASE("a model that never prefers EOS is closed at max_len") {
  Matrix logits = Matrix::Zero(5, 5);
  logits.row(4).setConstant(3.0);
  const TableModel m(normalized_columns(logits));
  const DecodeResult g = greedy_decode(m, kSos, kEos, 6);
  CHECK(g.tokens == std::vector<int>(5, 4));
  CHECK(g.truncated);
  const DecodeResult b = beam_search(m, kSos, kEos, 3, 6);
  CHECK(b.normalized >= g.normalized - 1e-12);
}

TEST_CASE("beam search prefers the better normalized hypothesis") {
  // SOS -> 3 (p .6) -> EOS (p .1) vs SOS -> 4 (p .4) -> EOS (p .9)
  Matrix p = Matrix::Constant(5, 5, 1e-9);
  p(3, kSos) = 0.6;
  p(4, kSos) = 0.4;
  p(kEos, 3) = 0.1;
  p(4, 3) = 0.9;
  p(kEos, 4) = 0.9;
  p(3, 4) = 0.1;
  const TableModel m(normalized_columns(p.array().log().matrix()));
  CHECK(greedy_decode(m, kSos, kEos, 2).tokens == std::vector<int>{3});
  CHECK(beam_search(m, kSos, kEos, 2, 2).tokens == std::vector<int>{4});
}

TEST_CASE("step model agrees with teacher forcing") {
  ParameterStore store;
  Rng rng(7);
  Parameter& emb = qacoop::testing::random_param(store, "embedding", 3, 6, rng);
  const Lstm lstm = Lstm::create(store, "lstm", 5, 4, rng);
  const Linear out = Linear::create(store, "out", 4, 6, rng);
  const Matrix context = Matrix::Constant(2, 1, 0.3);
  const Matrix h0 = Matrix::Constant(4, 1, 0.1), c0 = Matrix::Constant(4, 1, -0.2);
  const LstmStepModel m(lstm, out, emb, context.col(0), h0, c0);
  const std::vector<int> target{4, 0, 5, 3};

  Graph g;
  const Var logits =
      teacher_forced_logits(g, lstm, out, emb, g.constant(context), g.constant(h0), g.constant(c0), target, kSos);
  REQUIRE(logits.cols() == 5);
  const Matrix lp = normalized_columns(logits.value());
  DecoderState st = m.start();
  const std::vector<int> inputs{kSos, 4, 0, 5, 3};
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    const Vector step = m.step(st, inputs[t]);
    CHECK((step - lp.col(static_cast<int>(t))).norm() < 1e-12);
  }
}

TEST_CASE("state bridge is the identity for equal widths") {
  ParameterStore store;
  Rng rng(1);
  const StateBridge same = StateBridge::create(store, "b", 4, 4, rng);
  CHECK(same.identity);
  CHECK(store.all().empty());
  const StateBridge wide = StateBridge::create(store, "w", 4, 6, rng);
  const auto [h, c] = wide.apply(Matrix::Ones(4, 1), Matrix::Ones(4, 1));
  CHECK(h.rows() == 6);
  CHECK(c.rows() == 6);
  CHECK(with_eos({5, 6}, kEos) == std::vector<int>{5, 6, kEos});
}
