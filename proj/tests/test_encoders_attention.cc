#include <cmath>
#include <numeric>

#include "doctest.h"
#include "gradient_suite.h"
#include "qacoop/encoders_attention.h"
#include "qacoop/shared_modules.h"

using namespace qacoop;
using qacoop::testing::grad_check;
using qacoop::testing::random_param;
using qacoop::testing::weighted_sum;

namespace {

ModelConfig full_config(int vocab) {
  ModelConfig cfg;
  cfg.dims = ModelDims::full();
  cfg.vocab_size = vocab;
  return cfg;
}

Matrix random_matrix(int rows, int cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, -1.0, 1.0);
  return m;
}

void check_distribution(const Matrix& w) {
  CHECK((w.array() >= 0.0).all());
  CHECK(std::abs(w.sum() - 1.0) < 1e-6);
}

}  // namespace

TEST_CASE("encoder output sizes follow the role") {
  ParameterStore store;
  Rng rng(1);
  const SharedModules shared(store, full_config(20), rng);
  Graph g;
  const std::vector<std::vector<int>> seqs{{4, 5, 6}, {7}};
  CHECK(shared.encode(g, EncoderRole::kInputDescription, seqs).rows() == 256);
  CHECK(shared.encode(g, EncoderRole::kHistoryPair, seqs).rows() == 256);
  CHECK(shared.encode(g, EncoderRole::kQuestionCandidate, seqs).rows() == 128);
  CHECK(shared.encode(g, EncoderRole::kAnswerCandidate, seqs).cols() == 2);
  CHECK_THROWS_AS(shared.encode(g, EncoderRole::kInputDescription, {{4}, {}}), std::invalid_argument);
}

TEST_CASE("encoders are sensitive to token order") {
  for (int seed = 0; seed < 20; ++seed) {
    ParameterStore store;
    Rng rng(static_cast<std::uint64_t>(seed));
    Parameter& emb = random_param(store, "embedding", 16, 12, rng);
    const SequenceEncoder enc(store, "enc", &emb, 24, rng);
    Graph g;
    const Matrix a = enc.encode(g, {{4, 5, 6, 7}}).value();
    const Matrix b = enc.encode(g, {{7, 6, 5, 4}}).value();
    CAPTURE(seed);
    CHECK((a - b).norm() > 1e-6);
  }
}

TEST_CASE("padding does not change an encoding") {
  ParameterStore store;
  Rng rng(2);
  Parameter& emb = random_param(store, "embedding", 8, 10, rng);
  const SequenceEncoder enc(store, "enc", &emb, 6, rng);
  Graph g;
  const Matrix alone = enc.encode(g, {{4, 5}}).value();
  const Matrix batched = enc.encode(g, {{6, 7, 8, 9}, {4, 5}}).value();
  CHECK((alone.col(0) - batched.col(1)).norm() < 1e-12);
}

TEST_CASE("history pairs are encoded independently of position") {
  ParameterStore store;
  Rng rng(3);
  const SharedModules shared(store, full_config(20), rng);
  Graph g;
  const Var pairs = shared.encode_pairs(g, {{4, 5}, {6, 7, 8}, {4, 5}}, {{9}, {10, 11}, {9}});
  CHECK(pairs.rows() == 256);
  CHECK(pairs.cols() == 3);
  CHECK((pairs.value().col(0) - pairs.value().col(2)).norm() < 1e-12);
  CHECK((pairs.value().col(0) - pairs.value().col(1)).norm() > 1e-6);
}

TEST_CASE("summary update keeps the history width") {
  ParameterStore store;
  Rng rng(4);
  const SharedModules shared(store, full_config(20), rng);
  Graph g;
  const Var s = shared.update_summary(g, g.param(*shared.summary_init), g.constant(Matrix::Ones(256, 1)));
  CHECK(s.rows() == 256);
  CHECK(s.cols() == 1);
}

TEST_CASE("MM attention over one element returns its projection") {
  ParameterStore store;
  Rng rng(5);
  const MMAttention mm(store, "mm", {{"v", 6, 4}}, 3, rng);
  Graph g;
  const Matrix x = random_matrix(6, 1, rng);
  const std::pair<int, Var> in[] = {{0, g.constant(x)}};
  const auto out = mm(g, in);
  CHECK(out[0].weights.value()(0, 0) == doctest::Approx(1.0));
  const Matrix expected = store.get("mm.v.value.w").value * x + store.get("mm.v.value.b").value;
  CHECK((out[0].attended.value() - expected).norm() < 1e-12);
}

TEST_CASE("MM attention splits evenly between identical elements") {
  ParameterStore store;
  Rng rng(6);
  const MMAttention mm(store, "mm", {{"v", 5, 4}, {"a", 3, 4}}, 3, rng);
  Graph g;
  Matrix x(5, 2);
  x.col(0) = random_matrix(5, 1, rng);
  x.col(1) = x.col(0);
  const std::pair<int, Var> in[] = {{0, g.constant(x)}, {1, g.constant(random_matrix(3, 4, rng))}};
  const auto out = mm(g, in);
  CHECK(out[0].weights.value()(0, 0) == doctest::Approx(0.5));
  CHECK(out[0].weights.value()(1, 0) == doctest::Approx(0.5));
}

TEST_CASE("MM attention with hand-set scores 1, 2, 3") {
  ParameterStore store;
  Rng rng(7);
  const MMAttention mm(store, "mm", {{"v", 1, 2}}, 1, rng);
  store.get("mm.v.key.w").value.setConstant(1.0);
  store.get("mm.v.key.b").value.setZero();
  store.get("mm.v.self").value.setConstant(10.0);
  Graph g;
  Matrix x(1, 3);
  x << std::atanh(0.1), std::atanh(0.2), std::atanh(0.3);
  const std::pair<int, Var> in[] = {{0, g.constant(x)}};
  const auto out = mm(g, in);
  const Matrix s = out[0].scores.value();
  CHECK(s(0, 0) == doctest::Approx(1.0));
  CHECK(s(2, 0) == doctest::Approx(3.0));
  const Matrix w = out[0].weights.value();
  CHECK(w(0, 0) == doctest::Approx(0.0900).epsilon(1e-4));
  CHECK(w(1, 0) == doctest::Approx(0.2447).epsilon(1e-4));
  CHECK(w(2, 0) == doctest::Approx(0.6652).epsilon(1e-4));
}

TEST_CASE("MM attention properties on random inputs") {
  for (int trial = 0; trial < 20; ++trial) {
    ParameterStore store;
    Rng rng(100 + trial);
    const MMAttention mm(store, "mm", {{"frame", 8, 5}, {"audio", 4, 3}, {"text", 6, 7}}, 4, rng);
    const int n0 = 1 + trial % 6, n1 = 1, n2 = 1 + trial % 3;
    const Matrix x0 = random_matrix(8, n0, rng), x1 = random_matrix(4, n1, rng), x2 = random_matrix(6, n2, rng);
    std::vector<int> perm(static_cast<std::size_t>(n0));
    std::iota(perm.begin(), perm.end(), 0);
    shuffle_in_place(perm, rng);
    Matrix x0p(8, n0);
    for (int j = 0; j < n0; ++j) x0p.col(j) = x0.col(perm[static_cast<std::size_t>(j)]);

    Graph g;
    const std::pair<int, Var> in[] = {{0, g.constant(x0)}, {1, g.constant(x1)}, {2, g.constant(x2)}};
    const std::pair<int, Var> inp[] = {{0, g.constant(x0p)}, {1, g.constant(x1)}, {2, g.constant(x2)}};
    const auto out = mm(g, in);
    const auto outp = mm(g, inp);
    CAPTURE(trial);
    const int target[] = {5, 3, 7};
    for (int m = 0; m < 3; ++m) {
      CHECK(out[m].attended.rows() == target[m]);
      check_distribution(out[m].weights.value());
      CHECK((out[m].attended.value() - outp[m].attended.value()).norm() < 1e-10);
    }
    for (int j = 0; j < n0; ++j) {
      CHECK(outp[0].weights.value()(j, 0) == doctest::Approx(out[0].weights.value()(perm[j], 0)));
    }
  }
}

TEST_CASE("MM attention rejects bad inputs") {
  ParameterStore store;
  Rng rng(8);
  const MMAttention mm(store, "mm", {{"v", 3, 2}}, 2, rng);
  Graph g;
  Matrix bad = Matrix::Zero(3, 2);
  bad(1, 1) = std::nan("");
  const std::pair<int, Var> nan_in[] = {{0, g.constant(bad)}};
  CHECK_THROWS_AS(mm(g, nan_in), std::invalid_argument);
  const std::pair<int, Var> wrong_dim[] = {{0, g.constant(Matrix::Zero(4, 2))}};
  CHECK_THROWS_AS(mm(g, wrong_dim), std::invalid_argument);
}

TEST_CASE("uniform attention averages the projected elements") {
  ParameterStore store;
  Rng rng(9);
  const MMAttention mm(store, "mm", {{"v", 3, 2}}, 2, rng);
  Graph g;
  const Matrix x = random_matrix(3, 4, rng);
  const auto out = mm.uniform(g, mm.prepare(g, 0, g.constant(x)));
  const Matrix proj = (store.get("mm.v.value.w").value * x).colwise() + store.get("mm.v.value.b").value.col(0);
  CHECK((out.attended.value() - proj.rowwise().mean()).norm() < 1e-12);
  CHECK((out.weights.value().array() - 0.25).abs().maxCoeff() < 1e-12);
}

TEST_CASE("IM attention weights") {
  ParameterStore store;
  Rng rng(10);
  const IMAttention im(store, "im", 1, 1, 1, 2, rng);
  store.get("im.query.w").value.setConstant(1.0);
  store.get("im.history.w").value.setConstant(1.0);
  Graph g;
  const Var q = g.constant(Matrix::Ones(1, 1));
  const Var null_h = g.constant(Matrix::Constant(1, 1, 0.3));

  Matrix h(1, 2);
  h << 0.0, std::log(3.0);
  auto out = im(g, g.constant(h), null_h, q);
  CHECK(out.weights.value()(0, 0) == doctest::Approx(0.25));
  CHECK(out.weights.value()(1, 0) == doctest::Approx(0.75));

  out = im(g, g.constant(Matrix::Constant(1, 1, 2.0)), null_h, q);
  CHECK(out.weights.value()(0, 0) == doctest::Approx(1.0));

  out = im(g, g.constant(Matrix::Constant(1, 2, 0.5)), null_h, q);
  CHECK(out.weights.value()(0, 0) == doctest::Approx(0.5));

  out = im(g, Var{}, null_h, q);
  CHECK_FALSE(out.weights.valid());
  Matrix in(2, 1);
  in << 0.3, 1.0;
  const Matrix expected = store.get("im.out.w").value * in + store.get("im.out.b").value;
  CHECK((out.fused.value() - expected).norm() < 1e-12);
}

TEST_CASE("MM attention passes the gradient check") {
  const auto r = qacoop::testing::mm_attention_check();
  CHECK_MESSAGE(r.max_rel_error < 1e-4, r.worst);
  CHECK(r.checked > 100);
}

TEST_CASE("IM attention passes the gradient check") {
  const auto r = qacoop::testing::im_attention_check();
  CHECK_MESSAGE(r.max_rel_error < 1e-4, r.worst);
}

TEST_CASE("sequence encoder passes the gradient check") {
  ParameterStore store;
  Rng rng(13);
  Parameter& emb = random_param(store, "embedding", 4, 9, rng);
  const SequenceEncoder enc(store, "enc", &emb, 3, rng);
  auto loss = [&](Graph& g) { return weighted_sum(g, enc.encode(g, {{1, 2, 3}, {4, 5}, {8}}), 5); };
  const auto r = grad_check(store, loss);
  CHECK_MESSAGE(r.max_rel_error < 1e-4, r.worst);
}
