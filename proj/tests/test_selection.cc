#include <cmath>

#include "doctest.h"
#include "qacoop/rng.h"
#include "qacoop/selection.h"

using namespace qacoop;

namespace {

Matrix random_matrix(int rows, int cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, -1.0, 1.0);
  return m;
}

int brute_force(const Matrix& keys, const Vector& query) {
  int best = 0;
  double best_score = -1e300;
  for (int i = 0; i < keys.cols(); ++i) {
    double s = 0.0;
    for (int r = 0; r < keys.rows(); ++r) s += keys(r, i) * query(r);
    if (s > best_score) {
      best_score = s;
      best = i;
    }
  }
  return best;
}

ClusterAssignment assignment(int k, std::vector<int> a) {
  ClusterAssignment c;
  c.k = k;
  c.assignment = std::move(a);
  return c;
}

}  // namespace

TEST_CASE("five hand-set candidates") {
  Matrix keys(2, 5);
  keys << 1, 0, -1, 2, 0.5,
          0, 1, 1, -1, 0.5;
  Vector q(2);
  q << 1, 2;
  // scores 1, 2, 1, 0, 1.5
  const Selection s = two_phase_select(keys, q, nullptr);
  CHECK(s.index == 1);
  CHECK(s.cluster == -1);
  CHECK(s.scored.size() == 5);
  CHECK(s.candidate_logits(4) == doctest::Approx(1.5));
}

TEST_CASE("bypassed clustering matches brute force on random candidates") {
  Rng rng(42);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + static_cast<int>(uniform_index(rng, 8));
    const Matrix keys = random_matrix(6, n, rng);
    const Vector q = random_matrix(6, 1, rng).col(0);
    const Selection s = two_phase_select(keys, q, nullptr);
    CHECK(s.index == brute_force(keys, q));
    CHECK(std::abs(s.candidate_probabilities.sum() - 1.0) < 1e-6);
    CHECK((s.candidate_probabilities.array() >= 0.0).all());
  }
}

TEST_CASE("selection is invariant to a constant shift of the scores") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix keys = random_matrix(4, 7, rng);
    const Vector q = random_matrix(4, 1, rng).col(0);
    // a constant extra coordinate adds the same amount to every score
    Matrix shifted(5, 7);
    shifted.topRows(4) = keys;
    shifted.row(4).setConstant(1.0);
    Vector q2(5);
    q2.head(4) = q;
    q2(4) = uniform(rng, -10.0, 10.0);
    const Selection a = two_phase_select(keys, q, nullptr);
    const Selection b = two_phase_select(shifted, q2, nullptr);
    CHECK(a.index == b.index);
    CHECK((a.candidate_probabilities - b.candidate_probabilities).norm() < 1e-9);
  }
}

TEST_CASE("two phases pick the cluster by mean key then the member") {
  Matrix keys(1, 5);
  keys << 3, -1, 1, 1, 0.5;
  Vector q(1);
  q << 1;
  // cluster 0 = {0, 1} mean 1; cluster 1 = {2, 3, 4} mean 0.833
  const ClusterAssignment c = assignment(2, {0, 0, 1, 1, 1});
  const Selection s = two_phase_select(keys, q, &c);
  CHECK(s.cluster == 0);
  CHECK(s.scored == std::vector<int>{0, 1});
  CHECK(s.index == 0);
  CHECK(s.cluster_logits(1) == doctest::Approx(2.5 / 3.0));
}

TEST_CASE("empty clusters are never chosen") {
  Matrix keys(1, 3);
  keys << -5, -6, -7;
  Vector q(1);
  q << 1;
  const ClusterAssignment c = assignment(3, {2, 2, 2});
  const Selection s = two_phase_select(keys, q, &c);
  CHECK(s.cluster == 2);
  CHECK(s.index == 0);
  CHECK(std::isinf(s.cluster_logits(0)));
}

TEST_CASE("must_include joins the scored set") {
  Matrix keys(1, 4);
  keys << 2, 1, -1, -2;
  Vector q(1);
  q << 1;
  const ClusterAssignment c = assignment(2, {0, 0, 1, 1});
  const Selection s = two_phase_select(keys, q, &c, 3);
  CHECK(s.scored == std::vector<int>{0, 1, 3});
  CHECK(s.index == 0);
  const Selection same = two_phase_select(keys, q, &c, 1);
  CHECK(same.scored.size() == 2);
  CHECK_THROWS_AS(two_phase_select(keys, q, &c, 9), std::invalid_argument);
}

TEST_CASE("ties go to the lowest index") {
  Matrix keys = Matrix::Ones(2, 4);
  Vector q = Vector::Ones(2);
  CHECK(two_phase_select(keys, q, nullptr).index == 0);
  Vector v(3);
  v << 1, 3, 3;
  CHECK(argmax_lowest(v) == 1);
}

TEST_CASE("invalid inputs are rejected") {
  CHECK_THROWS_AS(two_phase_select(Matrix(2, 0), Vector::Ones(2), nullptr), std::invalid_argument);
  CHECK_THROWS_AS(two_phase_select(Matrix::Ones(2, 2), Vector::Ones(3), nullptr), std::invalid_argument);
  const ClusterAssignment c = assignment(1, {0});
  CHECK_THROWS_AS(two_phase_select(Matrix::Ones(2, 2), Vector::Ones(2), &c), std::invalid_argument);
}
