#include <fstream>
#include <random>
#include <set>

#include "doctest.h"
#include "qacoop/candidate_bank.h"
#include "test_util.h"

using namespace qacoop;
using qacoop::testing::make_case;
using qacoop::testing::TempDir;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<int>(v.size()));
  int i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

double objective(const Matrix& points, const std::vector<int>& assignment) {
  // centroids recomputed from the assignment
  std::map<int, std::pair<Vector, int>> sums;
  for (int i = 0; i < points.cols(); ++i) {
    auto& s = sums[assignment[i]];
    if (s.second == 0) s.first = Vector::Zero(points.rows());
    s.first += points.col(i);
    ++s.second;
  }
  double total = 0.0;
  for (int i = 0; i < points.cols(); ++i) {
    const auto& s = sums[assignment[i]];
    total += (points.col(i) - s.first / s.second).squaredNorm();
  }
  return total;
}

std::vector<DialogCase> distinct_cases(int n) {
  std::vector<DialogCase> cases;
  for (int i = 0; i < n; ++i) cases.push_back(make_case("c" + std::to_string(i)));
  return cases;
}

}  // namespace

TEST_CASE("sentence embeddings are means of in-table vectors") {
  WordVectorTable t(3);
  t.insert("a", vec({1, 2, 3}));
  t.insert("b", vec({-1, -2, -3}));
  t.insert("c", vec({4, 0, 2}));
  t.insert("d", vec({1, 1, 1}));

  CHECK(sentence_embedding({"a"}, t).vector.isApprox(vec({1, 2, 3})));
  CHECK(sentence_embedding({"a", "b"}, t).vector.isZero());
  CHECK(sentence_embedding({"a", "c", "d"}, t).vector.isApprox(vec({2, 1, 2})));
  // OOV contributes a zero vector to the mean
  CHECK(sentence_embedding({"a", "zzz"}, t).vector.isApprox(vec({0.5, 1, 1.5})));
  const auto oov = sentence_embedding({"x", "y"}, t);
  CHECK(oov.all_oov);
  CHECK(oov.vector.isZero());
  CHECK_THROWS_AS(sentence_embedding({}, t), CandidateError);
}

TEST_CASE("word vector files load and reject ragged lines") {
  TempDir dir;
  {
    std::ofstream(dir.path() / "ok.txt") << "man 1 2\nwalks 0.5 -1\n";
    std::ofstream(dir.path() / "bad.txt") << "man 1 2\nwalks 0.5\n";
  }
  const WordVectorTable t = WordVectorTable::load(dir.path() / "ok.txt");
  CHECK(t.dim() == 2);
  CHECK(t.size() == 2);
  CHECK(t.find("walks")->isApprox(vec({0.5, -1})));
  CHECK(t.find("dog") == nullptr);
  CHECK_THROWS_AS(WordVectorTable::load(dir.path() / "bad.txt"), CandidateError);
}

TEST_CASE("k-means on identical sentences with k=1") {
  WordVectorTable t(2);
  t.insert("x", vec({3, 4}));
  std::vector<Tokens> s(10, Tokens{"x"});
  const ClusterAssignment c = cluster_candidates(s, t, 1, 5);
  CHECK(c.k == 1);
  for (int a : c.assignment) CHECK(a == 0);
}

TEST_CASE("k-means recovers two separated groups") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> noise(0.0, 0.1);
  Matrix points(2, 10);
  for (int i = 0; i < 10; ++i) {
    const double base = i < 5 ? -10.0 : 10.0;
    points(0, i) = base + noise(rng);
    points(1, i) = base + noise(rng);
  }
  const ClusterAssignment c = kmeans(points, 2, 11);
  for (int i = 1; i < 5; ++i) CHECK(c.assignment[i] == c.assignment[0]);
  for (int i = 6; i < 10; ++i) CHECK(c.assignment[i] == c.assignment[5]);
  CHECK(c.assignment[0] != c.assignment[5]);
  // brute-force nearest centroid
  for (int i = 0; i < 10; ++i) {
    int best = 0;
    for (int j = 1; j < c.k; ++j) {
      if ((points.col(i) - c.centroids.col(j)).squaredNorm() < (points.col(i) - c.centroids.col(best)).squaredNorm()) best = j;
    }
    CHECK(best == c.assignment[i]);
  }
}

TEST_CASE("k-means properties over random inputs") {
  for (int trial = 0; trial < 25; ++trial) {
    std::mt19937_64 rng(100 + trial);
    std::normal_distribution<double> n01;
    const int n = 10 + trial * 3;
    Matrix points(4, n);
    for (int i = 0; i < points.size(); ++i) points.data()[i] = n01(rng);
    const ClusterAssignment c = kmeans(points, 10, trial);
    CAPTURE(trial);
    REQUIRE(c.assignment.size() == static_cast<std::size_t>(n));
    std::set<int> used(c.assignment.begin(), c.assignment.end());
    CHECK(used.size() == 10);
    for (int a : c.assignment) CHECK((a >= 0 && a < 10));
    for (std::size_t i = 1; i < c.objective_trace.size(); ++i) {
      CHECK(c.objective_trace[i] <= c.objective_trace[i - 1] + 1e-9);
    }
    CHECK(c.objective_trace.back() == doctest::Approx(objective(points, c.assignment)).epsilon(1e-9));
    const ClusterAssignment again = kmeans(points, 10, trial);
    CHECK(again.assignment == c.assignment);
  }
}

TEST_CASE("k-means rejects fewer points than clusters") {
  CHECK_THROWS_AS(kmeans(Matrix::Zero(2, 3), 4, 1), CandidateError);
}

TEST_CASE("training candidates include the ground truth from the start round") {
  const auto cases = distinct_cases(12);
  const auto pool = training_pool(cases);
  for (int start : {1, 6}) {
    const CandidateSet s = build_training_candidates(cases[0], pool, 9, start);
    CHECK(s.questions.size() == 100);
    CHECK(s.answers.size() == 100);
    REQUIRE(s.gt_question.size() == 10);
    int present = 0;
    for (int r = 0; r < 10; ++r) {
      if (r + 1 < start) {
        CHECK(s.gt_question[r] == -1);
        CHECK(s.find_question(cases[0].qa_pairs[r].question) == -1);
        continue;
      }
      ++present;
      CHECK(s.questions[s.gt_question[r]] == cases[0].qa_pairs[r].question);
      CHECK(s.answers[s.gt_answer[r]] == cases[0].qa_pairs[r].answer);
    }
    CHECK(present == 11 - start);
    std::set<Tokens> unique(s.questions.begin(), s.questions.end());
    CHECK(unique.size() == s.questions.size());
    // pairing closure
    REQUIRE(s.pairing.size() == s.questions.size());
    for (std::size_t q = 0; q < s.pairing.size(); ++q) {
      REQUIRE(s.pairing[q] >= 0);
      CHECK(s.pairing[q] < static_cast<int>(s.answers.size()));
    }
  }
  const CandidateSet a = build_training_candidates(cases[0], pool, 9, 1);
  const CandidateSet b = build_training_candidates(cases[0], pool, 9, 1);
  CHECK(a.questions == b.questions);
}

TEST_CASE("a pool too small reports required and available") {
  const auto cases = distinct_cases(3);
  const auto pool = training_pool(cases);
  CHECK(training_pool_capacity(cases[0], pool, 1) == 30);
  try {
    build_training_candidates(cases[0], pool, 1, 1);
    FAIL("expected an error");
  } catch (const CandidateError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("need 90") != std::string::npos);
    CHECK(msg.find("20") != std::string::npos);
  }
  CHECK(build_training_candidates(cases[0], pool, 1, 1, 30).questions.size() == 30);
}

TEST_CASE("inference candidates deduplicate exactly") {
  auto cases = distinct_cases(2);
  CandidateSet s = build_inference_candidates(cases);
  CHECK(s.questions.size() == 20);
  CHECK(s.answers.size() == 20);
  CHECK(s.gt_question.empty());

  cases[1].qa_pairs[2].question = cases[0].qa_pairs[7].question;
  s = build_inference_candidates(cases);
  CHECK(s.questions.size() == 19);
  const int q = s.find_question(cases[0].qa_pairs[7].question);
  REQUIRE(q >= 0);
  CHECK(s.answers[s.pairing[q]] == cases[0].qa_pairs[7].answer);
}

TEST_CASE("clustering a candidate set labels both sides") {
  const auto toy = synthesize_toy_corpus(7, 8, 64);
  CandidateSet s = build_inference_candidates(toy.cases);
  std::vector<std::string> tokens;
  for (const auto& q : s.questions) tokens.insert(tokens.end(), q.begin(), q.end());
  for (const auto& a : s.answers) tokens.insert(tokens.end(), a.begin(), a.end());
  const WordVectorTable table = WordVectorTable::random(tokens, 50, 1);
  cluster_candidate_set(s, table, 10, 3);
  CHECK(s.clustered());
  CHECK(s.question_clusters.assignment.size() == s.questions.size());
  CHECK(s.answer_clusters.assignment.size() == s.answers.size());
}

TEST_CASE("candidate sets round-trip through JSON") {
  const auto toy = synthesize_toy_corpus(3, 6, 64);
  CandidateSet s = build_inference_candidates(toy.cases);
  std::vector<std::string> tokens;
  for (const auto& q : s.questions) tokens.insert(tokens.end(), q.begin(), q.end());
  for (const auto& a : s.answers) tokens.insert(tokens.end(), a.begin(), a.end());
  cluster_candidate_set(s, WordVectorTable::random(tokens, 8, 1), 4, 2);
  const nlohmann::json j = to_json(s);
  const CandidateSet r = candidate_set_from_json(nlohmann::json::parse(j.dump()));
  CHECK(r.questions == s.questions);
  CHECK(r.answers == s.answers);
  CHECK(r.pairing == s.pairing);
  CHECK(r.question_clusters.assignment == s.question_clusters.assignment);
  CHECK(r.answer_clusters.k == s.answer_clusters.k);
  CHECK(r.question_clusters.centroids.isApprox(s.question_clusters.centroids));

  nlohmann::json bad = j;
  bad["pairing"].push_back(0);
  CHECK_THROWS_AS(candidate_set_from_json(bad), CandidateError);
  bad = j;
  bad["question_clusters"]["assignment"][0] = 99;
  CHECK_THROWS_AS(candidate_set_from_json(bad), CandidateError);
  CHECK_THROWS_AS(candidate_set_from_json(nlohmann::json::object()), CandidateError);
}
