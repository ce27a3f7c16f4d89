#include "qacoop/candidate_bank.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "qacoop/rng.h"

namespace qacoop {

WordVectorTable WordVectorTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CandidateError("cannot open word vectors " + path.string());
  std::string line;
  int dim = -1;
  WordVectorTable table;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string token;
    if (!(ls >> token)) continue;
    std::vector<double> vals;
    double x;
    while (ls >> x) vals.push_back(x);
    if (dim < 0) {
      dim = static_cast<int>(vals.size());
      table.dim_ = dim;
    }
    if (static_cast<int>(vals.size()) != dim) {
      throw CandidateError(path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(dim) +
                           " values, found " + std::to_string(vals.size()));
    }
    Vector v = Eigen::Map<Vector>(vals.data(), dim);
    if (!v.allFinite()) throw CandidateError(path.string() + ":" + std::to_string(line_no) + ": non-finite value");
    table.table_[token] = std::move(v);
  }
  if (dim <= 0) throw CandidateError("no word vectors in " + path.string());
  return table;
}

WordVectorTable WordVectorTable::random(std::span<const std::string> tokens, int dim, std::uint64_t seed) {
  WordVectorTable table(dim);
  Rng rng(seed);
  for (const auto& t : tokens) {
    Vector v(dim);
    for (int i = 0; i < dim; ++i) v(i) = standard_normal(rng);
    table.table_[t] = std::move(v);
  }
  return table;
}

void WordVectorTable::insert(const std::string& token, Vector v) {
  if (v.size() != dim_) throw CandidateError("word vector for '" + token + "' has wrong dimension");
  if (!v.allFinite()) throw CandidateError("word vector for '" + token + "' is not finite");
  table_[token] = std::move(v);
}

const Vector* WordVectorTable::find(const std::string& token) const {
  auto it = table_.find(token);
  return it == table_.end() ? nullptr : &it->second;
}

SentenceEmbedding sentence_embedding(const Tokens& sentence, const WordVectorTable& table) {
  if (sentence.empty()) throw CandidateError("sentence_embedding: empty sentence");
  SentenceEmbedding out{Vector::Zero(table.dim()), true};
  for (const auto& t : sentence) {
    if (const Vector* v = table.find(t)) {
      out.vector += *v;
      out.all_oov = false;
    }
  }
  out.vector /= static_cast<double>(sentence.size());
  return out;
}

std::vector<std::vector<int>> ClusterAssignment::members() const {
  std::vector<std::vector<int>> out(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < assignment.size(); ++i) out[static_cast<std::size_t>(assignment[i])].push_back(static_cast<int>(i));
  return out;
}

namespace {

struct Assign {
  std::vector<int> cluster;
  Vector dist;  // squared distance to the assigned centroid
};

Assign assign_points(const Matrix& points, const Matrix& centroids) {
  const auto n = points.cols();
  Assign a{std::vector<int>(static_cast<std::size_t>(n)), Vector(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < centroids.cols(); ++c) {
      const double d = (points.col(i) - centroids.col(c)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(c);
      }
    }
    a.cluster[static_cast<std::size_t>(i)] = best;
    a.dist(i) = best_d;
  }
  return a;
}

// Moves the centroid of every empty cluster onto the point farthest from
// its current centroid, then reassigns.
void repair_empty(const Matrix& points, Matrix& centroids, Assign& a) {
  const int k = static_cast<int>(centroids.cols());
  for (int guard = 0; guard < 4 * k + 4; ++guard) {
    std::vector<int> sizes(static_cast<std::size_t>(k), 0);
    for (int c : a.cluster) ++sizes[static_cast<std::size_t>(c)];
    auto empty = std::find(sizes.begin(), sizes.end(), 0);
    if (empty == sizes.end()) return;
    Eigen::Index far = 0;
    const double far_d = a.dist.maxCoeff(&far);
    if (far_d <= 0.0) return;  // fewer distinct points than clusters
    centroids.col(empty - sizes.begin()) = points.col(far);
    a = assign_points(points, centroids);
  }
}

}  // namespace

ClusterAssignment kmeans(const Matrix& points, int k, std::uint64_t seed, int max_iterations) {
  const auto n = points.cols();
  if (k < 1) throw CandidateError("kmeans: k must be >= 1");
  if (n < k) throw CandidateError("kmeans: " + std::to_string(n) + " points for k=" + std::to_string(k));
  Rng rng(seed);
  Matrix centroids(points.rows(), k);
  // k-means++ seeding.
  centroids.col(0) = points.col(static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::size_t>(n))));
  Vector d2 = (points.colwise() - centroids.col(0)).colwise().squaredNorm().transpose();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total <= 0.0) {
      pick = static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::size_t>(n)));
    } else {
      double r = uniform01(rng) * total;
      for (pick = 0; pick < n - 1; ++pick) {
        r -= d2(pick);
        if (r < 0.0) break;
      }
      // Never land on a zero-weight point due to rounding.
      while (d2(pick) <= 0.0 && pick > 0) --pick;
    }
    centroids.col(c) = points.col(pick);
    d2 = d2.cwiseMin((points.colwise() - centroids.col(c)).colwise().squaredNorm().transpose());
  }

  ClusterAssignment out;
  out.k = k;
  Assign a = assign_points(points, centroids);
  repair_empty(points, centroids, a);
  out.objective_trace.push_back(a.dist.sum());
  for (int it = 0; it < max_iterations; ++it) {
    Matrix sums = Matrix::Zero(points.rows(), k);
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.col(a.cluster[static_cast<std::size_t>(i)]) += points.col(i);
      ++counts[static_cast<std::size_t>(a.cluster[static_cast<std::size_t>(i)])];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) centroids.col(c) = sums.col(c) / counts[static_cast<std::size_t>(c)];
    }
    const std::vector<int> previous = a.cluster;
    a = assign_points(points, centroids);
    repair_empty(points, centroids, a);
    out.objective_trace.push_back(a.dist.sum());
    out.iterations = it + 1;
    if (a.cluster == previous) break;
  }
  out.centroids = std::move(centroids);
  out.assignment = std::move(a.cluster);
  return out;
}

ClusterAssignment cluster_candidates(std::span<const Tokens> sentences, const WordVectorTable& table, int k,
                                     std::uint64_t seed, int max_iterations) {
  Matrix points(table.dim(), static_cast<Eigen::Index>(sentences.size()));
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    points.col(static_cast<Eigen::Index>(i)) = sentence_embedding(sentences[i], table).vector;
  }
  return kmeans(points, k, seed, max_iterations);
}

int CandidateSet::find_question(const Tokens& q) const {
  auto it = std::find(questions.begin(), questions.end(), q);
  return it == questions.end() ? -1 : static_cast<int>(it - questions.begin());
}

int CandidateSet::find_answer(const Tokens& a) const {
  auto it = std::find(answers.begin(), answers.end(), a);
  return it == answers.end() ? -1 : static_cast<int>(it - answers.begin());
}

namespace {

std::vector<std::size_t> eligible_pool_entries(const DialogCase& c, std::span<const QaPair> pool) {
  std::set<Tokens> case_questions, case_answers;
  for (const auto& p : c.qa_pairs) {
    case_questions.insert(p.question);
    case_answers.insert(p.answer);
  }
  std::vector<std::size_t> eligible;
  std::set<Tokens> seen;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const QaPair& p = pool[i];
    if (case_questions.count(p.question) || case_answers.count(p.answer)) continue;
    if (!seen.insert(p.question).second) continue;
    eligible.push_back(i);
  }
  return eligible;
}

}  // namespace

int training_pool_capacity(const DialogCase& c, std::span<const QaPair> pool, int start_round) {
  return kRoundsPerDialog - start_round + 1 + static_cast<int>(eligible_pool_entries(c, pool).size());
}

CandidateSet build_training_candidates(const DialogCase& c, std::span<const QaPair> pool, std::uint64_t seed,
                                       int start_round, int pool_size) {
  if (start_round < 1 || start_round > kRoundsPerDialog) throw CandidateError("start_round out of range");
  const int n_gt = kRoundsPerDialog - start_round + 1;
  if (pool_size < n_gt) throw CandidateError("candidate pool smaller than the ground-truth rounds");

  std::vector<std::size_t> eligible = eligible_pool_entries(c, pool);
  const auto need = static_cast<std::size_t>(pool_size - n_gt);
  if (eligible.size() < need) {
    throw CandidateError("candidate pool too small: need " + std::to_string(need) + " distinct non-ground-truth pairs, " +
                         std::to_string(eligible.size()) + " available");
  }
  Rng rng(seed);
  // Partial Fisher-Yates: the first `need` entries are a uniform sample.
  for (std::size_t i = 0; i < need; ++i) {
    std::swap(eligible[i], eligible[i + uniform_index(rng, eligible.size() - i)]);
  }

  struct Slot {
    QaPair pair;
    int round;  // 0-based GT round, -1 for sampled
  };
  std::vector<Slot> slots;
  for (int r = start_round - 1; r < kRoundsPerDialog; ++r) slots.push_back({c.qa_pairs[static_cast<std::size_t>(r)], r});
  for (std::size_t i = 0; i < need; ++i) slots.push_back({pool[eligible[i]], -1});
  shuffle_in_place(slots, rng);

  CandidateSet set;
  set.gt_question.assign(kRoundsPerDialog, -1);
  set.gt_answer.assign(kRoundsPerDialog, -1);
  for (std::size_t i = 0; i < slots.size(); ++i) {
    set.questions.push_back(slots[i].pair.question);
    set.answers.push_back(slots[i].pair.answer);
    set.pairing.push_back(static_cast<int>(i));
    if (slots[i].round >= 0) {
      set.gt_question[static_cast<std::size_t>(slots[i].round)] = static_cast<int>(i);
      set.gt_answer[static_cast<std::size_t>(slots[i].round)] = static_cast<int>(i);
    }
  }
  // A repeated question within one dialog maps every round to the first copy.
  for (int r = start_round - 1; r < kRoundsPerDialog; ++r) {
    const auto rr = static_cast<std::size_t>(r);
    set.gt_question[rr] = set.find_question(c.qa_pairs[rr].question);
    set.gt_answer[rr] = set.find_answer(c.qa_pairs[rr].answer);
  }
  return set;
}

CandidateSet build_inference_candidates(std::span<const DialogCase> cases) {
  CandidateSet set;
  std::map<Tokens, int> q_index, a_index;
  for (const auto& c : cases) {
    for (const auto& p : c.qa_pairs) {
      auto [ait, a_new] = a_index.try_emplace(p.answer, static_cast<int>(set.answers.size()));
      if (a_new) set.answers.push_back(p.answer);
      auto [qit, q_new] = q_index.try_emplace(p.question, static_cast<int>(set.questions.size()));
      if (q_new) {
        set.questions.push_back(p.question);
        set.pairing.push_back(ait->second);
      }
    }
  }
  return set;
}

void cluster_candidate_set(CandidateSet& set, const WordVectorTable& table, int k, std::uint64_t seed) {
  set.question_clusters = cluster_candidates(set.questions, table, std::min<int>(k, static_cast<int>(set.questions.size())), seed);
  set.answer_clusters = cluster_candidates(set.answers, table, std::min<int>(k, static_cast<int>(set.answers.size())), seed + 1);
}

namespace {

nlohmann::json clusters_json(const ClusterAssignment& a) {
  nlohmann::json centroids = nlohmann::json::array();
  for (Eigen::Index j = 0; j < a.centroids.cols(); ++j) {
    std::vector<double> col(a.centroids.col(j).data(), a.centroids.col(j).data() + a.centroids.rows());
    centroids.push_back(col);
  }
  return {{"k", a.k}, {"assignment", a.assignment}, {"centroids", centroids}, {"iterations", a.iterations}};
}

ClusterAssignment clusters_from_json(const nlohmann::json& j, std::size_t n, const char* side) {
  ClusterAssignment a;
  a.k = j.at("k").get<int>();
  if (a.k == 0) return a;
  a.assignment = j.at("assignment").get<std::vector<int>>();
  a.iterations = j.value("iterations", 0);
  if (a.assignment.size() != n) throw CandidateError(std::string(side) + " cluster assignment size mismatch");
  for (int c : a.assignment) {
    if (c < 0 || c >= a.k) throw CandidateError(std::string(side) + " cluster id out of range");
  }
  const auto cols = j.at("centroids").get<std::vector<std::vector<double>>>();
  if (static_cast<int>(cols.size()) != a.k) throw CandidateError(std::string(side) + " centroid count mismatch");
  const auto dim = cols.empty() ? 0 : static_cast<Eigen::Index>(cols[0].size());
  a.centroids.resize(dim, a.k);
  for (int c = 0; c < a.k; ++c) {
    if (static_cast<Eigen::Index>(cols[static_cast<std::size_t>(c)].size()) != dim) {
      throw CandidateError(std::string(side) + " centroid width mismatch");
    }
    for (Eigen::Index r = 0; r < dim; ++r) a.centroids(r, c) = cols[static_cast<std::size_t>(c)][static_cast<std::size_t>(r)];
  }
  return a;
}

std::vector<std::string> joined(const std::vector<Tokens>& v) {
  std::vector<std::string> out;
  for (const auto& t : v) out.push_back(join_tokens(t));
  return out;
}

std::vector<Tokens> split_all(const std::vector<std::string>& v) {
  std::vector<Tokens> out;
  for (const auto& s : v) out.push_back(tokenize(s));
  return out;
}

}  // namespace

nlohmann::json to_json(const CandidateSet& set) {
  return {{"questions", joined(set.questions)},
          {"answers", joined(set.answers)},
          {"pairing", set.pairing},
          {"gt_question", set.gt_question},
          {"gt_answer", set.gt_answer},
          {"question_clusters", clusters_json(set.question_clusters)},
          {"answer_clusters", clusters_json(set.answer_clusters)}};
}

CandidateSet candidate_set_from_json(const nlohmann::json& j) {
  CandidateSet set;
  try {
    set.questions = split_all(j.at("questions").get<std::vector<std::string>>());
    set.answers = split_all(j.at("answers").get<std::vector<std::string>>());
    set.pairing = j.at("pairing").get<std::vector<int>>();
    set.gt_question = j.value("gt_question", std::vector<int>{});
    set.gt_answer = j.value("gt_answer", std::vector<int>{});
    if (set.pairing.size() != set.questions.size()) throw CandidateError("pairing size mismatch");
    for (int a : set.pairing) {
      if (a < -1 || a >= static_cast<int>(set.answers.size())) throw CandidateError("pairing index out of range");
    }
    if (j.contains("question_clusters")) {
      set.question_clusters = clusters_from_json(j["question_clusters"], set.questions.size(), "question");
    }
    if (j.contains("answer_clusters")) {
      set.answer_clusters = clusters_from_json(j["answer_clusters"], set.answers.size(), "answer");
    }
  } catch (const nlohmann::json::exception& e) {
    throw CandidateError(std::string("malformed candidate set: ") + e.what());
  }
  return set;
}

std::vector<QaPair> training_pool(std::span<const DialogCase> cases) {
  std::vector<QaPair> out;
  for (const auto& c : cases) {
    if (c.split != Split::kTrain) continue;
    out.insert(out.end(), c.qa_pairs.begin(), c.qa_pairs.end());
  }
  return out;
}

}  // namespace qacoop
