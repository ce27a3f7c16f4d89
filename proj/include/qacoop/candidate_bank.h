// Candidate pools for the discriminative setting and k-means grouping of
// candidate sentences over mean-pooled word vectors.
#ifndef QACOOP_CANDIDATE_BANK_H_
#define QACOOP_CANDIDATE_BANK_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "qacoop/autodiff.h"
#include "qacoop/corpus.h"

namespace qacoop {

class WordVectorTable {
 public:
  explicit WordVectorTable(int dim = 50) : dim_(dim) {}

  // "token v1 ... vd" per line. Every line must carry the same d.
  static WordVectorTable load(const std::filesystem::path& path);
  // Seeded N(0,1) vectors for each token; stands in for pretrained vectors
  // on synthetic corpora.
  static WordVectorTable random(std::span<const std::string> tokens, int dim, std::uint64_t seed);

  void insert(const std::string& token, Vector v);
  const Vector* find(const std::string& token) const;
  int dim() const { return dim_; }
  std::size_t size() const { return table_.size(); }

 private:
  int dim_;
  std::unordered_map<std::string, Vector> table_;
};

struct SentenceEmbedding {
  Vector vector;
  // Every token was out of vocabulary; vector is zero.
  bool all_oov = false;
};

// Mean of the in-table word vectors; OOV tokens contribute zero vectors.
SentenceEmbedding sentence_embedding(const Tokens& sentence, const WordVectorTable& table);

struct ClusterAssignment {
  int k = 0;
  Matrix centroids;             // dim x k
  std::vector<int> assignment;  // point -> cluster id in [0, k)
  std::vector<double> objective_trace;
  int iterations = 0;

  std::vector<std::vector<int>> members() const;
};

// Lloyd's algorithm with k-means++ seeding. Points are columns. Empty
// clusters are re-seeded at the point farthest from its own centroid.
// Ties in assignment go to the lowest cluster id.
ClusterAssignment kmeans(const Matrix& points, int k, std::uint64_t seed, int max_iterations = 100);

ClusterAssignment cluster_candidates(std::span<const Tokens> sentences, const WordVectorTable& table, int k,
                                     std::uint64_t seed, int max_iterations = 100);

struct CandidateSet {
  std::vector<Tokens> questions;
  std::vector<Tokens> answers;
  // Question index -> paired answer index, or -1 when unpaired.
  std::vector<int> pairing;
  // Per round (0-based), candidate index of the case's ground-truth
  // question/answer, or -1 when that round was given as input. Empty for
  // pools shared across cases.
  std::vector<int> gt_question;
  std::vector<int> gt_answer;
  ClusterAssignment question_clusters;
  ClusterAssignment answer_clusters;

  int find_question(const Tokens& q) const;
  int find_answer(const Tokens& a) const;
  bool clustered() const { return question_clusters.k > 0 && answer_clusters.k > 0; }
};

class CandidateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Ground-truth pairs for rounds >= start_round plus pairs sampled without
// replacement from pool, shuffled together. Sampled pairs never repeat a
// question already present or reuse one of the case's ground-truth
// questions/answers, so the ground truth stays uniquely identifiable.
CandidateSet build_training_candidates(const DialogCase& c, std::span<const QaPair> pool, std::uint64_t seed,
                                       int start_round, int pool_size = 100);

// Largest pool_size build_training_candidates can satisfy for this case.
int training_pool_capacity(const DialogCase& c, std::span<const QaPair> pool, int start_round);

// Every question and answer of the given cases, deduplicated by exact
// token sequence in first-seen order. A question keeps the answer of its
// first occurrence as its pair.
CandidateSet build_inference_candidates(std::span<const DialogCase> cases);

// Clusters both sides of the set in place.
void cluster_candidate_set(CandidateSet& set, const WordVectorTable& table, int k, std::uint64_t seed);

nlohmann::json to_json(const CandidateSet& set);
// Throws CandidateError on inconsistent sizes or indices.
CandidateSet candidate_set_from_json(const nlohmann::json& j);

// All QA pairs of the training cases, in corpus order.
std::vector<QaPair> training_pool(std::span<const DialogCase> cases);

}  // namespace qacoop

#endif  // QACOOP_CANDIDATE_BANK_H_
