// Two-phase candidate selection: pick a cluster, then a candidate in it.
// Scores are inner products between projected candidate embeddings (keys)
// and a projected agent context (query).
#ifndef QACOOP_SELECTION_H_
#define QACOOP_SELECTION_H_

#include <vector>

#include "qacoop/autodiff.h"
#include "qacoop/candidate_bank.h"

namespace qacoop {

struct Selection {
  int index = -1;    // global candidate index
  int cluster = -1;  // -1 when clustering was bypassed
  Vector cluster_logits;
  Vector candidate_logits;       // over `scored`
  std::vector<int> scored;       // global indices scored in phase 2
  Vector candidate_probabilities;
  bool fell_back = false;        // chosen cluster was empty
};

// keys: dim x N, query: dim x 1. With clusters == nullptr every candidate
// is scored directly. A cluster is represented by the mean of its members'
// keys. Ties go to the lowest index in both phases. A non-negative
// must_include is appended to the scored set when the chosen cluster lacks it.
Selection two_phase_select(const Matrix& keys, const Vector& query, const ClusterAssignment* clusters,
                           int must_include = -1);

Vector softmax(const Vector& logits);
int argmax_lowest(const Vector& v);

}  // namespace qacoop

#endif  // QACOOP_SELECTION_H_
