#include "qacoop/selection.h"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <stdexcept>

namespace qacoop {

Vector softmax(const Vector& logits) {
  const double m = logits.maxCoeff();
  Vector e = (logits.array() - m).exp();
  return e / e.sum();
}

int argmax_lowest(const Vector& v) {
  if (v.size() == 0) throw std::invalid_argument("argmax of an empty vector");
  int best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(best)) best = static_cast<int>(i);
  }
  return best;
}

Selection two_phase_select(const Matrix& keys, const Vector& query, const ClusterAssignment* clusters,
                           int must_include) {
  const auto n = keys.cols();
  if (n == 0) throw std::invalid_argument("two_phase_select: no candidates");
  if (keys.rows() != query.size()) throw std::invalid_argument("two_phase_select: key/query dimension mismatch");
  Selection s;
  if (clusters != nullptr) {
    if (clusters->assignment.size() != static_cast<std::size_t>(n)) {
      throw std::invalid_argument("two_phase_select: cluster assignment does not cover the candidates");
    }
    const auto members = clusters->members();
    s.cluster_logits = Vector::Constant(clusters->k, -std::numeric_limits<double>::infinity());
    for (int c = 0; c < clusters->k; ++c) {
      const auto& m = members[static_cast<std::size_t>(c)];
      if (m.empty()) continue;
      Vector mean = Vector::Zero(keys.rows());
      for (int i : m) mean += keys.col(i);
      mean /= static_cast<double>(m.size());
      s.cluster_logits(c) = mean.dot(query);
    }
    s.cluster = argmax_lowest(s.cluster_logits);
    s.scored = members[static_cast<std::size_t>(s.cluster)];
    if (s.scored.empty()) {
      std::cerr << "warning: chosen cluster " << s.cluster << " is empty; scoring all candidates\n";
      s.fell_back = true;
    }
  }
  if (s.scored.empty()) {
    s.scored.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) s.scored[static_cast<std::size_t>(i)] = static_cast<int>(i);
  }
  if (must_include >= 0) {
    if (must_include >= n) throw std::invalid_argument("two_phase_select: must_include out of range");
    if (std::find(s.scored.begin(), s.scored.end(), must_include) == s.scored.end()) s.scored.push_back(must_include);
  }
  s.candidate_logits.resize(static_cast<Eigen::Index>(s.scored.size()));
  for (std::size_t j = 0; j < s.scored.size(); ++j) {
    s.candidate_logits(static_cast<Eigen::Index>(j)) = keys.col(s.scored[j]).dot(query);
  }
  s.candidate_probabilities = softmax(s.candidate_logits);
  s.index = s.scored[static_cast<std::size_t>(argmax_lowest(s.candidate_logits))];
  return s;
}

}  // namespace qacoop
