#include "qacoop/metrics.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>

namespace qacoop {

namespace {

using NgramCounts = std::map<std::vector<std::string>, int>;

NgramCounts ngrams(const Tokens& t, int n) {
  NgramCounts out;
  if (static_cast<int>(t.size()) < n) return out;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= t.size(); ++i) {
    ++out[std::vector<std::string>(t.begin() + static_cast<std::ptrdiff_t>(i),
                                   t.begin() + static_cast<std::ptrdiff_t>(i) + n)];
  }
  return out;
}

void check_shapes(std::size_t candidates, std::span<const std::vector<Tokens>> references) {
  if (candidates != references.size()) throw std::invalid_argument("candidate and reference counts differ");
  for (const auto& refs : references) {
    if (refs.empty()) throw std::invalid_argument("every candidate needs at least one reference");
  }
}

double round4(double x) { return std::round(x * 1e4) / 1e4; }

// Search state for the fewest-chunk maximum alignment.
struct Aligner {
  const Tokens& cand;
  const Tokens& ref;
  std::unordered_map<std::string, int> spare;  // unmatched candidate positions a type may still leave
  std::vector<char> used;
  int best = std::numeric_limits<int>::max();
  long budget = 2'000'000;

  void search(std::size_t i, int prev_i, int prev_j, int chunks) {
    if (chunks >= best || budget-- <= 0) return;
    if (i == cand.size()) {
      best = chunks;
      return;
    }
    const std::string& tok = cand[i];
    for (std::size_t j = 0; j < ref.size(); ++j) {
      if (used[j] || ref[j] != tok) continue;
      used[j] = 1;
      const bool extends = prev_i == static_cast<int>(i) - 1 && prev_j == static_cast<int>(j) - 1;
      search(i + 1, static_cast<int>(i), static_cast<int>(j), chunks + (extends ? 0 : 1));
      used[j] = 0;
    }
    auto it = spare.find(tok);
    const int free = it == spare.end() ? 0 : it->second;
    if (free > 0) {
      --spare[tok];
      search(i + 1, prev_i, prev_j, chunks);
      ++spare[tok];
    }
  }
};

double meteor_single(const Tokens& cand, const Tokens& ref) {
  if (cand.empty() || ref.empty()) return 0.0;
  std::unordered_map<std::string, int> cc, rc;
  for (const auto& t : cand) ++cc[t];
  for (const auto& t : ref) ++rc[t];
  int matches = 0;
  Aligner a{cand, ref, {}, std::vector<char>(ref.size(), 0)};
  for (const auto& [tok, n] : cc) {
    const int r = rc.count(tok) ? rc[tok] : 0;
    matches += std::min(n, r);
    a.spare[tok] = n - std::min(n, r);
  }
  if (matches == 0) return 0.0;
  a.search(0, -2, -2, 0);
  const double p = static_cast<double>(matches) / static_cast<double>(cand.size());
  const double r = static_cast<double>(matches) / static_cast<double>(ref.size());
  const double fmean = 10.0 * p * r / (r + 9.0 * p);
  const double penalty = 0.5 * std::pow(static_cast<double>(a.best) / static_cast<double>(matches), 3.0);
  return fmean * (1.0 - penalty);
}

std::size_t lcs(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

std::array<double, 4> corpus_bleu(std::span<const Tokens> candidates, std::span<const std::vector<Tokens>> references) {
  check_shapes(candidates.size(), references);
  std::array<double, 4> matched{}, total{};
  double cand_len = 0.0, ref_len = 0.0;
  for (std::size_t s = 0; s < candidates.size(); ++s) {
    const Tokens& c = candidates[s];
    cand_len += static_cast<double>(c.size());
    std::size_t closest = references[s][0].size();
    for (const Tokens& r : references[s]) {
      const auto d = [&](std::size_t len) { return std::abs(static_cast<long>(len) - static_cast<long>(c.size())); };
      if (d(r.size()) < d(closest) || (d(r.size()) == d(closest) && r.size() < closest)) closest = r.size();
    }
    ref_len += static_cast<double>(closest);
    for (int n = 1; n <= 4; ++n) {
      const NgramCounts cn = ngrams(c, n);
      NgramCounts max_ref;
      for (const Tokens& r : references[s]) {
        for (const auto& [g, k] : ngrams(r, n)) max_ref[g] = std::max(max_ref[g], k);
      }
      for (const auto& [g, k] : cn) {
        auto it = max_ref.find(g);
        matched[static_cast<std::size_t>(n - 1)] += std::min(k, it == max_ref.end() ? 0 : it->second);
        total[static_cast<std::size_t>(n - 1)] += k;
      }
    }
  }
  std::array<double, 4> out{};
  if (cand_len == 0.0) return out;
  const double bp = cand_len > ref_len ? 1.0 : std::exp(1.0 - ref_len / cand_len);
  double log_sum = 0.0;
  bool zero = false;
  for (int n = 0; n < 4; ++n) {
    const auto k = static_cast<std::size_t>(n);
    if (total[k] == 0.0 || matched[k] == 0.0) zero = true;
    if (!zero) log_sum += std::log(matched[k] / total[k]);
    out[k] = zero ? 0.0 : bp * std::exp(log_sum / (n + 1));
  }
  return out;
}

double meteor_segment(const Tokens& candidate, std::span<const Tokens> references) {
  double best = 0.0;
  for (const Tokens& r : references) best = std::max(best, meteor_single(candidate, r));
  return best;
}

double rouge_l_segment(const Tokens& candidate, std::span<const Tokens> references) {
  if (candidate.empty()) return 0.0;
  constexpr double kBeta = 1.2;
  double p = 0.0, r = 0.0;
  for (const Tokens& ref : references) {
    if (ref.empty()) continue;
    const auto l = static_cast<double>(lcs(candidate, ref));
    p = std::max(p, l / static_cast<double>(candidate.size()));
    r = std::max(r, l / static_cast<double>(ref.size()));
  }
  if (p == 0.0 || r == 0.0) return 0.0;
  return (1.0 + kBeta * kBeta) * p * r / (r + kBeta * kBeta * p);
}

std::vector<double> cider_segments(std::span<const Tokens> candidates, std::span<const std::vector<Tokens>> references) {
  check_shapes(candidates.size(), references);
  constexpr double kSigma = 6.0;
  const std::size_t docs = candidates.size();
  std::array<std::map<std::vector<std::string>, int>, 4> df;
  for (const auto& refs : references) {
    for (int n = 1; n <= 4; ++n) {
      NgramCounts seen;
      for (const Tokens& r : refs) {
        for (const auto& [g, k] : ngrams(r, n)) seen[g] = 1;
      }
      for (const auto& [g, k] : seen) ++df[static_cast<std::size_t>(n - 1)][g];
    }
  }
  const double log_docs = std::log(static_cast<double>(std::max<std::size_t>(docs, 1)));
  auto tfidf = [&](const Tokens& t, int n, double& norm) {
    std::map<std::vector<std::string>, double> v;
    norm = 0.0;
    for (const auto& [g, k] : ngrams(t, n)) {
      auto it = df[static_cast<std::size_t>(n - 1)].find(g);
      const double d = it == df[static_cast<std::size_t>(n - 1)].end() ? 1.0 : static_cast<double>(it->second);
      const double w = static_cast<double>(k) * (log_docs - std::log(std::max(1.0, d)));
      v[g] = w;
      norm += w * w;
    }
    norm = std::sqrt(norm);
    return v;
  };
  std::vector<double> out(docs, 0.0);
  for (std::size_t s = 0; s < docs; ++s) {
    double score = 0.0;
    for (int n = 1; n <= 4; ++n) {
      double cn = 0.0;
      const auto cv = tfidf(candidates[s], n, cn);
      double acc = 0.0;
      for (const Tokens& r : references[s]) {
        double rn = 0.0;
        const auto rv = tfidf(r, n, rn);
        double dot = 0.0;
        for (const auto& [g, w] : cv) {
          auto it = rv.find(g);
          if (it != rv.end()) dot += w * it->second;
        }
        double sim = cn > 0.0 && rn > 0.0 ? dot / (cn * rn) : 0.0;
        const double delta = static_cast<double>(candidates[s].size()) - static_cast<double>(r.size());
        sim *= std::exp(-(delta * delta) / (2.0 * kSigma * kSigma));
        acc += sim;
      }
      score += acc / static_cast<double>(references[s].size());
    }
    out[s] = score / 4.0 * 10.0;
  }
  return out;
}

MetricReport score_corpus(std::span<const Tokens> candidates, std::span<const std::vector<Tokens>> references) {
  check_shapes(candidates.size(), references);
  MetricReport r;
  r.n_cases = static_cast<int>(candidates.size());
  if (candidates.empty()) return r;
  r.bleu = corpus_bleu(candidates, references);
  const auto cider = cider_segments(candidates, references);
  for (std::size_t s = 0; s < candidates.size(); ++s) {
    r.meteor += meteor_segment(candidates[s], references[s]);
    r.rouge_l += rouge_l_segment(candidates[s], references[s]);
    r.cider += cider[s];
  }
  const auto n = static_cast<double>(candidates.size());
  r.meteor /= n;
  r.rouge_l /= n;
  r.cider /= n;
  return r;
}

nlohmann::json to_json(const MetricReport& r) {
  const std::pair<const char*, double> fields[] = {{"bleu1", r.bleu[0]}, {"bleu2", r.bleu[1]}, {"bleu3", r.bleu[2]},
                                                   {"bleu4", r.bleu[3]}, {"meteor", r.meteor}, {"rouge_l", r.rouge_l},
                                                   {"cider", r.cider}};
  nlohmann::json j, exact, scaled;
  for (const auto& [name, v] : fields) {
    j[name] = round4(v);
    exact[name] = v;
    scaled[name] = std::round(v * 1000.0) / 10.0;
  }
  j["n_cases"] = r.n_cases;
  j["exact"] = exact;
  j["x100"] = scaled;
  return j;
}

SelectionRatio selection_ratio(std::span<const Transcript> transcripts) {
  int q_total = 0, q_hit = 0, a_total = 0, a_hit = 0;
  for (const Transcript& t : transcripts) {
    for (const RoundRecord& r : t.rounds) {
      if (r.question_selection) {
        ++q_total;
        if (r.question_selection->gt_index >= 0 && r.question_selection->index == r.question_selection->gt_index) ++q_hit;
      }
      if (r.answer_selection) {
        ++a_total;
        if (r.answer_selection->gt_index >= 0 && r.answer_selection->index == r.answer_selection->gt_index) ++a_hit;
      }
    }
  }
  SelectionRatio out;
  if (q_total > 0) out.question = static_cast<double>(q_hit) / q_total;
  if (a_total > 0) out.answer = static_cast<double>(a_hit) / a_total;
  return out;
}

double perplexity_from_nll(double total_nll, std::size_t tokens) {
  if (tokens == 0) throw std::invalid_argument("perplexity of an empty split");
  return std::exp(total_nll / static_cast<double>(tokens));
}

}  // namespace qacoop
