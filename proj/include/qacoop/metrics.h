// Corpus-level caption metrics and selection bookkeeping.
#ifndef QACOOP_METRICS_H_
#define QACOOP_METRICS_H_

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"
#include "qacoop/corpus.h"
#include "qacoop/dialog_engine.h"

namespace qacoop {

struct MetricReport {
  std::array<double, 4> bleu{};  // BLEU-1..4
  double meteor = 0.0;
  double rouge_l = 0.0;
  double cider = 0.0;
  int n_cases = 0;
};

// Scores on the [0, 1] scale (CIDEr unbounded above). The JSON form carries
// every score rounded to 4 decimals, the exact values, and the x100 figures
// usually quoted in tables.
nlohmann::json to_json(const MetricReport& r);

// BLEU: clipped n-gram precision summed over the corpus, geometric mean of
// orders 1..n, brevity penalty against the closest reference length (the
// shorter on ties).
std::array<double, 4> corpus_bleu(std::span<const Tokens> candidates, std::span<const std::vector<Tokens>> references);

// Exact-match METEOR for one segment, maximized over references:
// Fmean = 10PR / (R + 9P), penalty = 0.5 (chunks / matches)^3, where the
// alignment has the most matches and, among those, the fewest chunks.
double meteor_segment(const Tokens& candidate, std::span<const Tokens> references);

// ROUGE-L with beta = 1.2 using the best LCS precision and recall over the
// references.
double rouge_l_segment(const Tokens& candidate, std::span<const Tokens> references);

// CIDEr with document frequencies from the reference sets of the scored
// corpus, tf-idf cosine similarity per n-gram order (1..4), a Gaussian
// length penalty (sigma 6) and the x10 scale. Returns per-segment scores.
std::vector<double> cider_segments(std::span<const Tokens> candidates, std::span<const std::vector<Tokens>> references);

MetricReport score_corpus(std::span<const Tokens> candidates, std::span<const std::vector<Tokens>> references);

struct SelectionRatio {
  std::optional<double> question;
  std::optional<double> answer;
};
// Fraction of agent-selected rounds whose pick equals the round's ground
// truth; absent when no round was selected.
SelectionRatio selection_ratio(std::span<const Transcript> transcripts);

double perplexity_from_nll(double total_nll, std::size_t tokens);

}  // namespace qacoop

#endif  // QACOOP_METRICS_H_
