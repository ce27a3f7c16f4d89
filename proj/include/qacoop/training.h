// Losses, the teacher-forced forward pass over one dialog, the Adam
// schedule with early stopping, and checkpoints.
#ifndef QACOOP_TRAINING_H_
#define QACOOP_TRAINING_H_

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "qacoop/candidate_bank.h"
#include "qacoop/corpus.h"
#include "qacoop/model.h"

namespace qacoop {

// Mean negative log-likelihood of target under per-step probability
// vectors; PAD targets are skipped. Throws on a length mismatch.
double description_loss(std::span<const Vector> step_probabilities, std::span<const int> target);

struct SelectionRecord {
  Vector logits;  // phase-2 logits
  int gt = -1;    // position of the ground truth within logits
  int selected = -1;
  bool wrong() const { return selected != gt; }
};
// Mean over records of y * (-log softmax(logits)[gt]) with y = wrong().
// The literal variant drops the minus sign: y * log softmax(logits)[gt].
double internal_selection_loss(std::span<const SelectionRecord> records, bool literal = false);
double combined_loss(double l_internal, double l_ce, double lambda);

// -log softmax(logits)[index] as a 1x1 graph node.
Var nll_at(Var logits, int index);

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 64;
  double lambda_internal = 0.1;
  bool reasoning = true;  // L_internal on
  // y * log softmax instead of the gated NLL of the ground truth.
  bool literal_internal = false;
  // Generative mode: teacher-forced question and answer token losses.
  bool dialog_supervision = true;
  int ce_only_tail_epochs = 3;
  int patience = 2;
  int max_epochs = 100;
  int start_round = 1;
  int candidate_pool = 100;
  int clusters = 10;
  int word_vector_dim = 50;
  std::uint64_t seed = 1;
};
nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

// One phase of a selection with its loss.
struct PhaseLoss {
  Var nll;  // invalid when the phase was skipped
  bool wrong = false;
};
struct InternalRecord {
  bool question = true;
  int round = 0;  // 1-based
  PhaseLoss cluster;
  PhaseLoss candidate;
  int selected = -1;  // free two-phase selection
  int gt = -1;
};

struct CaseForward {
  Var description_nll;  // summed over tokens
  int description_tokens = 0;
  Var question_nll;
  int question_tokens = 0;
  Var answer_nll;
  int answer_tokens = 0;
  std::vector<InternalRecord> records;
};

struct ForwardOptions {
  int start_round = 1;
  bool description_only = false;
  bool dialog_supervision = true;
};

// Teacher-forced pass over one dialog: ground-truth history, questions and
// answers; in discriminative mode both selections are scored against the
// case's candidate set at every round from start_round on.
CaseForward forward_case(Graph& g, const Model& model, const Vocabulary& vocab, const DialogCase& c,
                         const VideoFeatures& features, const CandidateSet* candidates, const ForwardOptions& options);

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(int epoch, int step, double loss);
  int epoch;
  int step;
};

struct EpochStats {
  int epoch = 0;  // 1-based
  bool ce_only = false;
  double loss = 0.0;
  double description_ce = 0.0;  // per token
  double internal = 0.0;        // per record
  double val_perplexity = 0.0;
  std::optional<double> question_ratio;
  std::optional<double> answer_ratio;
  double seconds = 0.0;
};

// Teacher-forced scores of the current parameters, no updates.
struct EvalStats {
  double description_ce = 0.0;
  std::optional<double> question_ratio;
  std::optional<double> answer_ratio;
};

struct TrainResult {
  std::vector<EpochStats> epochs;
  int best_epoch = 0;
  double best_val_perplexity = 0.0;
  bool early_stopped = false;
};

// Best-validation snapshot of the parameter values.
using ParameterSnapshot = std::map<std::string, Matrix>;
ParameterSnapshot snapshot(const ParameterStore& store);
void restore(ParameterStore& store, const ParameterSnapshot& s);

class Adam {
 public:
  explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(ParameterStore& store);

 private:
  double lr_, b1_, b2_, eps_;
  long t_ = 0;
  std::map<const Parameter*, std::pair<Matrix, Matrix>> moments_;
};

class Trainer {
 public:
  // The validation list may be empty, in which case perplexity is tracked
  // on the training cases.
  Trainer(Model& model, const Vocabulary& vocab, std::vector<const DialogCase*> train,
          std::vector<const DialogCase*> val, const FeatureStore& features, TrainConfig config,
          std::ostream* log = nullptr);

  EpochStats run_epoch(bool ce_only);
  // Early stopping on validation perplexity (patience epochs without
  // improvement), then the CE-only tail; the best-perplexity parameters are
  // restored at the end. `stop` may end training early after any epoch.
  TrainResult train(const std::function<bool(const EpochStats&)>& stop = {});

  double perplexity(std::span<const DialogCase* const> cases) const;
  // Over the training cases, with their candidate sets.
  EvalStats evaluate() const;
  const CandidateSet* candidates_for(const DialogCase* c) const;

 private:
  Model& model_;
  const Vocabulary& vocab_;
  std::vector<const DialogCase*> train_, val_;
  const FeatureStore& features_;
  TrainConfig cfg_;
  std::ostream* log_;
  Adam adam_;
  int epoch_ = 0;
  int step_ = 0;
  std::map<const DialogCase*, CandidateSet> candidates_;
};

// Stops after `patience` consecutive epochs without a new best.
bool should_stop_early(std::span<const double> val_perplexities, int patience);

struct Checkpoint {
  std::unique_ptr<Model> model;
  Vocabulary vocab;
  int epoch = 0;
  double val_perplexity = 0.0;
  nlohmann::json extra;
};
// Header: magic line, little-endian u64 JSON length, JSON (config, vocab,
// epoch, perplexity). Body: per parameter u32 name length, name, u32 rows,
// u32 cols, rows*cols float32 little-endian values in column-major order.
void write_checkpoint(const std::string& path, const Model& model, const Vocabulary& vocab, int epoch,
                      double val_perplexity, const nlohmann::json& extra = nlohmann::json::object());
Checkpoint read_checkpoint(const std::string& path);

}  // namespace qacoop

#endif  // QACOOP_TRAINING_H_
