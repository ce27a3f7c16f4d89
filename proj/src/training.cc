#include "qacoop/training.h"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

#include "qacoop/dialog_engine.h"
#include "qacoop/metrics.h"
#include "qacoop/rng.h"

namespace qacoop {

double description_loss(std::span<const Vector> step_probabilities, std::span<const int> target) {
  if (step_probabilities.size() != target.size()) {
    throw std::invalid_argument("description_loss: " + std::to_string(step_probabilities.size()) +
                                " distributions for " + std::to_string(target.size()) + " targets");
  }
  double total = 0.0;
  int count = 0;
  for (std::size_t t = 0; t < target.size(); ++t) {
    if (target[t] == Vocabulary::kPad) continue;
    if (target[t] < 0 || target[t] >= step_probabilities[t].size()) {
      throw std::out_of_range("description_loss: target outside the vocabulary");
    }
    total -= std::log(step_probabilities[t](target[t]));
    ++count;
  }
  return count == 0 ? 0.0 : total / count;
}

double internal_selection_loss(std::span<const SelectionRecord> records, bool literal) {
  if (records.empty()) return 0.0;
  double total = 0.0;
  for (const SelectionRecord& r : records) {
    if (r.gt < 0 || r.gt >= r.logits.size()) throw std::out_of_range("internal_selection_loss: GT index out of range");
    if (!r.wrong()) continue;
    const double m = r.logits.maxCoeff();
    const double lse = m + std::log((r.logits.array() - m).exp().sum());
    total += lse - r.logits(r.gt);
  }
  return (literal ? -total : total) / static_cast<double>(records.size());
}

double combined_loss(double l_internal, double l_ce, double lambda) {
  return lambda * l_internal + (1.0 - lambda) * l_ce;
}

Var nll_at(Var logits, int index) { return ops::scale(ops::slice_rows(ops::log_softmax(logits), index, 1), -1.0); }

nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"lambda_internal", c.lambda_internal},
          {"reasoning", c.reasoning},
          {"literal_internal", c.literal_internal},
          {"dialog_supervision", c.dialog_supervision},
          {"ce_only_tail_epochs", c.ce_only_tail_epochs},
          {"patience", c.patience},
          {"max_epochs", c.max_epochs},
          {"start_round", c.start_round},
          {"candidate_pool", c.candidate_pool},
          {"clusters", c.clusters},
          {"word_vector_dim", c.word_vector_dim},
          {"seed", c.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lambda_internal = j.value("lambda_internal", c.lambda_internal);
  c.reasoning = j.value("reasoning", c.reasoning);
  c.literal_internal = j.value("literal_internal", c.literal_internal);
  c.dialog_supervision = j.value("dialog_supervision", c.dialog_supervision);
  c.ce_only_tail_epochs = j.value("ce_only_tail_epochs", c.ce_only_tail_epochs);
  c.patience = j.value("patience", c.patience);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.start_round = j.value("start_round", c.start_round);
  c.candidate_pool = j.value("candidate_pool", c.candidate_pool);
  c.clusters = j.value("clusters", c.clusters);
  c.word_vector_dim = j.value("word_vector_dim", c.word_vector_dim);
  c.seed = j.value("seed", c.seed);
  return c;
}

namespace {

// Phase 1 over the non-empty clusters, phase 2 inside the ground-truth
// cluster; the selection itself is the free two-phase pick.
InternalRecord score_selection(Graph& g, Var keys, Var query, const ClusterAssignment* clusters, int gt) {
  InternalRecord rec;
  rec.gt = gt;
  const Selection free_pick = two_phase_select(keys.value(), query.value().col(0), clusters);
  rec.selected = free_pick.index;
  std::vector<int> scored;
  if (clusters != nullptr && clusters->k > 1) {
    const auto members = clusters->members();
    std::vector<int> present;
    for (int c = 0; c < clusters->k; ++c) {
      if (!members[static_cast<std::size_t>(c)].empty()) present.push_back(c);
    }
    const int gt_cluster = clusters->assignment[static_cast<std::size_t>(gt)];
    if (present.size() > 1) {
      Matrix pool = Matrix::Zero(keys.cols(), static_cast<Eigen::Index>(present.size()));
      int gt_pos = 0;
      for (std::size_t p = 0; p < present.size(); ++p) {
        const auto& m = members[static_cast<std::size_t>(present[p])];
        for (int i : m) pool(i, static_cast<Eigen::Index>(p)) = 1.0 / static_cast<double>(m.size());
        if (present[p] == gt_cluster) gt_pos = static_cast<int>(p);
      }
      Var means = ops::matmul(keys, g.constant(std::move(pool)));
      rec.cluster.nll = nll_at(ops::matmul_tn(means, query), gt_pos);
      rec.cluster.wrong = free_pick.cluster != gt_cluster;
    }
    scored = members[static_cast<std::size_t>(gt_cluster)];
  } else {
    scored.resize(static_cast<std::size_t>(keys.cols()));
    std::iota(scored.begin(), scored.end(), 0);
  }
  const auto it = std::find(scored.begin(), scored.end(), gt);
  const int gt_pos = static_cast<int>(it - scored.begin());
  Var logits = ops::matmul_tn(ops::gather_cols(keys, scored), query);
  rec.candidate.nll = nll_at(logits, gt_pos);
  rec.candidate.wrong = argmax_lowest(logits.value().col(0)) != gt_pos;
  return rec;
}

Var add_or_init(Var acc, Var x) { return acc.valid() ? ops::add(acc, x) : x; }

}  // namespace

CaseForward forward_case(Graph& g, const Model& model, const Vocabulary& vocab, const DialogCase& c,
                         const VideoFeatures& features, const CandidateSet* candidates, const ForwardOptions& options) {
  validate_case(c);
  const ModelConfig& cfg = model.config();
  const bool disc = cfg.mode == DialogMode::kDiscriminative;
  const bool dialog_losses = !options.description_only && (disc || options.dialog_supervision);
  if (dialog_losses && disc && candidates == nullptr) {
    throw std::invalid_argument("discriminative training needs a candidate set");
  }
  const SharedModules& shared = model.shared();
  CaseForward out;
  const QBot::Visual visual = model.qbot().prepare_visual(g, QBotInputs::from_features(features, cfg.ablations.qbot_frames));
  std::optional<ABotEpisode> abot;
  if (dialog_losses) abot = model.abot().episode(g, ABotInputs::from_case(features, c, vocab));

  Var q_keys, a_keys;
  if (dialog_losses && disc) {
    std::vector<std::vector<int>> qs, as;
    for (const Tokens& t : candidates->questions) qs.push_back(encodable(vocab.encode(t)));
    for (const Tokens& t : candidates->answers) as.push_back(encodable(vocab.encode(t)));
    q_keys = model.qbot().candidate_keys(g, shared.encode(g, EncoderRole::kQuestionCandidate, qs));
    a_keys = model.abot().candidate_keys(g, shared.encode(g, EncoderRole::kAnswerCandidate, as));
  }

  HistoryState history = initial_history(g, shared);
  for (int r = 1; r <= kRoundsPerDialog; ++r) {
    const QaPair& pair = c.qa_pairs[static_cast<std::size_t>(r - 1)];
    const std::vector<int> q_ids = vocab.encode(pair.question);
    const std::vector<int> a_ids = vocab.encode(pair.answer);
    Var q_enc = shared.encode(g, EncoderRole::kQuestionCandidate, {encodable(q_ids)});
    if (dialog_losses && r >= options.start_round) {
      const QBotContext qctx = model.qbot().context(g, visual, history.view(), r);
      const ABotContext actx = model.abot().context(g, *abot, history.view(), q_enc, r);
      if (disc) {
        const auto gq = candidates->gt_question[static_cast<std::size_t>(r - 1)];
        const auto ga = candidates->gt_answer[static_cast<std::size_t>(r - 1)];
        if (gq < 0 || ga < 0) throw std::logic_error("candidate set lacks the ground truth of round " + std::to_string(r));
        InternalRecord qr = score_selection(g, q_keys, model.qbot().selection_query(g, qctx),
                                            candidates->clustered() ? &candidates->question_clusters : nullptr, gq);
        qr.question = true;
        qr.round = r;
        InternalRecord ar = score_selection(g, a_keys, model.abot().selection_query(g, actx),
                                            candidates->clustered() ? &candidates->answer_clusters : nullptr, ga);
        ar.question = false;
        ar.round = r;
        out.records.push_back(std::move(qr));
        out.records.push_back(std::move(ar));
      } else {
        const auto qt = with_eos(q_ids, Vocabulary::kEos);
        const auto at = with_eos(a_ids, Vocabulary::kEos);
        out.question_nll = add_or_init(out.question_nll, ops::cross_entropy(model.qbot().question_logits(g, qctx, q_ids), qt));
        out.answer_nll = add_or_init(out.answer_nll, ops::cross_entropy(model.abot().answer_logits(g, actx, a_ids), at));
        out.question_tokens += static_cast<int>(qt.size());
        out.answer_tokens += static_cast<int>(at.size());
      }
    }
    update_history(g, shared, vocab, history, pair, q_enc);
  }
  const QBotContext final_ctx = model.qbot().context(g, visual, history.view(), kRoundsPerDialog + 1);
  const std::vector<int> s_ids = vocab.encode(c.final_description);
  const auto st = with_eos(s_ids, Vocabulary::kEos);
  out.description_nll = ops::cross_entropy(model.qbot().description_logits(g, final_ctx, s_ids), st);
  out.description_tokens = static_cast<int>(st.size());
  return out;
}

TrainingDiverged::TrainingDiverged(int epoch_, int step_, double loss)
    : std::runtime_error("non-finite training loss " + std::to_string(loss) + " at epoch " + std::to_string(epoch_) +
                         ", step " + std::to_string(step_)),
      epoch(epoch_),
      step(step_) {}

ParameterSnapshot snapshot(const ParameterStore& store) {
  ParameterSnapshot s;
  for (const Parameter* p : store.all()) s[p->name] = p->value;
  return s;
}

void restore(ParameterStore& store, const ParameterSnapshot& s) {
  for (Parameter* p : store.all()) {
    auto it = s.find(p->name);
    if (it == s.end()) throw std::invalid_argument("snapshot lacks parameter " + p->name);
    p->value = it->second;
  }
}

Adam::Adam(double learning_rate, double beta1, double beta2, double eps)
    : lr_(learning_rate), b1_(beta1), b2_(beta2), eps_(eps) {}

void Adam::step(ParameterStore& store) {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (Parameter* p : store.all()) {
    auto [it, fresh] = moments_.try_emplace(p);
    if (fresh) {
      it->second.first = Matrix::Zero(p->value.rows(), p->value.cols());
      it->second.second = Matrix::Zero(p->value.rows(), p->value.cols());
    }
    Matrix& m = it->second.first;
    Matrix& v = it->second.second;
    m = b1_ * m + (1.0 - b1_) * p->grad;
    v = b2_ * v + (1.0 - b2_) * p->grad.cwiseAbs2();
    p->value.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  }
}

bool should_stop_early(std::span<const double> val_perplexities, int patience) {
  if (val_perplexities.empty()) return false;
  const auto best = std::min_element(val_perplexities.begin(), val_perplexities.end());
  return val_perplexities.end() - best - 1 >= patience;
}

Trainer::Trainer(Model& model, const Vocabulary& vocab, std::vector<const DialogCase*> train,
                 std::vector<const DialogCase*> val, const FeatureStore& features, TrainConfig config, std::ostream* log)
    : model_(model),
      vocab_(vocab),
      train_(std::move(train)),
      val_(std::move(val)),
      features_(features),
      cfg_(config),
      log_(log),
      adam_(config.learning_rate) {
  if (train_.empty()) throw std::invalid_argument("training split is empty");
  if (cfg_.lambda_internal < 0.0 || cfg_.lambda_internal > 1.0) throw std::invalid_argument("lambda must be in [0, 1]");
  if (cfg_.batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (log_) {
    *log_ << "parameters: " << model_.parameters().scalar_count() << " (" << to_string(model_.config().mode)
          << " mode)\n";
  }
  if (model_.config().mode != DialogMode::kDiscriminative) return;
  std::vector<DialogCase> owned;
  for (const DialogCase* c : train_) owned.push_back(*c);
  const std::vector<QaPair> pool = training_pool(owned);
  const auto tokens = vocab_.content_tokens();
  const WordVectorTable table = WordVectorTable::random(tokens, cfg_.word_vector_dim, cfg_.seed);
  bool warned = false;
  for (std::size_t i = 0; i < train_.size(); ++i) {
    const DialogCase* c = train_[i];
    int size = cfg_.candidate_pool;
    const int capacity = training_pool_capacity(*c, pool, cfg_.start_round);
    if (capacity < size) {
      if (log_ && !warned) {
        *log_ << "warning: the training pool supplies only " << capacity << " candidates for " << c->video_id
              << " (requested " << size << "); using what is available\n";
        warned = true;
      }
      size = capacity;
    }
    CandidateSet set = build_training_candidates(*c, pool, cfg_.seed + i, cfg_.start_round, size);
    const int k = std::min<int>(cfg_.clusters, static_cast<int>(set.questions.size()));
    if (k > 1) cluster_candidate_set(set, table, k, cfg_.seed + i);
    candidates_.emplace(c, std::move(set));
  }
}

const CandidateSet* Trainer::candidates_for(const DialogCase* c) const {
  auto it = candidates_.find(c);
  return it == candidates_.end() ? nullptr : &it->second;
}

EpochStats Trainer::run_epoch(bool ce_only) {
  const auto t0 = std::chrono::steady_clock::now();
  ++epoch_;
  EpochStats stats;
  stats.epoch = epoch_;
  stats.ce_only = ce_only;
  const bool disc = model_.config().mode == DialogMode::kDiscriminative;
  const bool use_internal = disc && cfg_.reasoning && !ce_only;
  const double lambda = use_internal ? cfg_.lambda_internal : 0.0;

  std::vector<const DialogCase*> order = train_;
  Rng rng(cfg_.seed * 1000003ULL + static_cast<std::uint64_t>(epoch_));
  shuffle_in_place(order, rng);

  ForwardOptions fo;
  fo.start_round = cfg_.start_round;
  fo.dialog_supervision = cfg_.dialog_supervision;
  double desc_total = 0.0, internal_total = 0.0, loss_total = 0.0;
  long desc_tokens = 0, records = 0, batches = 0;
  int q_hit = 0, q_n = 0, a_hit = 0, a_n = 0;
  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg_.batch_size)) {
    const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg_.batch_size));
    model_.parameters().zero_grad();
    struct Item {
      std::unique_ptr<Graph> g;
      CaseForward f;
    };
    // Denominators are batch-wide, so every graph is built before any
    // backward pass.
    std::vector<Item> items;
    int bd = 0, bq = 0, ba = 0, br = 0;
    for (std::size_t i = start; i < end; ++i) {
      Item it{std::make_unique<Graph>(), {}};
      const VideoFeatures f = features_.get(order[i]->video_id);
      it.f = forward_case(*it.g, model_, vocab_, *order[i], f, candidates_for(order[i]), fo);
      bd += it.f.description_tokens;
      bq += it.f.question_tokens;
      ba += it.f.answer_tokens;
      br += static_cast<int>(it.f.records.size());
      items.push_back(std::move(it));
    }
    double batch_loss = 0.0;
    for (Item& it : items) {
      Graph& g = *it.g;
      const double ce_weight = disc ? 1.0 - lambda : 1.0;
      Var loss = ops::scale(it.f.description_nll, ce_weight / bd);
      desc_total += it.f.description_nll.scalar();
      if (!disc && it.f.question_nll.valid()) {
        loss = ops::add(loss, ops::scale(it.f.question_nll, 1.0 / bq));
        loss = ops::add(loss, ops::scale(it.f.answer_nll, 1.0 / ba));
      }
      for (const InternalRecord& r : it.f.records) {
        Var term;
        if (r.cluster.nll.valid() && r.cluster.wrong) term = r.cluster.nll;
        if (r.candidate.wrong) term = add_or_init(term, r.candidate.nll);
        if (term.valid()) {
          if (cfg_.literal_internal) term = ops::scale(term, -1.0);
          internal_total += term.scalar();
          if (lambda > 0.0) loss = ops::add(loss, ops::scale(term, lambda / br));
        }
        const bool hit = r.selected == r.gt;
        if (r.question) {
          ++q_n;
          q_hit += hit;
        } else {
          ++a_n;
          a_hit += hit;
        }
      }
      batch_loss += loss.scalar();
      if (!std::isfinite(loss.scalar())) throw TrainingDiverged(epoch_, step_, loss.scalar());
      g.backward(loss);
    }
    desc_tokens += bd;
    records += br;
    adam_.step(model_.parameters());
    ++step_;
    ++batches;
    loss_total += batch_loss;
  }
  stats.loss = loss_total / static_cast<double>(std::max<long>(batches, 1));
  stats.description_ce = desc_total / static_cast<double>(std::max<long>(desc_tokens, 1));
  stats.internal = records > 0 ? internal_total / static_cast<double>(records) : 0.0;
  if (q_n > 0) stats.question_ratio = static_cast<double>(q_hit) / q_n;
  if (a_n > 0) stats.answer_ratio = static_cast<double>(a_hit) / a_n;
  stats.val_perplexity = perplexity(val_.empty() ? train_ : val_);
  stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (log_) {
    *log_ << "epoch " << stats.epoch << (ce_only ? " (ce only)" : "") << ": loss " << stats.loss << ", description ce "
          << stats.description_ce << ", val perplexity " << stats.val_perplexity;
    if (stats.question_ratio) *log_ << ", gt selection q " << *stats.question_ratio << " a " << *stats.answer_ratio;
    *log_ << " [" << stats.seconds << "s]\n";
  }
  return stats;
}

double Trainer::perplexity(std::span<const DialogCase* const> cases) const {
  if (cases.empty()) throw std::invalid_argument("perplexity of an empty split");
  ForwardOptions fo;
  fo.description_only = true;
  double nll = 0.0;
  std::size_t tokens = 0;
  for (const DialogCase* c : cases) {
    Graph g;
    const VideoFeatures f = features_.get(c->video_id);
    const CaseForward cf = forward_case(g, model_, vocab_, *c, f, nullptr, fo);
    nll += cf.description_nll.scalar();
    tokens += static_cast<std::size_t>(cf.description_tokens);
  }
  return perplexity_from_nll(nll, tokens);
}

EvalStats Trainer::evaluate() const {
  ForwardOptions fo;
  fo.start_round = cfg_.start_round;
  double nll = 0.0;
  long tokens = 0;
  int q_hit = 0, q_n = 0, a_hit = 0, a_n = 0;
  for (const DialogCase* c : train_) {
    Graph g;
    const VideoFeatures f = features_.get(c->video_id);
    const CaseForward cf = forward_case(g, model_, vocab_, *c, f, candidates_for(c), fo);
    nll += cf.description_nll.scalar();
    tokens += cf.description_tokens;
    for (const InternalRecord& r : cf.records) {
      (r.question ? q_n : a_n) += 1;
      (r.question ? q_hit : a_hit) += r.selected == r.gt;
    }
  }
  EvalStats s;
  s.description_ce = nll / static_cast<double>(std::max<long>(tokens, 1));
  if (q_n > 0) s.question_ratio = static_cast<double>(q_hit) / q_n;
  if (a_n > 0) s.answer_ratio = static_cast<double>(a_hit) / a_n;
  return s;
}

TrainResult Trainer::train(const std::function<bool(const EpochStats&)>& stop) {
  TrainResult result;
  std::vector<double> ppl;
  ParameterSnapshot best = snapshot(model_.parameters());
  result.best_val_perplexity = std::numeric_limits<double>::infinity();
  auto record = [&](const EpochStats& s) {
    result.epochs.push_back(s);
    if (s.val_perplexity < result.best_val_perplexity) {
      result.best_val_perplexity = s.val_perplexity;
      result.best_epoch = s.epoch;
      best = snapshot(model_.parameters());
    }
    return stop && stop(s);
  };
  bool halted = false;
  for (int e = 0; e < cfg_.max_epochs; ++e) {
    const EpochStats s = run_epoch(false);
    ppl.push_back(s.val_perplexity);
    if (record(s)) {
      halted = true;
      break;
    }
    if (should_stop_early(ppl, cfg_.patience)) {
      result.early_stopped = true;
      break;
    }
  }
  if (!halted) {
    for (int e = 0; e < cfg_.ce_only_tail_epochs; ++e) {
      if (record(run_epoch(true))) break;
    }
  }
  restore(model_.parameters(), best);
  return result;
}

namespace {

constexpr char kMagic[] = "QACKPT1\n";

template <typename T>
void put_le(std::ostream& out, T v) {
  unsigned char b[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<unsigned char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
T get_le(std::istream& in, const std::string& path) {
  unsigned char b[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(b), sizeof(T))) throw std::runtime_error("truncated checkpoint: " + path);
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return static_cast<T>(v);
}

}  // namespace

void write_checkpoint(const std::string& path, const Model& model, const Vocabulary& vocab, int epoch,
                      double val_perplexity, const nlohmann::json& extra) {
  nlohmann::json header = {{"config", to_json(model.config())},
                           {"vocab", vocab.content_tokens()},
                           {"vocab_hash", vocab.hash()},
                           {"epoch", epoch},
                           {"val_perplexity", val_perplexity},
                           {"extra", extra}};
  const std::string h = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  out.write(kMagic, sizeof(kMagic) - 1);
  put_le<std::uint64_t>(out, h.size());
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  for (const Parameter* p : model.parameters().all()) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p->value.rows()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p->value.cols()));
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(p->value.data()[i])));
    }
  }
  if (!out) throw std::runtime_error("failed writing checkpoint " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint not found: " + path);
  char magic[sizeof(kMagic) - 1];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    throw std::runtime_error("not a checkpoint: " + path);
  }
  const auto hlen = get_le<std::uint64_t>(in, path);
  std::string h(hlen, '\0');
  if (!in.read(h.data(), static_cast<std::streamsize>(hlen))) throw std::runtime_error("truncated checkpoint: " + path);
  const nlohmann::json header = nlohmann::json::parse(h);
  Checkpoint ck;
  ck.vocab = Vocabulary::from_tokens(header.at("vocab").get<std::vector<std::string>>());
  if (ck.vocab.hash() != header.at("vocab_hash").get<std::uint64_t>()) {
    throw std::runtime_error("checkpoint vocabulary hash mismatch: " + path);
  }
  ck.model = std::make_unique<Model>(model_config_from_json(header.at("config")));
  ck.epoch = header.at("epoch").get<int>();
  ck.val_perplexity = header.at("val_perplexity").get<double>();
  ck.extra = header.value("extra", nlohmann::json::object());
  ParameterStore& store = ck.model->parameters();
  std::size_t seen = 0;
  while (in.peek() != std::char_traits<char>::eof()) {
    const auto n = get_le<std::uint32_t>(in, path);
    std::string name(n, '\0');
    if (!in.read(name.data(), n)) throw std::runtime_error("truncated checkpoint: " + path);
    const auto rows = get_le<std::uint32_t>(in, path);
    const auto cols = get_le<std::uint32_t>(in, path);
    if (!store.contains(name)) throw std::runtime_error("checkpoint has unknown parameter " + name);
    Parameter& p = store.get(name);
    if (p.value.rows() != rows || p.value.cols() != cols) {
      throw std::runtime_error("checkpoint parameter " + name + " has the wrong shape");
    }
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      p.value.data()[i] = static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(in, path)));
    }
    ++seen;
  }
  if (seen != store.all().size()) throw std::runtime_error("checkpoint is missing parameters: " + path);
  return ck;
}

}  // namespace qacoop
