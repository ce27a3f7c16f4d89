#include "qacoop/cli.h"

#include <openssl/evp.h>

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "qacoop/pipeline.h"
#include "qacoop/service.h"
#include "qacoop/training.h"

namespace qacoop {

namespace fs = std::filesystem;
using nlohmann::json;

std::string git_blob_hash(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + file.string());
  const std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string header = "blob " + std::to_string(body.size()) + std::string(1, '\0');
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
  EVP_DigestUpdate(ctx, header.data(), header.size());
  EVP_DigestUpdate(ctx, body.data(), body.size());
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

namespace {

class RunFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Paths {
  fs::path data;
  fs::path dialogs() const { return data / "dialogs.json"; }
  fs::path features() const { return data / "features" / "manifest.json"; }
};

fs::path default_data_dir() {
  const char* env = std::getenv("QACOOP_DATA_DIR");
  return env && *env ? fs::path(env) : fs::path("data");
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RunFailure("cannot write " + path.string());
  out << text;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw RunFailure("cannot read " + path.string());
  return json::parse(in);
}

// Every option of the subcommand with its resolved value.
json resolved_options(const CLI::App& app) {
  json j = json::object();
  for (const CLI::Option* opt : app.get_options()) {
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help") continue;
    if (opt->get_expected_min() == 0) {
      j[name] = opt->count() > 0;
    } else if (opt->count() > 0) {
      j[name] = opt->as<std::string>();
    } else {
      j[name] = opt->get_default_str();
    }
  }
  return j;
}

struct Manifest {
  std::string command;
  std::vector<std::string> argv;
  json options;
  std::uint64_t seed = 0;
  json inputs = json::object();
  json outputs = json::object();
  std::optional<std::string> checkpoint_hash;

  void write(const fs::path& path) const {
    json j{{"command", command}, {"argv", argv}, {"options", options}, {"seed", seed},
           {"inputs", inputs},   {"outputs", outputs}};
    if (checkpoint_hash) j["checkpoint_hash"] = *checkpoint_hash;
    write_text(path, j.dump(2) + "\n");
  }
};

Dataset load_data(const Paths& p) {
  if (!fs::exists(p.dialogs())) throw RunFailure("no dataset at " + p.dialogs().string());
  return ingest_dataset(p.dialogs());
}

FeatureStore load_features(const Paths& p) {
  if (!fs::exists(p.features())) throw RunFailure("no feature manifest at " + p.features().string());
  return FeatureStore::load(p.features());
}

Checkpoint load_checkpoint(const fs::path& path) {
  if (!fs::exists(path)) throw RunFailure("checkpoint not found: " + path.string());
  return read_checkpoint(path.string());
}

std::vector<DialogCase> split_or_train(const Dataset& d, const std::string& split, std::ostream& out) {
  std::vector<DialogCase> cases = d.split(parse_split(split));
  if (cases.empty() && split != "train") {
    out << "warning: split '" << split << "' is empty; using the train split\n";
    cases = d.split(Split::kTrain);
  }
  if (cases.empty()) throw RunFailure("no cases to use");
  return cases;
}

struct ToyArgs {
  std::uint64_t seed = 7;
  int n = 8;
  int vocab = 64;
};

struct PrepareArgs {
  std::string dialogs, features;
  int min_count = 1;
};

struct ClusterArgs {
  std::string split = "train";
  int clusters = 10;
  std::uint64_t seed = 1;
  std::string word_vectors;
  int word_vector_dim = 50;
  std::string out;
};

struct TrainArgs {
  std::string out;
  std::string mode = "disc";
  std::string attention = "mm";
  bool no_av_lstm = false, no_reasoning = false, no_audio = false, no_caption = false, no_history_abot = false;
  bool no_dynamic_update = false, literal_internal = false, shuffle_history = false;
  std::string qbot_frames = "segmented2";
  int start_round = 1;
  int clusters = 10;
  double lambda = 0.1;
  double lr = 1e-3;
  int batch_size = 64;
  std::uint64_t seed = 1;
  int epochs = 100;
  int patience = 2;
  int ce_tail = 3;
  int dims_divisor = 1;
  int candidate_pool = 100;
  int word_vector_dim = 50;
};

struct EvalArgs {
  std::string checkpoint, out, split = "test", candidates, word_vectors;
  bool strong_baseline = false, simulated_human = false, no_dialog = false, shuffle_history = false;
  int start_round = 0;
  int beam_width = 3;
  int clusters = 10;
  std::uint64_t seed = 1;
  int word_vector_dim = 50;
};

struct ServeArgs {
  std::string checkpoint, host = "127.0.0.1", transcripts;
  int port = 8080;
  int beam_width = 3;
  int clusters = 10;
  std::uint64_t seed = 1;
  int idle_minutes = 30;
};

int run_toy(const Paths& p, const ToyArgs& a, Manifest m, std::ostream& out) {
  const ToyCorpus toy = synthesize_toy_corpus(a.seed, a.n, a.vocab);
  fs::create_directories(p.data);
  write_dataset(p.dialogs(), toy.cases);
  toy.features.write(p.features().parent_path());
  m.seed = a.seed;
  m.outputs = {{"dialogs", p.dialogs().string()}, {"features", p.features().string()}};
  m.write(p.data / "manifest.toy.json");
  out << "wrote " << toy.cases.size() << " toy cases to " << p.data.string() << "\n";
  return 0;
}

int run_prepare(const Paths& p, const PrepareArgs& a, Manifest m, std::ostream& out) {
  const Dataset d = ingest_dataset(a.dialogs, a.min_count);
  const FeatureStore features = FeatureStore::load(a.features);
  FeatureStore copy;
  for (const DialogCase& c : d.cases) {
    if (!features.contains(c.video_id)) throw RunFailure("no features for video " + c.video_id);
    copy.insert(c.video_id, features.get(c.video_id));
  }
  fs::create_directories(p.data);
  write_dataset(p.dialogs(), d.cases);
  copy.write(p.features().parent_path());
  std::ostringstream vocab;
  for (const auto& t : d.vocab.content_tokens()) vocab << t << "\n";
  write_text(p.data / "vocab.txt", vocab.str());
  m.inputs = {{"dialogs", a.dialogs}, {"features", a.features}};
  m.outputs = {{"dialogs", p.dialogs().string()}, {"features", p.features().string()},
               {"vocab", (p.data / "vocab.txt").string()}};
  m.write(p.data / "manifest.prepare.json");
  out << "prepared " << d.cases.size() << " cases, vocabulary " << d.vocab.size() << "\n";
  return 0;
}

int run_cluster(const Paths& p, const ClusterArgs& a, Manifest m, std::ostream& out) {
  const Dataset d = load_data(p);
  const std::vector<DialogCase> cases = split_or_train(d, a.split, out);
  std::optional<WordVectorTable> table;
  if (!a.word_vectors.empty()) table = WordVectorTable::load(a.word_vectors);
  const CandidateSet set =
      inference_candidate_set(d.vocab, cases, a.clusters, a.seed, table ? &*table : nullptr, a.word_vector_dim);
  const fs::path target = a.out.empty() ? p.data / ("candidates." + a.split + ".json") : fs::path(a.out);
  write_text(target, to_json(set).dump() + "\n");
  m.seed = a.seed;
  m.inputs = {{"dialogs", p.dialogs().string()}};
  if (table) m.inputs["word_vectors"] = a.word_vectors;
  m.outputs = {{"candidates", target.string()}};
  m.write(target.parent_path() / "manifest.cluster.json");
  out << "clustered " << set.questions.size() << " questions and " << set.answers.size() << " answers into "
      << set.question_clusters.k << "/" << set.answer_clusters.k << " clusters\n";
  return 0;
}

int run_train(const Paths& p, const TrainArgs& a, Manifest m, std::ostream& out) {
  const Dataset d = load_data(p);
  const FeatureStore features = load_features(p);
  std::vector<DialogCase> train = d.split(Split::kTrain);
  std::vector<DialogCase> val = d.split(Split::kVal);
  if (train.empty()) throw RunFailure("the train split is empty");
  if (a.shuffle_history) {
    for (std::size_t i = 0; i < train.size(); ++i) train[i] = shuffle_history(train[i], a.seed + i);
  }

  ModelConfig mc;
  mc.mode = parse_mode(a.mode);
  mc.dims = a.dims_divisor > 1 ? ModelDims::reduced(a.dims_divisor) : ModelDims::full();
  mc.ablations.attention = parse_attention(a.attention);
  mc.ablations.av_lstm = !a.no_av_lstm;
  mc.ablations.audio = !a.no_audio;
  mc.ablations.caption = !a.no_caption;
  mc.ablations.history_abot = !a.no_history_abot;
  mc.ablations.qbot_frames = parse_qbot_frames(a.qbot_frames);
  mc.ablations.dynamic_update = !a.no_dynamic_update;
  mc.vocab_size = d.vocab.size();
  mc.seed = a.seed;
  Model model(mc);

  TrainConfig tc;
  tc.learning_rate = a.lr;
  tc.batch_size = a.batch_size;
  tc.lambda_internal = a.lambda;
  tc.reasoning = !a.no_reasoning;
  tc.literal_internal = a.literal_internal;
  tc.ce_only_tail_epochs = a.ce_tail;
  tc.patience = a.patience;
  tc.max_epochs = a.epochs;
  tc.start_round = a.start_round;
  tc.candidate_pool = a.candidate_pool;
  tc.clusters = a.clusters;
  tc.word_vector_dim = a.word_vector_dim;
  tc.seed = a.seed;

  std::vector<const DialogCase*> tr, va;
  for (const auto& c : train) tr.push_back(&c);
  for (const auto& c : val) va.push_back(&c);
  Trainer trainer(model, d.vocab, tr, va, features, tc, &out);
  const TrainResult result = trainer.train();

  const fs::path ckpt = a.out.empty() ? p.data / "model.ckpt" : fs::path(a.out);
  if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
  write_checkpoint(ckpt.string(), model, d.vocab, result.best_epoch, result.best_val_perplexity,
                   {{"train", to_json(tc)}});

  json history = json::array();
  for (const EpochStats& s : result.epochs) {
    json e{{"epoch", s.epoch},       {"ce_only", s.ce_only},   {"loss", s.loss},
           {"description_ce", s.description_ce}, {"internal", s.internal}, {"val_perplexity", s.val_perplexity},
           {"seconds", s.seconds}};
    if (s.question_ratio) e["question_ratio"] = *s.question_ratio;
    if (s.answer_ratio) e["answer_ratio"] = *s.answer_ratio;
    history.push_back(e);
  }
  const fs::path log = fs::path(ckpt.string() + ".history.json");
  write_text(log, json{{"best_epoch", result.best_epoch},
                       {"best_val_perplexity", result.best_val_perplexity},
                       {"early_stopped", result.early_stopped},
                       {"epochs", history}}
                      .dump(2) + "\n");

  m.seed = a.seed;
  m.options["resolved_model"] = to_json(mc);
  m.options["resolved_train"] = to_json(tc);
  m.inputs = {{"dialogs", p.dialogs().string()}, {"features", p.features().string()}};
  m.outputs = {{"checkpoint", ckpt.string()}, {"history", log.string()}};
  m.checkpoint_hash = git_blob_hash(ckpt);
  m.write(fs::path(ckpt.string() + ".manifest.json"));
  out << "saved " << ckpt.string() << " (best epoch " << result.best_epoch << ", perplexity "
      << result.best_val_perplexity << ")\n";
  return 0;
}

int run_eval(const Paths& p, const EvalArgs& a, Manifest m, std::ostream& out) {
  const fs::path ckpt_path = a.checkpoint.empty() ? p.data / "model.ckpt" : fs::path(a.checkpoint);
  const Checkpoint ck = load_checkpoint(ckpt_path);
  const Dataset d = load_data(p);
  const FeatureStore features = load_features(p);
  const std::vector<DialogCase> cases = split_or_train(d, a.split, out);

  std::optional<CandidateSet> loaded;
  if (!a.candidates.empty()) {
    if (!fs::exists(a.candidates)) throw RunFailure("candidate file not found: " + a.candidates);
    loaded = candidate_set_from_json(read_json(a.candidates));
  }
  std::optional<WordVectorTable> table;
  if (!a.word_vectors.empty()) table = WordVectorTable::load(a.word_vectors);

  EvalOptions eo;
  eo.strong_baseline = a.strong_baseline;
  eo.simulated_human = a.simulated_human;
  eo.no_dialog = a.no_dialog;
  if (a.start_round > 0) eo.start_round = a.start_round;
  eo.shuffle_history = a.shuffle_history;
  eo.beam_width = a.beam_width;
  eo.clusters = a.clusters;
  eo.seed = a.seed;
  eo.word_vectors = table ? &*table : nullptr;
  eo.word_vector_dim = a.word_vector_dim;
  eo.candidates = loaded ? &*loaded : nullptr;
  const EvalOutput r = evaluate_dialogs(*ck.model, ck.vocab, cases, features, eo);

  const fs::path dir = a.out.empty() ? p.data / "eval" : fs::path(a.out);
  json metrics = to_json(r.report);
  metrics["transcripts"] = r.transcripts.size();
  metrics["question_selection_ratio"] = r.ratios.question ? json(*r.ratios.question) : json(nullptr);
  metrics["answer_selection_ratio"] = r.ratios.answer ? json(*r.ratios.answer) : json(nullptr);
  write_text(dir / "metrics.json", metrics.dump(2) + "\n");
  write_text(dir / "transcripts.jsonl", to_jsonl(r.transcripts));

  m.seed = a.seed;
  m.options["resolved_model"] = to_json(ck.model->config());
  m.inputs = {{"checkpoint", ckpt_path.string()}, {"dialogs", p.dialogs().string()},
              {"features", p.features().string()}};
  if (loaded) m.inputs["candidates"] = a.candidates;
  m.outputs = {{"metrics", (dir / "metrics.json").string()}, {"transcripts", (dir / "transcripts.jsonl").string()}};
  m.checkpoint_hash = git_blob_hash(ckpt_path);
  m.write(dir / "manifest.json");
  out << r.transcripts.size() << " episodes; CIDEr " << r.report.cider * 100 << ", BLEU4 " << r.report.bleu[3] * 100
      << "\n";
  return 0;
}

int run_serve(const Paths& p, const ServeArgs& a, Manifest m, std::ostream& out) {
  const fs::path ckpt_path = a.checkpoint.empty() ? p.data / "model.ckpt" : fs::path(a.checkpoint);
  const Checkpoint ck = load_checkpoint(ckpt_path);
  std::vector<DialogCase> cases;
  if (fs::exists(p.dialogs())) cases = load_data(p).cases;
  FeatureStore features;
  if (fs::exists(p.features())) features = load_features(p);

  ServiceConfig sc;
  sc.idle_timeout = std::chrono::minutes(a.idle_minutes);
  sc.transcript_log = a.transcripts.empty() ? p.data / "sessions.jsonl" : fs::path(a.transcripts);
  sc.beam_width = a.beam_width;
  sc.clusters = a.clusters;
  sc.seed = a.seed;
  SessionManager sessions(*ck.model, ck.vocab, std::move(cases), std::move(features), sc);
  HttpService http(sessions);
  const int port = http.bind(a.host, a.port);
  if (port < 0) throw RunFailure("cannot bind " + a.host + ":" + std::to_string(a.port));

  m.seed = a.seed;
  m.inputs = {{"checkpoint", ckpt_path.string()}};
  m.outputs = {{"transcripts", sc.transcript_log.string()}, {"port", port}};
  m.checkpoint_hash = git_blob_hash(ckpt_path);
  m.write(sc.transcript_log.parent_path() / "manifest.chat-serve.json");
  out << "listening on http://" << a.host << ":" << port << std::endl;
  http.serve();
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cooperative video description agents", "qacoop"};
  app.require_subcommand(1);
  Paths paths{default_data_dir()};
  std::string data_dir = paths.data.string();

  auto data_opt = [&](CLI::App* sub) {
    sub->add_option("--data", data_dir, "data directory (default $QACOOP_DATA_DIR or ./data)");
  };

  ToyArgs toy;
  CLI::App* toy_cmd = app.add_subcommand("toy", "write a synthetic corpus");
  data_opt(toy_cmd);
  toy_cmd->add_option("--seed", toy.seed)->capture_default_str();
  toy_cmd->add_option("--n", toy.n, "number of dialogs")->capture_default_str()->check(CLI::PositiveNumber);
  toy_cmd->add_option("--vocab", toy.vocab, "vocabulary bound")->capture_default_str();

  PrepareArgs prep;
  CLI::App* prep_cmd = app.add_subcommand("prepare", "validate and copy a dataset with its features");
  data_opt(prep_cmd);
  prep_cmd->add_option("--dialogs", prep.dialogs)->required();
  prep_cmd->add_option("--features", prep.features, "feature manifest")->required();
  prep_cmd->add_option("--min-count", prep.min_count)->capture_default_str();

  ClusterArgs cl;
  CLI::App* cl_cmd = app.add_subcommand("cluster", "build and cluster an inference candidate pool");
  data_opt(cl_cmd);
  cl_cmd->add_option("--split", cl.split)->capture_default_str()->check(CLI::IsMember({"train", "val", "test"}));
  cl_cmd->add_option("--clusters", cl.clusters)->capture_default_str();
  cl_cmd->add_option("--seed", cl.seed)->capture_default_str();
  cl_cmd->add_option("--word-vectors", cl.word_vectors);
  cl_cmd->add_option("--word-vector-dim", cl.word_vector_dim)->capture_default_str();
  cl_cmd->add_option("--out", cl.out);

  TrainArgs tr;
  CLI::App* tr_cmd = app.add_subcommand("train", "train both agents");
  data_opt(tr_cmd);
  tr_cmd->add_option("--out", tr.out, "checkpoint path");
  tr_cmd->add_option("--mode", tr.mode)->capture_default_str()->check(CLI::IsMember({"gen", "disc"}));
  tr_cmd->add_option("--attention", tr.attention)->capture_default_str()->check(CLI::IsMember({"mm", "im", "none"}));
  tr_cmd->add_flag("--no-av-lstm", tr.no_av_lstm);
  tr_cmd->add_flag("--no-reasoning", tr.no_reasoning, "disable the internal selection loss");
  tr_cmd->add_flag("--literal-internal", tr.literal_internal);
  tr_cmd->add_flag("--no-audio", tr.no_audio);
  tr_cmd->add_flag("--no-caption", tr.no_caption);
  tr_cmd->add_flag("--no-history-abot", tr.no_history_abot);
  tr_cmd->add_flag("--no-dynamic-update", tr.no_dynamic_update);
  tr_cmd->add_option("--qbot-frames", tr.qbot_frames)
      ->capture_default_str()
      ->check(CLI::IsMember({"segmented2", "none", "full"}));
  tr_cmd->add_flag("--shuffle-history", tr.shuffle_history);
  tr_cmd->add_option("--start-round", tr.start_round)->capture_default_str()->check(CLI::Range(1, 10));
  tr_cmd->add_option("--clusters", tr.clusters)->capture_default_str();
  tr_cmd->add_option("--lambda", tr.lambda)->capture_default_str()->check(CLI::Range(0.0, 1.0));
  tr_cmd->add_option("--lr", tr.lr)->capture_default_str();
  tr_cmd->add_option("--batch-size", tr.batch_size)->capture_default_str()->check(CLI::PositiveNumber);
  tr_cmd->add_option("--seed", tr.seed)->capture_default_str();
  tr_cmd->add_option("--epochs", tr.epochs)->capture_default_str();
  tr_cmd->add_option("--patience", tr.patience)->capture_default_str();
  tr_cmd->add_option("--ce-tail", tr.ce_tail, "CE-only epochs at the end")->capture_default_str();
  tr_cmd->add_option("--dims-divisor", tr.dims_divisor, "shrink every embedding size")->capture_default_str();
  tr_cmd->add_option("--candidate-pool", tr.candidate_pool)->capture_default_str();
  tr_cmd->add_option("--word-vector-dim", tr.word_vector_dim)->capture_default_str();

  EvalArgs ev;
  CLI::App* ev_cmd = app.add_subcommand("eval", "run test dialogs and score the descriptions");
  data_opt(ev_cmd);
  ev_cmd->add_option("--checkpoint", ev.checkpoint);
  ev_cmd->add_option("--out", ev.out, "output directory");
  ev_cmd->add_option("--split", ev.split)->capture_default_str()->check(CLI::IsMember({"train", "val", "test"}));
  ev_cmd->add_flag("--strong-baseline", ev.strong_baseline);
  ev_cmd->add_flag("--simulated-human", ev.simulated_human);
  ev_cmd->add_flag("--no-dialog", ev.no_dialog);
  ev_cmd->add_flag("--shuffle-history", ev.shuffle_history);
  ev_cmd->add_option("--start-round", ev.start_round, "only this start round")->check(CLI::Range(1, 10));
  ev_cmd->add_option("--beam-width", ev.beam_width)->capture_default_str()->check(CLI::PositiveNumber);
  ev_cmd->add_option("--clusters", ev.clusters)->capture_default_str();
  ev_cmd->add_option("--seed", ev.seed)->capture_default_str();
  ev_cmd->add_option("--candidates", ev.candidates, "candidate pool written by cluster");
  ev_cmd->add_option("--word-vectors", ev.word_vectors);
  ev_cmd->add_option("--word-vector-dim", ev.word_vector_dim)->capture_default_str();
  ev_cmd->get_option("--strong-baseline")->excludes("--no-dialog")->excludes("--start-round");

  ServeArgs sv;
  CLI::App* sv_cmd = app.add_subcommand("chat-serve", "serve live-human sessions over HTTP");
  data_opt(sv_cmd);
  sv_cmd->add_option("--checkpoint", sv.checkpoint);
  sv_cmd->add_option("--host", sv.host)->capture_default_str();
  sv_cmd->add_option("--port", sv.port)->capture_default_str();
  sv_cmd->add_option("--transcripts", sv.transcripts, "JSON-lines log of finished sessions");
  sv_cmd->add_option("--beam-width", sv.beam_width)->capture_default_str();
  sv_cmd->add_option("--clusters", sv.clusters)->capture_default_str();
  sv_cmd->add_option("--seed", sv.seed)->capture_default_str();
  sv_cmd->add_option("--idle-minutes", sv.idle_minutes)->capture_default_str();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands()[0]->help());
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    err << (app.get_subcommands().empty() ? app.help() : app.get_subcommands()[0]->help());
    return 2;
  }

  CLI::App* sub = app.get_subcommands()[0];
  paths.data = data_dir;
  Manifest m;
  m.command = sub->get_name();
  m.argv = args;
  m.options = resolved_options(*sub);
  m.options["data"] = paths.data.string();
  try {
    if (sub == toy_cmd) return run_toy(paths, toy, m, out);
    if (sub == prep_cmd) return run_prepare(paths, prep, m, out);
    if (sub == cl_cmd) return run_cluster(paths, cl, m, out);
    if (sub == tr_cmd) return run_train(paths, tr, m, out);
    if (sub == ev_cmd) return run_eval(paths, ev, m, out);
    if (sub == sv_cmd) return run_serve(paths, sv, m, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace qacoop
