// Dialog corpus ingestion, vocabulary, per-video feature tensors and the
// deterministic synthetic corpus used for desk-scale runs.
#ifndef QACOOP_CORPUS_H_
#define QACOOP_CORPUS_H_

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace qacoop {

using Tokens = std::vector<std::string>;

inline constexpr int kRoundsPerDialog = 10;

// Lowercase, punctuation to spaces, split on whitespace. An apostrophe
// between two word characters is kept ("don't" stays one token).
Tokens tokenize(std::string_view text);
std::string join_tokens(const Tokens& tokens);

// The fixed reply a human (or the simulated human) gives to an
// unanswerable question.
const Tokens& dont_know_tokens();

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Split { kTrain, kVal, kTest };
std::string_view split_name(Split s);
Split parse_split(std::string_view name);

struct QaPair {
  Tokens question;
  Tokens answer;
  friend bool operator==(const QaPair&, const QaPair&) = default;
};

struct DialogCase {
  std::string video_id;
  Tokens input_description;
  std::vector<QaPair> qa_pairs;
  Tokens final_description;
  Split split = Split::kTrain;

  friend bool operator==(const DialogCase&, const DialogCase&) = default;
};

// Throws CorpusError naming the video and the violated invariant.
void validate_case(const DialogCase& c);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kSos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kReserved = 4;

  Vocabulary();
  // Counts every token of the training cases; tokens seen at least
  // min_count times get indices in lexicographic order after the reserved
  // block.
  static Vocabulary build(std::span<const DialogCase> cases, int min_count);
  static Vocabulary from_tokens(const std::vector<std::string>& content_tokens);

  int size() const { return static_cast<int>(tokens_.size()); }
  int index(const std::string& token) const;
  const std::string& token(int index) const;
  bool contains(const std::string& token) const { return index_.count(token) != 0; }

  std::vector<int> encode(const Tokens& tokens) const;
  // Stops at EOS; skips PAD and SOS.
  Tokens decode(std::span<const int> ids) const;

  // Content tokens in index order (reserved entries excluded).
  std::vector<std::string> content_tokens() const;
  // FNV-1a over the token list; identifies the vocabulary in checkpoints.
  std::uint64_t hash() const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

struct Dataset {
  std::vector<DialogCase> cases;
  Vocabulary vocab;

  std::vector<DialogCase> split(Split s) const;
};

// Reads {"dialogs": [{"image_id", "caption", "summary", "dialog": [...]}]}.
// An optional per-record "split" field selects train/val/test (default
// train). The vocabulary is built from the train split only.
Dataset ingest_dataset(const std::filesystem::path& path, int vocab_min_count = 1);
Dataset ingest_dataset_text(std::string_view json_text, int vocab_min_count = 1);
std::string serialize_dataset(std::span<const DialogCase> cases);
void write_dataset(const std::filesystem::path& path, std::span<const DialogCase> cases);

// Fixed tensor shapes of the ingested features.
struct FeatureLayout {
  static constexpr int kAbotFrames = 4;
  static constexpr int kAbotLocations = 49;
  static constexpr int kQbotFrames = 2;
  static constexpr int kQbotLocations = 28;
  static constexpr int kChannels = 512;
  static constexpr int kAudio = 256;
};

// One video. Frames are channels x locations (one spatial location per
// column), matching the row-major [frame][location][channel] file layout.
struct VideoFeatures {
  std::vector<Eigen::MatrixXf> abot_frames;
  std::vector<Eigen::MatrixXf> qbot_frames;
  Eigen::VectorXf audio;
};

class FeatureStore {
 public:
  FeatureStore() = default;

  // Parses the manifest and checks every referenced file holds exactly the
  // declared number of float32 values. Tensors are read on access.
  static FeatureStore load(const std::filesystem::path& manifest_path);

  void insert(const std::string& video_id, VideoFeatures features);
  bool contains(const std::string& video_id) const;
  // Throws CorpusError for unknown ids.
  VideoFeatures get(const std::string& video_id) const;
  std::vector<std::string> video_ids() const;
  std::size_t size() const { return entries_.size(); }

  // Writes headerless float32 little-endian tensors plus manifest.json
  // into dir; returns the manifest path.
  std::filesystem::path write(const std::filesystem::path& dir) const;

 private:
  struct FileRef {
    std::filesystem::path path;
    std::vector<int> shape;
  };
  struct Entry {
    std::optional<VideoFeatures> loaded;
    FileRef abot_visual, qbot_visual, audio;
  };
  std::map<std::string, Entry> entries_;
};

FeatureStore load_feature_store(const std::filesystem::path& manifest_path);

// Raw tensor IO shared with the checkpoint writer.
std::vector<float> read_float32_file(const std::filesystem::path& path);
void write_float32_file(const std::filesystem::path& path, std::span<const float> values);

struct ToyCorpus {
  std::vector<DialogCase> cases;
  FeatureStore features;
};

// Deterministic for a given (seed, n_cases, vocab_size). Every case has 10
// templated QA pairs and a summary built only from tokens its answers
// contain. vocab_size bounds the size of the resulting vocabulary
// (reserved ids included); below 46 the lexicon keeps its 6-word minimum
// and the bound is exceeded, above 100 the lexicon is exhausted.
ToyCorpus synthesize_toy_corpus(std::uint64_t seed, int n_cases, int vocab_size);

}  // namespace qacoop

#endif  // QACOOP_CORPUS_H_
