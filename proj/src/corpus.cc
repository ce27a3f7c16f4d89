#include "qacoop/corpus.h"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "qacoop/rng.h"

namespace qacoop {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

bool is_word_char(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

Tokens tokenize(std::string_view text) {
  Tokens out;
  std::string cur;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (is_word_char(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (c == '\'' && !cur.empty() && i + 1 < text.size() &&
               is_word_char(static_cast<unsigned char>(text[i + 1]))) {
      cur.push_back('\'');
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::string join_tokens(const Tokens& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

const Tokens& dont_know_tokens() {
  static const Tokens kTokens = tokenize("i don't know");
  return kTokens;
}

std::string_view split_name(Split s) {
  switch (s) {
    case Split::kTrain:
      return "train";
    case Split::kVal:
      return "val";
    case Split::kTest:
      return "test";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw CorpusError("unknown split: " + std::string(name));
}

void validate_case(const DialogCase& c) {
  if (c.qa_pairs.size() != static_cast<std::size_t>(kRoundsPerDialog)) {
    throw CorpusError(c.video_id + ": expected 10 QA pairs, found " + std::to_string(c.qa_pairs.size()));
  }
  if (c.input_description.empty()) throw CorpusError(c.video_id + ": empty caption");
  if (c.final_description.empty()) throw CorpusError(c.video_id + ": empty summary");
  for (std::size_t i = 0; i < c.qa_pairs.size(); ++i) {
    if (c.qa_pairs[i].question.empty()) {
      throw CorpusError(c.video_id + ": empty question in round " + std::to_string(i + 1));
    }
    if (c.qa_pairs[i].answer.empty()) {
      throw CorpusError(c.video_id + ": empty answer in round " + std::to_string(i + 1));
    }
  }
}

Vocabulary::Vocabulary() : tokens_{"<pad>", "<sos>", "<eos>", "<unk>"} {
  for (int i = 0; i < kReserved; ++i) index_[tokens_[static_cast<std::size_t>(i)]] = i;
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& content_tokens) {
  Vocabulary v;
  for (const auto& t : content_tokens) {
    if (v.index_.count(t)) throw CorpusError("duplicate vocabulary token: " + t);
    v.index_[t] = static_cast<int>(v.tokens_.size());
    v.tokens_.push_back(t);
  }
  return v;
}

Vocabulary Vocabulary::build(std::span<const DialogCase> cases, int min_count) {
  std::map<std::string, int> counts;
  auto count = [&](const Tokens& ts) {
    for (const auto& t : ts) ++counts[t];
  };
  for (const auto& c : cases) {
    if (c.split != Split::kTrain) continue;
    count(c.input_description);
    count(c.final_description);
    for (const auto& p : c.qa_pairs) {
      count(p.question);
      count(p.answer);
    }
  }
  std::vector<std::string> keep;
  for (const auto& [tok, n] : counts) {
    if (n >= min_count) keep.push_back(tok);
  }
  return from_tokens(keep);
}

int Vocabulary::index(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int index) const {
  if (index < 0 || index >= size()) throw std::out_of_range("vocabulary index " + std::to_string(index));
  return tokens_[static_cast<std::size_t>(index)];
}

std::vector<int> Vocabulary::encode(const Tokens& tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(index(t));
  return out;
}

Tokens Vocabulary::decode(std::span<const int> ids) const {
  Tokens out;
  for (int id : ids) {
    if (id == kEos) break;
    if (id == kPad || id == kSos) continue;
    out.push_back(token(id));
  }
  return out;
}

std::vector<std::string> Vocabulary::content_tokens() const {
  return {tokens_.begin() + kReserved, tokens_.end()};
}

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& t : tokens_) {
    for (unsigned char c : t) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    h ^= 0xff;
    h *= 1099511628211ULL;
  }
  return h;
}

std::vector<DialogCase> Dataset::split(Split s) const {
  std::vector<DialogCase> out;
  for (const auto& c : cases) {
    if (c.split == s) out.push_back(c);
  }
  return out;
}

Dataset ingest_dataset_text(std::string_view json_text, int vocab_min_count) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw CorpusError(std::string("dataset is not valid JSON: ") + e.what());
  }
  if (!root.is_object() || !root.contains("dialogs") || !root["dialogs"].is_array()) {
    throw CorpusError("dataset: missing top-level \"dialogs\" array");
  }
  Dataset ds;
  std::size_t ordinal = 0;
  for (const auto& rec : root["dialogs"]) {
    ++ordinal;
    const std::string vid = rec.contains("image_id") && rec["image_id"].is_string()
                                ? rec["image_id"].get<std::string>()
                                : "record #" + std::to_string(ordinal);
    auto text_field = [&](const char* name) -> std::string {
      if (!rec.contains(name) || !rec[name].is_string()) throw CorpusError(vid + ": missing field \"" + name + "\"");
      return rec[name].get<std::string>();
    };
    if (!rec.contains("image_id")) throw CorpusError(vid + ": missing field \"image_id\"");
    DialogCase c;
    c.video_id = vid;
    c.input_description = tokenize(text_field("caption"));
    c.final_description = tokenize(text_field("summary"));
    if (rec.contains("split")) c.split = parse_split(rec["split"].get<std::string>());
    if (!rec.contains("dialog") || !rec["dialog"].is_array()) throw CorpusError(vid + ": missing field \"dialog\"");
    for (const auto& turn : rec["dialog"]) {
      if (!turn.contains("question") || !turn["question"].is_string()) {
        throw CorpusError(vid + ": missing field \"question\"");
      }
      if (!turn.contains("answer") || !turn["answer"].is_string()) {
        throw CorpusError(vid + ": missing field \"answer\"");
      }
      c.qa_pairs.push_back({tokenize(turn["question"].get<std::string>()), tokenize(turn["answer"].get<std::string>())});
    }
    validate_case(c);
    ds.cases.push_back(std::move(c));
  }
  ds.vocab = Vocabulary::build(ds.cases, vocab_min_count);
  return ds;
}

Dataset ingest_dataset(const fs::path& path, int vocab_min_count) {
  return ingest_dataset_text(read_file(path), vocab_min_count);
}

std::string serialize_dataset(std::span<const DialogCase> cases) {
  json dialogs = json::array();
  for (const auto& c : cases) {
    json turns = json::array();
    for (const auto& p : c.qa_pairs) turns.push_back({{"question", join_tokens(p.question)}, {"answer", join_tokens(p.answer)}});
    dialogs.push_back({{"image_id", c.video_id},
                       {"caption", join_tokens(c.input_description)},
                       {"summary", join_tokens(c.final_description)},
                       {"split", std::string(split_name(c.split))},
                       {"dialog", std::move(turns)}});
  }
  return json{{"dialogs", std::move(dialogs)}}.dump(1);
}

void write_dataset(const fs::path& path, std::span<const DialogCase> cases) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CorpusError("cannot write " + path.string());
  out << serialize_dataset(cases);
}

std::vector<float> read_float32_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError("cannot open tensor file " + path.string());
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  if (bytes % 4 != 0) throw CorpusError(path.string() + ": size mismatch, not a whole number of float32 values");
  std::vector<float> out(bytes / 4);
  in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(bytes));
  if constexpr (std::endian::native == std::endian::big) {
    for (auto& f : out) {
      auto u = std::bit_cast<std::uint32_t>(f);
      u = __builtin_bswap32(u);
      f = std::bit_cast<float>(u);
    }
  }
  return out;
}

void write_float32_file(const fs::path& path, std::span<const float> values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CorpusError("cannot write tensor file " + path.string());
  if constexpr (std::endian::native == std::endian::big) {
    for (float f : values) {
      const auto u = __builtin_bswap32(std::bit_cast<std::uint32_t>(f));
      out.write(reinterpret_cast<const char*>(&u), 4);
    }
  } else {
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * 4));
  }
}

namespace {

std::size_t product(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "x" : "") + std::to_string(shape[i]);
  return s;
}

std::vector<Eigen::MatrixXf> frames_from(const std::vector<float>& raw, int frames, int locations, int channels) {
  std::vector<Eigen::MatrixXf> out;
  const std::size_t per = static_cast<std::size_t>(locations) * static_cast<std::size_t>(channels);
  for (int f = 0; f < frames; ++f) {
    out.push_back(Eigen::Map<const Eigen::MatrixXf>(raw.data() + per * static_cast<std::size_t>(f), channels, locations));
  }
  return out;
}

void check_finite(const std::string& vid, const VideoFeatures& v) {
  auto bad = [](const auto& m) { return !m.allFinite(); };
  bool any = bad(v.audio);
  for (const auto& f : v.abot_frames) any = any || bad(f);
  for (const auto& f : v.qbot_frames) any = any || bad(f);
  if (any) throw CorpusError(vid + ": non-finite feature values");
}

void check_shapes(const std::string& vid, const VideoFeatures& v) {
  using L = FeatureLayout;
  bool ok = v.abot_frames.size() == static_cast<std::size_t>(L::kAbotFrames) &&
            v.qbot_frames.size() == static_cast<std::size_t>(L::kQbotFrames) && v.audio.size() == L::kAudio;
  for (const auto& f : v.abot_frames) ok = ok && f.rows() == L::kChannels && f.cols() == L::kAbotLocations;
  for (const auto& f : v.qbot_frames) ok = ok && f.rows() == L::kChannels && f.cols() == L::kQbotLocations;
  if (!ok) throw CorpusError(vid + ": feature tensors do not match 4x49x512 / 2x28x512 / 256");
}

}  // namespace

FeatureStore FeatureStore::load(const fs::path& manifest_path) {
  using L = FeatureLayout;
  json root;
  try {
    root = json::parse(read_file(manifest_path));
  } catch (const json::parse_error& e) {
    throw CorpusError(std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!root.contains("videos") || !root["videos"].is_object()) throw CorpusError("manifest: missing \"videos\" object");
  const fs::path base = manifest_path.parent_path();
  const std::array<std::pair<const char*, std::vector<int>>, 3> expected = {{
      {"abot_visual", {L::kAbotFrames, L::kAbotLocations, L::kChannels}},
      {"qbot_visual", {L::kQbotFrames, L::kQbotLocations, L::kChannels}},
      {"audio", {L::kAudio}},
  }};
  FeatureStore store;
  for (const auto& [vid, rec] : root["videos"].items()) {
    Entry e;
    for (const auto& [key, shape] : expected) {
      if (!rec.contains(key)) throw CorpusError(vid + ": manifest missing \"" + key + "\"");
      const auto& t = rec[key];
      FileRef ref;
      ref.path = t.at("file").get<std::string>();
      if (ref.path.is_relative()) ref.path = base / ref.path;
      ref.shape = t.at("shape").get<std::vector<int>>();
      if (ref.shape != shape) {
        throw CorpusError(vid + "/" + key + ": shape mismatch, expected " + shape_str(shape) + ", found " +
                          shape_str(ref.shape));
      }
      std::error_code ec;
      const auto bytes = fs::file_size(ref.path, ec);
      if (ec) throw CorpusError(vid + "/" + key + ": cannot stat " + ref.path.string());
      if (bytes != product(shape) * 4) {
        throw CorpusError(vid + "/" + key + ": size mismatch, expected " + std::to_string(product(shape)) +
                          " floats, found " + std::to_string(bytes / 4));
      }
      if (std::string_view(key) == "abot_visual") e.abot_visual = ref;
      if (std::string_view(key) == "qbot_visual") e.qbot_visual = ref;
      if (std::string_view(key) == "audio") e.audio = ref;
    }
    store.entries_.emplace(vid, std::move(e));
  }
  return store;
}

FeatureStore load_feature_store(const fs::path& manifest_path) { return FeatureStore::load(manifest_path); }

void FeatureStore::insert(const std::string& video_id, VideoFeatures features) {
  check_shapes(video_id, features);
  check_finite(video_id, features);
  Entry e;
  e.loaded = std::move(features);
  entries_[video_id] = std::move(e);
}

bool FeatureStore::contains(const std::string& video_id) const { return entries_.count(video_id) != 0; }

VideoFeatures FeatureStore::get(const std::string& video_id) const {
  using L = FeatureLayout;
  auto it = entries_.find(video_id);
  if (it == entries_.end()) throw CorpusError("no features for video_id " + video_id);
  const Entry& e = it->second;
  if (e.loaded) return *e.loaded;
  VideoFeatures v;
  v.abot_frames = frames_from(read_float32_file(e.abot_visual.path), L::kAbotFrames, L::kAbotLocations, L::kChannels);
  v.qbot_frames = frames_from(read_float32_file(e.qbot_visual.path), L::kQbotFrames, L::kQbotLocations, L::kChannels);
  const auto audio = read_float32_file(e.audio.path);
  v.audio = Eigen::Map<const Eigen::VectorXf>(audio.data(), static_cast<Eigen::Index>(audio.size()));
  check_shapes(video_id, v);
  check_finite(video_id, v);
  return v;
}

std::vector<std::string> FeatureStore::video_ids() const {
  std::vector<std::string> out;
  for (const auto& [k, _] : entries_) out.push_back(k);
  return out;
}

fs::path FeatureStore::write(const fs::path& dir) const {
  using L = FeatureLayout;
  fs::create_directories(dir);
  json videos = json::object();
  for (const auto& [vid, _] : entries_) {
    const VideoFeatures v = get(vid);
    auto flat = [](const std::vector<Eigen::MatrixXf>& frames) {
      std::vector<float> out;
      for (const auto& f : frames) out.insert(out.end(), f.data(), f.data() + f.size());
      return out;
    };
    const std::string stem = vid;
    write_float32_file(dir / (stem + ".abot.f32"), flat(v.abot_frames));
    write_float32_file(dir / (stem + ".qbot.f32"), flat(v.qbot_frames));
    write_float32_file(dir / (stem + ".audio.f32"),
                       std::span<const float>(v.audio.data(), static_cast<std::size_t>(v.audio.size())));
    videos[vid] = {
        {"abot_visual", {{"file", stem + ".abot.f32"}, {"shape", {L::kAbotFrames, L::kAbotLocations, L::kChannels}}}},
        {"qbot_visual", {{"file", stem + ".qbot.f32"}, {"shape", {L::kQbotFrames, L::kQbotLocations, L::kChannels}}}},
        {"audio", {{"file", stem + ".audio.f32"}, {"shape", {L::kAudio}}}},
    };
  }
  const fs::path manifest = dir / "manifest.json";
  std::ofstream out(manifest);
  out << json{{"videos", std::move(videos)}}.dump(1);
  return manifest;
}

namespace {

struct Lexicon {
  std::vector<std::string> subjects{"man", "woman", "boy", "girl", "child", "person", "dog", "cat", "teenager", "lady", "guy", "baby"};
  std::vector<std::string> actions{"walks", "runs", "sits", "reads", "cooks", "cleans", "drinks", "eats", "sleeps", "dances", "sings", "writes"};
  std::vector<std::string> objects{"book", "cup", "phone", "towel", "chair", "laptop", "bag", "box", "broom", "pillow", "bottle", "shoe"};
  std::vector<std::string> places{"kitchen", "bedroom", "hallway", "garage", "office", "bathroom", "closet", "porch", "attic", "basement", "pantry", "studio"};
  std::vector<std::string> colors{"red", "blue", "green", "white", "black", "yellow", "brown", "pink", "gray", "orange", "purple", "silver"};
};

}  // namespace

ToyCorpus synthesize_toy_corpus(std::uint64_t seed, int n_cases, int vocab_size) {
  if (n_cases < 1) throw std::invalid_argument("synthesize_toy_corpus: n_cases must be >= 1");
  if (vocab_size < 8) throw std::invalid_argument("synthesize_toy_corpus: vocab_size must be >= 8");
  Rng rng(seed);
  const Lexicon lex;
  // Content words are dealt round-robin over the five slots so every slot
  // has at least one filler.
  const std::array<const std::vector<std::string>*, 5> slots = {&lex.subjects, &lex.actions, &lex.objects, &lex.places,
                                                                &lex.colors};
  std::array<std::vector<std::string>, 5> pool;
  // 36 fixed template words plus the reserved ids take the rest.
  constexpr int kFixed = 36 + Vocabulary::kReserved;
  const int total = std::clamp(vocab_size - kFixed, 6, 60);
  for (int i = 0; i < total; ++i) {
    const auto s = static_cast<std::size_t>(i % 5);
    pool[s].push_back((*slots[s])[pool[s].size()]);
  }
  // Two actions must differ, so the action slot needs at least two words.
  if (pool[1].size() < 2) pool[1].push_back(lex.actions[1]);

  auto pick = [&](const std::vector<std::string>& v) -> const std::string& { return v[uniform_index(rng, v.size())]; };

  ToyCorpus toy;
  for (int n = 0; n < n_cases; ++n) {
    const std::string subj = pick(pool[0]);
    const std::string act1 = pick(pool[1]);
    std::string act2 = pick(pool[1]);
    while (act2 == act1) act2 = pick(pool[1]);
    const std::string obj = pick(pool[2]);
    const std::string place = pick(pool[3]);
    const std::string color = pick(pool[4]);
    const bool sound = uniform01(rng) < 0.5;

    DialogCase c;
    char id[32];
    std::snprintf(id, sizeof(id), "toy%04d", n);
    c.video_id = id;
    c.split = Split::kTrain;
    c.input_description = tokenize("a " + subj + " " + act1 + " then " + act2 + " with a " + obj);
    auto qa = [&](const std::string& q, const std::string& a) { c.qa_pairs.push_back({tokenize(q), tokenize(a)}); };
    qa("what is happening in the video", "a " + subj + " is in the " + place);
    qa("who is in the video", "one " + subj);
    qa("where is the " + subj, "in the " + place);
    qa("what does the " + subj + " do first", "the " + subj + " " + act1);
    qa("what happens next", "and then the " + subj + " " + act2);
    qa("does the " + subj + " hold anything", "yes with a " + obj);
    qa("what color is the " + obj, "it is " + color);
    qa("is there any sound", sound ? "yes some talking" : "no sound at all");
    qa("is anyone else there", "no only the " + subj);
    qa("does the video end there", "yes it ends");
    c.final_description = tokenize("a " + subj + " " + act1 + " and then " + act2 + " in the " + place + " with a " +
                                   color + " " + obj);

    VideoFeatures f;
    using L = FeatureLayout;
    auto noise = [&](int rows, int cols) {
      Eigen::MatrixXf m(rows, cols);
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(standard_normal(rng));
      return m;
    };
    for (int k = 0; k < L::kAbotFrames; ++k) f.abot_frames.push_back(noise(L::kChannels, L::kAbotLocations));
    for (int k = 0; k < L::kQbotFrames; ++k) f.qbot_frames.push_back(noise(L::kChannels, L::kQbotLocations));
    f.audio = noise(L::kAudio, 1).col(0);
    toy.features.insert(c.video_id, std::move(f));
    toy.cases.push_back(std::move(c));
  }
  return toy;
}

}  // namespace qacoop
