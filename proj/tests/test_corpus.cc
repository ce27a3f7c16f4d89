#include <fstream>
#include <set>

#include "doctest.h"
#include "json.hpp"
#include "qacoop/corpus.h"
#include "test_util.h"

using namespace qacoop;
using qacoop::testing::make_case;
using qacoop::testing::TempDir;

namespace {

nlohmann::json record(const std::string& id, int qa_count) {
  nlohmann::json dialog = nlohmann::json::array();
  for (int i = 0; i < qa_count; ++i) {
    dialog.push_back({{"question", "Is it q" + std::to_string(i) + "?"}, {"answer", "Yes, a" + std::to_string(i) + "."}});
  }
  return {{"image_id", id}, {"caption", "A man walks."}, {"summary", "A man walks!"}, {"dialog", dialog}};
}

std::string dataset_text(std::initializer_list<nlohmann::json> records) {
  nlohmann::json j;
  j["dialogs"] = records;
  return j.dump();
}

}  // namespace

TEST_CASE("tokenize lowercases and strips punctuation") {
  CHECK(tokenize("A Man, walks!  Away.") == Tokens{"a", "man", "walks", "away"});
  CHECK(tokenize("I don't know") == Tokens{"i", "don't", "know"});
  CHECK(tokenize("'quoted' words") == Tokens{"quoted", "words"});
  CHECK(tokenize("   ").empty());
  CHECK(dont_know_tokens() == Tokens{"i", "don't", "know"});
}

TEST_CASE("a well-formed record becomes one case") {
  const Dataset d = ingest_dataset_text(dataset_text({record("v1", 10)}));
  REQUIRE(d.cases.size() == 1);
  CHECK(d.cases[0].video_id == "v1");
  CHECK(d.cases[0].qa_pairs.size() == 10);
  CHECK(d.cases[0].final_description == Tokens{"a", "man", "walks"});
  CHECK(d.cases[0].qa_pairs[3].question == Tokens{"is", "it", "q3"});
}

TEST_CASE("a record with 9 QA pairs is rejected with the count") {
  try {
    ingest_dataset_text(dataset_text({record("v9", 9)}));
    FAIL("expected an error");
  } catch (const CorpusError& e) {
    CHECK(std::string(e.what()).find("expected 10 QA pairs, found 9") != std::string::npos);
  }
}

TEST_CASE("a malformed record names the video and the missing field") {
  nlohmann::json r = record("vbad", 10);
  r.erase("summary");
  try {
    ingest_dataset_text(dataset_text({r}));
    FAIL("expected an error");
  } catch (const CorpusError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("vbad") != std::string::npos);
    CHECK(msg.find("summary") != std::string::npos);
  }
}

TEST_CASE("vocabulary of a one-sentence training split") {
  DialogCase c;
  c.video_id = "v";
  c.final_description = tokenize("a man walks");
  const Vocabulary v = Vocabulary::build(std::span<const DialogCase>(&c, 1), 1);
  CHECK(v.size() == 3 + Vocabulary::kReserved);
  CHECK(v.index("a") == 4);
  CHECK(v.index("man") == 5);
  CHECK(v.index("walks") == 6);
  CHECK(v.index("zebra") == Vocabulary::kUnk);
}

TEST_CASE("vocabulary ignores non-training splits and honours min_count") {
  std::vector<DialogCase> cases{make_case("a"), make_case("b")};
  cases[1].split = Split::kTest;
  cases[1].final_description = tokenize("unseen words here");
  const Vocabulary v = Vocabulary::build(cases, 1);
  CHECK_FALSE(v.contains("unseen"));
  CHECK(v.contains("walks"));
  const Vocabulary v2 = Vocabulary::build(cases, 2);
  CHECK(v2.contains("man"));
  CHECK_FALSE(v2.contains("room"));
}

TEST_CASE("vocabulary encode/decode and stable indices") {
  auto toy = synthesize_toy_corpus(3, 4, 64);
  const Vocabulary a = Vocabulary::build(toy.cases, 1);
  const Vocabulary b = Vocabulary::build(toy.cases, 1);
  CHECK(a.content_tokens() == b.content_tokens());
  CHECK(a.hash() == b.hash());
  const Tokens s = toy.cases[0].final_description;
  std::vector<int> ids = a.encode(s);
  ids.push_back(Vocabulary::kEos);
  ids.push_back(a.index("a"));
  CHECK(a.decode(ids) == s);
  CHECK(Vocabulary::from_tokens(a.content_tokens()).hash() == a.hash());
}

TEST_CASE("serialize then ingest reproduces the cases") {
  auto toy = synthesize_toy_corpus(11, 5, 64);
  toy.cases[1].split = Split::kVal;
  toy.cases[2].split = Split::kTest;
  const Dataset d = ingest_dataset_text(serialize_dataset(toy.cases));
  CHECK(d.cases == toy.cases);
  CHECK(d.split(Split::kTest).size() == 1);
}

TEST_CASE("toy corpus is deterministic and informative") {
  const auto a = synthesize_toy_corpus(7, 8, 64);
  const auto b = synthesize_toy_corpus(7, 8, 64);
  CHECK(serialize_dataset(a.cases) == serialize_dataset(b.cases));
  REQUIRE(a.cases.size() == 8);
  for (const DialogCase& c : a.cases) {
    CHECK(c.qa_pairs.size() == 10);
    std::set<std::string> answer_tokens;
    for (const QaPair& p : c.qa_pairs) answer_tokens.insert(p.answer.begin(), p.answer.end());
    for (const std::string& t : c.final_description) CHECK_MESSAGE(answer_tokens.count(t), t);
    const VideoFeatures fa = a.features.get(c.video_id);
    const VideoFeatures fb = b.features.get(c.video_id);
    CHECK(fa.abot_frames[2] == fb.abot_frames[2]);
    CHECK(fa.audio == fb.audio);
  }
  CHECK(Vocabulary::build(a.cases, 1).size() <= 64);
}

TEST_CASE("feature store round-trips through files") {
  const auto toy = synthesize_toy_corpus(5, 2, 64);
  TempDir dir;
  const auto manifest = toy.features.write(dir.path());
  const FeatureStore loaded = load_feature_store(manifest);
  CHECK(loaded.size() == 2);
  const VideoFeatures a = toy.features.get("toy0001");
  const VideoFeatures b = loaded.get("toy0001");
  CHECK(a.abot_frames.size() == 4);
  CHECK(a.qbot_frames.size() == 2);
  CHECK(a.abot_frames[3] == b.abot_frames[3]);
  CHECK(a.qbot_frames[1] == b.qbot_frames[1]);
  CHECK(a.audio == b.audio);
  CHECK_THROWS_AS(loaded.get("nope"), CorpusError);
}

TEST_CASE("feature manifest size and shape gates") {
  TempDir dir;
  const auto& p = dir.path();
  write_float32_file(p / "abot.f32", std::vector<float>(4 * 49 * 512, 0.5f));
  write_float32_file(p / "qbot.f32", std::vector<float>(2 * 28 * 512, 0.25f));
  write_float32_file(p / "audio.f32", std::vector<float>(256, 0.0f));
  write_float32_file(p / "short.f32", std::vector<float>(100, 0.0f));
  auto manifest = [&](const std::string& abot_file, std::vector<int> abot_shape) {
    nlohmann::json j;
    j["videos"]["v"] = {{"abot_visual", {{"file", abot_file}, {"shape", abot_shape}}},
                        {"qbot_visual", {{"file", "qbot.f32"}, {"shape", {2, 28, 512}}}},
                        {"audio", {{"file", "audio.f32"}, {"shape", {256}}}}};
    std::ofstream(p / "manifest.json") << j.dump();
    return p / "manifest.json";
  };
  const FeatureStore ok = load_feature_store(manifest("abot.f32", {4, 49, 512}));
  const VideoFeatures f = ok.get("v");
  CHECK(f.audio.isZero());
  CHECK(f.abot_frames[0](0, 0) == 0.5f);

  try {
    load_feature_store(manifest("short.f32", {4, 49, 512}));
    FAIL("expected size mismatch");
  } catch (const CorpusError& e) {
    CHECK(std::string(e.what()).find("size mismatch") != std::string::npos);
  }
  try {
    load_feature_store(manifest("abot.f32", {4, 50, 512}));
    FAIL("expected shape mismatch");
  } catch (const CorpusError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("shape mismatch") != std::string::npos);
    CHECK(msg.find("4x49x512") != std::string::npos);
  }
}

TEST_CASE("feature store rejects non-finite values") {
  auto toy = synthesize_toy_corpus(5, 1, 64);
  VideoFeatures f = toy.features.get("toy0000");
  f.audio(3) = std::numeric_limits<float>::quiet_NaN();
  FeatureStore s;
  CHECK_THROWS(s.insert("bad", f));
}

TEST_CASE("validate_case rejects empty text") {
  DialogCase c = make_case("x");
  CHECK_NOTHROW(validate_case(c));
  c.qa_pairs[4].answer.clear();
  CHECK_THROWS_AS(validate_case(c), CorpusError);
}
