#include "qacoop/model_config.h"

#include <stdexcept>

namespace qacoop {

std::string_view to_string(DialogMode m) { return m == DialogMode::kGenerative ? "gen" : "disc"; }

std::string_view to_string(AttentionKind a) {
  switch (a) {
    case AttentionKind::kMM:
      return "mm";
    case AttentionKind::kIM:
      return "im";
    case AttentionKind::kNone:
      return "none";
  }
  return "mm";
}

std::string_view to_string(QbotFrames f) {
  switch (f) {
    case QbotFrames::kSegmented2:
      return "segmented2";
    case QbotFrames::kNone:
      return "none";
    case QbotFrames::kFull:
      return "full";
  }
  return "segmented2";
}

DialogMode parse_mode(std::string_view s) {
  if (s == "gen" || s == "generative") return DialogMode::kGenerative;
  if (s == "disc" || s == "discriminative") return DialogMode::kDiscriminative;
  throw std::invalid_argument("unknown mode: " + std::string(s));
}

AttentionKind parse_attention(std::string_view s) {
  if (s == "mm") return AttentionKind::kMM;
  if (s == "im") return AttentionKind::kIM;
  if (s == "none") return AttentionKind::kNone;
  throw std::invalid_argument("unknown attention: " + std::string(s));
}

QbotFrames parse_qbot_frames(std::string_view s) {
  if (s == "segmented2") return QbotFrames::kSegmented2;
  if (s == "none") return QbotFrames::kNone;
  if (s == "full") return QbotFrames::kFull;
  throw std::invalid_argument("unknown qbot frames: " + std::string(s));
}

ModelDims ModelDims::reduced(int divisor) {
  if (divisor < 1) throw std::invalid_argument("ModelDims::reduced: divisor must be >= 1");
  ModelDims d;
  for (int* f : {&d.word, &d.history, &d.caption, &d.question, &d.answer, &d.visual, &d.audio, &d.av, &d.key, &d.select}) {
    *f = std::max(2, *f / divisor);
  }
  d.history += d.history % 2;
  return d;
}

nlohmann::json to_json(const ModelConfig& c) {
  const auto& d = c.dims;
  const auto& a = c.ablations;
  return {
      {"mode", to_string(c.mode)},
      {"vocab_size", c.vocab_size},
      {"seed", c.seed},
      {"dims",
       {{"word", d.word}, {"history", d.history}, {"caption", d.caption}, {"question", d.question}, {"answer", d.answer},
        {"visual", d.visual}, {"audio", d.audio}, {"av", d.av}, {"key", d.key}, {"select", d.select}}},
      {"ablations",
       {{"attention", to_string(a.attention)}, {"av_lstm", a.av_lstm}, {"audio", a.audio}, {"caption", a.caption},
        {"history_abot", a.history_abot}, {"qbot_frames", to_string(a.qbot_frames)},
        {"dynamic_update", a.dynamic_update}}},
  };
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.mode = parse_mode(j.at("mode").get<std::string>());
  c.vocab_size = j.at("vocab_size").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  const auto& d = j.at("dims");
  c.dims.word = d.at("word");
  c.dims.history = d.at("history");
  c.dims.caption = d.at("caption");
  c.dims.question = d.at("question");
  c.dims.answer = d.at("answer");
  c.dims.visual = d.at("visual");
  c.dims.audio = d.at("audio");
  c.dims.av = d.at("av");
  c.dims.key = d.at("key");
  c.dims.select = d.at("select");
  const auto& a = j.at("ablations");
  c.ablations.attention = parse_attention(a.at("attention").get<std::string>());
  c.ablations.av_lstm = a.at("av_lstm");
  c.ablations.audio = a.at("audio");
  c.ablations.caption = a.at("caption");
  c.ablations.history_abot = a.at("history_abot");
  c.ablations.qbot_frames = parse_qbot_frames(a.at("qbot_frames").get<std::string>());
  c.ablations.dynamic_update = a.at("dynamic_update");
  return c;
}

}  // namespace qacoop
