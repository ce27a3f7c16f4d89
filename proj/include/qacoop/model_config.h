#ifndef QACOOP_MODEL_CONFIG_H_
#define QACOOP_MODEL_CONFIG_H_

#include <cstdint>
#include <string>
#include <string_view>

#include "json.hpp"

namespace qacoop {

enum class DialogMode { kGenerative, kDiscriminative };
enum class AttentionKind { kMM, kIM, kNone };
enum class QbotFrames { kSegmented2, kNone, kFull };

std::string_view to_string(DialogMode m);
std::string_view to_string(AttentionKind a);
std::string_view to_string(QbotFrames f);
DialogMode parse_mode(std::string_view s);  // "gen" | "disc"
AttentionKind parse_attention(std::string_view s);
QbotFrames parse_qbot_frames(std::string_view s);

// Embedding sizes. full() gives d_C = d_H = 256, d_q = d_a = 128,
// attended visual/audio 128 and the 256-wide audio-visual state.
struct ModelDims {
  int word = 128;
  int history = 256;
  int caption = 256;
  int question = 128;
  int answer = 128;
  int visual = 128;
  int audio = 128;
  int av = 256;
  int key = 64;
  int select = 128;

  static ModelDims full() { return {}; }
  // Every size divided by `divisor` (the desk-scale configuration uses 4).
  static ModelDims reduced(int divisor);

  int pair() const { return history / 2; }
  int answer_context() const { return history + caption + question; }
  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

struct Ablations {
  AttentionKind attention = AttentionKind::kMM;
  bool av_lstm = true;
  bool audio = true;
  bool caption = true;
  bool history_abot = true;
  QbotFrames qbot_frames = QbotFrames::kSegmented2;
  bool dynamic_update = true;
  friend bool operator==(const Ablations&, const Ablations&) = default;
};

struct ModelConfig {
  DialogMode mode = DialogMode::kDiscriminative;
  ModelDims dims;
  Ablations ablations;
  int vocab_size = 0;
  std::uint64_t seed = 1;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace qacoop

#endif  // QACOOP_MODEL_CONFIG_H_
