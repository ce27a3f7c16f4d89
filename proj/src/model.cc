#include "qacoop/model.h"

namespace qacoop {

Model::Model(const ModelConfig& cfg) : cfg_(cfg) {
  Rng rng(cfg.seed);
  shared_ = SharedModules(store_, cfg_, rng);
  qbot_ = QBot(store_, cfg_, shared_, rng);
  abot_ = ABot(store_, cfg_, shared_, rng);
}

}  // namespace qacoop
