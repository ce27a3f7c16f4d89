// Both agents plus the parameters they share, built from one config.
#ifndef QACOOP_MODEL_H_
#define QACOOP_MODEL_H_

#include <memory>

#include "qacoop/abot.h"
#include "qacoop/autodiff.h"
#include "qacoop/model_config.h"
#include "qacoop/qbot.h"
#include "qacoop/shared_modules.h"

namespace qacoop {

class Model {
 public:
  // Parameters are initialized from cfg.seed.
  explicit Model(const ModelConfig& cfg);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return cfg_; }
  ParameterStore& parameters() { return store_; }
  const ParameterStore& parameters() const { return store_; }
  const SharedModules& shared() const { return shared_; }
  const QBot& qbot() const { return qbot_; }
  const ABot& abot() const { return abot_; }

 private:
  ModelConfig cfg_;
  ParameterStore store_;
  SharedModules shared_;
  QBot qbot_;
  ABot abot_;
};

}  // namespace qacoop

#endif  // QACOOP_MODEL_H_
