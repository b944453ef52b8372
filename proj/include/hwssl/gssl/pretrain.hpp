#pragma once

#include <string>

#include <json.hpp>

#include "hwssl/checkpoint.hpp"
#include "hwssl/corpus.hpp"
#include "hwssl/gssl/flow.hpp"
#include "hwssl/gssl/models.hpp"
#include "hwssl/training.hpp"

namespace hwssl::gssl {

// Adam on every parameter; checkpoints carry {"model": cfg, "schedule": schedule}.
EncoderCheckpoint pretrain_vae(const Corpus& corpus, const VaeConfig& cfg, const PretrainOptions& opt);
EncoderCheckpoint pretrain_aim(const Corpus& corpus, const AimConfig& cfg, const PretrainOptions& opt);
EncoderCheckpoint pretrain_mae(const Corpus& corpus, const MaeConfig& cfg, const PretrainOptions& opt);
EncoderCheckpoint pretrain_flow(const Corpus& corpus, const FlowConfig& cfg, const PretrainOptions& opt);
EncoderCheckpoint pretrain_bigan(const Corpus& corpus, const BiganConfig& cfg, const PretrainOptions& opt);

/// Dispatch on method name (vae, aim, mae, flow, bigan) with a JSON model config.
EncoderCheckpoint pretrain_generative(const Corpus& corpus, const std::string& method, const nlohmann::json& model,
                                      const PretrainOptions& opt);

}  // namespace hwssl::gssl
