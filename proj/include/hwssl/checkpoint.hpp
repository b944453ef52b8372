#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "hwssl/common.hpp"

namespace hwssl {

struct MetricPoint {
  int epoch = 0;
  std::string name;
  double value = 0.0;
  bool operator==(const MetricPoint&) const = default;
};

/// Trained encoder plus everything needed to rebuild it.
struct EncoderCheckpoint {
  std::string method;           // vae, aim, mae, flow, bigan or a contrastive method id
  std::string weights;          // serialized parameter archive of the encoder model
  int64_t embed_dim = 0;
  nlohmann::json train_config;  // {"model": ..., "schedule": ...}
  int epoch = 0;
  std::vector<MetricPoint> metric_history;

  /// Values of one metric in epoch order.
  std::vector<double> metric(const std::string& name) const;
};

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

void save_checkpoint(const EncoderCheckpoint& ckpt, const std::filesystem::path& path);
EncoderCheckpoint load_checkpoint(const std::filesystem::path& path);

/// `epoch,<metric>,...` with one row per epoch.
void write_metric_history_csv(const EncoderCheckpoint& ckpt, const std::filesystem::path& path);

std::string serialize_module(const torch::nn::Module& module);
void deserialize_module(torch::nn::Module& module, const std::string& bytes);

/// Raised when a loss becomes non-finite; carries the checkpoint of the last finished epoch.
class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string& what, EncoderCheckpoint last_good)
      : Error(what), last_good(std::move(last_good)) {}
  EncoderCheckpoint last_good;
};

class RepresentationCollapse : public Error {
 public:
  using Error::Error;
};

struct TrainSchedule {
  int epochs = 10;
  int batch_size = 256;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

void to_json(nlohmann::json& j, const TrainSchedule& s);
void from_json(const nlohmann::json& j, TrainSchedule& s);

/// Called after every epoch with the epoch means of the logged metrics.
using EpochCallback = std::function<void(int epoch, const std::map<std::string, double>& metrics)>;

}  // namespace hwssl
