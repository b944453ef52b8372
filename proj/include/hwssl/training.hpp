#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "hwssl/checkpoint.hpp"
#include "hwssl/corpus.hpp"

namespace hwssl {

/// Which corpus samples a pretrainer sees and how long it trains.
struct PretrainOptions {
  TrainSchedule schedule;
  std::vector<std::size_t> indices;  // empty = whole corpus
  EpochCallback on_epoch;
};

std::vector<std::size_t> resolve_indices(const Corpus& corpus, const std::vector<std::size_t>& indices);

struct StepContext {
  int epoch = 0;       // 1-based
  int64_t step = 0;    // global, 0-based
  int64_t total_steps = 0;
};

/// One optimisation step on the given batch positions; returns the scalars to log.
using StepFn = std::function<std::map<std::string, torch::Tensor>(const std::vector<int64_t>& batch, const StepContext&)>;
/// Builds a checkpoint of the current state after `epoch` epochs.
using SnapshotFn = std::function<EncoderCheckpoint(int epoch, const std::vector<MetricPoint>& history)>;

/// Extra per-epoch metrics computed after the last step of an epoch; may throw to abort.
using EpochEndFn = std::function<std::map<std::string, double>(int epoch)>;

/// Shuffled mini-batch epochs over positions 0..n-1. Batches of one sample are dropped.
/// A non-finite logged value throws TrainingDiverged with the last finished epoch's snapshot.
EncoderCheckpoint run_epochs(int64_t n, const TrainSchedule& schedule, const StepFn& step, const SnapshotFn& snapshot,
                             const EpochCallback& on_epoch, const EpochEndFn& on_epoch_end = {});

}  // namespace hwssl
