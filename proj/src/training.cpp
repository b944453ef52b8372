#include "hwssl/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace hwssl {

std::vector<std::size_t> resolve_indices(const Corpus& corpus, const std::vector<std::size_t>& indices) {
  if (indices.empty()) {
    std::vector<std::size_t> all(corpus.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return all;
  }
  for (auto i : indices)
    if (i >= corpus.size()) throw Error("sample index " + std::to_string(i) + " out of range");
  return indices;
}

EncoderCheckpoint run_epochs(int64_t n, const TrainSchedule& schedule, const StepFn& step, const SnapshotFn& snapshot,
                             const EpochCallback& on_epoch, const EpochEndFn& on_epoch_end) {
  if (n < 2) throw Error("training needs at least two samples");
  if (schedule.epochs < 0 || schedule.batch_size < 2) throw Error("invalid training schedule");
  const int64_t bs = std::min<int64_t>(schedule.batch_size, n);
  const int64_t per_epoch = n / bs + (n % bs >= 2 ? 1 : 0);

  std::vector<int64_t> order(n);
  std::iota(order.begin(), order.end(), int64_t{0});
  std::mt19937_64 rng(schedule.seed ^ 0x5eedULL);

  std::vector<MetricPoint> history;
  EncoderCheckpoint last_good = snapshot(0, history);
  StepContext ctx;
  ctx.total_steps = per_epoch * schedule.epochs;
  for (int epoch = 1; epoch <= schedule.epochs; ++epoch) {
    ctx.epoch = epoch;
    std::shuffle(order.begin(), order.end(), rng);
    std::map<std::string, double> sums;
    int64_t seen = 0;
    for (int64_t b = 0; b < per_epoch; ++b, ++ctx.step) {
      const int64_t lo = b * bs, hi = std::min(n, lo + bs);
      std::vector<int64_t> batch(order.begin() + lo, order.begin() + hi);
      auto metrics = step(batch, ctx);
      for (auto& [name, t] : metrics) {
        const double v = t.item<double>();
        if (!std::isfinite(v))
          throw TrainingDiverged(name + " became non-finite in epoch " + std::to_string(epoch), last_good);
        sums[name] += v * static_cast<double>(batch.size());
      }
      seen += static_cast<int64_t>(batch.size());
    }
    std::map<std::string, double> means;
    for (auto& [name, s] : sums) means[name] = s / static_cast<double>(seen);
    if (on_epoch_end)
      for (auto& [name, v] : on_epoch_end(epoch)) means[name] = v;
    for (auto& [name, v] : means) history.push_back({epoch, name, v});
    last_good = snapshot(epoch, history);
    if (on_epoch) on_epoch(epoch, means);
  }
  return last_good;
}

}  // namespace hwssl
