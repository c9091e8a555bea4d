#ifndef HARFUSE_TRAIN_HPP
#define HARFUSE_TRAIN_HPP

#include <functional>
#include <optional>
#include <vector>

#include "harfuse/dataset.hpp"
#include "harfuse/model.hpp"
#include "harfuse/optim.hpp"

namespace harfuse {

struct TrainHistory {
  /// Mean loss of the first mini-batch before any update.
  double initial_loss = 0.0;
  std::vector<double> loss;
  /// Running accuracy (percent) over the epoch's train-mode batches.
  std::vector<double> accuracy;
  std::vector<double> valid_accuracy;
  std::vector<double> seconds;

  std::size_t epochs() const { return loss.size(); }
};

using EpochCallback = std::function<void(int epoch, const TrainHistory&)>;

/// Adam on mean categorical cross-entropy, reshuffling each epoch with a
/// generator seeded from config.seed. The last short batch is kept.
/// Throws NumericError naming the first non-finite tensor if the loss diverges.
TrainHistory train(FusionModel& model, const Dataset& train_set, const Dataset* valid_set, const TrainConfig& config,
                   AdamState* state = nullptr, const EpochCallback& on_epoch = {});

/// Inference-mode argmax predictions, evaluated in chunks of `chunk` samples.
std::vector<int> predict(FusionModel& model, const Dataset& data, Index chunk = 256);

/// Contiguous [start, end) ranges covering 0..n in steps of batch.
std::vector<std::pair<Index, Index>> batch_ranges(Index n, Index batch);

}  // namespace harfuse

#endif  // HARFUSE_TRAIN_HPP
