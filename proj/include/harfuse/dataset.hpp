#ifndef HARFUSE_DATASET_HPP
#define HARFUSE_DATASET_HPP

#include <span>
#include <string>
#include <vector>

#include "harfuse/tensor.hpp"

namespace harfuse {

/// A mini-batch: one [N, L, C] block per input branch plus class indices.
struct Batch {
  std::vector<Tensor> blocks;
  std::vector<int> labels;
};

/// Model-ready samples. blocks[b] is [N, L, C] for branch b (accelerometer,
/// gyroscope; or a single feature block [N, 561, 1]).
struct Dataset {
  std::string name;
  std::vector<Tensor> blocks;
  std::vector<int> labels;
  std::vector<std::string> class_names;
  /// Per-sample identifiers (recording ids); empty when samples are anonymous.
  std::vector<std::string> ids;

  Index size() const { return static_cast<Index>(labels.size()); }
  Index class_count() const { return static_cast<Index>(class_names.size()); }
  Index branch_count() const { return static_cast<Index>(blocks.size()); }
  Index length() const { return blocks.at(0).dim(1); }
  Index channels() const { return blocks.at(0).dim(2); }

  /// Throws LabelError / ShapeError if blocks and labels disagree.
  void check() const;
  Batch gather(std::span<const Index> indices) const;
  Dataset subset(std::span<const Index> indices) const;
  /// Positions of `wanted` ids in this dataset; throws ConfigError on an unknown id.
  std::vector<Index> indices_of(const std::vector<std::string>& wanted) const;
};

/// [N, K] rows with a single 1 at each label. Throws LabelError on out-of-range labels.
Tensor one_hot(const std::vector<int>& labels, Index classes);

}  // namespace harfuse

#endif  // HARFUSE_DATASET_HPP
