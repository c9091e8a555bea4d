#include "harfuse/train.hpp"

#include <chrono>
#include <numeric>
#include <unordered_map>

#include "harfuse/nn/dense.hpp"

namespace harfuse {

void validate(const TrainConfig& c) {
  if (!(c.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(c.beta1 > 0.0 && c.beta1 < 1.0) || !(c.beta2 > 0.0 && c.beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in (0, 1)");
  }
  if (!(c.epsilon > 0.0)) throw ConfigError("Adam epsilon must be positive");
  if (c.epochs < 1) throw ConfigError("epochs must be >= 1, got " + std::to_string(c.epochs));
  if (c.batch_size < 0) throw ConfigError("batch size must be >= 0 (0 applies the n/32 rule)");
}

AdamState AdamState::for_params(const std::vector<nn::ParamRef>& params) {
  AdamState s;
  for (const auto& p : params) {
    if (!p.trainable) continue;
    s.m.push_back(zeros(p.value->shape()));
    s.v.push_back(zeros(p.value->shape()));
  }
  return s;
}

void adam_step(const std::vector<nn::ParamRef>& params, AdamState& state, const TrainConfig& config) {
  std::size_t slot = 0;
  ++state.step;
  for (const auto& p : params) {
    if (!p.trainable) continue;
    if (slot >= state.m.size()) throw ShapeError("adam_step: optimizer state has fewer slots than parameters");
    adam_update(*p.value, *p.grad, state.m[slot], state.v[slot], state.step, config);
    ++slot;
  }
  if (slot != state.m.size()) throw ShapeError("adam_step: optimizer state has more slots than parameters");
}

// ---------------------------------------------------------------------------

void Dataset::check() const {
  if (blocks.empty()) throw ShapeError("dataset '" + name + "' has no input blocks");
  for (const auto& b : blocks) {
    if (b.rank() != 3 || b.dim(0) != size()) {
      throw ShapeError("dataset '" + name + "': block " + shape_string(b.shape()) + " does not hold " +
                       std::to_string(size()) + " samples");
    }
  }
  for (int l : labels) {
    if (l < 0 || l >= class_count()) throw LabelError("dataset '" + name + "': label " + std::to_string(l) + " out of range");
  }
  if (!ids.empty() && static_cast<Index>(ids.size()) != size()) {
    throw ShapeError("dataset '" + name + "': " + std::to_string(ids.size()) + " ids for " + std::to_string(size()) + " samples");
  }
}

Batch Dataset::gather(std::span<const Index> indices) const {
  Batch out;
  const auto n = static_cast<Index>(indices.size());
  for (const auto& b : blocks) {
    const Index row = b.dim(1) * b.dim(2);
    Tensor t(Shape{n, b.dim(1), b.dim(2)});
    for (Index i = 0; i < n; ++i) {
      const Index src = indices[static_cast<std::size_t>(i)];
      if (src < 0 || src >= b.dim(0)) throw ShapeError("gather: index " + std::to_string(src) + " out of range");
      std::copy_n(b.data() + src * row, row, t.data() + i * row);
    }
    out.blocks.push_back(std::move(t));
  }
  for (Index i : indices) out.labels.push_back(labels.at(static_cast<std::size_t>(i)));
  return out;
}

Dataset Dataset::subset(std::span<const Index> indices) const {
  Batch b = gather(indices);
  Dataset out{name, std::move(b.blocks), std::move(b.labels), class_names, {}};
  if (!ids.empty()) {
    for (Index i : indices) out.ids.push_back(ids.at(static_cast<std::size_t>(i)));
  }
  return out;
}

std::vector<Index> Dataset::indices_of(const std::vector<std::string>& wanted) const {
  std::unordered_map<std::string, Index> pos;
  for (std::size_t i = 0; i < ids.size(); ++i) pos.emplace(ids[i], static_cast<Index>(i));
  std::vector<Index> out;
  out.reserve(wanted.size());
  for (const auto& id : wanted) {
    const auto it = pos.find(id);
    if (it == pos.end()) throw ConfigError("dataset '" + name + "' has no sample with id '" + id + "'");
    out.push_back(it->second);
  }
  return out;
}

Tensor one_hot(const std::vector<int>& labels, Index classes) {
  Tensor y = zeros({std::max<Index>(static_cast<Index>(labels.size()), 1), classes});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes) {
      throw LabelError("label " + std::to_string(labels[i]) + " outside 0.." + std::to_string(classes - 1));
    }
    y(static_cast<Index>(i), labels[i]) = 1.0;
  }
  return y;
}

// ---------------------------------------------------------------------------

std::vector<std::pair<Index, Index>> batch_ranges(Index n, Index batch) {
  if (batch < 1) throw ParameterError("batch size must be positive");
  std::vector<std::pair<Index, Index>> out;
  for (Index s = 0; s < n; s += batch) out.emplace_back(s, std::min(n, s + batch));
  return out;
}

namespace {

int argmax_row(const Tensor& logits, Index row) {
  Index best = 0;
  logits.matrix().row(row).maxCoeff(&best);
  return static_cast<int>(best);
}

[[noreturn]] void numeric_failure(FusionModel& model, const Tensor& logits, int epoch, std::size_t batch) {
  std::string culprit = "logits";
  for (const auto& p : model.parameters()) {
    if (!all_finite(*p.value)) {
      culprit = p.name;
      break;
    }
  }
  if (culprit == "logits") {
    for (const auto& p : model.parameters()) {
      if (p.grad && !all_finite(*p.grad)) {
        culprit = p.name + " (gradient)";
        break;
      }
    }
  }
  if (culprit == "logits" && all_finite(logits)) culprit = "loss";
  throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) +
                     "; first non-finite tensor: " + culprit);
}

}  // namespace

TrainHistory train(FusionModel& model, const Dataset& train_set, const Dataset* valid_set, const TrainConfig& config,
                   AdamState* state, const EpochCallback& on_epoch) {
  validate(config);
  train_set.check();
  if (train_set.size() < 1) throw ParameterError("train: empty training set");
  if (train_set.class_count() != model.config().class_count) {
    throw ConfigError("train: dataset has " + std::to_string(train_set.class_count()) + " classes, model expects " +
                      std::to_string(model.config().class_count));
  }
  AdamState local;
  AdamState& adam = state ? *state : local;
  if (adam.m.empty()) adam = AdamState::for_params(model.parameters());

  const Index n = train_set.size();
  const Index bs = config.batch_size > 0 ? config.batch_size : batch_size(n);
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng(config.seed);
  const Index classes = model.config().class_count;

  TrainHistory history;
  bool first_batch = true;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    if (config.shuffle) shuffle(order, rng);
    double loss_sum = 0.0;
    Index correct = 0;
    std::size_t batch_no = 0;
    for (const auto& [begin, end] : batch_ranges(n, bs)) {
      const Batch batch = train_set.gather(std::span<const Index>(order.data() + begin, static_cast<std::size_t>(end - begin)));
      const Index count = end - begin;
      model.zero_grad();
      const Tensor logits = model.forward(batch.blocks, nn::Mode::Train);
      const auto ce = nn::softmax_crossentropy(logits, one_hot(batch.labels, classes));
      if (!std::isfinite(ce.loss)) numeric_failure(model, logits, epoch, batch_no);
      if (first_batch) {
        history.initial_loss = ce.loss;
        first_batch = false;
      }
      model.backward(ce.grad_logits * (1.0 / static_cast<double>(count)));
      adam_step(model.parameters(), adam, config);
      loss_sum += ce.loss * static_cast<double>(count);
      for (Index i = 0; i < count; ++i) correct += argmax_row(logits, i) == batch.labels[static_cast<std::size_t>(i)];
      ++batch_no;
    }
    history.loss.push_back(loss_sum / static_cast<double>(n));
    history.accuracy.push_back(100.0 * static_cast<double>(correct) / static_cast<double>(n));
    if (valid_set) {
      const auto pred = predict(model, *valid_set);
      Index hits = 0;
      for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == valid_set->labels[i];
      history.valid_accuracy.push_back(100.0 * static_cast<double>(hits) / static_cast<double>(pred.size()));
    }
    history.seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count());
    if (on_epoch) on_epoch(epoch, history);
  }
  return history;
}

std::vector<int> predict(FusionModel& model, const Dataset& data, Index chunk) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(data.size()));
  std::vector<Index> all(static_cast<std::size_t>(data.size()));
  std::iota(all.begin(), all.end(), Index{0});
  for (const auto& [begin, end] : batch_ranges(data.size(), chunk)) {
    const Batch batch = data.gather(std::span<const Index>(all.data() + begin, static_cast<std::size_t>(end - begin)));
    const Tensor logits = model.forward(batch.blocks, nn::Mode::Infer);
    if (!all_finite(logits)) throw NumericError("predict: non-finite logits");
    for (Index i = 0; i < end - begin; ++i) out.push_back(argmax_row(logits, i));
  }
  return out;
}

}  // namespace harfuse
