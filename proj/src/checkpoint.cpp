#include "harfuse/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "harfuse/serialize.hpp"

namespace harfuse {

namespace fs = std::filesystem;
using nlohmann::json;

void to_json(json& j, const ModelConfig& c) {
  j = json{{"first", to_string(c.first)},
           {"second", to_string(c.second)},
           {"intermediate_fusion", c.intermediate_fusion},
           {"input_kind", to_string(c.input_kind)},
           {"class_count", c.class_count},
           {"first_width", c.first_width},
           {"second_width", c.second_width},
           {"input_length", c.input_length},
           {"input_channels", c.input_channels},
           {"clstm_steps", c.clstm_steps},
           {"kernel_1d", c.kernel_1d},
           {"stride_1d", c.stride_1d},
           {"kernel_2d", c.kernel_2d},
           {"stride_2d", c.stride_2d}};
}

void from_json(const json& j, ModelConfig& c) {
  c.first = parse_net_kind(j.at("first").get<std::string>());
  c.second = parse_net_kind(j.at("second").get<std::string>());
  c.intermediate_fusion = j.at("intermediate_fusion").get<bool>();
  c.input_kind = parse_input_kind(j.at("input_kind").get<std::string>());
  j.at("class_count").get_to(c.class_count);
  j.at("first_width").get_to(c.first_width);
  j.at("second_width").get_to(c.second_width);
  j.at("input_length").get_to(c.input_length);
  j.at("input_channels").get_to(c.input_channels);
  j.at("clstm_steps").get_to(c.clstm_steps);
  j.at("kernel_1d").get_to(c.kernel_1d);
  j.at("stride_1d").get_to(c.stride_1d);
  j.at("kernel_2d").get_to(c.kernel_2d);
  j.at("stride_2d").get_to(c.stride_2d);
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"learning_rate", c.learning_rate}, {"beta1", c.beta1}, {"beta2", c.beta2},
           {"epsilon", c.epsilon},             {"epochs", c.epochs}, {"seed", c.seed},
           {"shuffle", c.shuffle},             {"batch_size", c.batch_size}};
}

void from_json(const json& j, TrainConfig& c) {
  j.at("learning_rate").get_to(c.learning_rate);
  j.at("beta1").get_to(c.beta1);
  j.at("beta2").get_to(c.beta2);
  j.at("epsilon").get_to(c.epsilon);
  j.at("epochs").get_to(c.epochs);
  j.at("seed").get_to(c.seed);
  j.at("shuffle").get_to(c.shuffle);
  j.at("batch_size").get_to(c.batch_size);
}

namespace {

static_assert(sizeof(double) == 8);

void write_doubles(std::ofstream& out, const Tensor& t) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * 8));
  } else {
    for (double v : t) {
      auto bits = std::bit_cast<std::uint64_t>(v);
      char bytes[8];
      for (int b = 0; b < 8; ++b) bytes[b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
      out.write(bytes, 8);
    }
  }
}

void read_doubles(const std::vector<char>& buffer, std::size_t& offset, Tensor& t) {
  const auto bytes = static_cast<std::size_t>(t.size()) * 8;
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(t.data(), buffer.data() + offset, bytes);
  } else {
    for (Index i = 0; i < t.size(); ++i) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) {
        bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(buffer[offset + static_cast<std::size_t>(i) * 8 + b]))
                << (8 * b);
      }
      t[i] = std::bit_cast<double>(bits);
    }
  }
  offset += bytes;
}

std::vector<char> slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, const std::vector<Tensor>& tensors) {
  std::vector<const Tensor*> ptrs;
  for (const auto& t : tensors) ptrs.push_back(&t);
  write_tensor_file(path, ptrs);
}

void read_file(const fs::path& path, const std::vector<Tensor*>& targets) { read_tensor_file(path, targets); }

}  // namespace

void write_tensor_file(const fs::path& path, const std::vector<const Tensor*>& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  for (const Tensor* t : tensors) write_doubles(out, *t);
  if (!out) throw Error("write failed for " + path.string());
}

void read_tensor_file(const fs::path& path, const std::vector<Tensor*>& targets) {
  const auto buffer = slurp(path);
  std::size_t expected = 0;
  for (const Tensor* t : targets) expected += static_cast<std::size_t>(t->size()) * 8;
  if (buffer.size() != expected) {
    throw LoadError(path.string() + ": expected " + std::to_string(expected) + " bytes, found " +
                    std::to_string(buffer.size()) + (buffer.size() < expected ? " (truncated)" : " (trailing data)"));
  }
  std::size_t offset = 0;
  for (Tensor* t : targets) read_doubles(buffer, offset, *t);
}

void save_checkpoint(FusionModel& model, const fs::path& dir, const AdamState* optimizer) {
  fs::create_directories(dir);
  const auto params = model.parameters();
  json entries = json::array();
  std::vector<Tensor> values;
  for (const auto& p : params) {
    entries.push_back({{"name", p.name}, {"shape", p.value->shape()}, {"trainable", p.trainable}});
    values.push_back(*p.value);
  }
  json meta{{"format_version", kCheckpointVersion}, {"config", model.config()}, {"parameters", entries}};
  if (optimizer) {
    meta["optimizer"] = {{"kind", "adam"}, {"step", optimizer->step}};
    std::vector<Tensor> moments = optimizer->m;
    moments.insert(moments.end(), optimizer->v.begin(), optimizer->v.end());
    write_file(dir / "optimizer.bin", moments);
  } else {
    fs::remove(dir / "optimizer.bin");
  }
  write_file(dir / "params.bin", values);
  std::ofstream out(dir / "params.json", std::ios::trunc);
  if (!out) throw Error("cannot write " + (dir / "params.json").string());
  out << meta.dump(2) << "\n";
}

LoadedCheckpoint load_checkpoint(const fs::path& dir) {
  json meta;
  try {
    const auto text = slurp(dir / "params.json");
    meta = json::parse(text.begin(), text.end());
  } catch (const json::exception& e) {
    throw LoadError("malformed " + (dir / "params.json").string() + ": " + e.what());
  }
  ModelConfig config;
  std::vector<std::pair<std::string, Shape>> stored;
  try {
    const int version = meta.at("format_version").get<int>();
    if (version != kCheckpointVersion) {
      throw LoadError("checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
    }
    config = meta.at("config").get<ModelConfig>();
    for (const auto& e : meta.at("parameters")) {
      stored.emplace_back(e.at("name").get<std::string>(), e.at("shape").get<Shape>());
    }
  } catch (const json::exception& e) {
    throw LoadError("malformed checkpoint metadata: " + std::string(e.what()));
  } catch (const ConfigError& e) {
    throw LoadError("checkpoint config invalid: " + std::string(e.what()));
  }

  Rng rng(0);
  LoadedCheckpoint loaded;
  try {
    loaded.model = build_model(config, rng);
  } catch (const Error& e) {
    throw LoadError("checkpoint config cannot be built: " + std::string(e.what()));
  }
  const auto params = loaded.model->parameters();
  if (params.size() != stored.size()) {
    throw LoadError("checkpoint lists " + std::to_string(stored.size()) + " tensors, model has " +
                    std::to_string(params.size()));
  }
  std::vector<Tensor*> targets;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != stored[i].first || params[i].value->shape() != stored[i].second) {
      throw LoadError("checkpoint entry " + stored[i].first + " " + shape_string(stored[i].second) +
                      " does not match model entry " + params[i].name + " " + shape_string(params[i].value->shape()));
    }
    targets.push_back(params[i].value);
  }
  // Read into scratch copies so a failure leaves nothing half-loaded.
  std::vector<Tensor> scratch;
  for (Tensor* t : targets) scratch.push_back(zeros(t->shape()));
  std::vector<Tensor*> scratch_ptrs;
  for (auto& t : scratch) scratch_ptrs.push_back(&t);
  read_file(dir / "params.bin", scratch_ptrs);

  if (meta.contains("optimizer")) {
    AdamState state = AdamState::for_params(params);
    state.step = meta["optimizer"].value("step", std::int64_t{0});
    std::vector<Tensor*> moments;
    for (auto& t : state.m) moments.push_back(&t);
    for (auto& t : state.v) moments.push_back(&t);
    read_file(dir / "optimizer.bin", moments);
    loaded.optimizer = std::move(state);
  }
  for (std::size_t i = 0; i < targets.size(); ++i) *targets[i] = std::move(scratch[i]);
  return loaded;
}

LoadedCheckpoint load_checkpoint(const fs::path& dir, const ModelConfig& expected) {
  auto loaded = load_checkpoint(dir);
  if (!(loaded.model->config() == expected)) {
    throw LoadError("checkpoint holds " + loaded.model->config().label() + ", expected " + expected.label());
  }
  return loaded;
}

}  // namespace harfuse
