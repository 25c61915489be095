#include <cstring>
#include <map>
#include <mutex>

#include "futuregan/error.hpp"
#include "futuregan/fileio.hpp"
#include "futuregan/trainer.hpp"

namespace futuregan::trainer {

namespace {

// Layout: magic | u64 header length | JSON header | u64 payload length | payload.
constexpr char kMagic[8] = {'F', 'G', 'C', 'K', 'P', 'T', '0', '1'};
constexpr int kFormatVersion = 1;

struct Entry {
  std::string name;
  torch::Tensor tensor;
};

std::string dtype_name(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32: return "float32";
    case torch::kUInt8: return "uint8";
    default: throw ValidationError("unsupported checkpoint dtype");
  }
}

torch::ScalarType dtype_from(const std::string& s) {
  if (s == "float32") return torch::kFloat32;
  if (s == "uint8") return torch::kUInt8;
  throw IoError("corrupt checkpoint: unknown dtype " + s);
}

torch::Tensor rng_state(at::Generator gen) {
  std::lock_guard<std::mutex> lock(gen.mutex());
  return gen.get_state();
}

void collect(std::vector<Entry>& out, const std::string& prefix, const torch::nn::Module& m) {
  for (const auto& item : m.named_parameters(/*recurse=*/true)) out.push_back({prefix + item.key(), item.value()});
}

void collect(std::vector<Entry>& out, const std::string& prefix, const Adam& adam) {
  for (const auto& s : adam.slots()) {
    out.push_back({prefix + s.name + "/exp_avg", s.exp_avg});
    out.push_back({prefix + s.name + "/exp_avg_sq", s.exp_avg_sq});
  }
}

nlohmann::json adam_steps(const Adam& adam) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& s : adam.slots()) j[s.name] = s.steps;
  return j;
}

}  // namespace

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
  std::vector<Entry> entries;
  collect(entries, "generator/", *state.generator);
  collect(entries, "discriminator/", *state.discriminator);
  collect(entries, "adam_g/", state.adam_g);
  collect(entries, "adam_d/", state.adam_d);
  entries.push_back({"rng/init", rng_state(state.init_rng)});
  entries.push_back({"rng/interpolation", rng_state(state.interp_rng)});

  std::string payload;
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& e : entries) {
    const auto t = e.tensor.detach().contiguous();
    const auto nbytes = static_cast<size_t>(t.numel()) * t.element_size();
    tensors.push_back({{"name", e.name},
                       {"dtype", dtype_name(t.scalar_type())},
                       {"shape", t.sizes().vec()},
                       {"offset", payload.size()},
                       {"nbytes", nbytes}});
    payload.append(static_cast<const char*>(t.data_ptr()), nbytes);
  }

  const nlohmann::json header = {
      {"format_version", kFormatVersion},
      {"config", state.config.to_json()},
      {"config_hash", fileio::hex64(state.config.hash())},
      {"cursor", state.cursor.to_json()},
      {"levels", {{"generator", state.generator->level()}, {"discriminator", state.discriminator->level()}}},
      {"adam_steps", {{"generator", adam_steps(state.adam_g)}, {"discriminator", adam_steps(state.adam_d)}}},
      {"tensors", tensors},
      {"payload_hash", fileio::hex64(fileio::fnv1a64(payload))},
  };
  const std::string h = header.dump();
  std::string bytes(kMagic, sizeof kMagic);
  fileio::put_u64(bytes, h.size());
  bytes += h;
  fileio::put_u64(bytes, payload.size());
  bytes += payload;
  fileio::atomic_write(path, bytes);
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = fileio::read_file(path);
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 6) != 0)
    throw IoError("not a checkpoint file: " + path.string());
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw IncompatibleCheckpoint("checkpoint format tag " + bytes.substr(0, 8) + " is not supported");

  const uint64_t header_len = fileio::get_u64(bytes, 8);
  if (header_len > bytes.size() - 16) throw IoError("corrupt checkpoint: truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(16, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("corrupt checkpoint header: ") + e.what());
  }
  const size_t payload_at = 16 + header_len + 8;
  const uint64_t payload_len = fileio::get_u64(bytes, 16 + header_len);
  if (payload_at + payload_len != bytes.size()) throw IoError("corrupt checkpoint: payload size mismatch");
  const std::string_view payload(bytes.data() + payload_at, payload_len);

  try {
    if (header.at("format_version").get<int>() != kFormatVersion)
      throw IncompatibleCheckpoint("checkpoint format version " + header.at("format_version").dump() +
                                   " is not supported (expected " + std::to_string(kFormatVersion) + ")");
    if (header.at("payload_hash").get<std::string>() != fileio::hex64(fileio::fnv1a64(payload)))
      throw IoError("corrupt checkpoint: payload hash mismatch");

    config::KeyValueConfig kv;
    for (const auto& [k, v] : header.at("config").items()) kv.set(k, v.get<std::string>());
    const auto cfg = TrainConfig::from_kv(kv);
    if (fileio::hex64(cfg.hash()) != header.at("config_hash").get<std::string>())
      throw IncompatibleCheckpoint("checkpoint config hash does not match its embedded config");

    auto state = TrainState::fresh(cfg);
    const int64_t level = header.at("levels").at("generator");
    if (header.at("levels").at("discriminator").get<int64_t>() != level)
      throw IoError("corrupt checkpoint: network levels differ");
    if (level < 0 || level >= cfg.network.num_levels()) throw IoError("corrupt checkpoint: level out of range");
    for (int64_t l = 0; l < level; ++l) state.grow();
    state.cursor = PhaseCursor::from_json(header.at("cursor"));

    std::map<std::string, torch::Tensor> stored;
    for (const auto& t : header.at("tensors")) {
      const auto dtype = dtype_from(t.at("dtype"));
      const auto shape = t.at("shape").get<std::vector<int64_t>>();
      const uint64_t offset = t.at("offset");
      const uint64_t nbytes = t.at("nbytes");
      auto tensor = torch::empty(shape, dtype);
      if (offset + nbytes > payload.size() || nbytes != static_cast<uint64_t>(tensor.numel()) * tensor.element_size())
        throw IoError("corrupt checkpoint: tensor extent out of bounds");
      std::memcpy(tensor.data_ptr(), payload.data() + offset, nbytes);
      stored.emplace(t.at("name").get<std::string>(), std::move(tensor));
    }
    auto take = [&](const std::string& name, const torch::Tensor& like) {
      const auto it = stored.find(name);
      if (it == stored.end()) throw IoError("corrupt checkpoint: missing tensor " + name);
      if (it->second.sizes() != like.sizes()) throw IoError("corrupt checkpoint: shape mismatch for " + name);
      return it->second;
    };

    torch::NoGradGuard no_grad;
    for (auto& item : state.generator->named_parameters()) item.value().copy_(take("generator/" + item.key(), item.value()));
    for (auto& item : state.discriminator->named_parameters())
      item.value().copy_(take("discriminator/" + item.key(), item.value()));
    auto restore_adam = [&](Adam& adam, const std::string& prefix, const nlohmann::json& steps) {
      for (auto& s : adam.slots()) {
        s.exp_avg.copy_(take(prefix + s.name + "/exp_avg", s.exp_avg));
        s.exp_avg_sq.copy_(take(prefix + s.name + "/exp_avg_sq", s.exp_avg_sq));
        s.steps = steps.at(s.name);
      }
    };
    restore_adam(state.adam_g, "adam_g/", header.at("adam_steps").at("generator"));
    restore_adam(state.adam_d, "adam_d/", header.at("adam_steps").at("discriminator"));
    for (auto [gen, name] : {std::pair{&state.init_rng, "rng/init"}, std::pair{&state.interp_rng, "rng/interpolation"}}) {
      const auto it = stored.find(name);
      if (it == stored.end()) throw IoError(std::string("corrupt checkpoint: missing ") + name);
      std::lock_guard<std::mutex> lock(gen->mutex());
      gen->set_state(it->second);
    }
    if (stored.size() != 2 + state.generator->named_parameters().size() + state.discriminator->named_parameters().size() +
                             2 * (state.adam_g.slots().size() + state.adam_d.slots().size()))
      throw IoError("corrupt checkpoint: unexpected tensors");
    return state;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("corrupt checkpoint header: ") + e.what());
  } catch (const c10::Error& e) {
    throw IoError(std::string("corrupt checkpoint: ") + e.what_without_backtrace());
  }
}

}  // namespace futuregan::trainer
