#include "gundet/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "json.hpp"

#include "gundet/errors.hpp"

using nlohmann::json;

namespace gundet {

namespace {
constexpr char kMagic[4] = {'G', 'D', 'T', 'C'};
constexpr uint32_t kVersion = 1;

template <typename T>
void put(std::ofstream& f, T v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& f) {
  T v{};
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!f) throw DataError("checkpoint: truncated file");
  return v;
}
}  // namespace

void save_tensors(const std::string& path, const nn::ParamMap& params) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("checkpoint: cannot open for write: " + path);
  f.write(kMagic, 4);
  put<uint32_t>(f, kVersion);
  put<uint32_t>(f, static_cast<uint32_t>(params.size()));
  for (const auto& [name, tensor] : params) {
    put<uint32_t>(f, static_cast<uint32_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<uint32_t>(f, static_cast<uint32_t>(tensor.shape().size()));
    for (int d : tensor.shape()) put<int64_t>(f, d);
    f.write(reinterpret_cast<const char*>(tensor.data()),
            static_cast<std::streamsize>(tensor.size() * sizeof(double)));
  }
  if (!f) throw DataError("checkpoint: write failed: " + path);
}

nn::ParamMap load_tensors(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("checkpoint: cannot open: " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError("checkpoint: bad magic in " + path);
  if (get<uint32_t>(f) != kVersion)
    throw DataError("checkpoint: unsupported version in " + path);
  const uint32_t count = get<uint32_t>(f);
  nn::ParamMap params;
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = get<uint32_t>(f);
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    const uint32_t ndim = get<uint32_t>(f);
    std::vector<int> shape(ndim);
    for (auto& d : shape) d = static_cast<int>(get<int64_t>(f));
    Tensor t(shape);
    f.read(reinterpret_cast<char*>(t.data()),
           static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!f) throw DataError("checkpoint: truncated tensor data in " + path);
    params.emplace(std::move(name), std::move(t));
  }
  return params;
}

std::string history_to_json(const nn::TrainingHistory& history) {
  json j;
  j["best_epoch"] = history.best_epoch;
  j["stopped_epoch"] = history.stopped_epoch;
  j["epochs"] = json::array();
  for (const auto& e : history.epochs)
    j["epochs"].push_back({{"epoch", e.epoch},
                           {"train_loss", e.train_loss},
                           {"train_accuracy", e.train_accuracy},
                           {"val_loss", e.val_loss},
                           {"val_accuracy", e.val_accuracy}});
  return j.dump(2);
}

std::string sidecar_path(const std::string& checkpoint_path) {
  return checkpoint_path + ".json";
}

void save_sidecar(const std::string& checkpoint_path, const std::string& json_text) {
  std::ofstream f(sidecar_path(checkpoint_path));
  if (!f) throw DataError("checkpoint: cannot write sidecar for " + checkpoint_path);
  f << json_text;
  if (!json_text.empty() && json_text.back() != '\n') f << "\n";
}

std::string load_sidecar(const std::string& checkpoint_path) {
  std::ifstream f(sidecar_path(checkpoint_path));
  if (!f) throw DataError("checkpoint: missing sidecar for " + checkpoint_path);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace gundet
