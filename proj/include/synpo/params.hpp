// Named parameter storage with per-parameter freeze flags, plus the on-disk
// checkpoint format: a JSON manifest (tensor table and a free-form meta
// object) next to a contiguous little-endian binary blob. Round-trips are
// byte-exact.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "synpo/tensor.hpp"

namespace synpo {

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are written in native little-endian layout");

template <typename T>
class ParameterStore {
 public:
  struct Entry {
    Tensor<T> tensor;
    bool trainable = true;
  };

  Tensor<T>& add(const std::string& name, Tensor<T> t, bool trainable = true) {
    auto [it, inserted] = entries_.emplace(name, Entry{std::move(t), trainable});
    if (!inserted) throw std::invalid_argument("parameter already exists: " + name);
    return it->second.tensor;
  }

  bool contains(const std::string& name) const { return entries_.count(name) > 0; }

  Tensor<T>& get(const std::string& name) { return entry(name).tensor; }
  const Tensor<T>& get(const std::string& name) const { return entry(name).tensor; }

  bool trainable(const std::string& name) const { return entry(name).trainable; }
  void set_trainable(const std::string& name, bool v) { entry(name).trainable = v; }
  void freeze_all() {
    for (auto& [k, e] : entries_) e.trainable = false;
  }

  // Deterministic (lexicographic) iteration order.
  const std::map<std::string, Entry>& entries() const { return entries_; }
  std::map<std::string, Entry>& entries() { return entries_; }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& [k, e] : entries_) out.push_back(k);
    return out;
  }

  int64_t total_elements() const {
    int64_t n = 0;
    for (const auto& [k, e] : entries_) n += e.tensor.numel();
    return n;
  }

 private:
  Entry& entry(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::out_of_range("unknown parameter: " + name);
    return it->second;
  }
  const Entry& entry(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::out_of_range("unknown parameter: " + name);
    return it->second;
  }

  std::map<std::string, Entry> entries_;
};

namespace detail {
template <typename T>
constexpr const char* dtype_name() {
  if constexpr (std::is_same_v<T, float>)
    return "f32";
  else
    return "f64";
}
}  // namespace detail

// Writes <path>.bin (value blob) and <path>.manifest (JSON). `meta` carries
// model-level fields (grid sizes, embedding dims, ...) and may be empty.
template <typename T>
void save_checkpoint(const ParameterStore<T>& store, const std::string& path,
                     const nlohmann::json& meta = nlohmann::json::object()) {
  nlohmann::json manifest;
  manifest["format"] = "synpo-checkpoint-v1";
  manifest["meta"] = meta;
  auto tensors = nlohmann::json::array();

  std::ofstream bin(path + ".bin", std::ios::binary | std::ios::trunc);
  if (!bin) throw std::runtime_error("cannot open for writing: " + path + ".bin");
  int64_t offset = 0;
  for (const auto& [name, e] : store.entries()) {
    nlohmann::json t;
    t["name"] = name;
    t["shape"] = e.tensor.shape();
    t["dtype"] = detail::dtype_name<T>();
    t["offset"] = offset;
    t["trainable"] = e.trainable;
    tensors.push_back(std::move(t));
    const int64_t bytes = e.tensor.numel() * static_cast<int64_t>(sizeof(T));
    bin.write(reinterpret_cast<const char*>(e.tensor.data()), bytes);
    offset += bytes;
  }
  manifest["tensors"] = std::move(tensors);
  if (!bin) throw std::runtime_error("write failed: " + path + ".bin");
  bin.close();

  std::ofstream mf(path + ".manifest", std::ios::trunc);
  if (!mf) throw std::runtime_error("cannot open for writing: " + path + ".manifest");
  mf << manifest.dump(2) << "\n";
}

template <typename T>
nlohmann::json load_checkpoint(ParameterStore<T>& store, const std::string& path) {
  std::ifstream mf(path + ".manifest");
  if (!mf) throw std::runtime_error("cannot open checkpoint manifest: " + path + ".manifest");
  nlohmann::json manifest = nlohmann::json::parse(mf);
  if (manifest.value("format", "") != "synpo-checkpoint-v1")
    throw std::runtime_error("unrecognized checkpoint format in " + path + ".manifest");

  std::ifstream bin(path + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("cannot open checkpoint blob: " + path + ".bin");

  store = ParameterStore<T>();
  for (const auto& t : manifest.at("tensors")) {
    const std::string name = t.at("name");
    const std::string dtype = t.at("dtype");
    if (dtype != detail::dtype_name<T>())
      throw std::runtime_error("checkpoint tensor " + name + " has dtype " + dtype +
                               ", expected " + detail::dtype_name<T>());
    Shape shape = t.at("shape").get<Shape>();
    Tensor<T> tensor(shape);
    bin.seekg(t.at("offset").get<int64_t>());
    bin.read(reinterpret_cast<char*>(tensor.data()),
             tensor.numel() * static_cast<int64_t>(sizeof(T)));
    if (!bin) throw std::runtime_error("checkpoint blob truncated reading " + name);
    store.add(name, std::move(tensor), t.value("trainable", true));
  }
  return manifest.at("meta");
}

}  // namespace synpo
