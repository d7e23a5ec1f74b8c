#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <string>

#include "ssgan/layers.hpp"
#include "ssgan/tensor.hpp"

namespace ssgan::checkpoint {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr char kMagic[8] = {'S', 'S', 'G', 'A', 'N', 'C', 'K', 'P'};
inline constexpr uint32_t kFormatVersion = 1;

// One file: magic, format version, a JSON manifest and named float32/float64
// arrays, followed by the SHA-256 of all preceding bytes.
struct Archive {
  nlohmann::json manifest = nlohmann::json::object();
  std::map<std::string, TensorF> f32;
  std::map<std::string, TensorD> f64;

  const TensorF& tensor(const std::string& name) const;
};

// Writes to a temporary sibling and renames, so a crash never leaves a
// truncated archive under `path`.
void save(const Archive& archive, const std::filesystem::path& path);
Archive load(const std::filesystem::path& path);

// Parameters and buffers of a registry as f32 arrays keyed by their names.
void store(Archive& archive, const nn::ParamRegistry<float>& registry);
// Shape-checked; throws CheckpointError on a missing or mismatched array.
void restore(const Archive& archive, nn::ParamRegistry<float>& registry);

// SHA-256 over parameter and buffer names, shapes and values.
std::string registry_hash(const nn::ParamRegistry<float>& registry);

}  // namespace ssgan::checkpoint
