#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "semaug/tensor.hpp"

namespace semaug {

/// Parameters keyed by name, in insertion order. Addresses are stable.
class ParameterStore {
 public:
  Parameter& add(std::string name, Tensor value);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::size_t size() const noexcept { return params_.size(); }
  std::size_t total_values() const;
  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;

  void zero_grad();

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::unordered_map<std::string, Parameter*> by_name_;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

// Container layout, all integers u64 little-endian, values f64 little-endian:
//   "SEMAUGCK" version count { name_len name rank dims[rank] values[prod(dims)] }*
inline constexpr char kCheckpointMagic[8] = {'S', 'E', 'M', 'A', 'U', 'G', 'C', 'K'};
inline constexpr std::uint64_t kCheckpointVersion = 1;

std::string encode_checkpoint(const NamedTensors& tensors);
NamedTensors decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors);
NamedTensors load_checkpoint(const std::filesystem::path& path);

NamedTensors snapshot(const ParameterStore& store);
/// Copies values into matching parameters; every parameter must be present with its shape.
void restore(ParameterStore& store, const NamedTensors& tensors);

}  // namespace semaug
