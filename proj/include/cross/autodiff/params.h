#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "cross/autodiff/tensor.h"

namespace cross::ad {

// Named, ordered collection of learnable tensors. Registration order is the
// order used by optimizers and checkpoint files.
class ParamStore {
 public:
  // Uniform in [-bound, bound].
  Tensor add_uniform(const std::string& path, Shape shape, double bound, std::mt19937_64& rng);
  Tensor add_zeros(const std::string& path, Shape shape);
  Tensor add(const std::string& path, Tensor value);

  bool contains(const std::string& path) const { return index_.count(path) != 0; }
  const Tensor& get(const std::string& path) const;
  const std::vector<std::string>& paths() const { return paths_; }
  std::vector<Tensor> tensors() const;
  // Every parameter whose path starts with prefix.
  std::vector<Tensor> tensors_with_prefix(const std::string& prefix) const;
  std::size_t parameter_count() const;
  void zero_grad();

  // Copies values from another store with identical paths and shapes.
  void copy_from(const ParamStore& other);
  // FNV-1a over paths, shapes and raw bytes of every value.
  std::uint64_t fingerprint() const;

  // Writes {prefix + path: {"shape", "data"}} entries into `out`.
  void to_json(nlohmann::json& out, const std::string& prefix = "") const;
  // Loads every registered parameter from `doc[prefix + path]`; shapes must
  // match exactly and every path must be present.
  void load_json(const nlohmann::json& doc, const std::string& prefix = "");

 private:
  std::vector<std::string> paths_;
  std::vector<Tensor> values_;
  std::map<std::string, std::size_t> index_;
};

// Checkpoint file: {"meta": <any>, "params": {path: {"shape": [...], "data": [...]}}}.
// Doubles are written in shortest round-trip form, so values reload bit-exactly.
// Each group is (prefix, store).
void save_checkpoint(const std::filesystem::path& file, const nlohmann::json& meta,
                     const std::vector<std::pair<std::string, const ParamStore*>>& groups);
nlohmann::json read_checkpoint(const std::filesystem::path& file);

}  // namespace cross::ad
