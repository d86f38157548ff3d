#include "cross/autodiff/params.h"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace cross::ad {

Tensor ParamStore::add_uniform(const std::string& path, Shape shape, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> data(shape_size(shape));
  for (auto& v : data) v = dist(rng);
  return add(path, Tensor::from(std::move(shape), std::move(data), true));
}

Tensor ParamStore::add_zeros(const std::string& path, Shape shape) {
  return add(path, Tensor::zeros(std::move(shape), true));
}

Tensor ParamStore::add(const std::string& path, Tensor value) {
  if (index_.count(path)) throw std::invalid_argument("ParamStore: duplicate parameter '" + path + "'");
  value.set_requires_grad(true);
  index_[path] = values_.size();
  paths_.push_back(path);
  values_.push_back(value);
  return value;
}

const Tensor& ParamStore::get(const std::string& path) const {
  auto it = index_.find(path);
  if (it == index_.end()) throw std::out_of_range("ParamStore: no parameter '" + path + "'");
  return values_[it->second];
}

std::vector<Tensor> ParamStore::tensors() const { return values_; }

std::vector<Tensor> ParamStore::tensors_with_prefix(const std::string& prefix) const {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < paths_.size(); ++i)
    if (paths_[i].rfind(prefix, 0) == 0) out.push_back(values_[i]);
  return out;
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& v : values_) v.zero_grad();
}

void ParamStore::copy_from(const ParamStore& other) {
  if (other.paths_ != paths_) throw std::invalid_argument("ParamStore::copy_from: parameter sets differ");
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (values_[i].shape() != other.values_[i].shape()) {
      throw std::invalid_argument("ParamStore::copy_from: shape mismatch at '" + paths_[i] + "'");
    }
    auto dst = values_[i].mutable_data();
    const auto src = other.values_[i].data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

std::uint64_t ParamStore::fingerprint() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* bytes, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  for (std::size_t i = 0; i < values_.size(); ++i) {
    mix(paths_[i].data(), paths_[i].size());
    for (auto d : values_[i].shape()) mix(&d, sizeof d);
    const auto data = values_[i].data();
    mix(data.data(), data.size() * sizeof(double));
  }
  return h;
}

void ParamStore::to_json(nlohmann::json& out, const std::string& prefix) const {
  for (std::size_t i = 0; i < values_.size(); ++i) {
    const auto data = values_[i].data();
    out[prefix + paths_[i]] = {{"shape", values_[i].shape()},
                               {"data", std::vector<double>(data.begin(), data.end())}};
  }
}

void ParamStore::load_json(const nlohmann::json& doc, const std::string& prefix) {
  for (std::size_t i = 0; i < values_.size(); ++i) {
    const std::string key = prefix + paths_[i];
    if (!doc.contains(key)) throw std::invalid_argument("checkpoint: missing parameter '" + key + "'");
    const auto& entry = doc.at(key);
    const auto shape = entry.at("shape").get<Shape>();
    if (shape != values_[i].shape()) {
      throw std::invalid_argument("checkpoint: parameter '" + key + "' has shape " + shape_str(shape) +
                                  ", expected " + shape_str(values_[i].shape()));
    }
    const auto data = entry.at("data").get<std::vector<double>>();
    if (data.size() != values_[i].size()) throw std::invalid_argument("checkpoint: bad data length for '" + key + "'");
    auto dst = values_[i].mutable_data();
    std::copy(data.begin(), data.end(), dst.begin());
  }
}

void save_checkpoint(const std::filesystem::path& file, const nlohmann::json& meta,
                     const std::vector<std::pair<std::string, const ParamStore*>>& groups) {
  nlohmann::json doc;
  doc["meta"] = meta;
  doc["params"] = nlohmann::json::object();
  for (const auto& [prefix, store] : groups) store->to_json(doc["params"], prefix);
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write checkpoint " + file.string());
  out << doc.dump();
}

nlohmann::json read_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open checkpoint " + file.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("checkpoint " + file.string() + " is not valid JSON: " + e.what());
  }
  if (!doc.contains("params") || !doc.contains("meta")) {
    throw std::runtime_error("checkpoint " + file.string() + " lacks 'meta'/'params'");
  }
  return doc;
}

}  // namespace cross::ad
