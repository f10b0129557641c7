#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "csmae/optim.hpp"
#include "csmae/tensor.hpp"

namespace csmae {

// Named float tensors in the CSMA container: "CSMA", u32 version, u32 entry count,
// then per tensor u16 name length, UTF-8 name, u8 ndim, u32 dims, little-endian f32 data.
class Checkpoint {
 public:
  void put(const std::string& name, const Tensor& tensor);
  void put(const std::string& name, Shape shape, const std::vector<Real>& values);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Tensor& get(const std::string& name) const;
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }

  // Text blobs stored byte-per-element.
  void put_text(const std::string& name, const std::string& text);
  std::string get_text(const std::string& name) const;

  void put_params(const std::string& prefix, const ParamSet& params);
  // Copies stored values into `params` in place; every parameter must be present
  // with a matching shape.
  void load_params(const std::string& prefix, ParamSet& params) const;
  void put_optimizer(const std::string& prefix, const ParamSet& params, const OptimizerState& state);
  void load_optimizer(const std::string& prefix, const ParamSet& params, OptimizerState& state) const;

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace csmae
