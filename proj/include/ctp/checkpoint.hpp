#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ctp/tensor.hpp"

namespace ctp {

// Self-describing parameter container: versioned header, JSON metadata
// string, then named float64 little-endian blocks with explicit shapes.
// save -> load -> forward must be bit-exact.
struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  std::string meta_json = "{}";
  std::vector<std::pair<std::string, Tensor>> entries;

  void add(const std::string& name, const Tensor& t) { entries.emplace_back(name, t); }
  const Tensor& get(const std::string& name) const;
  bool has(const std::string& name) const;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

}  // namespace ctp
