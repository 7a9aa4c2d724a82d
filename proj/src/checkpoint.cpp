#include "ctp/checkpoint.hpp"

#include <fstream>

#include "ctp/binio.hpp"
#include "ctp/errors.hpp"

namespace ctp {

namespace {
constexpr char kMagic[5] = "CTPC";
}

const Tensor& Checkpoint::get(const std::string& name) const {
  for (const auto& [n, t] : entries)
    if (n == name) return t;
  throw MissingArtifactError("checkpoint entry not found: " + name);
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& [n, t] : entries)
    if (n == name) return true;
  return false;
}

void Checkpoint::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw MissingArtifactError("cannot open checkpoint for writing: " + path);
  os.write(kMagic, 4);
  binio::write_u32(os, kFormatVersion);
  binio::write_str(os, meta_json);
  binio::write_u32(os, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, t] : entries) {
    binio::write_str(os, name);
    binio::write_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) binio::write_i64(os, d);
    for (std::int64_t i = 0; i < t.size(); ++i) binio::write_f64(os, t[i]);
  }
  if (!os) throw MissingArtifactError("checkpoint write failed: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingArtifactError("checkpoint not found: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != std::string(kMagic, 4))
    throw MissingArtifactError("not a checkpoint file: " + path);
  const std::uint32_t version = binio::read_u32(is);
  if (version != kFormatVersion)
    throw MissingArtifactError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  ckpt.meta_json = binio::read_str(is);
  const std::uint32_t n = binio::read_u32(is);
  for (std::uint32_t k = 0; k < n; ++k) {
    const std::string name = binio::read_str(is);
    const std::uint32_t rank = binio::read_u32(is);
    std::vector<std::int64_t> shape(rank);
    for (auto& d : shape) d = binio::read_i64(is);
    Tensor t(shape);
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = binio::read_f64(is);
    ckpt.entries.emplace_back(name, std::move(t));
  }
  return ckpt;
}

}  // namespace ctp
