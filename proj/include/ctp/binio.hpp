#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

namespace ctp::binio {

// Little-endian scalar and string framing shared by the checkpoint and
// dataset containers.
void write_u32(std::ostream& os, std::uint32_t v);
void write_u64(std::ostream& os, std::uint64_t v);
void write_i64(std::ostream& os, std::int64_t v);
void write_f64(std::ostream& os, double v);
void write_str(std::ostream& os, const std::string& s);

std::uint32_t read_u32(std::istream& is);
std::uint64_t read_u64(std::istream& is);
std::int64_t read_i64(std::istream& is);
double read_f64(std::istream& is);
std::string read_str(std::istream& is);

}  // namespace ctp::binio
