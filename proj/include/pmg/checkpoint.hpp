#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "pmg/mlp.hpp"

namespace pmg {

inline constexpr char kCheckpointMagic[4] = {'P', 'M', 'G', 'L'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout, all integers little-endian:
//   "PMGL" | u32 version | u32 layer count |
//   per layer: u32 rows | u32 cols | u8 activation | f64 weights (row-major) | f64 bias
void write_checkpoint(std::ostream& out, const Mlp& m);
/// Throws ConfigError on bad magic, unknown version, truncation or unknown tags.
Mlp read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const Mlp& m);
Mlp load_checkpoint(const std::filesystem::path& path);

}  // namespace pmg
