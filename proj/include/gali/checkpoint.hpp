#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gali/nets.hpp"
#include "gali/tape.hpp"
#include "gali/tensor.hpp"

namespace gali {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Binary layout, all integers little-endian:
///   magic "GALI" | u32 version (1) | u32 entry count |
///   per entry: u32 name length | name bytes | u32 rank | u32 dims... |
///              f32 data... |
///   u64 FNV-1a digest of all preceding bytes.
/// Values are truncated to 32-bit floats on save.
constexpr std::uint32_t kCheckpointVersion = 1;

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t len);

using CheckpointEntries = std::vector<std::pair<std::string, Tensor>>;

void save_entries(const CheckpointEntries& entries, const std::string& path);
CheckpointEntries load_entries(const std::string& path);

/// Parameters plus the discriminator power-iteration state, in a stable order.
CheckpointEntries collect_entries(ModelBundle& m);
void save_checkpoint(ModelBundle& m, const std::string& path);
/// Fills an already-constructed bundle; name or shape mismatches throw.
void load_checkpoint(ModelBundle& m, const std::string& path);

void save_feature_net(const ParamStore& params, const std::string& path);
void load_feature_net(ParamStore& params, const std::string& path);

}  // namespace gali
