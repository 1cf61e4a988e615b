#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "wdis/networks.hpp"
#include "wdis/prior.hpp"

namespace wdis {

// Versioned binary container:
//   "WDCK" | u32 version | architecture echo | u32 block count | blocks
// Each block is u32 name length, name bytes, u32 rank, u32 dims, then
// little-endian float32 values. All integers are little-endian u32.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Block {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  bool operator==(const Block&) const = default;
};

struct Checkpoint {
  ArchConfig arch;
  std::vector<Block> blocks;

  const Block* find(std::string_view name) const;
  const Block& at(std::string_view name) const;  // DataError when missing
  void put(Block block);                          // replaces a block of the same name

  bool operator==(const Checkpoint&) const = default;
};

void write_checkpoint(const std::string& path, const Checkpoint& checkpoint);
std::vector<unsigned char> serialize_checkpoint(const Checkpoint& checkpoint);
// Throws DataError with a diagnostic naming the malformed part.
Checkpoint read_checkpoint(const std::string& path);
Checkpoint parse_checkpoint(const std::vector<unsigned char>& bytes);

void put_parameters(Checkpoint& checkpoint, std::string_view prefix, const nn::ParameterSet<float>& params);
// Fills every parameter of `params` from blocks "<prefix><name>"; shapes must match.
void get_parameters(const Checkpoint& checkpoint, std::string_view prefix, nn::ParameterSet<float>& params);

void put_network(Checkpoint& checkpoint, const NetworkParams<float>& params);
NetworkParams<float> get_network(const Checkpoint& checkpoint, const Architecture& arch);

void put_prior(Checkpoint& checkpoint, const GMPrior& prior);
bool has_prior(const Checkpoint& checkpoint);
GMPrior get_prior(const Checkpoint& checkpoint);

// Unsigned counters stored exactly as float blocks of 16-bit chunks.
void put_counters(Checkpoint& checkpoint, std::string_view name, const std::vector<std::uint64_t>& values);
std::vector<std::uint64_t> get_counters(const Checkpoint& checkpoint, std::string_view name);

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);
std::string file_digest(const std::string& path);

}  // namespace wdis
