#ifndef EBJDAT_CHECKPOINT_HPP_
#define EBJDAT_CHECKPOINT_HPP_

// Binary checkpoint container:
//
//   "EBJD"  u32 schema_version
//   repeated { u32 name_len, name, u64 payload_len, payload }
//
// Sections: config (JSON text), spec, params, buffer, rng, optimizer,
// progress, log. Integers and doubles are little-endian; tensors are
// row-major.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ebjdat/config.hpp"
#include "ebjdat/trainer.hpp"

namespace ebjdat {

struct Checkpoint {
  std::uint32_t schema_version = kSchemaVersion;
  // Stored verbatim so save(load(bytes)) == bytes.
  std::string config_json;
  RunConfig config;
  TrainerState state;
};

Checkpoint make_checkpoint(const RunConfig& cfg, const Trainer& trainer);

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck);
// Throws CheckpointError (VersionError for a schema mismatch).
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ebjdat

#endif  // EBJDAT_CHECKPOINT_HPP_
