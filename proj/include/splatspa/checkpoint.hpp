#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "splatspa/trainer.hpp"

namespace splatspa {

// Layout: 8-byte magic "SPLATSPA", u32 format version, u64 header length,
// JSON header, then the columns listed in the header as little-endian
// float64 (u8 for the alive mask), back to back.
std::vector<std::uint8_t> encode_checkpoint(const CheckpointModel& model);
CheckpointModel decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const CheckpointModel& model, const std::filesystem::path& path);
/// Throws IoError, CorruptCheckpoint or VersionMismatch.
CheckpointModel load_checkpoint(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace splatspa
