#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "owdetr/protocol/episode.hpp"

namespace owdetr::protocol {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout: 8-byte magic, u32 version, u32 reserved, u64 header length,
// u64 payload length, u32 CRC-32 of the payload, u32 reserved; then the
// payload: a JSON header followed by little-endian float64 blobs.
std::string encode_checkpoint(const EpisodeState& state);
// Throws ParseError, VersionError, TruncatedError or ChecksumError.
EpisodeState decode_checkpoint(const std::string& bytes);

void checkpoint_save(const EpisodeState& state, const std::filesystem::path& path);
EpisodeState checkpoint_load(const std::filesystem::path& path);

// CRC-32 of the model configuration, stored in the header.
std::uint32_t config_hash(const model::ModelConfig& cfg);

}  // namespace owdetr::protocol
