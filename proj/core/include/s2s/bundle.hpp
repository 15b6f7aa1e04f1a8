#pragma once

#include "s2s/model.hpp"
#include "s2s/vocab.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace s2s {

// Layout (all integers little-endian):
//   "S2SB" | u32 header_len | header JSON | payload (f32 LE, row-major) | u32 CRC32(header JSON + payload)
// The header carries format_version, V, d, h, max_seq_len, gate_order "ifgo",
// layout "row-major", the tensor manifest {name, rows, cols, offset} and the
// id-ordered vocabulary.

inline constexpr std::array<char, 4> bundle_magic{'S', '2', 'S', 'B'};
inline constexpr std::uint32_t bundle_format_version = 1;

struct LoadedModel {
    ModelParams params;
    Vocab vocab;
};

std::vector<std::uint8_t> serialize_bundle(const ModelParams& m, const Vocab& vocab);
LoadedModel deserialize_bundle(std::span<const std::uint8_t> bytes);

/// Writes atomically (temp file + rename).
void export_model(const ModelParams& m, const Vocab& vocab, const std::filesystem::path& path);
LoadedModel import_model(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

} // namespace s2s
