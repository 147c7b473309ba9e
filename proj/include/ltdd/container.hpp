#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

namespace ltdd {

// On-disk layout shared by trajectory and synthetic-set files:
//
//   "LTDD" | version 0x01 | header length (u32 LE) | UTF-8 JSON header |
//   payload (f64 LE) | CRC32 of payload bytes (u32 LE)
//
// The header records "payload_values" so truncation is detected before the
// checksum is consulted.
inline constexpr char kContainerMagic[4] = {'L', 'T', 'D', 'D'};
inline constexpr std::uint8_t kContainerVersion = 0x01;

struct Container {
    nlohmann::json header;
    std::vector<double> payload;
};

std::vector<std::uint8_t> encode_container(const nlohmann::json& header, std::span<const double> payload);
Container decode_container(std::span<const std::uint8_t> bytes);

/// Writes through a temporary file and renames it into place.
void write_container(const std::filesystem::path& path, const nlohmann::json& header, std::span<const double> payload);
Container read_container(const std::filesystem::path& path);

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace ltdd
