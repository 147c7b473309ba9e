#include "ltdd/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <zlib.h>

#include "ltdd/errors.hpp"

namespace ltdd {
namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int k = 0; k < 4; ++k) out.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t offset) {
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= std::uint32_t{bytes[offset + k]} << (8 * k);
    return v;
}

std::uint32_t crc_of(std::span<const std::uint8_t> bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
    return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::vector<std::uint8_t> encode_container(const nlohmann::json& header, std::span<const double> payload) {
    nlohmann::json full = header;
    full["payload_values"] = payload.size();
    const std::string text = full.dump();

    std::vector<std::uint8_t> out(std::begin(kContainerMagic), std::end(kContainerMagic));
    out.push_back(kContainerVersion);
    put_u32(out, static_cast<std::uint32_t>(text.size()));
    out.insert(out.end(), text.begin(), text.end());

    const std::size_t payload_start = out.size();
    for (double v : payload) {
        const auto bits = std::bit_cast<std::uint64_t>(v);
        for (int k = 0; k < 8; ++k) out.push_back(static_cast<std::uint8_t>(bits >> (8 * k)));
    }
    const std::uint32_t crc = crc_of(std::span<const std::uint8_t>(out).subspan(payload_start));
    put_u32(out, crc);
    return out;
}

Container decode_container(std::span<const std::uint8_t> bytes) {
    using Kind = FormatError::Kind;
    if (bytes.size() < 4) throw FormatError(Kind::truncated, "truncated: file shorter than magic");
    if (std::memcmp(bytes.data(), kContainerMagic, 4) != 0) throw FormatError(Kind::bad_magic, "bad magic");
    if (bytes.size() < 9) throw FormatError(Kind::truncated, "truncated: incomplete preamble");
    if (bytes[4] != kContainerVersion) {
        throw FormatError(Kind::version_mismatch,
                          "version mismatch: file has " + std::to_string(bytes[4]) + ", reader supports " +
                              std::to_string(kContainerVersion));
    }
    const std::size_t header_len = get_u32(bytes, 5);
    if (bytes.size() < 9 + header_len) throw FormatError(Kind::truncated, "truncated: incomplete header");

    Container result;
    try {
        result.header = nlohmann::json::parse(bytes.begin() + 9, bytes.begin() + 9 + static_cast<std::ptrdiff_t>(header_len));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(Kind::malformed_header, std::string("malformed header: ") + e.what());
    }
    if (!result.header.contains("payload_values") || !result.header["payload_values"].is_number_unsigned()) {
        throw FormatError(Kind::malformed_header, "malformed header: missing payload_values");
    }
    const std::size_t values = result.header["payload_values"].get<std::size_t>();
    const std::size_t payload_start = 9 + header_len;
    const std::size_t expected = payload_start + 8 * values + 4;
    if (bytes.size() < expected) throw FormatError(Kind::truncated, "truncated: payload shorter than header declares");
    if (bytes.size() > expected) throw FormatError(Kind::malformed_header, "trailing bytes after checksum");

    const auto payload_bytes = bytes.subspan(payload_start, 8 * values);
    if (crc_of(payload_bytes) != get_u32(bytes, payload_start + 8 * values)) {
        throw FormatError(Kind::checksum_mismatch, "checksum failure: payload CRC32 does not match");
    }
    result.payload.resize(values);
    for (std::size_t i = 0; i < values; ++i) {
        std::uint64_t bits = 0;
        for (int k = 0; k < 8; ++k) bits |= std::uint64_t{payload_bytes[8 * i + k]} << (8 * k);
        result.payload[i] = std::bit_cast<double>(bits);
    }
    return result;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw FormatError(FormatError::Kind::io, "cannot write " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw FormatError(FormatError::Kind::io, "write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
    write_file_atomic(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void write_container(const std::filesystem::path& path, const nlohmann::json& header, std::span<const double> payload) {
    write_file_atomic(path, encode_container(header, payload));
}

Container read_container(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(FormatError::Kind::io, "cannot open " + path.string());
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_container(bytes);
}

}  // namespace ltdd
