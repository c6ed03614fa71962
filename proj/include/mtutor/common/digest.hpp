#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace mtutor {

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

/// CRC-32 (IEEE) of `data`, as used for event-log record checksums.
std::uint32_t crc32_of(std::string_view data);

} // namespace mtutor
