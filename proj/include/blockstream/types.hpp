#pragma once

#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace blockstream {

using FileId = std::uint32_t;

/// Granularity of caching, prediction and transfer. Configurable so tests
/// can shrink it; production default matches the 4 KB filesystem block.
inline constexpr std::uint32_t kDefaultBlockSize = 4096;

struct BlockId {
    FileId file_id = 0;
    std::uint32_t block_index = 0;

    auto operator<=>(const BlockId&) const = default;
};

/// Packed key for use in hash maps and sorted vectors.
using BlockKey = std::uint64_t;

inline constexpr BlockKey block_key(BlockId b) {
    return (static_cast<std::uint64_t>(b.file_id) << 32) | b.block_index;
}

inline constexpr BlockId block_from_key(BlockKey k) {
    return BlockId{static_cast<FileId>(k >> 32),
                   static_cast<std::uint32_t>(k & 0xffffffffu)};
}

struct BlockRead {
    std::int64_t timestamp_ms = 0;
    BlockId block;
};

// Error hierarchy. Exit codes in the CLI map onto these categories.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : DataError {
    using DataError::DataError;
};

struct NetworkError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CacheExhaustedError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace blockstream
