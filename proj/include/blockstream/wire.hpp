#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include <zlib.h>

#include <arpa/inet.h>
#include <netdb.h>
#include <sys/socket.h>
#include <unistd.h>

#include "blockstream/types.hpp"

namespace blockstream {

// Wire protocol (big-endian):
//   frame    = u32 length (bytes after this field), u8 type, u32 request-id
//   types      1=URGENT_REQ, 2=SPEC_REQ, 3=RESP, 4=ERROR
//   request  = u32 file_id, u32 range_count, then (u32 first_block, u32 count)
//   response = u32 request-id echo, u32 block_count,
//              then per block: u32 file_id, u32 block_index, u32 crc32, payload
//   error    = u32 code, u32 message_len, message
enum class FrameType : std::uint8_t {
    UrgentReq = 1,
    SpecReq = 2,
    Resp = 3,
    Error = 4,
};

inline constexpr std::uint32_t kErrNotFound = 1;
inline constexpr std::uint32_t kErrBadRequest = 2;

struct BlockRange {
    std::uint32_t first_block = 0;
    std::uint32_t count = 0;
};

struct WireRequest {
    FrameType type = FrameType::UrgentReq;
    std::uint32_t request_id = 0;
    FileId file_id = 0;
    std::vector<BlockRange> ranges;
};

namespace wire {

inline void put_u32(std::vector<std::uint8_t>& buf, std::uint32_t v) {
    buf.push_back(static_cast<std::uint8_t>(v >> 24));
    buf.push_back(static_cast<std::uint8_t>(v >> 16));
    buf.push_back(static_cast<std::uint8_t>(v >> 8));
    buf.push_back(static_cast<std::uint8_t>(v));
}

inline std::uint32_t get_u32(const std::uint8_t* p) {
    return (static_cast<std::uint32_t>(p[0]) << 24) |
           (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

inline std::uint32_t payload_crc(const std::uint8_t* data, std::size_t len) {
    return static_cast<std::uint32_t>(
        ::crc32(0L, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(len)));
}

inline void send_all(int fd, const std::uint8_t* data, std::size_t len) {
    std::size_t off = 0;
    while (off < len) {
        ssize_t n = ::send(fd, data + off, len - off, MSG_NOSIGNAL);
        if (n <= 0) throw NetworkError("send failed");
        off += static_cast<std::size_t>(n);
    }
}

inline bool recv_all(int fd, std::uint8_t* data, std::size_t len) {
    std::size_t off = 0;
    while (off < len) {
        ssize_t n = ::recv(fd, data + off, len - off, 0);
        if (n == 0) return false;  // peer closed
        if (n < 0) throw NetworkError("recv failed");
        off += static_cast<std::size_t>(n);
    }
    return true;
}

inline void send_frame(int fd, FrameType type, std::uint32_t request_id,
                       const std::vector<std::uint8_t>& body) {
    std::vector<std::uint8_t> frame;
    frame.reserve(body.size() + 9);
    put_u32(frame, static_cast<std::uint32_t>(body.size() + 5));
    frame.push_back(static_cast<std::uint8_t>(type));
    put_u32(frame, request_id);
    frame.insert(frame.end(), body.begin(), body.end());
    send_all(fd, frame.data(), frame.size());
}

struct Frame {
    FrameType type;
    std::uint32_t request_id;
    std::vector<std::uint8_t> body;
};

inline bool recv_frame(int fd, Frame& out) {
    std::uint8_t hdr[9];
    if (!recv_all(fd, hdr, 4)) return false;
    std::uint32_t length = get_u32(hdr);
    if (length < 5 || length > (1u << 28)) throw NetworkError("bad frame length");
    if (!recv_all(fd, hdr + 4, 5)) throw NetworkError("truncated frame header");
    out.type = static_cast<FrameType>(hdr[4]);
    out.request_id = get_u32(hdr + 5);
    out.body.resize(length - 5);
    if (!out.body.empty() && !recv_all(fd, out.body.data(), out.body.size()))
        throw NetworkError("truncated frame body");
    return true;
}

inline std::vector<std::uint8_t> encode_request(FileId file_id,
                                                const std::vector<BlockRange>& ranges) {
    std::vector<std::uint8_t> body;
    put_u32(body, file_id);
    put_u32(body, static_cast<std::uint32_t>(ranges.size()));
    for (const auto& r : ranges) {
        put_u32(body, r.first_block);
        put_u32(body, r.count);
    }
    return body;
}

inline WireRequest decode_request(const Frame& f) {
    if (f.body.size() < 8) throw NetworkError("short request body");
    WireRequest req;
    req.type = f.type;
    req.request_id = f.request_id;
    req.file_id = get_u32(f.body.data());
    std::uint32_t nranges = get_u32(f.body.data() + 4);
    if (f.body.size() != 8 + static_cast<std::size_t>(nranges) * 8)
        throw NetworkError("malformed request body");
    for (std::uint32_t i = 0; i < nranges; ++i) {
        const std::uint8_t* p = f.body.data() + 8 + i * 8;
        req.ranges.push_back(BlockRange{get_u32(p), get_u32(p + 4)});
    }
    return req;
}

}  // namespace wire

struct FetchedBlock {
    BlockId block;
    std::vector<std::uint8_t> payload;
};

/// Parse a RESP body into blocks, verifying checksums.
inline std::vector<FetchedBlock> decode_response(const wire::Frame& f,
                                                 std::uint32_t block_size) {
    if (f.body.size() < 8) throw NetworkError("short response body");
    std::vector<FetchedBlock> out;
    std::uint32_t count = wire::get_u32(f.body.data() + 4);
    std::size_t pos = 8;
    for (std::uint32_t i = 0; i < count; ++i) {
        if (pos + 12 + block_size > f.body.size())
            throw NetworkError("truncated response payload");
        FileId fid = wire::get_u32(f.body.data() + pos);
        std::uint32_t idx = wire::get_u32(f.body.data() + pos + 4);
        std::uint32_t crc = wire::get_u32(f.body.data() + pos + 8);
        pos += 12;
        const std::uint8_t* payload = f.body.data() + pos;
        if (wire::payload_crc(payload, block_size) != crc)
            throw NetworkError("payload checksum mismatch");
        out.push_back(FetchedBlock{BlockId{fid, idx},
                                   std::vector<std::uint8_t>(payload, payload + block_size)});
        pos += block_size;
    }
    return out;
}

}  // namespace blockstream
