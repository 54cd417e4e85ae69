#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_set>
#include <vector>

#include <netinet/in.h>
#include <netinet/tcp.h>

#include "blockstream/block_store.hpp"
#include "blockstream/types.hpp"
#include "blockstream/wire.hpp"

namespace blockstream {

struct QueuedBlock {
    BlockId block;
    std::int64_t issue_ts = 0;  // trace-time of the prediction
};

/// Bounded FIFO of predicted blocks. Duplicates are filtered on enqueue;
/// when full, the oldest entries are dropped (documented lossy behavior).
class FetchQueue {
public:
    explicit FetchQueue(std::size_t capacity = 65'536) : capacity_(capacity) {}

    void enqueue(const std::vector<QueuedBlock>& blocks) {
        std::scoped_lock lock(mu_);
        for (const auto& qb : blocks) {
            BlockKey key = block_key(qb.block);
            if (!queued_.insert(key).second) continue;
            if (fifo_.size() >= capacity_) {
                queued_.erase(block_key(fifo_.front().block));
                fifo_.pop_front();
                ++dropped_;
            }
            fifo_.push_back(qb);
        }
        cv_.notify_one();
    }

    /// Blocks until something is available or the queue is closed.
    std::vector<QueuedBlock> pop_batch(std::size_t max_batch) {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [this] { return !fifo_.empty() || closed_; });
        std::vector<QueuedBlock> out;
        while (!fifo_.empty() && out.size() < max_batch) {
            out.push_back(fifo_.front());
            queued_.erase(block_key(fifo_.front().block));
            fifo_.pop_front();
        }
        return out;
    }

    void close() {
        std::scoped_lock lock(mu_);
        closed_ = true;
        cv_.notify_all();
    }

    bool closed() const {
        std::scoped_lock lock(mu_);
        return closed_ && fifo_.empty();
    }

    std::size_t size() const {
        std::scoped_lock lock(mu_);
        return fifo_.size();
    }

    std::uint64_t dropped() const {
        std::scoped_lock lock(mu_);
        return dropped_;
    }

private:
    std::size_t capacity_;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::deque<QueuedBlock> fifo_;
    std::unordered_set<BlockKey> queued_;
    std::uint64_t dropped_ = 0;
    bool closed_ = false;
};

/// Coalesce a block list into per-file contiguous ranges, preserving the
/// order of first appearance.
inline std::vector<std::pair<FileId, std::vector<BlockRange>>> coalesce_ranges(
    const std::vector<BlockId>& blocks) {
    std::vector<std::pair<FileId, std::vector<BlockRange>>> out;
    for (const BlockId& b : blocks) {
        if (!out.empty() && out.back().first == b.file_id) {
            auto& ranges = out.back().second;
            auto& last = ranges.back();
            if (b.block_index == last.first_block + last.count) {
                ++last.count;
                continue;
            }
            ranges.push_back(BlockRange{b.block_index, 1});
            continue;
        }
        out.push_back({b.file_id, {BlockRange{b.block_index, 1}}});
    }
    return out;
}

/// Client side of the two-priority fetch path: one kept-alive connection per
/// priority. fetch_urgent blocks its caller; the speculative worker drains a
/// FetchQueue in the background.
class FetchClient {
public:
    FetchClient(const std::string& host, std::uint16_t port,
                std::uint32_t block_size)
        : host_(host), port_(port), block_size_(block_size) {
        urgent_fd_ = connect_socket();
        spec_fd_ = connect_socket();
    }

    ~FetchClient() {
        stop_speculative();
        if (urgent_fd_ >= 0) ::close(urgent_fd_);
        if (spec_fd_ >= 0) ::close(spec_fd_);
    }

    FetchClient(const FetchClient&) = delete;
    FetchClient& operator=(const FetchClient&) = delete;

    /// Blocking fetch on the urgent connection, with bounded retries.
    std::vector<FetchedBlock> fetch_urgent(const std::vector<BlockId>& blocks) {
        if (blocks.empty()) return {};
        std::string last_error;
        for (int attempt = 0; attempt < 3; ++attempt) {
            try {
                return do_fetch(urgent_fd_, FrameType::UrgentReq, blocks);
            } catch (const NetworkError& e) {
                last_error = e.what();
                ++urgent_retries_;
                std::this_thread::sleep_for(
                    std::chrono::milliseconds(50 * (1 << attempt)));
                ::close(urgent_fd_);
                try {
                    urgent_fd_ = connect_socket();
                } catch (const NetworkError&) {
                    urgent_fd_ = -1;
                }
                if (urgent_fd_ < 0) continue;
            }
        }
        throw NetworkError("urgent fetch failed after retries: " + last_error);
    }

    /// Starts the background drain of `queue` into `store`. Fetched blocks
    /// are inserted pinned; `on_insert` (optional) observes each insertion.
    void run_speculative(FetchQueue& queue, BlockStore& store,
                         std::function<void(const QueuedBlock&)> on_insert = {},
                         std::size_t max_batch = 64) {
        spec_thread_ = std::thread([this, &queue, &store,
                                    on_insert = std::move(on_insert), max_batch] {
            while (true) {
                auto batch = queue.pop_batch(max_batch);
                if (batch.empty()) {
                    if (queue.closed()) return;
                    continue;
                }
                std::vector<BlockId> ids;
                ids.reserve(batch.size());
                for (const auto& qb : batch) ids.push_back(qb.block);
                std::vector<FetchedBlock> fetched;
                try {
                    fetched = do_fetch(spec_fd_, FrameType::SpecReq, ids);
                } catch (const NetworkError&) {
                    ++spec_retries_;
                    if (spec_retries_ > 16) return;  // bounded retries
                    try {
                        ::close(spec_fd_);
                        spec_fd_ = connect_socket();
                    } catch (const NetworkError&) {
                        return;
                    }
                    queue.enqueue(batch);  // re-enqueue at tail
                    continue;
                }
                for (std::size_t i = 0; i < fetched.size(); ++i) {
                    const auto& qb = batch[i];
                    store.insert(fetched[i].block, fetched[i].payload,
                                 /*pinned=*/true, qb.issue_ts);
                    if (on_insert) on_insert(qb);
                }
            }
        });
    }

    void stop_speculative() {
        if (spec_thread_.joinable()) spec_thread_.join();
    }

    std::uint64_t urgent_retries() const { return urgent_retries_; }

private:
    int connect_socket() {
        int fd = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd < 0) throw NetworkError("socket() failed");
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(port_);
        if (::inet_pton(AF_INET, host_.c_str(), &addr.sin_addr) != 1) {
            ::close(fd);
            throw NetworkError("bad host address " + host_);
        }
        if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
            ::close(fd);
            throw NetworkError("connect to " + host_ + ":" +
                               std::to_string(port_) + " failed");
        }
        int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
        return fd;
    }

    std::vector<FetchedBlock> do_fetch(int fd, FrameType type,
                                       const std::vector<BlockId>& blocks) {
        if (fd < 0) throw NetworkError("not connected");
        std::vector<FetchedBlock> out;
        for (const auto& [file_id, ranges] : coalesce_ranges(blocks)) {
            std::uint32_t req_id = next_request_id_++;
            wire::send_frame(fd, type, req_id, wire::encode_request(file_id, ranges));
            wire::Frame resp;
            if (!wire::recv_frame(fd, resp)) throw NetworkError("server closed");
            if (resp.type == FrameType::Error) {
                std::uint32_t code =
                    resp.body.size() >= 4 ? wire::get_u32(resp.body.data()) : 0;
                if (code == kErrNotFound)
                    throw DataError("block not found: model/content mismatch");
                throw NetworkError("server error code " + std::to_string(code));
            }
            if (resp.type != FrameType::Resp || resp.request_id != req_id)
                throw NetworkError("unexpected response frame");
            auto fetched = decode_response(resp, block_size_);
            out.insert(out.end(), std::make_move_iterator(fetched.begin()),
                       std::make_move_iterator(fetched.end()));
        }
        return out;
    }

    std::string host_;
    std::uint16_t port_;
    std::uint32_t block_size_;
    int urgent_fd_ = -1;
    int spec_fd_ = -1;
    std::atomic<std::uint32_t> next_request_id_{1};
    std::uint64_t urgent_retries_ = 0;
    std::atomic<std::uint64_t> spec_retries_{0};
    std::thread spec_thread_;
};

}  // namespace blockstream
