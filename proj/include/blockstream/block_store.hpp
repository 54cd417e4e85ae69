#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "blockstream/cache_policy.hpp"
#include "blockstream/types.hpp"

namespace blockstream {

/// Container-file-backed block cache.
///
/// On-disk layout:
///   container.bin — BLOCK_SIZE slots, grown on demand, free list on eviction
///   journal.bin   — magic "BSJ1", u32 version, then records:
///                     u8 op (1=insert, 2=evict), u64 key, u32 slot, u8 flags
///                   flags bit0 = pinned at insert, bit1 = resident
/// The journal is appended before the in-memory index is updated; on restart
/// the index is rebuilt by replaying it.
class BlockStore {
public:
    BlockStore(const std::string& dir, std::uint32_t block_size,
               std::uint64_t temp_limit_bytes /* 0 = unlimited */)
        : dir_(dir),
          block_size_(block_size),
          policy_(temp_limit_bytes == 0 ? CachePolicy::kUnlimited
                                        : temp_limit_bytes / block_size) {
        std::filesystem::create_directories(dir_);
        container_path_ = dir_ + "/container.bin";
        journal_path_ = dir_ + "/journal.bin";
        bool existing = std::filesystem::exists(journal_path_);
        container_ = std::fopen(container_path_.c_str(), existing ? "r+b" : "w+b");
        if (!container_) throw DataError("cannot open " + container_path_);
        if (existing) {
            replay_journal();
            journal_ = std::fopen(journal_path_.c_str(), "ab");
        } else {
            journal_ = std::fopen(journal_path_.c_str(), "wb");
            if (journal_) {
                std::fwrite("BSJ1", 1, 4, journal_);
                std::uint32_t ver = 1;
                std::fwrite(&ver, sizeof(ver), 1, journal_);
                std::fflush(journal_);
            }
        }
        if (!journal_) throw DataError("cannot open " + journal_path_);
    }

    ~BlockStore() {
        if (container_) std::fclose(container_);
        if (journal_) std::fclose(journal_);
    }

    BlockStore(const BlockStore&) = delete;
    BlockStore& operator=(const BlockStore&) = delete;

    std::uint32_t block_size() const { return block_size_; }

    /// Marks a block as permanently resident and stores its data.
    void insert_resident(BlockId block, std::span<const std::uint8_t> data) {
        std::scoped_lock lock(mu_);
        BlockKey key = block_key(block);
        policy_.set_resident(key);
        std::uint32_t slot = alloc_slot();
        write_slot(slot, data);
        append_journal(1, key, slot, 0x2);
        slots_[key] = slot;
    }

    /// Hit returns the block payload and refreshes recency; Miss returns
    /// nullopt and leaves state unchanged. I/O failures throw.
    std::optional<std::vector<std::uint8_t>> read(BlockId block, std::int64_t now_ms) {
        std::scoped_lock lock(mu_);
        BlockKey key = block_key(block);
        ReadResult r = policy_.on_read(key, now_ms);
        if (r == ReadResult::Miss) return std::nullopt;
        auto it = slots_.find(key);
        if (it == slots_.end()) return std::nullopt;
        std::vector<std::uint8_t> data(block_size_);
        if (std::fseek(container_, static_cast<long>(it->second) *
                                       static_cast<long>(block_size_), SEEK_SET) != 0 ||
            std::fread(data.data(), 1, block_size_, container_) != block_size_)
            throw DataError("container read failed for slot " +
                            std::to_string(it->second));
        return data;
    }

    ReadResult classify(BlockId block, std::int64_t now_ms) {
        std::scoped_lock lock(mu_);
        return policy_.on_read(block_key(block), now_ms);
    }

    bool contains(BlockKey key) const {
        std::scoped_lock lock(mu_);
        return policy_.contains(key);
    }

    std::vector<BlockId> insert(BlockId block, std::span<const std::uint8_t> data,
                                bool pinned, std::int64_t now_ms) {
        if (data.size() != block_size_)
            throw DataError("insert: payload must be exactly one block");
        std::scoped_lock lock(mu_);
        BlockKey key = block_key(block);
        auto evicted_keys = policy_.insert(key, pinned, now_ms);
        std::vector<BlockId> evicted;
        for (BlockKey k : evicted_keys) {
            auto it = slots_.find(k);
            if (it != slots_.end()) {
                free_slots_.push_back(it->second);
                append_journal(2, k, it->second, 0);
                slots_.erase(it);
            }
            evicted.push_back(block_from_key(k));
        }
        if (!slots_.count(key)) {
            std::uint32_t slot = alloc_slot();
            write_slot(slot, data);
            append_journal(1, key, slot, pinned ? 0x1 : 0x0);
            slots_[key] = slot;
        }
        return evicted;
    }

    std::size_t unpin_stale(std::int64_t now_ms, std::int64_t age_threshold_ms) {
        std::scoped_lock lock(mu_);
        return policy_.unpin_stale(now_ms, age_threshold_ms);
    }

    std::uint64_t resident_hits() const {
        std::scoped_lock lock(mu_);
        return policy_.resident_hits();
    }
    std::uint64_t temp_hits() const {
        std::scoped_lock lock(mu_);
        return policy_.temp_hits();
    }
    std::uint64_t misses() const {
        std::scoped_lock lock(mu_);
        return policy_.misses();
    }
    std::uint64_t evictions() const {
        std::scoped_lock lock(mu_);
        return policy_.evictions();
    }
    std::size_t occupancy() const {
        std::scoped_lock lock(mu_);
        return policy_.occupancy();
    }

private:
    std::uint32_t alloc_slot() {
        if (!free_slots_.empty()) {
            std::uint32_t s = free_slots_.back();
            free_slots_.pop_back();
            return s;
        }
        return next_slot_++;
    }

    void write_slot(std::uint32_t slot, std::span<const std::uint8_t> data) {
        if (std::fseek(container_, static_cast<long>(slot) *
                                       static_cast<long>(block_size_), SEEK_SET) != 0 ||
            std::fwrite(data.data(), 1, data.size(), container_) != data.size())
            throw DataError("container write failed for slot " + std::to_string(slot));
        std::fflush(container_);
    }

    void append_journal(std::uint8_t op, BlockKey key, std::uint32_t slot,
                        std::uint8_t flags) {
        std::fwrite(&op, 1, 1, journal_);
        std::fwrite(&key, sizeof(key), 1, journal_);
        std::fwrite(&slot, sizeof(slot), 1, journal_);
        std::fwrite(&flags, 1, 1, journal_);
        std::fflush(journal_);
    }

    void replay_journal() {
        std::FILE* f = std::fopen(journal_path_.c_str(), "rb");
        if (!f) throw DataError("cannot open journal for replay");
        char magic[4];
        std::uint32_t ver = 0;
        if (std::fread(magic, 1, 4, f) != 4 || std::memcmp(magic, "BSJ1", 4) != 0 ||
            std::fread(&ver, sizeof(ver), 1, f) != 1 || ver != 1) {
            std::fclose(f);
            throw DataError("journal: bad magic or version");
        }
        struct Live {
            std::uint32_t slot;
            std::uint8_t flags;
        };
        std::unordered_map<BlockKey, Live> live;
        std::vector<BlockKey> order;  // insertion order of currently-live keys
        while (true) {
            std::uint8_t op = 0, flags = 0;
            BlockKey key = 0;
            std::uint32_t slot = 0;
            if (std::fread(&op, 1, 1, f) != 1) break;
            if (std::fread(&key, sizeof(key), 1, f) != 1 ||
                std::fread(&slot, sizeof(slot), 1, f) != 1 ||
                std::fread(&flags, 1, 1, f) != 1)
                break;  // truncated tail record: journal-before-index, ignore
            next_slot_ = std::max(next_slot_, slot + 1);
            if (op == 1) {
                live[key] = Live{slot, flags};
                order.push_back(key);
            } else if (op == 2) {
                live.erase(key);
                free_slots_.push_back(slot);
            }
        }
        std::fclose(f);
        // apply final state; LRU recency does not survive a restart
        for (BlockKey key : order) {
            auto it = live.find(key);
            if (it == live.end()) continue;
            if (it->second.flags & 0x2) {
                policy_.set_resident(key);
            } else {
                policy_.insert(key, (it->second.flags & 0x1) != 0, 0);
            }
            slots_[key] = it->second.slot;
            live.erase(it);
        }
    }

    std::string dir_;
    std::uint32_t block_size_;
    std::string container_path_;
    std::string journal_path_;
    std::FILE* container_ = nullptr;
    std::FILE* journal_ = nullptr;

    mutable std::mutex mu_;
    CachePolicy policy_;
    std::unordered_map<BlockKey, std::uint32_t> slots_;
    std::vector<std::uint32_t> free_slots_;
    std::uint32_t next_slot_ = 0;
};

}  // namespace blockstream
