#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <list>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "blockstream/types.hpp"

namespace blockstream {

enum class ReadResult { ResidentHit, TempHit, Miss };

/// Eviction and pinning policy over block keys, independent of any backing
/// storage. The simulator uses it directly; BlockStore layers container-file
/// I/O on top of it.
///
/// Resident blocks live in permanent storage and never count against the
/// temporary limit. Pinned blocks (speculative prefetches) are never evicted
/// while pinned; a pin converts to a normal LRU entry on first read.
class CachePolicy {
public:
    static constexpr std::size_t kUnlimited = std::numeric_limits<std::size_t>::max();

    explicit CachePolicy(std::size_t capacity_blocks = kUnlimited)
        : capacity_(capacity_blocks) {}

    void set_resident(BlockKey key) { resident_.insert(key); }

    bool is_resident(BlockKey key) const { return resident_.count(key) > 0; }

    bool contains(BlockKey key) const {
        return resident_.count(key) > 0 || entries_.count(key) > 0;
    }

    std::size_t occupancy() const { return entries_.size(); }
    std::size_t capacity() const { return capacity_; }

    ReadResult on_read(BlockKey key, std::int64_t now_ms) {
        (void)now_ms;
        if (resident_.count(key)) {
            ++resident_hits_;
            return ReadResult::ResidentHit;
        }
        auto it = entries_.find(key);
        if (it == entries_.end()) {
            ++misses_;
            return ReadResult::Miss;
        }
        Entry& e = it->second;
        if (e.pinned) {
            e.pinned = false;
            lru_.push_front(key);
            e.pos = lru_.begin();
        } else {
            lru_.splice(lru_.begin(), lru_, e.pos);
        }
        ++temp_hits_;
        return ReadResult::TempHit;
    }

    /// Inserts a block into the temporary region, evicting least-recently-used
    /// unpinned blocks as needed. Returns the evicted keys. Throws
    /// CacheExhaustedError when the limit cannot be met.
    std::vector<BlockKey> insert(BlockKey key, bool pinned, std::int64_t now_ms) {
        std::vector<BlockKey> evicted;
        if (resident_.count(key)) return evicted;
        auto it = entries_.find(key);
        if (it != entries_.end()) {
            if (!it->second.pinned)
                lru_.splice(lru_.begin(), lru_, it->second.pos);
            return evicted;
        }
        while (entries_.size() + 1 > capacity_) {
            if (lru_.empty())
                throw CacheExhaustedError(
                    "cache exhausted: all temporary blocks are pinned");
            BlockKey victim = lru_.back();
            lru_.pop_back();
            entries_.erase(victim);
            evicted.push_back(victim);
            ++evictions_;
        }
        Entry e;
        e.pinned = pinned;
        e.pin_ts = now_ms;
        if (!pinned) {
            lru_.push_front(key);
            e.pos = lru_.begin();
        }
        entries_.emplace(key, e);
        return evicted;
    }

    /// Unpins blocks pinned longer than age_threshold_ms ago and never read.
    /// Released blocks join the cold end of the LRU list.
    std::size_t unpin_stale(std::int64_t now_ms, std::int64_t age_threshold_ms) {
        // released in key order so runs are deterministic regardless of the
        // hash map's iteration order
        std::vector<BlockKey> stale;
        for (const auto& [key, e] : entries_)
            if (e.pinned && now_ms - e.pin_ts > age_threshold_ms)
                stale.push_back(key);
        std::sort(stale.begin(), stale.end());
        for (BlockKey key : stale) {
            Entry& e = entries_.at(key);
            e.pinned = false;
            lru_.push_back(key);
            e.pos = std::prev(lru_.end());
        }
        return stale.size();
    }

    bool is_pinned(BlockKey key) const {
        auto it = entries_.find(key);
        return it != entries_.end() && it->second.pinned;
    }

    std::uint64_t resident_hits() const { return resident_hits_; }
    std::uint64_t temp_hits() const { return temp_hits_; }
    std::uint64_t misses() const { return misses_; }
    std::uint64_t evictions() const { return evictions_; }

private:
    struct Entry {
        bool pinned = false;
        std::int64_t pin_ts = 0;
        std::list<BlockKey>::iterator pos;  // valid only when !pinned
    };

    std::size_t capacity_;
    std::unordered_set<BlockKey> resident_;
    std::unordered_map<BlockKey, Entry> entries_;
    std::list<BlockKey> lru_;  // front = most recently used

    std::uint64_t resident_hits_ = 0;
    std::uint64_t temp_hits_ = 0;
    std::uint64_t misses_ = 0;
    std::uint64_t evictions_ = 0;
};

}  // namespace blockstream
