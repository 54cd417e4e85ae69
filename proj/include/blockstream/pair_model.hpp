#pragma once

#include <cstdint>
#include <map>
#include <unordered_map>
#include <vector>

#include "blockstream/trace.hpp"
#include "blockstream/types.hpp"

namespace blockstream {

/// Sorted, coalesced set of half-open key ranges. The pair store keeps the
/// successor sets as ranges because trace reads are contiguous chunks; the
/// logical pair count is still exact.
class IntervalSet {
public:
    void add(BlockKey start, BlockKey end) {
        if (start >= end) return;
        auto it = ivs_.upper_bound(start);
        if (it != ivs_.begin()) {
            auto prev = std::prev(it);
            if (prev->second >= start) {
                start = prev->first;
                end = std::max(end, prev->second);
                it = ivs_.erase(prev);
            }
        }
        while (it != ivs_.end() && it->first <= end) {
            end = std::max(end, it->second);
            it = ivs_.erase(it);
        }
        ivs_.emplace(start, end);
    }

    bool contains(BlockKey k) const {
        auto it = ivs_.upper_bound(k);
        if (it == ivs_.begin()) return false;
        return std::prev(it)->second > k;
    }

    std::uint64_t total() const {
        std::uint64_t n = 0;
        for (const auto& [s, e] : ivs_) n += e - s;
        return n;
    }

    const std::map<BlockKey, BlockKey>& ranges() const { return ivs_; }

private:
    std::map<BlockKey, BlockKey> ivs_;  // start -> end (exclusive)
};

/// Baseline predictor: stores every ordered block pair (Bi, Bj) where Bj is
/// read within the lookahead after Bi during training. On access to Bi it
/// predicts every stored Bj. Exists to contrast memory footprint and
/// prediction precision with the superblock model.
class PairModel {
public:
    void train(const std::vector<Trace>& traces, std::int64_t lookahead_ms,
               std::uint32_t block_size = kDefaultBlockSize) {
        if (lookahead_ms <= 0) throw ConfigError("pair model: lookahead must be > 0");
        for (const auto& t : traces) {
            struct Chunk {
                std::int64_t ts;
                BlockKey first;
                BlockKey last;  // inclusive
            };
            std::vector<Chunk> chunks;
            for (const auto& r : t.records) {
                if (r.length == 0) continue;
                std::uint64_t fb = r.offset / block_size;
                std::uint64_t lb = (r.offset + r.length - 1) / block_size;
                chunks.push_back(Chunk{
                    r.timestamp_ms,
                    block_key(BlockId{r.file_id, static_cast<std::uint32_t>(fb)}),
                    block_key(BlockId{r.file_id, static_cast<std::uint32_t>(lb)})});
            }
            // pairs are symmetric in the window: blocks read within L of
            // each other pair up in both directions
            std::size_t j = 0;
            for (std::size_t i = 0; i < chunks.size(); ++i) {
                if (j < i + 1) j = i + 1;
                while (j < chunks.size() &&
                       chunks[j].ts - chunks[i].ts <= lookahead_ms)
                    ++j;
                for (BlockKey bi = chunks[i].first; bi <= chunks[i].last; ++bi) {
                    auto& succ = pairs_[bi];
                    // co-read blocks of the same chunk count as pairs too
                    succ.add(chunks[i].first, chunks[i].last + 1);
                    for (std::size_t k = i + 1; k < j; ++k)
                        succ.add(chunks[k].first, chunks[k].last + 1);
                }
                for (std::size_t k = i + 1; k < j; ++k)
                    for (BlockKey bk = chunks[k].first; bk <= chunks[k].last; ++bk)
                        pairs_[bk].add(chunks[i].first, chunks[i].last + 1);
            }
        }
        count_dirty_ = true;
    }

    /// All Bj paired with the given block; empty when the block was never
    /// seen in training.
    std::vector<std::pair<BlockKey, BlockKey>> predict_ranges(BlockKey bi) const {
        std::vector<std::pair<BlockKey, BlockKey>> out;
        auto it = pairs_.find(bi);
        if (it == pairs_.end()) return out;
        for (const auto& [s, e] : it->second.ranges()) out.emplace_back(s, e);
        return out;
    }

    bool has_pair(BlockKey bi, BlockKey bj) const {
        auto it = pairs_.find(bi);
        return it != pairs_.end() && it->second.contains(bj);
    }

    /// Number of stored (Bi, Bj) pairs, excluding trivial self pairs.
    std::uint64_t pair_count() const {
        if (count_dirty_) {
            std::uint64_t n = 0;
            for (const auto& [bi, succ] : pairs_) {
                n += succ.total();
                if (succ.contains(bi)) --n;
            }
            cached_count_ = n;
            count_dirty_ = false;
        }
        return cached_count_;
    }

    /// Footprint the naive flat representation would need: one (u64, u64)
    /// entry per pair.
    std::uint64_t naive_memory_bytes() const { return pair_count() * 16; }

private:
    std::unordered_map<BlockKey, IntervalSet> pairs_;
    mutable std::uint64_t cached_count_ = 0;
    mutable bool count_dirty_ = true;
};

}  // namespace blockstream
