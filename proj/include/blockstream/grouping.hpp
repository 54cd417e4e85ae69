#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "blockstream/types.hpp"

namespace blockstream {

// Block sets throughout the grouping pipeline are sorted unique vectors of
// BlockKey; set algebra is done with the std sorted-range algorithms.
using BlockSet = std::vector<BlockKey>;

inline BlockSet set_intersection(const BlockSet& a, const BlockSet& b) {
    BlockSet out;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(),
                          std::back_inserter(out));
    return out;
}

inline BlockSet set_union(const BlockSet& a, const BlockSet& b) {
    BlockSet out;
    std::set_union(a.begin(), a.end(), b.begin(), b.end(),
                   std::back_inserter(out));
    return out;
}

inline BlockSet set_difference(const BlockSet& a, const BlockSet& b) {
    BlockSet out;
    std::set_difference(a.begin(), a.end(), b.begin(), b.end(),
                        std::back_inserter(out));
    return out;
}

inline std::size_t intersection_size(const BlockSet& a, const BlockSet& b) {
    std::size_t n = 0;
    auto ia = a.begin();
    auto ib = b.begin();
    while (ia != a.end() && ib != b.end()) {
        if (*ia < *ib) ++ia;
        else if (*ib < *ia) ++ib;
        else { ++n; ++ia; ++ib; }
    }
    return n;
}

/// |a∩b| / |a∪b|, with jaccard(∅,∅) defined as 1.
inline double jaccard(const BlockSet& a, const BlockSet& b) {
    if (a.empty() && b.empty()) return 1.0;
    std::size_t inter = intersection_size(a, b);
    std::size_t uni = a.size() + b.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

/// One temporal burst: blocks whose contributing reads are separated by
/// less than delta in time.
struct Partition {
    BlockSet blocks;
    std::int64_t first_ts = 0;
    std::int64_t last_ts = 0;
};

/// Merger of near-identical partitions (Jaccard >= tau) from one trace.
struct EquivalentPartition {
    BlockSet blocks;
    std::vector<std::int64_t> occurrences;  // first_ts of each merged partition
};

struct Superblock {
    std::uint32_t id = 0;
    BlockSet blocks;
    std::map<std::size_t, std::vector<std::int64_t>> timestamps;  // trace idx -> ts list
};

struct SuperblockSequence {
    std::string trace_id;
    std::vector<std::pair<std::uint32_t, std::int64_t>> steps;  // (id, entry_ts)
    std::size_t unmatched_partitions = 0;  // coverage metric
};

/// Greedy left-to-right split: a new partition starts whenever the gap
/// between successive reads is >= delta. Input must be sorted by timestamp.
inline std::vector<Partition> partition_trace(std::span<const BlockRead> reads,
                                              std::int64_t delta_ms) {
    std::vector<Partition> out;
    if (reads.empty()) return out;
    Partition cur;
    cur.first_ts = cur.last_ts = reads[0].timestamp_ms;
    cur.blocks.push_back(block_key(reads[0].block));
    for (std::size_t i = 1; i < reads.size(); ++i) {
        if (reads[i].timestamp_ms - reads[i - 1].timestamp_ms >= delta_ms) {
            std::sort(cur.blocks.begin(), cur.blocks.end());
            cur.blocks.erase(std::unique(cur.blocks.begin(), cur.blocks.end()),
                             cur.blocks.end());
            out.push_back(std::move(cur));
            cur = Partition{};
            cur.first_ts = reads[i].timestamp_ms;
        }
        cur.last_ts = reads[i].timestamp_ms;
        cur.blocks.push_back(block_key(reads[i].block));
    }
    std::sort(cur.blocks.begin(), cur.blocks.end());
    cur.blocks.erase(std::unique(cur.blocks.begin(), cur.blocks.end()),
                     cur.blocks.end());
    out.push_back(std::move(cur));
    return out;
}

/// Iterative greedy merge in time order: each partition joins the existing
/// equivalent partition with the highest Jaccard index when that index is
/// >= tau, otherwise it starts a new one.
inline std::vector<EquivalentPartition> merge_equivalent(
    const std::vector<Partition>& partitions, double tau) {
    std::vector<EquivalentPartition> out;
    for (const auto& p : partitions) {
        double best = 0.0;
        std::size_t best_idx = 0;
        bool found = false;
        for (std::size_t i = 0; i < out.size(); ++i) {
            double sim = jaccard(p.blocks, out[i].blocks);
            if (sim > best) {
                best = sim;
                best_idx = i;
                found = true;
            }
        }
        if (found && best >= tau) {
            out[best_idx].blocks = set_union(out[best_idx].blocks, p.blocks);
            out[best_idx].occurrences.push_back(p.first_ts);
        } else {
            out.push_back(EquivalentPartition{p.blocks, {p.first_ts}});
        }
    }
    return out;
}

struct Overlap {
    BlockSet blocks;
    // (trace index, equivalent-partition index), at most one per trace
    std::vector<std::pair<std::size_t, std::size_t>> contributors;

    std::size_t score() const { return blocks.size() * contributors.size(); }
};

namespace detail {

struct OverlapSearch {
    const std::vector<std::vector<EquivalentPartition>>& sets;
    Overlap best;

    // Candidate ordering: score desc, then contributor count desc, then
    // lexicographically smallest contributor indices. Deterministic.
    bool better(std::size_t score, std::size_t n,
                const std::vector<std::pair<std::size_t, std::size_t>>& c) const {
        std::size_t bs = best.score();
        if (score != bs) return score > bs;
        if (n != best.contributors.size()) return n > best.contributors.size();
        return c < best.contributors;
    }

    void search(std::size_t trace_idx, BlockSet cur,
                std::vector<std::pair<std::size_t, std::size_t>>& chosen) {
        if (!chosen.empty()) {
            std::size_t score = cur.size() * chosen.size();
            if (score > 0 && better(score, chosen.size(), chosen))
                best = Overlap{cur, chosen};
        }
        if (trace_idx == sets.size()) return;
        // upper bound if every remaining trace contributed
        std::size_t remaining = sets.size() - trace_idx;
        std::size_t bound = chosen.empty()
                                ? std::numeric_limits<std::size_t>::max()
                                : cur.size() * (chosen.size() + remaining);
        if (bound < best.score()) return;

        for (std::size_t p = 0; p < sets[trace_idx].size(); ++p) {
            const auto& ep = sets[trace_idx][p];
            if (ep.blocks.empty()) continue;
            BlockSet next = chosen.empty() ? ep.blocks
                                           : set_intersection(cur, ep.blocks);
            if (next.empty()) continue;
            chosen.emplace_back(trace_idx, p);
            search(trace_idx + 1, std::move(next), chosen);
            chosen.pop_back();
        }
        search(trace_idx + 1, std::move(cur), chosen);  // skip this trace
    }
};

}  // namespace detail

/// Largest overlap across equivalent partitions, at most one per trace,
/// where size = |blocks| x number of contributing traces. Traces may be
/// skipped. Returns an overlap of score 0 when all sets are empty.
inline Overlap find_largest_overlap(
    const std::vector<std::vector<EquivalentPartition>>& equiv_sets) {
    detail::OverlapSearch s{equiv_sets, Overlap{}};
    std::vector<std::pair<std::size_t, std::size_t>> chosen;
    s.search(0, {}, chosen);
    return s.best;
}

/// Greedy extraction loop: pull the largest overlap, remove its blocks from
/// the contributing equivalent partitions, and repeat until the best score
/// drops below min_superblock_size. Non-empty remainders are merged into the
/// superblock closest in time for their trace. If the loop yields nothing,
/// each remainder is promoted to its own superblock so the model always has
/// a state space.
inline std::vector<Superblock> create_superblocks(
    std::vector<std::vector<EquivalentPartition>> equiv_sets,
    std::size_t min_superblock_size) {
    std::vector<Superblock> sbs;
    while (true) {
        Overlap o = find_largest_overlap(equiv_sets);
        if (o.score() < min_superblock_size || o.score() == 0) break;
        Superblock sb;
        sb.blocks = o.blocks;
        for (auto [t, p] : o.contributors) {
            auto& ep = equiv_sets[t][p];
            ep.blocks = set_difference(ep.blocks, o.blocks);
            auto& ts = sb.timestamps[t];
            ts.insert(ts.end(), ep.occurrences.begin(), ep.occurrences.end());
        }
        sbs.push_back(std::move(sb));
    }

    if (sbs.empty()) {
        for (std::size_t t = 0; t < equiv_sets.size(); ++t) {
            for (auto& ep : equiv_sets[t]) {
                if (ep.blocks.empty()) continue;
                Superblock sb;
                sb.blocks = std::move(ep.blocks);
                sb.timestamps[t] = ep.occurrences;
                sbs.push_back(std::move(sb));
                ep.blocks.clear();
            }
        }
    } else {
        for (std::size_t t = 0; t < equiv_sets.size(); ++t) {
            for (auto& ep : equiv_sets[t]) {
                if (ep.blocks.empty()) continue;
                std::int64_t ref = ep.occurrences.empty() ? 0 : ep.occurrences.front();
                // closest in time using this trace's timestamps; superblocks
                // without a timestamp for the trace fall back to global nearest
                std::size_t best_idx = 0;
                std::int64_t best_dist = std::numeric_limits<std::int64_t>::max();
                bool trace_local = false;
                for (std::size_t s = 0; s < sbs.size(); ++s) {
                    auto it = sbs[s].timestamps.find(t);
                    if (it == sbs[s].timestamps.end()) continue;
                    for (std::int64_t ts : it->second) {
                        std::int64_t d = std::abs(ts - ref);
                        if (!trace_local || d < best_dist) {
                            trace_local = true;
                            best_dist = d;
                            best_idx = s;
                        }
                    }
                }
                if (!trace_local) {
                    for (std::size_t s = 0; s < sbs.size(); ++s) {
                        for (const auto& [tt, list] : sbs[s].timestamps) {
                            for (std::int64_t ts : list) {
                                std::int64_t d = std::abs(ts - ref);
                                if (d < best_dist) {
                                    best_dist = d;
                                    best_idx = s;
                                }
                            }
                        }
                    }
                }
                auto& sb = sbs[best_idx];
                sb.blocks = set_union(sb.blocks, ep.blocks);
                auto& ts = sb.timestamps[t];
                ts.insert(ts.end(), ep.occurrences.begin(), ep.occurrences.end());
                ep.blocks.clear();
            }
        }
    }

    for (std::size_t i = 0; i < sbs.size(); ++i)
        sbs[i].id = static_cast<std::uint32_t>(i);
    return sbs;
}

/// Containment-based online matching: superblock s matches partition p when
/// |s∩p| / |s| >= threshold. Exact subset matching is brittle to noise reads.
inline bool superblock_matches(const Superblock& sb, const BlockSet& partition,
                               double containment) {
    if (sb.blocks.empty()) return false;
    std::size_t inter = intersection_size(sb.blocks, partition);
    return static_cast<double>(inter) / static_cast<double>(sb.blocks.size()) >=
           containment;
}

/// Partition the trace with delta and emit, per partition, every matching
/// superblock ordered by earliest training timestamp (ties by id).
/// Consecutive duplicate ids collapse. Partitions matching nothing count
/// toward unmatched_partitions.
inline SuperblockSequence to_superblock_sequence(
    std::span<const BlockRead> reads, const std::vector<Superblock>& superblocks,
    std::int64_t delta_ms, double containment = 0.9,
    const std::string& trace_id = "") {
    SuperblockSequence seq;
    seq.trace_id = trace_id;
    auto parts = partition_trace(reads, delta_ms);

    auto min_ts = [](const Superblock& sb) {
        std::int64_t m = std::numeric_limits<std::int64_t>::max();
        for (const auto& [t, list] : sb.timestamps)
            for (std::int64_t ts : list) m = std::min(m, ts);
        return m;
    };

    std::int64_t prev_ts = std::numeric_limits<std::int64_t>::min();
    for (const auto& p : parts) {
        std::vector<std::pair<std::int64_t, std::uint32_t>> matched;
        for (const auto& sb : superblocks)
            if (superblock_matches(sb, p.blocks, containment))
                matched.emplace_back(min_ts(sb), sb.id);
        if (matched.empty()) {
            ++seq.unmatched_partitions;
            continue;
        }
        std::sort(matched.begin(), matched.end());
        for (const auto& [ts, id] : matched) {
            if (!seq.steps.empty() && seq.steps.back().first == id) continue;
            std::int64_t entry = std::max(p.first_ts, prev_ts + 1);
            seq.steps.emplace_back(id, entry);
            prev_ts = entry;
        }
    }
    return seq;
}

}  // namespace blockstream
