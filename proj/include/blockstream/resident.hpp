#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <vector>

#include "blockstream/trace.hpp"
#include "blockstream/types.hpp"

namespace blockstream {

/// Blocks read in the first moments after launch cannot be fetched in time
/// and must ship with the app.
inline constexpr std::int64_t kLaunchWindowMs = 2000;

/// Ranks all blocks seen in training for permanent residency. Launch-window
/// blocks (read within the first 2 s of any trace) come first, earliest
/// access first; the rest follow by earliest median access time across
/// traces. choose_resident_set takes the prefix that fits a byte budget.
inline std::vector<BlockKey> resident_ranking(
    const std::vector<std::vector<BlockRead>>& traces) {
    std::map<BlockKey, std::vector<std::int64_t>> first_access;  // per trace
    std::map<BlockKey, std::int64_t> launch_ts;
    for (const auto& reads : traces) {
        std::map<BlockKey, std::int64_t> local;
        for (const auto& r : reads) {
            BlockKey k = block_key(r.block);
            auto [it, inserted] = local.emplace(k, r.timestamp_ms);
            if (!inserted) it->second = std::min(it->second, r.timestamp_ms);
        }
        for (const auto& [k, ts] : local) {
            first_access[k].push_back(ts);
            if (ts < kLaunchWindowMs) {
                auto [it, inserted] = launch_ts.emplace(k, ts);
                if (!inserted) it->second = std::min(it->second, ts);
            }
        }
    }

    std::vector<std::pair<std::int64_t, BlockKey>> launch, rest;
    for (auto& [k, accesses] : first_access) {
        auto lit = launch_ts.find(k);
        if (lit != launch_ts.end()) {
            launch.emplace_back(lit->second, k);
        } else {
            std::sort(accesses.begin(), accesses.end());
            std::int64_t median = accesses[accesses.size() / 2];
            rest.emplace_back(median, k);
        }
    }
    std::sort(launch.begin(), launch.end());
    std::sort(rest.begin(), rest.end());

    std::vector<BlockKey> out;
    out.reserve(launch.size() + rest.size());
    for (const auto& [ts, k] : launch) out.push_back(k);
    for (const auto& [ts, k] : rest) out.push_back(k);
    return out;
}

struct ResidentSetSpec {
    std::uint64_t b_initial = 0;
    std::vector<BlockKey> selection;
};

inline ResidentSetSpec choose_resident_set(const std::vector<BlockKey>& ranking,
                                           std::uint64_t b_initial_bytes,
                                           std::uint32_t block_size) {
    ResidentSetSpec spec;
    spec.b_initial = b_initial_bytes;
    std::uint64_t budget_blocks = b_initial_bytes / block_size;
    std::size_t n = std::min<std::uint64_t>(budget_blocks, ranking.size());
    spec.selection.assign(ranking.begin(), ranking.begin() + n);
    return spec;
}

}  // namespace blockstream
