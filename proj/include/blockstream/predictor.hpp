#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <unordered_set>
#include <vector>

#include "blockstream/bundle.hpp"
#include "blockstream/ctmc.hpp"
#include "blockstream/grouping.hpp"
#include "blockstream/types.hpp"

namespace blockstream {

struct PredictorConfig {
    std::int64_t delta_ms = 100;
    double tau = 0.9;
    double p_stop = 0.01;
    double p_download = 0.02;
    std::int64_t lookahead_ms = 60'000;
    double containment = 0.9;
};

/// Dimensionless playing-speed ratio: model mean duration / observed
/// duration, smoothed. 1 = average player, >1 = faster.
struct SpeedEstimate {
    double ratio = 1.0;
};

inline constexpr double kSpeedSmoothing = 0.3;
inline constexpr double kSpeedRatioMin = 0.25;
inline constexpr double kSpeedRatioMax = 4.0;

inline SpeedEstimate update_speed(SpeedEstimate est, double observed_ms,
                                  double model_mean_ms) {
    if (observed_ms <= 0.0) observed_ms = 1.0;
    double sample = model_mean_ms / observed_ms;
    double smoothed = (1.0 - kSpeedSmoothing) * est.ratio + kSpeedSmoothing * sample;
    return SpeedEstimate{std::clamp(smoothed, kSpeedRatioMin, kSpeedRatioMax)};
}

/// A faster player gets a proportionally longer lookahead.
inline double effective_lookahead(const PredictorConfig& cfg, SpeedEstimate speed) {
    return static_cast<double>(cfg.lookahead_ms) * speed.ratio;
}

struct PrefetchRequest {
    std::vector<BlockId> blocks;
    std::vector<std::uint32_t> source_superblocks;
    std::int64_t issue_ts = 0;
};

struct PredictorStats {
    std::uint64_t partitions_closed = 0;
    std::uint64_t partitions_matched = 0;
    std::uint64_t partitions_unmatched = 0;
    std::uint64_t requests_issued = 0;
    std::uint64_t blocks_requested = 0;
};

/// Online engine: consumes live block reads, tracks the current chain state
/// and user speed, and emits prefetch requests for predicted superblocks
/// whose probability clears p_download.
///
/// Single-threaded on the read path; requests are handed off by the caller.
class Predictor {
public:
    using CacheQuery = std::function<bool(BlockKey)>;

    Predictor(const ModelBundle& bundle, PredictorConfig cfg, CacheQuery cached)
        : bundle_(bundle), cfg_(cfg), cached_(std::move(cached)) {}

    /// Feed one block read. A partition closes on the first read whose gap
    /// from the previous read is >= delta; that is when prediction runs.
    std::optional<PrefetchRequest> observe(const BlockRead& read) {
        std::optional<PrefetchRequest> req;
        if (!pending_.empty() &&
            read.timestamp_ms - last_read_ts_ >= cfg_.delta_ms) {
            req = close_partition(read.timestamp_ms);
        }
        if (pending_.empty()) partition_first_ts_ = read.timestamp_ms;
        pending_.push_back(block_key(read.block));
        last_read_ts_ = read.timestamp_ms;
        return req;
    }

    /// Close a trailing partition (end of stream).
    std::optional<PrefetchRequest> flush() {
        if (pending_.empty()) return std::nullopt;
        return close_partition(last_read_ts_);
    }

    const PredictorStats& stats() const { return stats_; }
    SpeedEstimate speed() const { return speed_; }
    std::optional<std::uint32_t> current_state() const { return state_; }

    /// Drop in-flight bookkeeping for blocks that made it into the cache.
    void note_cached(BlockKey key) { inflight_.erase(key); }

private:
    std::optional<PrefetchRequest> close_partition(std::int64_t issue_ts) {
        BlockSet part = std::move(pending_);
        pending_.clear();
        std::sort(part.begin(), part.end());
        part.erase(std::unique(part.begin(), part.end()), part.end());
        ++stats_.partitions_closed;

        // Match superblocks; pick the one whose training timestamps are most
        // recent, ties to the lowest id.
        std::optional<std::uint32_t> matched;
        std::int64_t matched_max_ts = std::numeric_limits<std::int64_t>::min();
        for (const auto& sb : bundle_.superblocks) {
            if (!superblock_matches(sb, part, cfg_.containment)) continue;
            std::int64_t max_ts = std::numeric_limits<std::int64_t>::min();
            for (const auto& [t, list] : sb.timestamps)
                for (std::int64_t ts : list) max_ts = std::max(max_ts, ts);
            if (!matched || max_ts > matched_max_ts) {
                matched = sb.id;
                matched_max_ts = max_ts;
            }
        }
        if (!matched) {
            ++stats_.partitions_unmatched;
            return std::nullopt;
        }
        ++stats_.partitions_matched;

        if (state_ && *state_ != *matched) {
            auto it = bundle_.ctmc.durations.find({*state_, *matched});
            if (it != bundle_.ctmc.durations.end() && it->second.mean_ms > 0.0) {
                double observed =
                    static_cast<double>(partition_first_ts_ - state_entry_ts_);
                speed_ = update_speed(speed_, observed, it->second.mean_ms);
            }
        }
        if (!state_ || *state_ != *matched) {
            state_ = matched;
            state_entry_ts_ = partition_first_ts_;
        }

        Prediction pred = predict(bundle_.ctmc, *matched,
                                  effective_lookahead(cfg_, speed_), cfg_.p_stop);

        PrefetchRequest req;
        req.issue_ts = issue_ts;
        for (const auto& [sb_id, prob] : pred) {
            if (prob < cfg_.p_download) continue;
            bool contributed = false;
            for (BlockKey key : bundle_.superblocks[sb_id].blocks) {
                if (std::binary_search(part.begin(), part.end(), key)) continue;
                if (cached_(key)) {
                    inflight_.erase(key);
                    continue;
                }
                if (inflight_.count(key)) continue;
                req.blocks.push_back(block_from_key(key));
                inflight_.insert(key);
                contributed = true;
            }
            if (contributed) req.source_superblocks.push_back(sb_id);
        }
        if (req.blocks.empty()) return std::nullopt;
        ++stats_.requests_issued;
        stats_.blocks_requested += req.blocks.size();
        return req;
    }

    const ModelBundle& bundle_;
    PredictorConfig cfg_;
    CacheQuery cached_;

    BlockSet pending_;
    std::int64_t partition_first_ts_ = 0;
    std::int64_t last_read_ts_ = 0;
    std::optional<std::uint32_t> state_;
    std::int64_t state_entry_ts_ = 0;
    SpeedEstimate speed_;
    std::unordered_set<BlockKey> inflight_;
    PredictorStats stats_;
};

}  // namespace blockstream
