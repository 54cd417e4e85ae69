#pragma once

#include <chrono>
#include <cstdint>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "blockstream/block_store.hpp"
#include "blockstream/bundle.hpp"
#include "blockstream/fetch.hpp"
#include "blockstream/predictor.hpp"
#include "blockstream/sim.hpp"
#include "blockstream/trace.hpp"
#include "blockstream/types.hpp"

namespace blockstream {

struct ReplayConfig {
    SimConfig sim;            // thresholds, b_initial, temp limit, fp window
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;
    std::string cache_dir;
    double time_scale = 1.0;  // >1 replays faster than recorded
};

/// Replays a trace in (scaled) real time against a live block server,
/// driving the predictor, local block store and two-priority fetcher.
/// Reports the same metrics as the simulator for cross-validation.
inline SimRun replay_live(const ModelBundle& bundle, const Trace& trace,
                          const ReplayConfig& cfg) {
    using Clock = std::chrono::steady_clock;
    const std::uint32_t bs = bundle.block_size;

    SimRun run;
    run.trace_id = trace.trace_id;
    if (trace.records.empty()) return run;
    run.run_length_ms = trace.records.back().timestamp_ms -
                        trace.records.front().timestamp_ms;

    BlockStore store(cfg.cache_dir, bs, cfg.sim.temp_limit_bytes);
    FetchClient client(cfg.host, cfg.port, bs);

    // the resident set ships with the device; load it outside the metrics
    auto resident = choose_resident_set(bundle.resident_order,
                                        cfg.sim.b_initial_bytes, bs);
    {
        std::vector<BlockId> batch;
        for (BlockKey k : resident.selection) {
            batch.push_back(block_from_key(k));
            if (batch.size() == 256) {
                for (auto& fb : client.fetch_urgent(batch))
                    store.insert_resident(fb.block, fb.payload);
                batch.clear();
            }
        }
        for (auto& fb : client.fetch_urgent(batch))
            store.insert_resident(fb.block, fb.payload);
    }

    std::mutex acct_mu;
    std::vector<std::pair<BlockKey, std::int64_t>> deliveries;

    FetchQueue queue;
    client.run_speculative(queue, store, [&](const QueuedBlock& qb) {
        std::scoped_lock lock(acct_mu);
        deliveries.emplace_back(block_key(qb.block), qb.issue_ts);
        run.speculative_bytes += bs;
    });

    Predictor predictor(bundle, cfg.sim.pred,
                        [&](BlockKey k) { return store.contains(k); });

    std::unordered_map<BlockKey, std::vector<std::int64_t>> reads_by_key;
    const std::int64_t ts0 = trace.records.front().timestamp_ms;
    const auto start = Clock::now();
    double stall_wall_ms = 0.0;

    for (const auto& rec : trace.records) {
        auto blocks = expand_record(rec, bs);
        if (blocks.empty()) continue;
        const std::int64_t t = rec.timestamp_ms;

        // app pacing: stalls push every subsequent read later
        auto target = start +
                      std::chrono::duration_cast<Clock::duration>(
                          std::chrono::duration<double, std::milli>(
                              static_cast<double>(t - ts0) / cfg.time_scale +
                              stall_wall_ms));
        std::this_thread::sleep_until(target);

        for (const auto& br : blocks) {
            if (auto req = predictor.observe(br)) {
                std::vector<QueuedBlock> qs;
                qs.reserve(req->blocks.size());
                for (BlockId b : req->blocks)
                    qs.push_back(QueuedBlock{b, req->issue_ts});
                queue.enqueue(qs);
            }
        }

        std::vector<BlockId> missing;
        for (const auto& br : blocks) {
            BlockKey k = block_key(br.block);
            reads_by_key[k].push_back(t);
            ++run.blocks_read;
            switch (store.classify(br.block, t)) {
                case ReadResult::ResidentHit: ++run.resident_hits; break;
                case ReadResult::TempHit: ++run.temp_hits; break;
                case ReadResult::Miss:
                    ++run.misses;
                    missing.push_back(br.block);
                    break;
            }
        }
        if (!missing.empty()) {
            auto t0 = Clock::now();
            auto fetched = client.fetch_urgent(missing);
            // the stall is the network fetch; local installs happen outside
            // the timed window to mirror what the simulator charges
            std::chrono::duration<double, std::milli> d = Clock::now() - t0;
            stall_wall_ms += d.count();
            for (auto& fb : fetched) {
                store.insert(fb.block, fb.payload, /*pinned=*/false, t);
                predictor.note_cached(block_key(fb.block));
            }
            run.miss_bytes += static_cast<std::uint64_t>(missing.size()) * bs;
        }
        store.unpin_stale(t, cfg.sim.fp_window_ms);
    }

    queue.close();
    client.stop_speculative();

    run.delay_ms = stall_wall_ms * cfg.time_scale;  // trace-time equivalent
    run.urgent_bytes = run.miss_bytes;
    {
        std::scoped_lock lock(acct_mu);
        run.downloaded_bytes = run.urgent_bytes + run.speculative_bytes;
        for (const auto& [k, issue] : deliveries) {
            auto it = reads_by_key.find(k);
            bool read_in_window = false;
            if (it != reads_by_key.end()) {
                for (std::int64_t ts : it->second) {
                    if (ts >= issue && ts <= issue + cfg.sim.fp_window_ms) {
                        read_in_window = true;
                        break;
                    }
                }
            }
            if (!read_in_window) run.false_positive_bytes += bs;
        }
    }
    run.evictions = store.evictions();
    run.partitions_unmatched = predictor.stats().partitions_unmatched;
    run.hit_rate = run.blocks_read == 0
                       ? 0.0
                       : static_cast<double>(run.resident_hits + run.temp_hits) /
                             static_cast<double>(run.blocks_read);
    return run;
}

}  // namespace blockstream
