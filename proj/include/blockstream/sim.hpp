#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <future>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "blockstream/bundle.hpp"
#include "blockstream/cache_policy.hpp"
#include "blockstream/pair_model.hpp"
#include "blockstream/predictor.hpp"
#include "blockstream/trace.hpp"
#include "blockstream/types.hpp"

namespace blockstream {

struct SimConfig {
    PredictorConfig pred;
    double bandwidth_bps = 17.4e6;
    std::int64_t rtt_ms = 100;
    std::uint64_t b_initial_bytes = 122ull * 1024 * 1024;
    std::uint64_t temp_limit_bytes = 0;  // 0 = unlimited
    std::int64_t fp_window_ms = 480'000;
    bool use_pair_baseline = false;
};

struct SimRun {
    std::string trace_id;
    double delay_ms = 0.0;
    std::uint64_t miss_bytes = 0;
    std::uint64_t urgent_bytes = 0;
    std::uint64_t speculative_bytes = 0;
    std::uint64_t downloaded_bytes = 0;
    std::uint64_t false_positive_bytes = 0;
    double hit_rate = 0.0;
    std::uint64_t blocks_read = 0;
    std::uint64_t resident_hits = 0;
    std::uint64_t temp_hits = 0;
    std::uint64_t misses = 0;
    std::uint64_t evictions = 0;
    std::uint64_t partitions_unmatched = 0;
    std::int64_t run_length_ms = 0;
};

struct SimReport {
    std::vector<SimRun> runs;
    double total_delay_ms = 0.0;
    std::uint64_t miss_bytes = 0;
    std::uint64_t downloaded_bytes = 0;
    std::uint64_t false_positive_bytes = 0;
    double hit_rate = 0.0;  // block-weighted across runs
};

/// Per-block urgent transfer cost under the modeled link.
inline double urgent_block_cost_ms(std::int64_t rtt_ms, double bandwidth_bps,
                                   std::uint32_t block_size) {
    return static_cast<double>(rtt_ms) +
           static_cast<double>(block_size) * 8000.0 / bandwidth_bps;
}

namespace detail {

struct SpecRequest {
    std::vector<BlockKey> blocks;
    std::int64_t issue_ts = 0;      // trace time of the prediction
    double enqueue_wall = 0.0;
    bool started = false;
    std::size_t next = 0;
};

/// Speculative side of the link: drains the FIFO when no urgent traffic
/// holds the link. One RTT per request, then back-to-back block transfers.
class SpecLink {
public:
    SpecLink(double bandwidth_bps, std::int64_t rtt_ms, std::uint32_t block_size)
        : tx_ms_(static_cast<double>(block_size) * 8000.0 / bandwidth_bps),
          rtt_ms_(static_cast<double>(rtt_ms)) {}

    void enqueue(std::vector<BlockKey> blocks, std::int64_t issue_ts,
                 double wall) {
        queue_.push_back(SpecRequest{std::move(blocks), issue_ts, wall, false, 0});
    }

    /// Urgent traffic preempts the link for [wall, wall + stall).
    void preempt(double wall, double stall_ms) {
        link_time_ = std::max(link_time_, wall + stall_ms);
    }

    template <typename Deliver>
    void advance(double until_wall, Deliver deliver) {
        while (!queue_.empty()) {
            SpecRequest& r = queue_.front();
            if (!r.started) {
                double start = std::max(link_time_, r.enqueue_wall);
                if (start + rtt_ms_ + tx_ms_ > until_wall) {
                    link_time_ = std::max(link_time_, start);
                    return;
                }
                link_time_ = start + rtt_ms_;
                r.started = true;
            }
            while (r.next < r.blocks.size()) {
                if (link_time_ + tx_ms_ > until_wall) return;
                link_time_ += tx_ms_;
                deliver(r.blocks[r.next], link_time_, r.issue_ts);
                ++r.next;
            }
            queue_.pop_front();
        }
    }

private:
    std::deque<SpecRequest> queue_;
    double link_time_ = 0.0;
    double tx_ms_;
    double rtt_ms_;
};

}  // namespace detail

/// Event-driven replay of one trace against a trained model. Reads advance
/// trace time; a miss stalls the trace clock for rtt plus the batched
/// transfer time; speculative downloads run only while the link is free of
/// urgent traffic. Deterministic for identical inputs.
inline SimRun simulate_one(const ModelBundle& bundle, const PairModel* baseline,
                           const Trace& trace, const SimConfig& cfg) {
    const std::uint32_t bs = bundle.block_size;
    for (const auto& [fid, size] : trace.manifest) {
        if (fid >= bundle.files.count())
            throw DataError("simulate: trace references file missing from model manifest");
    }

    SimRun run;
    run.trace_id = trace.trace_id;
    if (!trace.records.empty())
        run.run_length_ms = trace.records.back().timestamp_ms -
                            trace.records.front().timestamp_ms;

    CachePolicy cache(cfg.temp_limit_bytes == 0 ? CachePolicy::kUnlimited
                                                : cfg.temp_limit_bytes / bs);
    auto resident =
        choose_resident_set(bundle.resident_order, cfg.b_initial_bytes, bs);
    for (BlockKey k : resident.selection) cache.set_resident(k);

    Predictor predictor(bundle, cfg.pred, [&](BlockKey k) { return cache.contains(k); });
    std::unordered_set<BlockKey> baseline_inflight;

    detail::SpecLink link(cfg.bandwidth_bps, cfg.rtt_ms, bs);
    const double tx_ms = static_cast<double>(bs) * 8000.0 / cfg.bandwidth_bps;

    std::unordered_map<BlockKey, std::vector<std::int64_t>> reads_by_key;
    std::vector<std::pair<BlockKey, std::int64_t>> deliveries;  // (key, issue_ts)

    double delay = 0.0;
    for (const auto& rec : trace.records) {
        auto blocks = expand_record(rec, bs);
        if (blocks.empty()) continue;
        const std::int64_t t = rec.timestamp_ms;
        const double wall = static_cast<double>(t) + delay;

        link.advance(wall, [&](BlockKey k, double done_wall, std::int64_t issue) {
            (void)done_wall;
            run.speculative_bytes += bs;
            deliveries.emplace_back(k, issue);
            if (!cache.contains(k)) cache.insert(k, /*pinned=*/true, t);
            predictor.note_cached(k);
        });

        // prediction path sees the reads in trace time
        if (!cfg.use_pair_baseline) {
            for (const auto& br : blocks) {
                if (auto req = predictor.observe(br)) {
                    std::vector<BlockKey> keys;
                    keys.reserve(req->blocks.size());
                    for (BlockId b : req->blocks) keys.push_back(block_key(b));
                    link.enqueue(std::move(keys), req->issue_ts, wall);
                }
            }
        } else {
            for (const auto& br : blocks) {
                std::vector<BlockKey> keys;
                for (auto [s, e] : baseline->predict_ranges(block_key(br.block))) {
                    for (BlockKey k = s; k < e; ++k) {
                        if (cache.contains(k)) {
                            baseline_inflight.erase(k);
                            continue;
                        }
                        if (!baseline_inflight.insert(k).second) continue;
                        keys.push_back(k);
                    }
                }
                if (!keys.empty()) link.enqueue(std::move(keys), t, wall);
            }
        }

        // classification: every block access is exactly one of
        // resident-hit, temp-hit, miss
        std::vector<BlockKey> missing;
        for (const auto& br : blocks) {
            BlockKey k = block_key(br.block);
            reads_by_key[k].push_back(t);
            ++run.blocks_read;
            switch (cache.on_read(k, t)) {
                case ReadResult::ResidentHit: ++run.resident_hits; break;
                case ReadResult::TempHit: ++run.temp_hits; break;
                case ReadResult::Miss:
                    ++run.misses;
                    missing.push_back(k);
                    break;
            }
        }
        if (!missing.empty()) {
            double stall = static_cast<double>(cfg.rtt_ms) +
                           static_cast<double>(missing.size()) * tx_ms;
            link.preempt(wall, stall);
            delay += stall;
            run.miss_bytes += static_cast<std::uint64_t>(missing.size()) * bs;
            for (BlockKey k : missing) {
                cache.insert(k, /*pinned=*/false, t);
                if (!cfg.use_pair_baseline) predictor.note_cached(k);
                else baseline_inflight.erase(k);
            }
        }
    }

    run.delay_ms = delay;
    run.urgent_bytes = run.miss_bytes;
    run.downloaded_bytes = run.urgent_bytes + run.speculative_bytes;
    run.evictions = cache.evictions();
    run.partitions_unmatched = predictor.stats().partitions_unmatched;
    run.hit_rate = run.blocks_read == 0
                       ? 0.0
                       : static_cast<double>(run.resident_hits + run.temp_hits) /
                             static_cast<double>(run.blocks_read);

    // a delivery is a false positive when the block is not read within the
    // window after the prediction that requested it
    for (const auto& [k, issue] : deliveries) {
        const auto it = reads_by_key.find(k);
        bool read_in_window = false;
        if (it != reads_by_key.end()) {
            for (std::int64_t ts : it->second) {
                if (ts >= issue && ts <= issue + cfg.fp_window_ms) {
                    read_in_window = true;
                    break;
                }
            }
        }
        if (!read_in_window) run.false_positive_bytes += bs;
    }
    return run;
}

inline SimReport simulate(const ModelBundle& bundle, const PairModel* baseline,
                          const std::vector<Trace>& traces, const SimConfig& cfg) {
    if (cfg.use_pair_baseline && baseline == nullptr)
        throw ConfigError("simulate: baseline mode requires a pair model");
    SimReport rep;
    std::uint64_t total_blocks = 0, total_hits = 0;
    for (const auto& t : traces) {
        SimRun run = simulate_one(bundle, baseline, t, cfg);
        rep.total_delay_ms += run.delay_ms;
        rep.miss_bytes += run.miss_bytes;
        rep.downloaded_bytes += run.downloaded_bytes;
        rep.false_positive_bytes += run.false_positive_bytes;
        total_blocks += run.blocks_read;
        total_hits += run.resident_hits + run.temp_hits;
        rep.runs.push_back(std::move(run));
    }
    rep.hit_rate = total_blocks == 0
                       ? 0.0
                       : static_cast<double>(total_hits) / static_cast<double>(total_blocks);
    return rep;
}

inline nlohmann::json sim_report_to_json(const SimReport& rep) {
    nlohmann::json j;
    j["total_delay_ms"] = rep.total_delay_ms;
    j["miss_bytes"] = rep.miss_bytes;
    j["downloaded_bytes"] = rep.downloaded_bytes;
    j["false_positive_bytes"] = rep.false_positive_bytes;
    j["hit_rate"] = rep.hit_rate;
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& r : rep.runs) {
        runs.push_back({{"trace_id", r.trace_id},
                        {"delay_ms", r.delay_ms},
                        {"miss_bytes", r.miss_bytes},
                        {"urgent_bytes", r.urgent_bytes},
                        {"speculative_bytes", r.speculative_bytes},
                        {"downloaded_bytes", r.downloaded_bytes},
                        {"false_positive_bytes", r.false_positive_bytes},
                        {"hit_rate", r.hit_rate},
                        {"blocks_read", r.blocks_read},
                        {"resident_hits", r.resident_hits},
                        {"temp_hits", r.temp_hits},
                        {"misses", r.misses},
                        {"evictions", r.evictions},
                        {"partitions_unmatched", r.partitions_unmatched},
                        {"run_length_ms", r.run_length_ms}});
    }
    j["runs"] = std::move(runs);
    return j;
}

// ---- parameter sweep ----

struct SweepPoint {
    std::string param;
    double value = 0.0;
    double delay_ms = 0.0;
    std::uint64_t false_positive_bytes = 0;
    double hit_rate = 0.0;
};

/// Applies a named parameter to a config copy. Training parameters
/// (delta_ms, tau, min_superblock_size) additionally require a retrain,
/// signalled by the return value.
inline bool apply_sweep_param(SimConfig& cfg, TrainParams& train,
                              const std::string& name, double value) {
    if (name == "bandwidth_bps") { cfg.bandwidth_bps = value; return false; }
    if (name == "rtt_ms") { cfg.rtt_ms = static_cast<std::int64_t>(value); return false; }
    if (name == "b_initial_bytes") { cfg.b_initial_bytes = static_cast<std::uint64_t>(value); return false; }
    if (name == "temp_limit_bytes") { cfg.temp_limit_bytes = static_cast<std::uint64_t>(value); return false; }
    if (name == "fp_window_ms") { cfg.fp_window_ms = static_cast<std::int64_t>(value); return false; }
    if (name == "p_download") { cfg.pred.p_download = value; return false; }
    if (name == "p_stop") { cfg.pred.p_stop = value; return false; }
    if (name == "lookahead_ms") { cfg.pred.lookahead_ms = static_cast<std::int64_t>(value); return false; }
    if (name == "containment") { cfg.pred.containment = value; return false; }
    if (name == "delta_ms") {
        cfg.pred.delta_ms = static_cast<std::int64_t>(value);
        train.delta_ms = static_cast<std::int64_t>(value);
        return true;
    }
    if (name == "tau") { train.tau = value; return true; }
    if (name == "min_superblock_size") {
        train.min_superblock_size = static_cast<std::size_t>(value);
        return true;
    }
    throw ConfigError("unknown sweep parameter '" + name + "'");
}

/// One simulate call per grid point, independent points run in parallel,
/// results emitted in grid order. Training traces are only needed when the
/// swept parameter affects training.
inline std::vector<SweepPoint> sweep(const ModelBundle& bundle,
                                     const std::vector<Trace>& test_traces,
                                     const SimConfig& base_cfg,
                                     const std::string& param,
                                     const std::vector<double>& values,
                                     const std::vector<Trace>* training_traces = nullptr) {
    if (values.empty()) throw ConfigError("sweep: empty grid");
    std::vector<std::future<SweepPoint>> futures;
    for (double v : values) {
        futures.push_back(std::async(std::launch::async, [&, v] {
            SimConfig cfg = base_cfg;
            TrainParams tp = bundle.params;
            bool retrain = apply_sweep_param(cfg, tp, param, v);
            SimReport rep;
            if (retrain) {
                if (training_traces == nullptr)
                    throw ConfigError("sweep over '" + param +
                                      "' requires training traces");
                ModelBundle rb = train_bundle(*training_traces, bundle.files, tp,
                                              bundle.block_size);
                rep = simulate(rb, nullptr, test_traces, cfg);
            } else {
                rep = simulate(bundle, nullptr, test_traces, cfg);
            }
            return SweepPoint{param, v, rep.total_delay_ms,
                              rep.false_positive_bytes, rep.hit_rate};
        }));
    }
    std::vector<SweepPoint> out;
    out.reserve(futures.size());
    for (auto& f : futures) out.push_back(f.get());
    return out;
}

inline std::string sweep_to_csv(const std::vector<SweepPoint>& points) {
    std::string csv = "param,value,delay,false_positive_bytes,hit_rate\n";
    char buf[256];
    for (const auto& p : points) {
        std::snprintf(buf, sizeof(buf), "%s,%.10g,%.10g,%llu,%.10g\n",
                      p.param.c_str(), p.value, p.delay_ms,
                      static_cast<unsigned long long>(p.false_positive_bytes),
                      p.hit_rate);
        csv += buf;
    }
    return csv;
}

}  // namespace blockstream
