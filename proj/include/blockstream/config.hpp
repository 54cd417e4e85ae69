#pragma once

#include <cstdint>
#include <fstream>
#include <string>

#include <json.hpp>

#include "blockstream/bundle.hpp"
#include "blockstream/sim.hpp"
#include "blockstream/types.hpp"

namespace blockstream {

/// Flat-keyed run configuration shared by train/simulate/sweep/replay.
/// Defaults follow the tuned values from the evaluation setup: delta 100 ms,
/// tau 0.9, minimum superblock size 17, p_stop 0.01, p_download 0.02,
/// lookahead 60 s, 17.4 Mbps link, 100 ms RTT, 8 minute false-positive
/// window, unlimited temporary storage.
struct RunConfig {
    SimConfig sim;
    TrainParams train;

    static RunConfig defaults() { return RunConfig{}; }

    void apply_json(const nlohmann::json& j) {
        sim.pred.delta_ms = j.value("delta_ms", sim.pred.delta_ms);
        sim.pred.tau = j.value("tau", sim.pred.tau);
        sim.pred.p_stop = j.value("p_stop", sim.pred.p_stop);
        sim.pred.p_download = j.value("p_download", sim.pred.p_download);
        if (j.contains("lookahead_s"))
            sim.pred.lookahead_ms =
                static_cast<std::int64_t>(j["lookahead_s"].get<double>() * 1000.0);
        sim.pred.containment = j.value("containment", sim.pred.containment);
        sim.b_initial_bytes = j.value("b_initial_bytes", sim.b_initial_bytes);
        sim.temp_limit_bytes = j.value("temp_limit_bytes", sim.temp_limit_bytes);
        sim.bandwidth_bps = j.value("bandwidth_bps", sim.bandwidth_bps);
        sim.rtt_ms = j.value("rtt_ms", sim.rtt_ms);
        if (j.contains("fp_window_s"))
            sim.fp_window_ms =
                static_cast<std::int64_t>(j["fp_window_s"].get<double>() * 1000.0);
        train.delta_ms = sim.pred.delta_ms;
        train.tau = sim.pred.tau;
        train.containment = sim.pred.containment;
        train.min_superblock_size =
            j.value("min_superblock_size", train.min_superblock_size);
    }

    void load_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot read config file " + path);
        nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
        if (j.is_discarded()) throw ConfigError("config file is not valid JSON");
        apply_json(j);
    }

    /// Fully resolved configuration, logged on every run for reproducibility.
    nlohmann::json resolved() const {
        return nlohmann::json{
            {"delta_ms", sim.pred.delta_ms},
            {"tau", sim.pred.tau},
            {"p_stop", sim.pred.p_stop},
            {"p_download", sim.pred.p_download},
            {"lookahead_s", static_cast<double>(sim.pred.lookahead_ms) / 1000.0},
            {"containment", sim.pred.containment},
            {"min_superblock_size", train.min_superblock_size},
            {"b_initial_bytes", sim.b_initial_bytes},
            {"temp_limit_bytes", sim.temp_limit_bytes},
            {"bandwidth_bps", sim.bandwidth_bps},
            {"rtt_ms", sim.rtt_ms},
            {"fp_window_s", static_cast<double>(sim.fp_window_ms) / 1000.0}};
    }
};

/// Permanent-storage saving relative to installing everything locally.
inline double storage_saving_percent(double permanent_bytes, double total_bytes) {
    if (total_bytes <= 0.0) throw ConfigError("total size must be positive");
    return (1.0 - permanent_bytes / total_bytes) * 100.0;
}

}  // namespace blockstream
