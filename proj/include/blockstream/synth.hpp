#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "blockstream/trace.hpp"
#include "blockstream/types.hpp"

namespace blockstream {

/// Synthetic workload description: a set of "scenes" (contiguous block
/// ranges), a scene graph with transition probabilities, dwell gaps between
/// scene bursts, small intra-burst jitter, and optional random noise reads.
/// This mimics the step-shaped cumulative read pattern of real interactive
/// apps at desk scale.
struct SynthScene {
    std::string name;
    std::uint32_t first_block = 0;
    std::uint32_t num_blocks = 0;
};

struct SynthEdge {
    std::string from;
    std::string to;
    double prob = 0.0;
};

struct SynthSpec {
    std::string file = "content.bin";
    std::vector<SynthScene> scenes;
    std::vector<SynthEdge> edges;
    std::string start;
    std::int64_t dwell_ms_mean = 5000;
    std::int64_t dwell_ms_jitter = 500;
    std::uint32_t reads_per_scene = 8;
    std::int64_t read_jitter_ms = 2;
    double noise_rate = 0.0;
    std::uint32_t max_steps = 100;
    std::uint32_t block_size = kDefaultBlockSize;

    static SynthSpec from_json(const nlohmann::json& j) {
        SynthSpec s;
        s.file = j.value("file", s.file);
        for (const auto& js : j.at("scenes")) {
            s.scenes.push_back(SynthScene{js.at("name").get<std::string>(),
                                          js.at("first_block").get<std::uint32_t>(),
                                          js.at("num_blocks").get<std::uint32_t>()});
        }
        if (j.contains("edges")) {
            for (const auto& je : j["edges"]) {
                s.edges.push_back(SynthEdge{je.at("from").get<std::string>(),
                                            je.at("to").get<std::string>(),
                                            je.at("prob").get<double>()});
            }
        }
        s.start = j.value("start", s.scenes.empty() ? "" : s.scenes.front().name);
        s.dwell_ms_mean = j.value("dwell_ms_mean", s.dwell_ms_mean);
        s.dwell_ms_jitter = j.value("dwell_ms_jitter", s.dwell_ms_jitter);
        s.reads_per_scene = j.value("reads_per_scene", s.reads_per_scene);
        s.read_jitter_ms = j.value("read_jitter_ms", s.read_jitter_ms);
        s.noise_rate = j.value("noise_rate", s.noise_rate);
        s.max_steps = j.value("max_steps", s.max_steps);
        s.block_size = j.value("block_size", s.block_size);
        return s;
    }

    void validate() const {
        if (scenes.empty()) throw ConfigError("synth spec: no scenes");
        std::map<std::string, double> outgoing;
        std::map<std::string, bool> known;
        for (const auto& sc : scenes) {
            if (sc.num_blocks == 0)
                throw ConfigError("synth spec: scene '" + sc.name + "' has no blocks");
            known[sc.name] = true;
        }
        if (!known.count(start))
            throw ConfigError("synth spec: unknown start scene '" + start + "'");
        for (const auto& e : edges) {
            if (!known.count(e.from) || !known.count(e.to))
                throw ConfigError("synth spec: edge references unknown scene");
            if (e.prob < 0.0 || e.prob > 1.0)
                throw ConfigError("synth spec: edge probability out of range");
            outgoing[e.from] += e.prob;
        }
        for (const auto& [name, sum] : outgoing) {
            if (std::abs(sum - 1.0) > 1e-9)
                throw ConfigError("synth spec: outgoing probabilities of '" + name +
                                  "' sum to " + std::to_string(sum));
        }
    }
};

/// Deterministic for a fixed (spec, seed).
inline Trace synth_trace(const SynthSpec& spec, std::uint64_t seed,
                         FileTable& files) {
    spec.validate();
    std::mt19937_64 rng(seed);
    auto uniform = [&rng](std::uint64_t n) { return n == 0 ? 0 : rng() % n; };

    FileId fid = files.intern(spec.file);
    std::uint32_t max_block = 0;
    std::map<std::string, const SynthScene*> by_name;
    for (const auto& sc : spec.scenes) {
        by_name[sc.name] = &sc;
        max_block = std::max(max_block, sc.first_block + sc.num_blocks);
    }
    std::uint64_t file_size = static_cast<std::uint64_t>(max_block) * spec.block_size;
    files.set_size(fid, file_size);

    Trace t;
    t.trace_id = "synth-" + std::to_string(seed);
    t.manifest[fid] = file_size;

    const SynthScene* cur = by_name.at(spec.start);
    std::int64_t now = 0;
    for (std::uint32_t step = 0; step < spec.max_steps; ++step) {
        // one burst: reads_per_scene contiguous chunk reads covering the scene
        std::uint32_t per = std::max<std::uint32_t>(1, cur->num_blocks / spec.reads_per_scene);
        for (std::uint32_t b = 0; b < cur->num_blocks; b += per) {
            std::uint32_t count = std::min(per, cur->num_blocks - b);
            ReadRecord r;
            r.timestamp_ms = now;
            r.file_id = fid;
            r.offset = static_cast<std::uint64_t>(cur->first_block + b) * spec.block_size;
            r.length = static_cast<std::uint64_t>(count) * spec.block_size;
            t.records.push_back(r);
            if (spec.noise_rate > 0.0 &&
                static_cast<double>(rng() >> 11) * 0x1.0p-53 < spec.noise_rate) {
                ReadRecord n;
                n.timestamp_ms = now;
                n.file_id = fid;
                n.offset = uniform(max_block) * static_cast<std::uint64_t>(spec.block_size);
                n.length = spec.block_size;
                t.records.push_back(n);
            }
            now += 1 + static_cast<std::int64_t>(
                           uniform(static_cast<std::uint64_t>(
                               std::max<std::int64_t>(1, spec.read_jitter_ms))));
        }

        // pick the next scene; a scene without outgoing edges is terminal
        std::vector<const SynthEdge*> out;
        for (const auto& e : spec.edges)
            if (e.from == cur->name) out.push_back(&e);
        if (out.empty()) break;
        double roll = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        double acc = 0.0;
        const SynthEdge* chosen = out.back();
        for (const auto* e : out) {
            acc += e->prob;
            if (roll < acc) {
                chosen = e;
                break;
            }
        }
        cur = by_name.at(chosen->to);

        std::int64_t dwell = spec.dwell_ms_mean;
        if (spec.dwell_ms_jitter > 0) {
            dwell += static_cast<std::int64_t>(
                         uniform(static_cast<std::uint64_t>(2 * spec.dwell_ms_jitter + 1))) -
                     spec.dwell_ms_jitter;
        }
        now += std::max<std::int64_t>(1, dwell);
    }
    return t;
}

}  // namespace blockstream
